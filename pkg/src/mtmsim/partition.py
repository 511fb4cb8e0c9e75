"""Wire tearing and step/window planning.

Tearing removes the named transmission lines from the circuit graph; each
connected component of what remains becomes a subcircuit, and each torn
line becomes an interfacial wire whose two ports are bound to the
subcircuits on either side.  Nothing is inserted in place of the wire, in
particular no sources.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .netlist import GROUND, Element, Netlist, TLine


class PartitionError(ValueError):
    pass


class StepTooLarge(ValueError):
    """The requested step exceeds the smallest interfacial delay."""

    def __init__(self, requested: float, max_step: float):
        self.requested = requested
        self.max_step = max_step
        super().__init__(f"step {requested:g} s exceeds the largest admissible step "
                         f"l*sqrt(LC) = {max_step:g} s")


@dataclass(frozen=True)
class PortBinding:
    nodes: tuple[str, str]
    subcircuit: int


@dataclass(frozen=True)
class InterfacialWire:
    wire_id: int
    line: TLine
    side_a: PortBinding  # port 1
    side_b: PortBinding  # port 2

    @property
    def tau(self) -> float:
        return self.line.params.tau

    def binding(self, port: int) -> PortBinding:
        return self.side_a if port == 1 else self.side_b


@dataclass(frozen=True)
class Subcircuit:
    index: int
    nodes: tuple[str, ...]
    elements: tuple[Element, ...]
    tlines: tuple[TLine, ...]  # lines that stay inside this subcircuit


@dataclass(frozen=True)
class Partition:
    subcircuits: tuple[Subcircuit, ...]
    wires: tuple[InterfacialWire, ...]
    tau_min: float
    notes: tuple[str, ...] = ()

    def wires_of(self, sub: int) -> list[tuple[InterfacialWire, int]]:
        """(wire, local port number) pairs touching subcircuit ``sub``."""
        out = []
        for w in self.wires:
            if w.side_a.subcircuit == sub:
                out.append((w, 1))
            if w.side_b.subcircuit == sub:
                out.append((w, 2))
        return out


@dataclass(frozen=True)
class StepPlan:
    dt: float
    window: float
    K: int

    def __post_init__(self):
        if self.K < 1 or self.dt <= 0:
            raise ValueError("StepPlan needs K >= 1 and dt > 0")


class _UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def add(self, a: str) -> None:
        self.parent.setdefault(a, a)

    def find(self, a: str) -> str:
        self.add(a)
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def _link(uf: _UnionFind, nodes: Iterable[str]) -> None:
    real = [n for n in nodes if n != GROUND]
    for n in real:
        uf.add(n)
    for n in real[1:]:
        uf.union(real[0], n)


def tear_by_wires(netlist: Netlist, wire_names: Sequence[str] | None = None) -> Partition:
    """Split ``netlist`` along the named lines (default: its ``.partition``)."""
    names = list(netlist.directives.partition if wire_names is None else wire_names)
    lines = {t.name.lower(): t for t in netlist.tlines}
    torn: dict[str, TLine] = {}
    for w in names:
        if w.lower() not in lines:
            raise PartitionError(f"no transmission line named {w!r}")
        torn[w.lower()] = lines[w.lower()]

    uf = _UnionFind()
    for n in netlist.nodes:
        if n != GROUND:
            uf.add(n)
    for e in netlist.elements:
        _link(uf, e.terminals)
    for t in netlist.tlines:
        if t.name.lower() in torn:
            _link(uf, t.port1)
            _link(uf, t.port2)
        else:
            _link(uf, t.nodes)

    notes = []
    for key, t in list(torn.items()):
        side = {uf.find(n) for n in t.port1 if n != GROUND}
        other = {uf.find(n) for n in t.port2 if n != GROUND}
        if side & other or not side or not other:
            notes.append(f"wire {t.name} does not separate the circuit; kept inside its subcircuit")
            del torn[key]
            _link(uf, t.nodes)

    order = {n: i for i, n in enumerate(netlist.nodes)}
    groups: dict[str, list[str]] = {}
    for n in netlist.nodes:
        if n != GROUND:
            groups.setdefault(uf.find(n), []).append(n)
    roots = sorted(groups, key=lambda r: min(order[n] for n in groups[r]))
    comp = {r: i for i, r in enumerate(roots)}

    def home(nodes: Iterable[str]) -> int:
        for n in nodes:
            if n != GROUND:
                return comp[uf.find(n)]
        return 0

    elems: list[list[Element]] = [[] for _ in roots]
    inner: list[list[TLine]] = [[] for _ in roots]
    for e in netlist.elements:
        if not elems:
            raise PartitionError("circuit has no non-ground nodes")
        elems[home(e.terminals)].append(e)
    for t in netlist.tlines:
        if t.name.lower() not in torn:
            inner[home(t.nodes)].append(t)

    subs = tuple(
        Subcircuit(i, tuple(groups[r]), tuple(elems[i]), tuple(inner[i])) for i, r in enumerate(roots)
    )
    wires = []
    for t in netlist.tlines:
        if t.name.lower() in torn:
            wires.append(InterfacialWire(
                len(wires), t,
                PortBinding(t.port1, home(t.port1)),
                PortBinding(t.port2, home(t.port2)),
            ))
    tau_min = min((w.tau for w in wires), default=math.inf)
    return Partition(subs, tuple(wires), tau_min, tuple(notes))


def plan_step(requested_dt: float, tau_min: float) -> StepPlan:
    """Largest legal window (= tau_min) split into K equal steps <= requested_dt."""
    if not (requested_dt > 0 and tau_min > 0):
        raise ValueError("requested_dt and tau_min must be positive")
    if math.isinf(tau_min):
        return StepPlan(requested_dt, requested_dt, 1)
    if requested_dt > tau_min * (1.0 + 1e-12):
        raise StepTooLarge(requested_dt, tau_min)
    K = max(1, math.ceil(tau_min / requested_dt - 1e-9))
    return StepPlan(tau_min / K, tau_min, K)


def line_delays(lines: Iterable[TLine], dt: float) -> tuple[dict[str, int], list[str]]:
    """Snap each line delay to a whole number of steps.

    Returns ``({line name (lower case): steps}, warnings)``.  A delay shorter
    than one step cannot be expressed and raises :class:`StepTooLarge`.
    """
    delays, warnings = {}, []
    for t in lines:
        tau = t.params.tau
        if tau < dt * (1.0 - 1e-9):
            raise StepTooLarge(dt, tau)
        d = max(1, round(tau / dt))
        rel = abs(d * dt - tau) / tau
        if rel > 1e-9:
            warnings.append(f"delay of {t.name} snapped from {tau:.6g} s to {d * dt:.6g} s "
                            f"(relative change {rel:.2e})")
        delays[t.name.lower()] = d
    return delays, warnings


def min_wire_length(f: float, N: float, L: float, C: float) -> float:
    """Shortest interfacial wire allowing a step of 1/(N*f): 1/(N f sqrt(LC))."""
    if min(f, N, L, C) <= 0:
        raise ValueError("all arguments must be positive")
    return 1.0 / (N * f * math.sqrt(L * C))


def rank_wires(netlist: Netlist) -> list[tuple[str, float]]:
    """Lines ordered by delay, longest first (longer delay = longer window)."""
    return sorted(((t.name, t.params.tau) for t in netlist.tlines), key=lambda p: -p[1])


def reassemble(partition: Partition) -> tuple[list[Element], list[TLine]]:
    """Elements and lines of the original circuit, rebuilt from the partition."""
    elements = [e for s in partition.subcircuits for e in s.elements]
    lines = [t for s in partition.subcircuits for t in s.tlines] + [w.line for w in partition.wires]
    return elements, lines
