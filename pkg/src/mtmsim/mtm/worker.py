"""One MTM worker: a local transient solver for one subcircuit.

The worker stamps its own end of every interfacial wire as a Thevenin branch
and keeps the far end's samples in the wire's :class:`PortHistory`, filled
from received messages.  It never looks at the far end beyond t - tau.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..partition import InterfacialWire, Subcircuit
from ..solver import LinePort, NrTolerances, TransientSolver
from .protocol import PortWaveformMessage


@dataclass(frozen=True)
class WorkerSpec:
    """Everything needed to build a worker, picklable for process transports."""

    sub: Subcircuit
    wires: tuple[tuple[InterfacialWire, int], ...]  # (wire, local port)
    dt: float
    nsteps: int
    K: int
    delays: dict
    tol: NrTolerances
    lossy: str
    rule: str


class Worker:
    def __init__(self, spec: WorkerSpec):
        self.spec = spec
        self.index = spec.sub.index
        ports = [LinePort(w.line, p) for w, p in spec.wires]
        for t in spec.sub.tlines:
            ports += [LinePort(t, 1), LinePort(t, 2)]
        self.solver = TransientSolver(
            spec.sub.elements, ports, spec.dt, spec.nsteps, spec.tol,
            lossy=spec.lossy, rule=spec.rule, delays=spec.delays,
        )
        self.window_iterations: list[int] = []

    @property
    def nwindows(self) -> int:
        return -(-self.spec.nsteps // self.spec.K)

    def window_range(self, n: int) -> tuple[int, int]:
        """Sample indices (first, last) produced in window n."""
        K = self.spec.K
        return n * K + 1, min((n + 1) * K, self.spec.nsteps)

    def history(self, wire: InterfacialWire):
        return self.solver.histories[wire.line.name.lower()]

    def solve_window(self, n: int, flags: int = 0, tag: int | None = None) -> list[PortWaveformMessage]:
        """Advance over window n and return one message per owned wire end.

        ``tag`` overrides the window index written into the messages (the
        WR baseline numbers its exchange rounds instead).
        """
        first, last = self.window_range(n)
        if self.solver.k != first - 1:
            raise RuntimeError(f"worker {self.index} is at step {self.solver.k}, window {n} "
                               f"starts after step {first - 1}")
        self.solver.advance(last - first + 1)
        self.window_iterations.append(int(self.solver.iterations[first:last + 1].sum()))
        out = []
        for wire, port in self.spec.wires:
            hist = self.history(wire)
            out.append(PortWaveformMessage.from_arrays(
                n if tag is None else tag, wire.wire_id, port,
                hist.u[port][first:last + 1], hist.i[port][first:last + 1], flags,
            ))
        return out

    def receive(self, msg: PortWaveformMessage, n: int) -> None:
        """Store the peer's samples of window n."""
        first, last = self.window_range(n)
        if msg.count != last - first + 1:
            raise ValueError(f"expected {last - first + 1} samples, got {msg.count}")
        for wire, port in self.spec.wires:
            if wire.wire_id == msg.wire_id and port != msg.port:
                u, i = msg.arrays()
                hist = self.history(wire)
                hist.u[msg.port][first:last + 1] = u
                hist.i[msg.port][first:last + 1] = i
                return
        raise ValueError(f"worker {self.index} has no use for wire {msg.wire_id} port {msg.port}")

    def expected_incoming(self) -> int:
        return len(self.spec.wires)
