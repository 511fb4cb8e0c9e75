"""Local transient solver: MNA assembly, Newton-Raphson, fixed-step stepping.

A :class:`TransientSolver` owns one circuit (a whole netlist or one
subcircuit of a partition).  Transmission-line ports enter the MNA system as
Thevenin branches whose right-hand side is computed from a
:class:`~mtmsim.tline.PortHistory`; whether the other end of the line lives in
the same solver or in a remote worker only changes who fills the history.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .devices import (
    Rule,
    capacitor_companion,
    diode_current,
    inductor_companion,
    mosfet_current,
)
from .linalg import LU
from .netlist import GROUND, Element, Netlist, TLine
from .tline import KernelTable, PortHistory, delay_steps, lossy_port_terms


@dataclass(frozen=True)
class NrTolerances:
    reltol: float = 1e-6
    vntol: float = 1e-6
    abstol: float = 1e-12
    maxiter: int = 100
    max_junction_step: float = 0.5
    gmin: float = 1e-12

    def __post_init__(self):
        if min(self.reltol, self.vntol, self.abstol, self.max_junction_step) <= 0 or self.maxiter < 1:
            raise ValueError("tolerances must be positive and maxiter >= 1")
        if self.gmin < 0:
            raise ValueError("gmin must be >= 0")


class NoConvergence(RuntimeError):
    def __init__(self, iterations: int, residual: float, time: float | None = None):
        self.iterations = iterations
        self.residual = residual
        self.time = time
        where = f" at t={time:.6g}" if time is not None else ""
        super().__init__(f"Newton-Raphson failed{where} after {iterations} iteration(s), "
                         f"residual {residual:.3g}")


@dataclass(frozen=True)
class LinePort:
    """One port of a transmission line as seen by a solver."""

    line: TLine
    port: int  # 1 or 2

    @property
    def nodes(self) -> tuple[str, str]:
        return self.line.port1 if self.port == 1 else self.line.port2

    @property
    def label(self) -> str:
        return f"{self.line.name}.{self.port}"


@dataclass
class MnaSystem:
    n: int
    A: np.ndarray
    b: np.ndarray
    index: dict[str, int]

    def solve(self) -> np.ndarray:
        return LU(self.A).solve(self.b)


@dataclass
class TransientResult:
    time: np.ndarray
    voltages: dict[str, np.ndarray]
    currents: dict[str, np.ndarray]
    iterations: np.ndarray

    def trace(self, name: str) -> np.ndarray:
        """Look up ``v(node)``, ``i(branch)`` or a bare node name."""
        key = name.lower()
        if key.startswith("v(") and key.endswith(")"):
            node = key[2:-1]
            if node == GROUND:
                return np.zeros_like(self.time)
            return self.voltages[node]
        if key.startswith("i(") and key.endswith(")"):
            return self.currents[key[2:-1]]
        if key == GROUND:
            return np.zeros_like(self.time)
        return self.voltages[key]


def _lines_of(netlist: Netlist) -> list[LinePort]:
    return [LinePort(t, p) for t in netlist.tlines for p in (1, 2)]


class TransientSolver:
    """Fixed-step transient solver for one circuit.

    ``ports`` lists the line ports stamped in this circuit.  Histories are
    created per line on construction; a caller that owns only one end of a
    line (an MTM worker) writes the other end's samples into
    ``histories[line_name]`` as they arrive.
    """

    def __init__(
        self,
        elements: Sequence[Element],
        ports: Sequence[LinePort] = (),
        dt: float = 1e-12,
        nsteps: int = 1,
        tol: NrTolerances = NrTolerances(),
        lossy: str = "auto",
        rule: Rule | str = Rule.TRAPEZOIDAL,
        histories: dict[str, PortHistory] | None = None,
        delays: dict[str, int] | None = None,
    ):
        if dt <= 0 or nsteps < 1:
            raise ValueError("need dt > 0 and nsteps >= 1")
        if lossy not in ("auto", "always", "never"):
            raise ValueError("lossy must be auto, always or never")
        self.elements = list(elements)
        self.ports = list(ports)
        self.dt = dt
        self.nsteps = nsteps
        self.tol = tol
        self.rule = Rule(rule)
        self._compile(lossy, histories, delays or {})
        self.k = 0
        self.x = np.zeros(self.n)
        self.X = np.full((nsteps + 1, self.n), np.nan)
        self.X[0] = 0.0
        self.iterations = np.zeros(nsteps + 1, dtype=int)
        self.vc = np.zeros(len(self._cap))
        self.ic = np.zeros(len(self._cap))
        self.vl = np.zeros(len(self._ind))
        self.il = np.zeros(len(self._ind))
        self._lu_cache: dict[Rule, LU] = {}
        self._static_cache: dict[Rule, np.ndarray] = {}
        self.hook_before_step = None

    # -- compilation -------------------------------------------------------

    def _compile(self, lossy: str, histories, delays):
        nodes: dict[str, int] = {}

        def node(n: str) -> int:
            if n == GROUND:
                return -1
            if n not in nodes:
                nodes[n] = len(nodes)
            return nodes[n]

        for e in self.elements:
            for t in e.terminals:
                node(t)
        for p in self.ports:
            for t in p.nodes:
                node(t)
        nn = len(nodes)
        branches: dict[str, int] = {}
        for e in self.elements:
            if e.kind in ("vsource", "inductor"):
                branches[e.name.lower()] = nn + len(branches)
        for p in self.ports:
            branches[p.label.lower()] = nn + len(branches)
        self.node_index = nodes
        self.branch_index = branches
        self.n = nn + len(branches)
        g = self.n  # ground maps to a scratch row/column that is sliced away

        def ix(name: str) -> int:
            i = node(name)
            return g if i < 0 else i

        self._res, self._cap, self._ind, self._vsrc, self._isrc = [], [], [], [], []
        self._vccs, self._diodes, self._mos = [], [], []
        for e in self.elements:
            t = [ix(n) for n in e.terminals]
            if e.kind == "resistor":
                self._res.append((t[0], t[1], 1.0 / e.params["value"]))
            elif e.kind == "capacitor":
                self._cap.append((t[0], t[1], e.params["value"]))
            elif e.kind == "inductor":
                self._ind.append((t[0], t[1], branches[e.name.lower()], e.params["value"]))
            elif e.kind == "vsource":
                self._vsrc.append((t[0], t[1], branches[e.name.lower()], e.source))
            elif e.kind == "isource":
                self._isrc.append((t[0], t[1], e.source))
            elif e.kind == "vccs":
                self._vccs.append((t[0], t[1], t[2], t[3], e.params["gm"]))
            elif e.kind == "diode":
                self._diodes.append((t[0], t[1], e.params["is"], e.params["vt"]))
            elif e.kind == "mosfet":
                self._mos.append((t[0], t[1], t[2], e.params, e.model))
            else:
                raise ValueError(f"unsupported element kind {e.kind}")
        self.linear = not (self._diodes or self._mos)

        cap = np.array(self._cap, dtype=float).reshape(-1, 3)
        self._cap_a = cap[:, 0].astype(int)
        self._cap_b = cap[:, 1].astype(int)
        self._cap_c = cap[:, 2]
        ind = np.array(self._ind, dtype=float).reshape(-1, 4)
        self._ind_a = ind[:, 0].astype(int)
        self._ind_b = ind[:, 1].astype(int)
        self._ind_br = ind[:, 2].astype(int)
        self._ind_l = ind[:, 3]

        self.histories: dict[str, PortHistory] = dict(histories or {})
        self._port_info = []
        for p in self.ports:
            key = p.line.name.lower()
            if key not in self.histories:
                self.histories[key] = PortHistory(self.dt, self.nsteps)
            d = delays.get(key)
            if d is None:
                d = delay_steps(p.line.params.tau, self.dt)
            use_lossy = lossy == "always" or (lossy == "auto" and not p.line.params.lossless)
            table = KernelTable(p.line.params, self.dt, self.nsteps) if use_lossy else None
            a, b = (ix(n) for n in p.nodes)
            self._port_info.append((p, a, b, branches[p.label.lower()], d, table))

    def _static_matrix(self, rule: Rule) -> np.ndarray:
        if rule not in self._static_cache:
            self._static_cache[rule] = self._build_static(rule)
        return self._static_cache[rule].copy()

    def _build_static(self, rule: Rule) -> np.ndarray:
        g = self.n
        A = np.zeros((g + 1, g + 1))
        for a, b, cond in self._res:
            A[a, a] += cond
            A[b, b] += cond
            A[a, b] -= cond
            A[b, a] -= cond
        if len(self._cap):
            geq, _ = capacitor_companion(self._cap_c, self.dt, 0.0, 0.0, rule)
            geq = np.broadcast_to(geq, self._cap_c.shape)
            np.add.at(A, (self._cap_a, self._cap_a), geq)
            np.add.at(A, (self._cap_b, self._cap_b), geq)
            np.add.at(A, (self._cap_a, self._cap_b), -geq)
            np.add.at(A, (self._cap_b, self._cap_a), -geq)
        if len(self._ind):
            req, _ = inductor_companion(self._ind_l, self.dt, 0.0, 0.0, rule)
            req = np.broadcast_to(req, self._ind_l.shape)
            np.add.at(A, (self._ind_a, self._ind_br), 1.0)
            np.add.at(A, (self._ind_b, self._ind_br), -1.0)
            np.add.at(A, (self._ind_br, self._ind_a), 1.0)
            np.add.at(A, (self._ind_br, self._ind_b), -1.0)
            np.add.at(A, (self._ind_br, self._ind_br), -req)
        for a, b, br, _ in self._vsrc:
            A[a, br] += 1.0
            A[b, br] -= 1.0
            A[br, a] += 1.0
            A[br, b] -= 1.0
        for op, on, cp, cn, gm in self._vccs:
            A[op, cp] += gm
            A[op, cn] -= gm
            A[on, cp] -= gm
            A[on, cn] += gm
        for p, a, b, br, d, table in self._port_info:
            coef_u, coef_i = (table.a, table.b) if table is not None else (1.0, p.line.params.z)
            # line current i_p is delivered into node a and returns from b
            A[a, br] -= 1.0
            A[b, br] += 1.0
            A[br, a] += coef_u
            A[br, b] -= coef_u
            A[br, br] += coef_i
        nn = len(self.node_index)
        idx = np.arange(nn)
        A[idx, idx] += self.tol.gmin
        return A

    # -- per-step assembly -------------------------------------------------

    def _step_rule(self, k: int) -> Rule:
        if self.rule is Rule.TRAPEZOIDAL and k == 1:
            return Rule.BACKWARD_EULER  # startup step
        return self.rule

    def port_rhs(self, k: int) -> list[float]:
        """Right-hand side of each port relation at step k (history only)."""
        out = []
        for p, _, _, _, d, table in self._port_info:
            hist = self.histories[p.line.name.lower()]
            if table is None:
                peer = 2 if p.port == 1 else 1
                u, i = hist.sample(peer, k - d)
                out.append(u - p.line.params.z * i)
            else:
                _, _, D, E, G, H, v, j = lossy_port_terms(hist, table, p.port, k, d)
                out.append(E * v + G * j + H - D)
        return out

    def _rhs(self, k: int, rule: Rule) -> np.ndarray:
        g = self.n
        b = np.zeros(g + 1)
        t = k * self.dt
        if len(self._cap):
            _, ieq = capacitor_companion(self._cap_c, self.dt, self.vc, self.ic, rule)
            ieq = np.broadcast_to(ieq, self._cap_c.shape)
            np.add.at(b, self._cap_a, ieq)
            np.add.at(b, self._cap_b, -ieq)
        if len(self._ind):
            _, veq = inductor_companion(self._ind_l, self.dt, self.vl, self.il, rule)
            b[self._ind_br] += veq
        for a, bb, br, src in self._vsrc:
            b[br] += src.value(t)
        for a, bb, src in self._isrc:
            i = src.value(t)
            b[a] -= i
            b[bb] += i
        for (p, a, bb, br, d, table), e in zip(self._port_info, self.port_rhs(k)):
            b[br] += e
        return b

    def _nonlinear(self, A: np.ndarray, b: np.ndarray, xg: np.ndarray) -> None:
        x = np.append(xg, 0.0)
        for a, c, isat, vt in self._diodes:
            v = x[a] - x[c]
            i, gd = diode_current(v, isat, vt)
            ieq = i - gd * v
            A[a, a] += gd
            A[c, c] += gd
            A[a, c] -= gd
            A[c, a] -= gd
            b[a] -= ieq
            b[c] += ieq
        for d, gt, s, params, model in self._mos:
            vgs = x[gt] - x[s]
            vds = x[d] - x[s]
            i, gm, gds = mosfet_current(vgs, vds, params, model)
            ieq = i - gm * vgs - gds * vds
            A[d, gt] += gm
            A[d, s] -= gm + gds
            A[d, d] += gds
            A[s, gt] -= gm
            A[s, s] += gm + gds
            A[s, d] -= gds
            b[d] -= ieq
            b[s] += ieq

    def assemble(self, x_guess: np.ndarray | None = None, k: int | None = None) -> MnaSystem:
        """Linearized MNA system for step k (default: the next step)."""
        k = self.k + 1 if k is None else k
        rule = self._step_rule(k)
        xg = self.x if x_guess is None else np.asarray(x_guess, dtype=float)
        A = self._static_matrix(rule)
        b = self._rhs(k, rule)
        self._nonlinear(A, b, xg)
        index = {**self.node_index, **{"#" + n: i for n, i in self.branch_index.items()}}
        return MnaSystem(self.n, A[: self.n, : self.n], b[: self.n], index)

    # -- Newton-Raphson ----------------------------------------------------

    def _junction_voltages(self, x: np.ndarray) -> np.ndarray:
        xe = np.append(x, 0.0)
        vals = [xe[a] - xe[c] for a, c, _, _ in self._diodes]
        for d, gt, s, _, _ in self._mos:
            vals += [xe[gt] - xe[s], xe[d] - xe[s]]
        return np.array(vals)

    def _newton(self, k: int, rule: Rule, b_lin: np.ndarray) -> tuple[np.ndarray, int]:
        n = self.n
        tol = self.tol
        if self.linear:
            lu = self._lu_cache.get(rule)
            if lu is None:
                lu = self._lu_cache[rule] = LU(self._static_matrix(rule)[:n, :n])
            return lu.solve(b_lin[:n]), 1

        A0 = self._static_matrix(rule)
        x = self.x.copy()
        nn = len(self.node_index)
        residual = math.inf
        A = A0.copy()
        b = b_lin.copy()
        self._nonlinear(A, b, x)
        for it in range(1, tol.maxiter + 1):
            x_new = LU(A[:n, :n]).solve(b[:n])
            dx = x_new - x
            if self._diodes or self._mos:
                dj = np.max(np.abs(self._junction_voltages(x_new) - self._junction_voltages(x)))
                if dj > tol.max_junction_step:
                    dx *= tol.max_junction_step / dj
            x_old = x
            x = x + dx
            A = A0.copy()
            b = b_lin.copy()
            self._nonlinear(A, b, x)
            Ar, br = A[:n, :n], b[:n]
            r = Ar @ x - br
            scale = np.abs(Ar) @ np.abs(x) + np.abs(br)
            step_ok = np.abs(dx) <= np.concatenate((
                np.full(nn, tol.vntol), np.full(n - nn, tol.abstol))) + tol.reltol * np.maximum(
                np.abs(x), np.abs(x_old))
            res_lim = np.concatenate((np.full(nn, tol.abstol), np.full(n - nn, tol.vntol))) + tol.reltol * scale
            residual = float(np.max(np.abs(r))) if n else 0.0
            if np.all(step_ok) and np.all(np.abs(r) <= res_lim):
                return x, it
        raise NoConvergence(tol.maxiter, residual, k * self.dt)

    # -- stepping ----------------------------------------------------------

    def step(self) -> None:
        k = self.k + 1
        if k > self.nsteps:
            raise RuntimeError("solver advanced past its allocated horizon")
        if self.hook_before_step is not None:
            self.hook_before_step(self, k)
        rule = self._step_rule(k)
        b = self._rhs(k, rule)
        x, iters = self._newton(k, rule, b)
        self._accept(k, rule, x, iters)

    def _accept(self, k: int, rule: Rule, x: np.ndarray, iters: int) -> None:
        xe = np.append(x, 0.0)
        if len(self._cap):
            geq, ieq = capacitor_companion(self._cap_c, self.dt, self.vc, self.ic, rule)
            v = xe[self._cap_a] - xe[self._cap_b]
            self.ic = geq * v - ieq
            self.vc = v
        if len(self._ind):
            self.vl = xe[self._ind_a] - xe[self._ind_b]
            self.il = xe[self._ind_br]
        for p, a, b, br, d, table in self._port_info:
            self.histories[p.line.name.lower()].record(p.port, k, xe[a] - xe[b], xe[br])
        self.x = x
        self.X[k] = x
        self.iterations[k] = iters
        self.k = k

    def advance(self, nsteps: int) -> None:
        for _ in range(nsteps):
            self.step()

    def snapshot(self):
        """State needed to re-solve from the current step (histories excluded)."""
        return copy.deepcopy((self.k, self.x, self.vc, self.ic, self.vl, self.il))

    def restore(self, snap) -> None:
        self.k, self.x, self.vc, self.ic, self.vl, self.il = copy.deepcopy(snap)

    def result(self, upto: int | None = None) -> TransientResult:
        k = self.k if upto is None else upto
        X = self.X[: k + 1]
        volts = {name: X[:, i].copy() for name, i in self.node_index.items()}
        amps = {name: X[:, i].copy() for name, i in self.branch_index.items()}
        return TransientResult(np.arange(k + 1) * self.dt, volts, amps, self.iterations[: k + 1].copy())


def _steps(t: float, dt: float) -> int:
    r = t / dt
    n = round(r)
    if abs(r - n) <= 1e-9 * max(1.0, r):
        return int(n)
    return int(math.ceil(r))


def run_transient(
    circuit: Netlist | Sequence[Element],
    stop: float,
    dt: float,
    ports: Sequence[LinePort] | None = None,
    tol: NrTolerances = NrTolerances(),
    rule: Rule | str = Rule.TRAPEZOIDAL,
    lossy: str = "auto",
    histories: dict[str, PortHistory] | None = None,
    delays: dict[str, int] | None = None,
) -> TransientResult:
    """Solve ``circuit`` from rest at t = 0 to ``stop`` with fixed step ``dt``.

    For a :class:`Netlist`, both ports of every line are stamped locally
    unless ``ports`` says otherwise.
    """
    if isinstance(circuit, Netlist):
        elements = circuit.elements
        ports = _lines_of(circuit) if ports is None else ports
    else:
        elements = circuit
        ports = ports or []
    n = _steps(stop, dt)
    s = TransientSolver(elements, ports, dt, n, tol, lossy=lossy, rule=rule,
                        histories=histories, delays=delays)
    s.advance(n)
    return s.result()


def assemble(circuit: Netlist | Sequence[Element], dt: float, x_guess=None,
             tol: NrTolerances = NrTolerances()) -> MnaSystem:
    """MNA system of the first time step of ``circuit`` linearized at ``x_guess``."""
    if isinstance(circuit, Netlist):
        s = TransientSolver(circuit.elements, _lines_of(circuit), dt, 1, tol)
    else:
        s = TransientSolver(circuit, (), dt, 1, tol)
    return s.assemble(x_guess)


def newton_solve(build, x0, tol: NrTolerances = NrTolerances()) -> tuple[np.ndarray, int]:
    """Generic damped Newton iteration.

    ``build(x)`` returns ``(A, b)``, the system linearized at x (so that the
    nonlinear residual is ``A@x - b``).  Convergence needs both the update
    and the residual inside tolerance.
    """
    x = np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("initial guess must be finite")
    A, b = build(x)
    residual = math.inf
    for it in range(1, tol.maxiter + 1):
        x_new = LU(A).solve(b)
        A_new, b_new = build(x_new)
        if np.array_equal(A_new, A) and np.array_equal(b_new, b):
            return x_new, it  # linearization unchanged: the step was exact
        dx = x_new - x
        big = np.max(np.abs(dx)) if dx.size else 0.0
        x_old = x
        if big > tol.max_junction_step:
            x = x + dx * (tol.max_junction_step / big)
            dx = x - x_old
            A, b = build(x)
        else:
            x, A, b = x_new, A_new, b_new
        r = A @ x - b
        residual = float(np.max(np.abs(r))) if r.size else 0.0
        scale = np.abs(A) @ np.abs(x) + np.abs(b)
        if (np.all(np.abs(dx) <= tol.vntol + tol.reltol * np.maximum(np.abs(x), np.abs(x_old)))
                and np.all(np.abs(r) <= tol.abstol + tol.reltol * scale)):
            return x, it
    raise NoConvergence(tol.maxiter, residual)


def dc_operating_point(circuit: Netlist | Sequence[Element],
                       tol: NrTolerances = NrTolerances()) -> dict[str, float]:
    """DC solution with capacitors open and inductors shorted.

    Not used by MTM runs, which start from rest.  Circuits with transmission
    lines are not supported here.
    """
    if isinstance(circuit, Netlist):
        if circuit.tlines:
            raise ValueError("DC operating point does not handle transmission lines")
        circuit = circuit.elements
    s = TransientSolver(circuit, (), 1.0, 1, tol, rule=Rule.DC)
    b = s._rhs(0, Rule.DC)
    # sources at their t = 0 values; no startup override for the DC rule
    x, _ = s._newton(0, Rule.DC, b)
    out = {name: float(x[i]) for name, i in s.node_index.items()}
    out.update({f"i({name})": float(x[i]) for name, i in s.branch_index.items()})
    return out
