"""MTM orchestration, the monolithic reference and the WR baseline."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..netlist import Netlist
from ..partition import Partition, StepPlan, line_delays, plan_step
from ..solver import (
    NoConvergence,
    NrTolerances,
    TransientResult,
    TransientSolver,
    _lines_of,
    _steps,
)
from .protocol import FLAG_WR, PortWaveformMessage
from .transport import InProcessTransport, TcpHub, exchange
from .worker import Worker, WorkerSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WrSettings:
    max_iterations: int = 50
    tol: float = 1e-6  # on max |du| + Z |di|
    window_steps: int | None = None  # None: same windows as MTM


@dataclass(frozen=True)
class MtmConfig:
    plan: StepPlan
    stop: float
    transport: str = "inproc"
    tol: NrTolerances = NrTolerances()
    wr: WrSettings = WrSettings()
    rule: str = "trap"
    lossy: str = "auto"
    # before_window(n, workers) runs ahead of every window's solve; used by
    # tests to tamper with samples a worker must not read yet
    before_window: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.transport not in ("inproc", "tcp"):
            raise ValueError(f"unknown transport {self.transport!r}")
        if self.stop < self.plan.window * (1.0 - 1e-9):
            raise ValueError("stop time must cover at least one window")

    @property
    def nsteps(self) -> int:
        return _steps(self.stop, self.plan.dt)


@dataclass
class RunStats:
    windows: int = 0
    k_distri: int = 0
    messages: int = 0
    nr_iterations: int = 0
    window_iterations: list[int] = field(default_factory=list)  # local NR iterations per window
    wr_iterations: list[int] = field(default_factory=list)  # WR sweeps per window
    wall: dict[str, float] = field(default_factory=dict)


class WindowNoConvergence(RuntimeError):
    def __init__(self, window: int, subcircuit: int, cause: NoConvergence):
        self.window = window
        self.subcircuit = subcircuit
        self.cause = cause
        super().__init__(f"subcircuit {subcircuit}, window {window}: {cause}")


class WrNoConvergence(RuntimeError):
    def __init__(self, window: int, iterations: int, change: float):
        self.window = window
        self.iterations = iterations
        self.change = change
        super().__init__(f"waveform relaxation did not converge in window {window} after "
                         f"{iterations} iterations (last change {change:.3e})")


def make_config(
    netlist: Netlist,
    partition: Partition,
    step: float | None = None,
    stop: float | None = None,
    **kwargs,
) -> MtmConfig:
    """Config from the netlist's ``.tran`` with optional overrides."""
    step = netlist.directives.step if step is None else step
    stop = netlist.directives.stop if stop is None else stop
    if step is None or stop is None:
        raise ValueError("no step/stop given and the netlist has no .tran directive")
    return MtmConfig(plan_step(step, partition.tau_min), stop, **kwargs)


def predict_counts(method: str, t1: float, t2: float, step: float, K: int = 1, k: int = 1) -> int:
    """Distributed-computation count for mtm, wr or dnr (distributed Newton)."""
    if not (t2 > t1 and step > 0 and K >= 1 and k >= 1):
        raise ValueError("need t2 > t1, step > 0, K >= 1, k >= 1")
    steps = _steps(t2 - t1, step)
    windows = -(-steps // K)
    if method == "mtm":
        return windows
    if method == "wr":
        return windows * k
    if method == "dnr":
        return steps * 2 * k
    raise ValueError(f"unknown method {method!r}")


def stitch(results: list[TransientResult]) -> TransientResult:
    """Merge per-subcircuit results on a common time grid."""
    if not results:
        raise ValueError("nothing to stitch")
    t = results[0].time
    volts, amps = {}, {}
    iters = np.zeros_like(results[0].iterations)
    for r in results:
        if len(r.time) != len(t):
            raise ValueError("results cover different time spans")
        volts.update(r.voltages)
        amps.update(r.currents)
        iters = iters + r.iterations
    return TransientResult(t.copy(), volts, amps, iters)


def _delays(netlist: Netlist, dt: float) -> dict[str, int]:
    delays, warnings = line_delays(netlist.tlines, dt)
    for w in warnings:
        log.warning(w)
    return delays


def _specs(netlist: Netlist, partition: Partition, config: MtmConfig, lossy: str, K: int) -> list[WorkerSpec]:
    delays = _delays(netlist, config.plan.dt)
    for w in partition.wires:
        if delays[w.line.name.lower()] < K:
            raise ValueError(f"wire {w.line.name} is shorter than the window")
    return [
        WorkerSpec(sub, tuple(partition.wires_of(sub.index)), config.plan.dt, config.nsteps, K,
                   delays, config.tol, lossy, config.rule)
        for sub in partition.subcircuits
    ]


def run_monolithic(netlist: Netlist, config: MtmConfig) -> TransientResult:
    """Whole circuit on one solver, every line stamped with both ports."""
    solver = TransientSolver(
        netlist.elements, _lines_of(netlist), config.plan.dt, config.nsteps, config.tol,
        lossy=config.lossy, rule=config.rule, delays=_delays(netlist, config.plan.dt),
    )
    solver.advance(config.nsteps)
    return solver.result()


def _solve(worker: Worker, n: int, **kw) -> list[PortWaveformMessage]:
    try:
        return worker.solve_window(n, **kw)
    except NoConvergence as exc:
        raise WindowNoConvergence(n, worker.index, exc) from exc


def _run_inproc(partition: Partition, specs: list[WorkerSpec], config: MtmConfig, stats: RunStats):
    workers = [Worker(s) for s in specs]
    transport = InProcessTransport(partition)
    nwin = workers[0].nwindows
    by_index = {w.index: w for w in workers}
    solve_t = exch_t = 0.0
    with ThreadPoolExecutor(max_workers=len(workers)) as pool:
        for n in range(nwin):
            if config.before_window is not None:
                config.before_window(n, workers)
            t0 = time.perf_counter()
            # the barrier: every worker finishes window n before any message moves
            outs = list(pool.map(lambda w: _solve(w, n), workers))
            t1 = time.perf_counter()
            sent = [m for out in outs for m in out]
            for msg in exchange(transport, sent):
                by_index[transport.routes[(msg.wire_id, msg.port)]].receive(msg, n)
            exch_t += time.perf_counter() - t1
            solve_t += t1 - t0
            stats.messages += len(sent)
    stats.wall.update(solve=solve_t, exchange=exch_t)
    return {w.index: (w.solver.result(), w.window_iterations) for w in workers}, nwin


def _run_mtm(netlist: Netlist, partition: Partition, config: MtmConfig, lossy: str):
    start = time.perf_counter()
    specs = _specs(netlist, partition, config, lossy, config.plan.K)
    stats = RunStats()
    nwin = -(-config.nsteps // config.plan.K)
    if config.transport == "tcp":
        if config.before_window is not None:
            raise ValueError("before_window hooks need the in-process transport")
        hub = TcpHub(partition, specs)
        collected = hub.run(nwin)
        stats.messages = hub.delivered
        stats.wall["exchange"] = hub.exchange_time
    else:
        collected, nwin = _run_inproc(partition, specs, config, stats)
    results = [collected[s.sub.index][0] for s in specs]
    per_window = np.zeros(nwin, dtype=int)
    for s in specs:
        per_window += np.asarray(collected[s.sub.index][1], dtype=int)
    stats.windows = nwin
    stats.k_distri = nwin
    stats.window_iterations = [int(v) for v in per_window]
    stats.nr_iterations = int(per_window.sum())
    stats.wall["total"] = time.perf_counter() - start
    return results, stats


def run_mtm(netlist: Netlist, partition: Partition, config: MtmConfig):
    """One solve and one exchange per window.  Returns (results, stats)."""
    return _run_mtm(netlist, partition, config, config.lossy)


def run_mtm_lossy(netlist: Netlist, partition: Partition, config: MtmConfig):
    """As :func:`run_mtm` with every line on the convolution model."""
    return _run_mtm(netlist, partition, config, "always")


def _hold_guess(worker: Worker, first: int, last: int) -> None:
    # unknown peer samples in the window repeat the last known one
    for wire, port in worker.spec.wires:
        peer = 2 if port == 1 else 1
        hist = worker.history(wire)
        for arr in (hist.u[peer], hist.i[peer]):
            seg = arr[first:last + 1]
            seg[np.isnan(seg)] = arr[first - 1]


def _change(prev: list[PortWaveformMessage], cur: list[PortWaveformMessage], z: dict[int, float]) -> float:
    worst = 0.0
    for a, b in zip(prev, cur):
        ua, ia = a.arrays()
        ub, ib = b.arrays()
        if len(ua):
            worst = max(worst, float(np.max(np.abs(ub - ua) + z[a.wire_id] * np.abs(ib - ia))))
    return worst


def run_wr_baseline(netlist: Netlist, partition: Partition, config: MtmConfig):
    """Gauss-Jacobi waveform relaxation over windows.  Returns (result, stats).

    Each window is re-solved from the same starting state with the peer
    waveforms of the previous sweep until the port waveforms stop moving.
    Always runs in-process.
    """
    start = time.perf_counter()
    wr = config.wr
    K = wr.window_steps or config.plan.K
    specs = [replace(s, K=K) for s in _specs(netlist, partition, config, config.lossy, 1)]
    workers = [Worker(s) for s in specs]
    by_index = {w.index: w for w in workers}
    transport = InProcessTransport(partition)
    z = {w.wire_id: w.line.params.z for w in partition.wires}
    stats = RunStats()
    nwin = workers[0].nwindows
    tag = 0
    for n in range(nwin):
        first, last = workers[0].window_range(n)
        snaps = {w.index: w.solver.snapshot() for w in workers}
        for w in workers:
            _hold_guess(w, first, last)
        prev = None
        nr_window = 0
        for it in range(1, wr.max_iterations + 1):
            sent = []
            nr = 0
            for w in workers:
                w.solver.restore(snaps[w.index])
                before = len(w.window_iterations)
                sent += _solve(w, n, flags=FLAG_WR, tag=tag)
                nr += sum(w.window_iterations[before:])
            tag += 1
            stats.k_distri += 1
            stats.messages += len(sent)
            stats.nr_iterations += nr
            nr_window += nr
            for msg in exchange(transport, sent):
                by_index[transport.routes[(msg.wire_id, msg.port)]].receive(msg, n)
            change = math.inf if prev is None else _change(prev, sent, z)
            prev = sent
            if math.isinf(wr.tol) or change <= wr.tol:
                break
        else:
            raise WrNoConvergence(n, wr.max_iterations, change)
        stats.wr_iterations.append(it)
        stats.window_iterations.append(nr_window)
    stats.windows = nwin
    stats.wall["total"] = time.perf_counter() - start
    return stitch([w.solver.result() for w in workers]), stats
