"""Command-line front end.

Exit codes: 0 success, 1 netlist parse/validation failure, 2 simulation
failure (Newton or waveform relaxation did not converge, transport broke),
3 compare threshold exceeded.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import output
from .mtm import (
    MtmConfig,
    TransportError,
    WindowNoConvergence,
    WorkerFailed,
    WrNoConvergence,
    make_config,
    predict_counts,
    run_monolithic,
    run_mtm,
    run_wr_baseline,
    stitch,
)
from .netlist import Netlist, NetlistError, parse_netlist, validate
from .partition import PartitionError, StepTooLarge, plan_step, tear_by_wires
from .solver import NoConvergence, NrTolerances

EXIT_OK, EXIT_INPUT, EXIT_SOLVE, EXIT_THRESHOLD = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


@dataclass(frozen=True)
class CliConfig:
    command: str
    netlist: Path | None
    out: Path
    transport: str = "inproc"
    step: float | None = None
    stop: float | None = None
    reltol: float | None = None
    abstol: float | None = None
    plot: bool = False
    wr: bool = False
    threshold: float | None = None
    seed: int | None = None  # reserved, nothing is random yet


def _setup_logging() -> None:
    level = {"debug": logging.DEBUG, "info": logging.INFO}.get(os.environ.get("MTM_LOG", "").lower(),
                                                                logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load(cfg: CliConfig) -> Netlist:
    try:
        text = Path(cfg.netlist).read_text()
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read {cfg.netlist}: {exc.strerror or exc}") from exc
    try:
        net = parse_netlist(text)
    except NetlistError as exc:
        raise CliError(EXIT_INPUT, f"{cfg.netlist}: {exc}") from exc
    diags = validate(net)
    for d in diags:
        print(f"{cfg.netlist}: {d}", file=sys.stderr)
    if any(d.severity == "error" for d in diags):
        raise CliError(EXIT_INPUT, f"{cfg.netlist}: validation failed")
    step = cfg.step if cfg.step is not None else net.directives.step
    stop = cfg.stop if cfg.stop is not None else net.directives.stop
    if step is None or stop is None:
        raise CliError(EXIT_INPUT, f"{cfg.netlist}: no .tran directive and no --step/--stop")
    return net.with_directives(step=step, stop=stop)


def _tol(cfg: CliConfig) -> NrTolerances:
    tol = NrTolerances()
    if cfg.reltol is not None:
        tol = replace(tol, reltol=cfg.reltol)
    if cfg.abstol is not None:
        tol = replace(tol, abstol=cfg.abstol)
    return tol


def _partition(net: Netlist):
    try:
        return tear_by_wires(net)
    except PartitionError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc


def _config(net: Netlist, part, cfg: CliConfig) -> MtmConfig:
    try:
        return make_config(net, part, transport=cfg.transport, tol=_tol(cfg))
    except (StepTooLarge, ValueError) as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc


def _stats_rows(named):
    return [(name, s.windows, s.k_distri, s.messages, s.nr_iterations) for name, s in named]


STATS_HEADER = ("method", "windows", "k_distri", "messages", "nr_iterations")


def cmd_run(cfg: CliConfig) -> int:
    net = _load(cfg)
    try:
        # lines get whole-step delays when dt divides the shortest one
        tau = min((t.params.tau for t in net.tlines), default=float("inf"))
        plan = plan_step(net.directives.step, tau)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    res = run_monolithic(net, MtmConfig(plan, net.directives.stop, tol=_tol(cfg)))
    paths = output.write_trace(cfg.out, res, net.directives.prints, cfg.plot, title=str(cfg.netlist))
    print(f"wrote {paths['csv']} ({len(res.time)} rows)")
    return EXIT_OK


def cmd_mtm(cfg: CliConfig) -> int:
    net = _load(cfg)
    part = _partition(net)
    config = _config(net, part, cfg)
    results, stats = run_mtm(net, part, config)
    res = stitch(results)
    output.write_trace(cfg.out, res, net.directives.prints, cfg.plot, title=f"MTM {cfg.netlist}")
    (Path(cfg.out) / "stats.csv").write_text(output.render_table(STATS_HEADER, _stats_rows([("mtm", stats)])))
    print(f"mtm: {stats.windows} windows, k_distri={stats.k_distri}, {stats.messages} messages, "
          f"dt={config.plan.dt:.6g} s, K={config.plan.K}")
    return EXIT_OK


def cmd_wr(cfg: CliConfig) -> int:
    net = _load(cfg)
    part = _partition(net)
    config = _config(net, part, cfg)
    res, stats = run_wr_baseline(net, part, config)
    output.write_trace(cfg.out, res, net.directives.prints, cfg.plot, title=f"WR {cfg.netlist}")
    (Path(cfg.out) / "stats.csv").write_text(output.render_table(STATS_HEADER, _stats_rows([("wr", stats)])))
    print(f"wr: {stats.windows} windows, k_distri={stats.k_distri}, {stats.messages} messages")
    return EXIT_OK


def cmd_compare(cfg: CliConfig) -> int:
    net = _load(cfg)
    if not net.directives.partition:
        raise CliError(EXIT_INPUT, f"{cfg.netlist}: compare needs a .partition directive")
    part = _partition(net)
    config = _config(net, part, cfg)
    mono = run_monolithic(net, config)
    results, stats = run_mtm(net, part, config)
    mtm = stitch(results)
    named = [("mtm", stats)]
    if cfg.wr:
        _, wr_stats = run_wr_baseline(net, part, config)
        named.append(("wr", wr_stats))

    vmax = max(float(np.max(np.abs(v))) for v in mono.voltages.values())
    threshold = cfg.threshold if cfg.threshold is not None else 1e-6 * vmax
    rows = []
    worst = 0.0
    for node in sorted(mono.voltages):
        d = float(np.max(np.abs(mtm.voltages[node] - mono.voltages[node])))
        worst = max(worst, d)
        rows.append((node, d))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "diff.csv").write_text(output.render_table(("node", "max_abs_diff"), rows))
    (out / "stats.csv").write_text(output.render_table(STATS_HEADER, _stats_rows(named)))
    output.write_trace(out, mtm, net.directives.prints, cfg.plot, stem="trace_mtm", title="MTM")
    output.write_trace(out, mono, net.directives.prints, cfg.plot, stem="trace_mono", title="monolithic")
    for name, s in named:
        print(f"{name}: windows={s.windows} k_distri={s.k_distri} messages={s.messages}")
    print(f"max |MTM - monolithic| = {worst:.3e} V (threshold {threshold:.3e} V)")
    if worst > threshold:
        print("threshold exceeded", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_counts(args) -> int:
    print(predict_counts(args.method, args.t1, args.t2, args.step, args.K, args.k))
    return EXIT_OK


def _float(text: str) -> float:
    from .netlist import parse_value

    try:
        return parse_value(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtmsim", description="Distributed transient circuit simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    def sim(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("netlist", type=Path)
        s.add_argument("-o", "--out", type=Path, default=Path("out"))
        s.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
        s.add_argument("--step", type=_float)
        s.add_argument("--stop", type=_float)
        s.add_argument("--reltol", type=float)
        s.add_argument("--abstol", type=float)
        s.add_argument("--plot", action="store_true", help="also write an SVG plot")
        s.add_argument("--seed", type=int, help="reserved")
        return s

    sim("run", "single-solver transient run")
    sim("mtm", "distributed run, one exchange per window")
    sim("wr", "waveform-relaxation baseline")
    c = sim("compare", "monolithic vs MTM (and WR) with difference and count tables")
    c.add_argument("--wr", action="store_true", help="include the WR baseline")
    c.add_argument("--threshold", type=float, help="max allowed |MTM - monolithic| in volts")

    k = sub.add_parser("counts", help="predicted distributed-computation count")
    k.add_argument("method", choices=("mtm", "wr", "dnr"))
    k.add_argument("--t1", type=_float, default=0.0)
    k.add_argument("--t2", type=_float, required=True)
    k.add_argument("--step", type=_float, required=True)
    k.add_argument("--K", type=int, default=1)
    k.add_argument("--k", type=int, default=1)
    return p


COMMANDS = {"run": cmd_run, "mtm": cmd_mtm, "wr": cmd_wr, "compare": cmd_compare}


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "counts":
        try:
            return cmd_counts(args)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
    cfg = CliConfig(
        args.command, args.netlist, args.out, args.transport, args.step, args.stop,
        args.reltol, args.abstol, args.plot, getattr(args, "wr", False),
        getattr(args, "threshold", None), args.seed,
    )
    try:
        return COMMANDS[args.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (NoConvergence, WindowNoConvergence, WrNoConvergence, TransportError, WorkerFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    except StepTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
