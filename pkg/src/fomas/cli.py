"""Command-line front end.

Exit status is 0 on success, 1 on a domain failure (stalled homotopy, a
controller that fails verification) and 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .errors import ConnectivityError, DimensionError, FomasError, HomotopyStalled, NotDecentralizedError
from .model import DecentralizedController, full_loop_matrix
from .simulation import (SimulationConfig, agent_metrics, consensus_error, read_trajectory_csv,
                         simulate_loop, write_metrics_csv, write_trajectory_csv)
from .stability import MARGIN_TOL
from .synthesis import HomotopyConfig, synthesize, verify
from .uncertainty import sample_deltas

log = logging.getLogger("fomas")

LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _configure_logging(level: str) -> None:
    root = logging.getLogger("fomas")
    for h in list(root.handlers):
        root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
    root.setLevel(LOG_LEVELS[level])
    root.propagate = False


def _log_warning(message, category, filename, lineno, file=None, line=None):
    log.warning("warning: %s", message)


def _problem_path(arg: str | None) -> Path:
    """``None``, ``example`` or a missing ``paper_example.json`` mean the bundled file."""
    if arg is None or arg == "example":
        return io.bundled_example_path()
    path = Path(arg)
    if not path.exists() and path.name == io.PAPER_EXAMPLE:
        return io.bundled_example_path()
    if not path.exists():
        raise UsageError(f"problem file not found: {arg}")
    return path


def _load_problem(arg: str | None) -> io.ProblemFile:
    return io.read_problem_file(_problem_path(arg))


def _load_controller(arg: str, pf: io.ProblemFile) -> tuple[str, DecentralizedController]:
    """A controller file, or the name of one of the problem's reference controllers."""
    path = Path(arg)
    if path.exists():
        return path.stem, io.read_controller_file(path)
    if arg in pf.references:
        return arg, pf.references[arg]
    known = ", ".join(sorted(pf.references)) or "none"
    raise UsageError(f"controller {arg!r} is neither a file nor a reference controller (known: {known})")


def _sample_draws(pf: io.ProblemFile, samples: int, seed: int) -> list:
    if samples < 0:
        raise UsageError("--samples must be nonnegative")
    if samples == 0 or pf.problem.uncertainty is None:
        return []
    rng = np.random.default_rng(seed)
    return sample_deltas(pf.problem.uncertainty.j_matrix, samples, rng)


def _sim_config(pf: io.ProblemFile, t_end, step) -> SimulationConfig:
    base = pf.sim or SimulationConfig()
    try:
        return SimulationConfig(step if step is not None else base.step,
                                t_end if t_end is not None else base.t_end, base.scheme)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _verdict(margins: dict) -> bool:
    return all(m > MARGIN_TOL for m in margins.values())


def _write_text(text: str, output) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_design(args) -> int:
    pf = _load_problem(args.problem)
    p = pf.problem if args.order is None else pf.problem.with_order(args.order)
    robust = not args.nominal
    if not robust:
        p = p.nominal()
    cfg = pf.homotopy
    if args.T is not None:
        cfg = HomotopyConfig(t_steps=args.T, eps_feas=cfg.eps_feas, q_shift=cfg.q_shift,
                             max_refinements=cfg.max_refinements)
    log.info("design: N=%d n=%d n_c=%d alpha=%g mode=%s", p.n_agents, p.n, p.n_c, p.alpha,
             "robust" if robust else "nominal")
    try:
        res = synthesize(p, cfg, robust=robust)
    except HomotopyStalled as exc:
        log.error("%s", exc)
        return EXIT_DOMAIN
    except ConnectivityError as exc:
        log.error("design failed: %s", exc)
        return EXIT_DOMAIN
    prov = io.synthesis_provenance(p, res)
    ok = res.robustly_stable
    draws = _sample_draws(pf, args.samples, args.seed) if robust else []
    if draws:
        extra = verify(p, res.controller, draws)
        sampled = {k: v for k, v in extra.items() if k.startswith("sample")}
        prov["verification"].update(sampled)
        prov["samples"] = {"count": len(draws), "seed": args.seed}
        ok = ok and _verdict(sampled)
        prov["robustly_stable"] = bool(ok)
    text = io.dumps(io.controller_to_dict(res.controller, prov)) + "\n"
    _write_text(text, args.output)
    worst = min(prov["verification"].values())
    log.info("verdict: %s (smallest sector margin %.4f rad over %d checks)",
             "robustly stable" if ok else "NOT robustly stable", worst, len(prov["verification"]))
    return EXIT_OK if ok else EXIT_DOMAIN


def cmd_verify(args) -> int:
    pf = _load_problem(args.problem)
    name, k = _load_controller(args.controller, pf)
    p = pf.problem.with_order(k.n_c)
    if args.nominal:
        p = p.nominal()
    margins = verify(p, k, _sample_draws(pf, args.samples, args.seed))
    ok = _verdict(margins)
    lines = ["check,margin_rad,stable"]
    lines += [f"{lbl},{m:.12g},{int(m > MARGIN_TOL)}" for lbl, m in margins.items()]
    _write_text("\n".join(lines) + "\n", args.output)
    log.info("verify %s: %s (smallest margin %.4f rad over %d checks)", name,
             "stable" if ok else "NOT stable", min(margins.values()), len(margins))
    return EXIT_OK if ok else EXIT_DOMAIN


def _run_simulation(pf: io.ProblemFile, k: DecentralizedController, cfg: SimulationConfig, nominal: bool):
    if pf.x0 is None:
        raise UsageError("problem file has no sim.x0 initial state")
    p = pf.problem.with_order(k.n_c)
    real = None if nominal else p.realization
    a_full = full_loop_matrix(p, k, real)
    return simulate_loop(a_full, pf.x0, cfg, p.alpha, p.n, p.n_agents, k.n_c)


def cmd_simulate(args) -> int:
    pf = _load_problem(args.problem)
    name, k = _load_controller(args.controller, pf)
    cfg = _sim_config(pf, args.t_end, args.step)
    traj = _run_simulation(pf, k, cfg, args.nominal)
    out = args.output or "trajectory.csv"
    write_trajectory_csv(traj, out)
    err = consensus_error(traj)
    log.info("simulate %s: %d steps to t=%g, max consensus error at end %.4g -> %s",
             name, cfg.n_steps, traj.times[-1], err[-1].max(), out)
    return EXIT_OK


def cmd_metrics(args) -> int:
    try:
        traj = read_trajectory_csv(args.trajectory)
    except FileNotFoundError:
        raise UsageError(f"trajectory file not found: {args.trajectory}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    reports = agent_metrics(traj)
    write_metrics_csv(reports, args.output if args.output is not None else sys.stdout)
    for i, r in enumerate(reports):
        log.info("agent %d: ISE=%.4f IAE=%.4f ITSE=%.4f ITAE=%.4f", i + 1, *r.as_row())
    return EXIT_OK


def cmd_demo(args) -> int:
    pf = io.read_problem_file(io.bundled_example_path())
    outdir = Path(args.output or "demo_output")
    outdir.mkdir(parents=True, exist_ok=True)
    cfg = _sim_config(pf, args.t_end, args.step)
    ok = True
    controllers = dict(pf.references)

    log.info("== reference controllers")
    for name, k in controllers.items():
        margins = verify(pf.problem.with_order(k.n_c), k)
        good = _verdict(margins)
        ok &= good
        log.info("%s: %s, smallest margin %.4f rad", name, "stable" if good else "NOT stable", min(margins.values()))

    orders = (0,) if args.quick else (0, 2)
    for n_c in orders:
        log.info("== design n_c=%d", n_c)
        p = pf.problem.with_order(n_c)
        try:
            res = synthesize(p, pf.homotopy, robust=True)
        except HomotopyStalled as exc:
            log.error("%s", exc)
            return EXIT_DOMAIN
        ok &= res.robustly_stable
        name = f"designed_order{n_c}"
        io.write_controller_file(res.controller, outdir / f"{name}.json", io.synthesis_provenance(p, res))
        controllers[name] = res.controller

    log.info("== simulation to t=%g", cfg.t_end)
    summary = ["controller,max_error_end,sum_ISE,sum_IAE,sum_ITSE,sum_ITAE"]
    for name, k in controllers.items():
        traj = _run_simulation(pf, k, cfg, nominal=False)
        write_trajectory_csv(traj, outdir / f"{name}_trajectory.csv")
        reports = agent_metrics(traj)
        write_metrics_csv(reports, outdir / f"{name}_metrics.csv")
        sums = np.sum([r.as_row() for r in reports], axis=0)
        e_end = consensus_error(traj)[-1].max()
        summary.append(f"{name},{e_end:.6g}," + ",".join(f"{v:.6g}" for v in sums))
        log.info("%s: max e(t_end)=%.4f summed IAE=%.4f", name, e_end, sums[1])
    (outdir / "summary.csv").write_text("\n".join(summary) + "\n")
    log.info("demo %s; outputs in %s", "complete" if ok else "FAILED", outdir)
    return EXIT_OK if ok else EXIT_DOMAIN


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", choices=tuple(LOG_LEVELS), default="info")
    common.add_argument("--seed", type=int, default=0, help="seed for Monte Carlo delta draws")
    common.add_argument("-o", "--output", default=None)

    ap = argparse.ArgumentParser(prog="fomas", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", parents=[common], help="synthesize a decentralized controller")
    d.add_argument("problem", nargs="?", help="problem JSON (default: bundled example)")
    d.add_argument("--nominal", action="store_true", help="ignore uncertainty")
    d.add_argument("--order", type=int, default=None, help="controller order, overrides n_c")
    d.add_argument("--samples", type=int, default=0, help="extra random deltas checked after design")
    d.add_argument("--T", type=int, default=None, help="homotopy steps")
    d.set_defaults(func=cmd_design)

    v = sub.add_parser("verify", parents=[common], help="spectral check of a controller")
    v.add_argument("problem")
    v.add_argument("controller", help="controller JSON or reference controller name")
    v.add_argument("--samples", type=int, default=0)
    v.add_argument("--nominal", action="store_true")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", parents=[common], help="simulate the closed loop")
    s.add_argument("problem")
    s.add_argument("controller", help="controller JSON or reference controller name")
    s.add_argument("--t-end", type=float, default=None)
    s.add_argument("--step", type=float, default=None)
    s.add_argument("--nominal", action="store_true", help="simulate without the listed deltas")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("metrics", parents=[common], help="error indices of a trajectory CSV")
    m.add_argument("trajectory")
    m.set_defaults(func=cmd_metrics)

    e = sub.add_parser("demo", parents=[common], help="full pipeline on the bundled example")
    e.add_argument("--t-end", type=float, default=None)
    e.add_argument("--step", type=float, default=None)
    e.add_argument("--quick", action="store_true", help="design the static controller only")
    e.set_defaults(func=cmd_demo)
    return ap


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    _configure_logging(args.log_level)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            warnings.showwarning = _log_warning
            return args.func(args)
    except (UsageError, io.ProblemFormatError, DimensionError, NotDecentralizedError) as exc:
        log.error("error: %s", exc)
        return EXIT_USAGE
    except FomasError as exc:
        log.error("error: %s", exc)
        return EXIT_DOMAIN


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
