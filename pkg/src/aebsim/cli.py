"""Command-line entry point: ``aebsim <subcommand> ...``.

Exit codes: 0 ok, 1 regression detected, 2 baseline incomparable,
64 usage error, 66 input file error, 70 internal abort.
Data goes to files under ``--out``; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import reports
from .config import ConfigError, load_sim_config
from .engine import DEFAULT_SEED, SimConfig, SimulationAborted, run, trace_filename, write_trace_csv
from .evaluation import (
    Baseline, EcpPreconditionError, config_hash, ecp_demo, main_effects, make_baseline,
    regression_compare, sweep,
)
from .scenario import (
    DEFAULT_RUN_CAP, DslError, KMH, ScenarioError, ScenarioKind, ScenarioSpec, SweepTooLarge,
    build_euroncap_matrix, parse_scenario,
)

log = logging.getLogger("aebsim")

EX_OK = 0
EX_USAGE = 64
EX_NOINPUT = 66
EX_SOFTWARE = 70


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aebsim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scenario=False, protocol=False, parallel=False):
        sp.add_argument("--out", required=True, type=Path, help="output directory")
        sp.add_argument("--config", type=Path, help="simulation config (INI)")
        sp.add_argument("--seed", type=int, help=f"seed (default $AEBSIM_SEED or {DEFAULT_SEED})")
        sp.add_argument("--dt", type=float, help="override the integration step [s]")
        sp.add_argument("--no-plots", action="store_true", help="skip PNG figures")
        if scenario:
            sp.add_argument("--scenario", required=True, type=Path, help="scenario DSL file")
        if protocol:
            sp.add_argument("--protocol", type=Path, help="protocol grid (INI); bundled default if omitted")
        if parallel:
            sp.add_argument("--parallelism", type=int, default=1)

    common(sub.add_parser("run", help="simulate one scenario"), scenario=True)
    common(sub.add_parser("matrix", help="run the protocol test matrix"), protocol=True, parallel=True)
    for name in ("sweep", "sensitivity"):
        sp = sub.add_parser(name, help="execute the sweep block of a scenario file")
        common(sp, scenario=True, parallel=True)
        sp.add_argument("--cap", type=int, default=DEFAULT_RUN_CAP, help="maximum run count")
    bp = sub.add_parser("baseline", help="record a regression baseline from the matrix")
    common(bp, protocol=True, parallel=True)
    bp.add_argument("--impact-tol", type=float, default=0.01)
    bp.add_argument("--points-tol", type=float, default=0.001)
    rp = sub.add_parser("regress", help="compare the matrix against a baseline")
    common(rp, protocol=True, parallel=True)
    rp.add_argument("--baseline", required=True, type=Path)
    ep = sub.add_parser("demo-ecp", help="equivalence-class demonstration over lateral offsets")
    common(ep)
    ep.add_argument("--scenario", type=Path, help="CCRs base scenario (default: CCRs 50 km/h)")
    ep.add_argument("--offsets", type=_float_list, default=[0.0, 0.375, 0.75], help="offsets [m], comma separated")
    ep.add_argument("--full-policy", action="store_true",
                    help="use the configured sensor/brake/policy instead of the trigger-isolating setup")
    return p


# --------------------------------------------------------------------------


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _seed(args) -> int:
    if args.seed is not None:
        seed = args.seed
    else:
        env = os.environ.get("AEBSIM_SEED")
        try:
            seed = int(env) if env else DEFAULT_SEED
        except ValueError:
            raise UsageError(f"AEBSIM_SEED is not an integer: {env!r}") from None
    if not 0 <= seed < 2 ** 64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    return seed


def _config(args) -> SimConfig:
    cfg = SimConfig()
    if args.config is not None:
        if not args.config.is_file():
            raise InputError(f"config file not found: {args.config}")
        try:
            cfg = load_sim_config(args.config)
        except ConfigError as exc:
            raise InputError(f"{args.config}: {exc}") from None
    if args.dt is not None:
        if not args.dt > 0:
            raise UsageError("--dt must be positive")
        cfg = cfg.replace(dt=args.dt)
    return cfg


def _scenario(path: Path, cfg: SimConfig):
    text = _read(path)
    try:
        return parse_scenario(text, default_sensor_range=cfg.sensor.max_range)
    except DslError as exc:
        raise InputError(f"{path}:{exc}") from None


def _matrix(args, cfg: SimConfig):
    text = _read(args.protocol) if args.protocol is not None else None
    try:
        return build_euroncap_matrix(text, sensor_range=cfg.sensor.max_range).entries
    except (ScenarioError, ValueError) as exc:
        raise InputError(f"protocol config: {exc}") from None


def _outdir(args) -> Path:
    out = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _plots(args):
    if args.no_plots:
        return None
    from . import plotting
    return plotting


def cmd_run(args) -> int:
    cfg = _config(args)
    spec, _ = _scenario(args.scenario, cfg)
    seed = _seed(args)
    out = _outdir(args)
    result, trace = run(spec, cfg, seed)
    write_trace_csv(trace, out / trace_filename(spec.id, seed))
    reports.write_run_result(out, spec, result)
    if plotting := _plots(args):
        plotting.plot_trace(trace, out / f"{spec.id}_{seed}.png", title=spec.id)
    log.info("%s: collided=%s impact=%.3f m/s", spec.id, result.collided, result.impact_speed)
    return EX_OK


def _run_matrix(args, cfg):
    from .evaluation import run_matrix
    specs = _matrix(args, cfg)
    return specs, run_matrix(specs, cfg, _seed(args), args.parallelism)


def cmd_matrix(args) -> int:
    cfg = _config(args)
    out = _outdir(args)
    specs, outcomes = _run_matrix(args, cfg)
    reports.write_matrix_report(out, specs, outcomes)
    if plotting := _plots(args):
        plotting.plot_matrix([s.id for s in specs], [r.impact_speed for r, _ in outcomes],
                             [sc.points for _, sc in outcomes], out / "matrix_scores.png")
    return EX_OK


def _run_sweep(args):
    cfg = _config(args)
    _, plan = _scenario(args.scenario, cfg)
    if plan is None:
        raise InputError(f"{args.scenario}: no sweep block")
    if args.seed is not None or os.environ.get("AEBSIM_SEED"):
        plan = type(plan)(plan.base, plan.ranges, plan.strategy, _seed(args))
    if args.parallelism < 1:
        raise UsageError("--parallelism must be >= 1")
    try:
        result = sweep(plan, cfg, args.parallelism, args.cap)
    except SweepTooLarge as exc:
        raise UsageError(f"{exc} (run count {exc.count})") from None
    return result, main_effects(result)


def cmd_sweep(args) -> int:
    out = _outdir(args)
    result, sens = _run_sweep(args)
    reports.write_sweep_reports(out, result, sens)
    if plotting := _plots(args):
        plotting.plot_distribution(result, out / "sweep_points.png")
        plotting.plot_main_effects(sens, out / "sensitivity.png")
    failed = sum(1 for e in result.runs if not e.ok)
    if failed:
        log.warning("%d of %d runs failed or were unscorable", failed, len(result.runs))
    return EX_OK


def cmd_sensitivity(args) -> int:
    out = _outdir(args)
    _, sens = _run_sweep(args)
    reports.write_sensitivity(out, sens)
    if plotting := _plots(args):
        plotting.plot_main_effects(sens, out / "sensitivity.png")
    for path in sens.ranking:
        log.info("%-28s main effect %.4f", path, sens.main_effect[path])
    return EX_OK


def cmd_baseline(args) -> int:
    cfg = _config(args)
    out = _outdir(args)
    specs, outcomes = _run_matrix(args, cfg)
    base = make_baseline(outcomes, config_hash(specs, cfg), cfg.dt, args.impact_tol, args.points_tol)
    (out / "baseline.json").write_text(base.to_json(), encoding="utf-8")
    return EX_OK


def cmd_regress(args) -> int:
    cfg = _config(args)
    try:
        baseline = Baseline.from_json(_read(args.baseline))
    except (ValueError, KeyError) as exc:
        raise InputError(f"{args.baseline}: not a baseline file ({exc})") from None
    out = _outdir(args)
    specs, outcomes = _run_matrix(args, cfg)
    report = regression_compare(outcomes, baseline, config_hash(specs, cfg))
    (out / "regression.json").write_text(report.to_json(), encoding="utf-8")
    for line in report.diagnostics:
        print(line, file=sys.stderr)
    print(f"regression verdict: {report.verdict}", file=sys.stderr)
    return report.exit_code


def cmd_demo_ecp(args) -> int:
    cfg = _config(args)
    if args.scenario is not None:
        base, _ = _scenario(args.scenario, cfg)
    else:
        base = ScenarioSpec("ccrs_v50", ScenarioKind.CCRs, 50 * KMH, initial_gap=cfg.sensor.max_range + 20.0)
    out = _outdir(args)
    try:
        report = ecp_demo(base, args.offsets, cfg, _seed(args), isolate_trigger=not args.full_policy)
    except EcpPreconditionError as exc:
        raise UsageError(str(exc)) from None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    reports.write_ecp_report(out, report)
    if plotting := _plots(args):
        plotting.plot_ecp(report, out / "ecp_demo.png")
    log.info("max impact-speed difference inside class A: %.3f m/s", report.max_impact_difference)
    return EX_OK


COMMANDS = {
    "run": cmd_run, "matrix": cmd_matrix, "sweep": cmd_sweep, "sensitivity": cmd_sensitivity,
    "baseline": cmd_baseline, "regress": cmd_regress, "demo-ecp": cmd_demo_ecp,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="aebsim: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"aebsim: error: {exc}", file=sys.stderr)
        return EX_USAGE
    except InputError as exc:
        print(f"aebsim: {exc}", file=sys.stderr)
        return EX_NOINPUT
    except (SimulationAborted, RuntimeError) as exc:
        print(f"aebsim: aborted: {exc}", file=sys.stderr)
        return EX_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())
