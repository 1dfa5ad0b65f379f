"""Command line runner.

Exit codes: 0 success, 1 bad input, 2 assumption failure, 3 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .feedback import FeedbackNonConvergence, solve_feedback_equilibrium, spoof_experiment
from .io import (baseline_path, config_hash, write_book_csv, write_csv, write_json,
                 write_strategy_csv, write_values_csv)
from .kernels import AssumptionViolation, contraction_constants
from .lob import solve_book
from .mc_oracle import RNG_ALGORITHM, mc_two_player_value
from .model import ConfigError, MarketConfig, cap_was_auto, check_assumptions
from .rbsde import SolverDivergence, solve_equilibrium

log = logging.getLogger("lobeq")

EXIT_OK, EXIT_INPUT, EXIT_ASSUMPTION, EXIT_NONCONVERGENCE = 0, 1, 2, 3

FIGURES = {
    "value_functions": "values.csv",
    "strategies": "strategies.csv",
    "book": "book.csv",
    "feedback_book": "feedback_book.csv",
    "spoofed_book": "book_step0.csv",
    "spoof_history": "spoof.json",
}


class RunError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class Run:
    """Output directory plus the manifest describing it."""

    def __init__(self, args, cfg: MarketConfig, command: str):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.files: list[str] = []
        self.extra = {"command": command, "seed": args.seed, "paths": args.paths,
                      **{k: v for k, v in vars(args).items()
                         if k in ("sensitivity", "spoof", "spoof_steps", "withdraw", "i_init",
                                  "tol", "max_outer", "damping", "param", "values")}}

    def path(self, name: str) -> Path:
        self.files.append(name)
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def finish(self, **meta) -> None:
        figures = {k: v for k, v in FIGURES.items() if v in self.files}
        manifest = {
            "tool": "lobeq", "version": __version__,
            "config_hash": config_hash(self.cfg, self.extra),
            "config": self.cfg.to_dict(),
            "grid": {"time_steps": self.cfg.time_steps,
                     "price_grid_points": self.cfg.price_grid_points,
                     "belief_count": self.cfg.belief_count},
            "seeds": {"seed": self.extra["seed"], "rng": RNG_ALGORITHM},
            "options": self.extra,
            "figures": figures,
            **meta,
        }
        self.files.append("figures.json")
        self.files.append("manifest.json")
        manifest["files"] = sorted(self.files)
        write_json(self.out / "figures.json", figures)
        write_json(self.out / "manifest.json", manifest)


def load_config(args) -> MarketConfig:
    path = Path(args.config) if args.config else baseline_path()
    try:
        cfg = MarketConfig.load(path)
        changes = {}
        if args.steps is not None:
            changes["time_steps"] = args.steps
        if args.grid is not None:
            changes["price_grid_points"] = args.grid
        return cfg.replace(**changes) if changes else cfg
    except FileNotFoundError:
        raise RunError(EXIT_INPUT, f"config not found: {path}")
    except (ConfigError, ValueError) as exc:
        raise RunError(EXIT_INPUT, f"invalid config {path}: {exc}")


def gate(cfg: MarketConfig, force: bool):
    report = check_assumptions(cfg)
    if not report.passed:
        names = ", ".join(c.name for c in report.failures)
        if not force:
            raise RunError(EXIT_ASSUMPTION, f"assumption check failed: {names}")
        log.warning("continuing despite failed assumptions: %s", names)
    return report


# subcommands --------------------------------------------------------------

def cmd_check(args, cfg):
    report = check_assumptions(cfg)
    print(json.dumps(report.to_dict(), indent=2, default=float))
    if args.out:
        run = Run(args, cfg, "check")
        write_json(run.path("check.json"), report.to_dict())
        run.finish(passed=report.passed)
    if not report.passed:
        names = ", ".join(c.name for c in report.failures)
        print(f"failed: {names}", file=sys.stderr)
        return EXIT_ASSUMPTION
    return EXIT_OK


def _solve(cfg):
    try:
        constants = contraction_constants(cfg)
        return constants, solve_equilibrium(cfg, constants=constants)
    except (AssumptionViolation, SolverDivergence) as exc:
        raise RunError(EXIT_ASSUMPTION, str(exc))


def _paths_meta(paths):
    return {"Va0": float(paths.Va[0]), "Vb0": float(paths.Vb[0]), "pa0": float(paths.pa[0]),
            "pb0": float(paths.pb[0]), "tau_hat_index": paths.tau_hat_index,
            "pbar_at_tau": paths.pbar_at_tau}


def cmd_solve_rbsde(args, cfg):
    gate(cfg, args.force)
    run = Run(args, cfg, "solve-rbsde")
    constants, paths = _solve(cfg)
    write_values_csv(run.path("values.csv"), paths)
    run.finish(constants=constants.to_dict(), summary=_paths_meta(paths))
    return EXIT_OK


def _book_meta(lob):
    return {side.side: {"converged": side.converged, "mode": side.mode,
                        "iterations": side.iterations, "certificate": side.certificate,
                        "touch_mass": side.touch_mass, "total_mass": side.total_mass,
                        "plateaus": side.plateaus()}
            for side in (lob.ask, lob.bid)}


def cmd_solve_book(args, cfg):
    gate(cfg, args.force)
    run = Run(args, cfg, "solve-book")
    constants, paths = _solve(cfg)
    lob = solve_book(cfg, paths)
    write_values_csv(run.path("values.csv"), paths)
    write_book_csv(run.path("book.csv"), lob)
    write_strategy_csv(run.path("strategies.csv"), lob, cfg)
    run.finish(constants=constants.to_dict(), summary=_paths_meta(paths), book=_book_meta(lob),
               imbalance=lob.imbalance)
    converged = lob.ask.converged and lob.bid.converged
    return EXIT_OK if converged else EXIT_NONCONVERGENCE


def _feedback_kw(args):
    return {"I_init": args.i_init, "tol": args.tol, "max_outer": args.max_outer,
            "damping": args.damping}


def cmd_feedback(args, cfg):
    gate(cfg, args.force)
    run = Run(args, cfg, "feedback")
    try:
        state = solve_feedback_equilibrium(cfg, args.sensitivity, keep_artifacts=True,
                                           **_feedback_kw(args))
    except FeedbackNonConvergence as exc:
        write_json(run.path("feedback.json"), exc.state.to_dict())
        run.finish(converged=False)
        print(str(exc), file=sys.stderr)
        return EXIT_NONCONVERGENCE
    last = state.history[-1]
    write_json(run.path("feedback.json"), state.to_dict())
    write_values_csv(run.path("feedback_values.csv"), last.paths)
    write_book_csv(run.path("feedback_book.csv"), last.lob)
    run.finish(converged=True, imbalance=state.I, steps=state.step)
    return EXIT_OK


def cmd_spoof(args, cfg):
    gate(cfg, args.force)
    run = Run(args, cfg, "spoof")
    try:
        start = solve_feedback_equilibrium(cfg, args.sensitivity, keep_artifacts=True,
                                           **_feedback_kw(args))
    except FeedbackNonConvergence as exc:
        write_json(run.path("feedback.json"), exc.state.to_dict())
        run.finish(converged=False)
        print(str(exc), file=sys.stderr)
        return EXIT_NONCONVERGENCE
    write_book_csv(run.path("feedback_book.csv"), start.history[-1].lob)
    state = spoof_experiment(cfg, args.sensitivity, args.spoof, args.spoof_steps, start=start,
                             persist=not args.withdraw, tol=args.tol)
    for rec in state.history:
        k = rec.step
        write_values_csv(run.path(f"step{k}/values_step{k}.csv"), rec.paths)
        write_book_csv(run.path(f"step{k}/book_step{k}.csv"), rec.lob)
        if k == 0:
            write_book_csv(run.path("book_step0.csv"), rec.lob)
    write_json(run.path("spoof.json"), state.to_dict())
    run.finish(degeneracy_step=state.degeneracy_step, start_imbalance=start.I)
    return EXIT_OK


def cmd_mc_check(args, cfg):
    gate(cfg, args.force)
    run = Run(args, cfg, "mc-check")
    _, paths = _solve(cfg)
    h = config_hash(cfg, run.extra)
    report = {}
    for i, (side, belief, target) in enumerate((
            ("ask", cfg.extremal_ask, float(paths.Va[0])),
            ("bid", cfg.extremal_bid, float(paths.Vb[0])))):
        est = mc_two_player_value(paths, side, belief, args.paths, args.seed + i)
        report[side] = {**est.to_dict(h), "solver": target,
                        "z_score": (est.mean - target) / est.stderr if est.stderr else 0.0,
                        "within_3_stderr": est.agrees(target)}
    write_json(run.path("mc.json"), report)
    print(json.dumps(report, indent=2))
    run.finish(summary=_paths_meta(paths))
    return EXIT_OK


def _with_param(cfg: MarketConfig, name: str, value: float) -> MarketConfig:
    data = cfg.to_dict()
    node = data
    keys = name.split(".")
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise RunError(EXIT_INPUT, f"unknown sweep parameter: {name}")
        node = node[key]
    if keys[-1] not in node or isinstance(node[keys[-1]], dict):
        raise RunError(EXIT_INPUT, f"unknown sweep parameter: {name}")
    node[keys[-1]] = int(value) if isinstance(node[keys[-1]], int) else value
    if keys[0] != "price_cap" and cap_was_auto(cfg):
        data["price_cap"] = None
    try:
        return MarketConfig.from_dict(data)
    except (ConfigError, ValueError) as exc:
        raise RunError(EXIT_INPUT, f"sweep value {name}={value}: {exc}")


def _sweep_point(cfg: MarketConfig):
    report = check_assumptions(cfg)
    if not report.passed:
        return {"passed": False}
    paths = solve_equilibrium(cfg)
    return {"passed": True, **_paths_meta(paths)}


def cmd_sweep(args, cfg):
    if not args.param or not args.values:
        raise RunError(EXIT_INPUT, "sweep needs --param and --values")
    values = [float(v) for v in args.values.split(",")]
    configs = [_with_param(cfg, args.param, v) for v in values]
    run = Run(args, cfg, "sweep")
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_sweep_point, configs))
    else:
        results = [_sweep_point(c) for c in configs]
    header = ("value", "passed", "Va0", "Vb0", "pa0", "pb0", "tau_hat_index")
    rows = [(v, int(r["passed"]), *(r.get(k, float("nan")) for k in header[2:]))
            for v, r in zip(values, results)]
    write_csv(run.path("sweep.csv"), header, rows)
    run.finish(param=args.param)
    return EXIT_OK


def cmd_figures(args, cfg):
    out = Path(args.out)
    manifest = out / "manifest.json"
    if not manifest.exists():
        raise RunError(EXIT_INPUT, f"no run artifacts in {out}")
    data = json.loads(manifest.read_text())
    missing = [f for f in data.get("files", []) if not (out / f).exists()]
    if missing:
        raise RunError(EXIT_INPUT, f"missing artifacts: {', '.join(missing)}")
    print(json.dumps(data.get("figures", {}), indent=2))
    return EXIT_OK


COMMANDS = {
    "check": cmd_check, "solve-rbsde": cmd_solve_rbsde, "solve-book": cmd_solve_book,
    "feedback": cmd_feedback, "spoof": cmd_spoof, "mc-check": cmd_mc_check,
    "sweep": cmd_sweep, "figures": cmd_figures,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (default: packaged baseline)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=20240601)
    common.add_argument("--steps", type=int, help="override time_steps")
    common.add_argument("--grid", type=int, help="override price_grid_points")
    common.add_argument("--paths", type=int, default=1_000_000, help="Monte-Carlo paths")
    common.add_argument("--force", action="store_true", help="run despite failed assumptions")
    common.add_argument("-v", "--verbose", action="store_true")

    fb = argparse.ArgumentParser(add_help=False)
    fb.add_argument("--sensitivity", type=float, default=2.6)
    fb.add_argument("--i-init", type=float, default=0.0)
    fb.add_argument("--tol", type=float, default=1e-6)
    fb.add_argument("--max-outer", type=int, default=100)
    fb.add_argument("--damping", type=float, default=1.0)

    parser = argparse.ArgumentParser(prog="lobeq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="assumption report")
    sub.add_parser("solve-rbsde", parents=[common], help="value functions and touches")
    sub.add_parser("solve-book", parents=[common], help="book shape at time zero")
    sub.add_parser("feedback", parents=[common, fb], help="imbalance feedback equilibrium")
    sp = sub.add_parser("spoof", parents=[common, fb], help="spoofing experiment")
    sp.add_argument("--spoof", type=float, default=0.05, help="extra bid mass at the touch")
    sp.add_argument("--spoof-steps", type=int, default=5)
    sp.add_argument("--withdraw", action="store_true", help="remove the order after step 1")
    sub.add_parser("mc-check", parents=[common], help="Monte-Carlo check of the values")
    sw = sub.add_parser("sweep", parents=[common], help="grid over one parameter")
    sw.add_argument("--param", help="dotted config field, e.g. extremal_ask.lambda_plus")
    sw.add_argument("--values", help="comma-separated values")
    sw.add_argument("--jobs", type=int, default=1)
    sub.add_parser("figures", parents=[common], help="list figure data of a finished run")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = None if args.command == "figures" else load_config(args)
        return COMMANDS[args.command](args, cfg)
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
