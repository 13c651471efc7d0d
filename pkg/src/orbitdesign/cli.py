"""Command line interface.

Commands::

    orbitdesign design --config run.cfg [--out DIR] [--scenario gait1|gait2] [--max-minutes K]
    orbitdesign verify --traj final.csv --config run.cfg
    orbitdesign check-model

``design`` with only ``--scenario`` runs the bundled preset.  Results are
printed as tab-separated ``key<TAB>value`` lines.  Exit codes: 0 pass,
2 validation error, 3 solver failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np

from .config import SCENARIOS, load_config, load_preset
from .designer import verify_periodic_orbit
from .errors import ConfigError
from .export import read_trajectory
from .runner import EXIT_OK, EXIT_SOLVER, EXIT_VALIDATION, EXIT_VERIFICATION, run_strategy


def _emit(key: str, value) -> None:
    if isinstance(value, float):
        value = f"{value:.6g}"
    elif isinstance(value, (dict, list)):
        value = json.dumps(value)
    print(f"{key}\t{value}")


def _config_error(exc: ConfigError) -> int:
    print(f"error: {exc}", file=sys.stderr)
    for problem in exc.problems:
        print(f"  {problem}", file=sys.stderr)
    return EXIT_VALIDATION


def cmd_design(args) -> int:
    if args.config and args.scenario:
        print("error: give either --config or --scenario, not both", file=sys.stderr)
        return EXIT_VALIDATION
    if not args.config and not args.scenario:
        print("error: one of --config or --scenario is required", file=sys.stderr)
        return EXIT_VALIDATION
    if args.max_minutes is not None and not args.max_minutes > 0:
        print("error: --max-minutes must be positive", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        cfg = load_config(args.config) if args.config else load_preset(args.scenario)
    except ConfigError as exc:
        return _config_error(exc)

    outcome = run_strategy(cfg, args.out, args.max_minutes, figures=False if args.no_figures else None)
    _emit("status", {EXIT_OK: "pass", EXIT_VALIDATION: "invalid", EXIT_SOLVER: "solver-failure",
                     EXIT_VERIFICATION: "verification-failure"}[outcome.exit_code])
    _emit("exit_code", outcome.exit_code)
    _emit("out_dir", str(outcome.out_dir))
    if outcome.phase:
        _emit("failed_phase", outcome.phase)
    _emit("message", outcome.message)
    for key, value in outcome.metrics.items():
        _emit(key, value)
    if outcome.result is not None:
        for name, check in outcome.result.report.checks.items():
            _emit(f"check.{name}", "pass" if check["passed"] else f"FAIL value={check['value']:.3g}")
    return outcome.exit_code


def cmd_verify(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _config_error(exc)
    try:
        traj = read_trajectory(args.traj)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read trajectory: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    prob = cfg.design_problem()
    if traj.n_input != prob.sys.model.n_act:
        print("error: verification needs a trajectory of the original system (no u_emb column)", file=sys.stderr)
        return EXIT_VALIDATION
    if traj.grid.N != cfg.N or not np.isclose(traj.grid.T, cfg.T):
        print(f"warning: trajectory grid (T={traj.grid.T}, N={traj.grid.N}) differs from the configuration",
              file=sys.stderr)
    report = verify_periodic_orbit(prob.sys, traj, prob.x0, prob.xf, cfg.settings.eps_f_tol, prob.state_scale)
    for name, check in report.checks.items():
        _emit(f"check.{name}", f"{'pass' if check['passed'] else 'FAIL'} value={check['value']:.3e} "
                                f"tol={check['tol']:.1e}")
    _emit("status", "pass" if report.passed else "verification-failure")
    return EXIT_OK if report.passed else EXIT_VERIFICATION


def cmd_check_model(args) -> int:
    from .modelcheck import run_model_checks

    results = run_model_checks(on_result=lambda r: print(r.line(), flush=True))
    failed = [r.name for r in results if not r.passed]
    _emit("status", "pass" if not failed else "FAIL " + ",".join(failed))
    return EXIT_OK if not failed else EXIT_VERIFICATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orbitdesign", description="Optimal periodic orbits for the "
                                     "compass biped with torso.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log the strategy trace to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="run the full strategy")
    p.add_argument("--config", help="configuration file")
    p.add_argument("--scenario", choices=SCENARIOS, help="run a bundled preset")
    p.add_argument("--out", help="run directory (defaults to [output] directory)")
    p.add_argument("--max-minutes", type=float, help="wall-clock budget; exceeding it is a solver failure")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("verify", help="check that a trajectory CSV closes a periodic orbit")
    p.add_argument("--traj", required=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("check-model", help="run the model invariant suites")
    p.set_defaults(func=cmd_check_model)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors count as validation errors
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s",
                        stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
