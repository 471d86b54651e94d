"""CLI entry point: runs simulations and verification harnesses, prints JSON.

Usage:
    rodshell simulate --geometry beam.txt --config beam.toml --out runs/beam
    rodshell simulate --scenario rod-drop --set material.youngs_rod=2e9 --out runs/drop
    rodshell check-gradients --module bend --samples 100
    rodshell validate-cantilever --model rod
    rodshell mesh-study
    rodshell check-locomotion --scenario earthworm --out runs/worm

A JSON summary goes to stdout; progress goes to stderr with --verbose.
Exit status: 0 success, 1 solver failure or failed check, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any

from . import __version__
from .config import BUNDLED_SCENARIOS, load_config, parse_override, with_overrides
from .geometry_io import GeometryParseError
from .meshes import MESH_FAMILIES
from .runner import SimulationResult, load_body, run_scenario, run_simulation
from .scenarios import SCENARIO_DESCRIPTIONS, build_scenario
from .verification import (
    GRADIENT_MODULES,
    cantilever_check,
    check_gradients,
    locomotion_properties,
    mesh_dependence_check,
    mesh_study,
    normalized_spread,
    validate_cantilever,
    write_report,
)

log = logging.getLogger("rodshell")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _progress(msg: str, verbose: bool) -> None:
    """Print progress to stderr (so stdout stays clean for JSON)."""
    if verbose:
        safe_msg = msg.encode(sys.stderr.encoding or "utf-8", errors="replace").decode(
            sys.stderr.encoding or "utf-8", errors="replace"
        )
        print(f"  [rodshell] {safe_msg}", file=sys.stderr, flush=True)


def _emit(payload: dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2, default=str))


def _parse_overrides(items: list[str]) -> dict[str, Any]:
    return dict(parse_override(item) for item in items)


def _result_payload(result: SimulationResult) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "success": result.success,
        "error": result.error or None,
        "steps": result.steps,
        "time": result.time,
        "frames": result.frames,
        "newton_iterations": result.newton_iterations,
        "min_gaps": result.min_gaps,
        "states": str(result.state_path) if result.state_path else None,
        "summary": str(result.summary_path) if result.summary_path else None,
        "elapsed_seconds": result.elapsed_s,
    }
    if result.failed_report is not None:
        payload["failed_step"] = asdict(result.failed_report)
    return payload


def _cmd_simulate(args: argparse.Namespace) -> int:
    """Phase 1: build the body from files or a bundled scenario. Phase 2: run and log it."""
    overrides = _parse_overrides(args.set)
    if args.scenario:
        _progress(f"Building scenario {args.scenario}...", args.verbose)
        scenario = build_scenario(args.scenario, overrides)
        _progress(f"Running {args.scenario} into {args.out}...", args.verbose)
        result = run_scenario(scenario, args.out, args.log_every)
    else:
        config = with_overrides(load_config(args.config), overrides)
        body, config = load_body(args.geometry, config)
        _progress(f"Loaded {body.topology.n_nodes} nodes, {body.n_dof} DOFs", args.verbose)
        result = run_simulation(body, config, args.out, args.log_every)
    _progress(f"Done: {result.steps} steps, {result.frames} frames in {result.elapsed_s:.1f}s", args.verbose)
    _emit(_result_payload(result))
    return EXIT_OK if result.success else EXIT_FAILURE


def _cmd_check_gradients(args: argparse.Namespace) -> int:
    modules = args.module or list(GRADIENT_MODULES)
    reports = []
    for module in modules:
        _progress(f"FD check {module} ({args.samples} samples)...", args.verbose)
        reports.append(check_gradients(module, args.samples, args.seed))
    if args.report:
        write_report(args.report, reports)
    ok = all(r.passed() for r in reports)
    _emit(
        {
            "passed": ok,
            "modules": {
                r.name: {
                    "gradient_error": r.gradient_error,
                    "hessian_error": r.hessian_error,
                    "ungated_error": r.ungated_error,
                    "worst_sample": r.worst_sample,
                    "passed": r.passed(),
                }
                for r in reports
            },
        }
    )
    return EXIT_OK if ok else EXIT_FAILURE


def _cmd_validate_cantilever(args: argparse.Namespace) -> int:
    youngs = args.youngs or [2e10, 2e9, 2e8, 2e7]
    _progress(f"Cantilever {args.model} at E = {', '.join(f'{e:.3g}' for e in youngs)}...", args.verbose)
    results = validate_cantilever(args.model, youngs, args.family, seed=args.seed)
    if args.report:
        write_report(args.report, results)
    check = cantilever_check(results)
    _emit(
        {
            "model": args.model,
            "family": args.family,
            "passed": check.passed,
            "check": asdict(check),
            "results": [asdict(r) for r in results],
        }
    )
    return EXIT_OK if check.passed else EXIT_FAILURE


def _cmd_mesh_study(args: argparse.Namespace) -> int:
    families = args.family or list(MESH_FAMILIES)
    _progress(f"Mesh study over {len(families)} families...", args.verbose)
    results = mesh_study(args.model, families, seed=args.seed)
    if args.report:
        write_report(args.report, results)
    check = mesh_dependence_check(results)
    ok = check is None or check.passed
    _emit(
        {
            "passed": ok,
            "check": asdict(check) if check else None,
            "results": [asdict(r) for r in results],
            "spread": {model: normalized_spread(results, model) for model in args.model},
        }
    )
    return EXIT_OK if ok else EXIT_FAILURE


def _cmd_check_locomotion(args: argparse.Namespace) -> int:
    _progress(f"Running {args.scenario} variants into {args.out}...", args.verbose)
    checks = locomotion_properties(args.scenario, args.out, args.total_time)
    report = Path(args.out) / "properties.csv"
    write_report(report, checks)
    ok = all(c.passed for c in checks)
    _emit({"passed": ok, "report": str(report), "checks": [asdict(c) for c in checks]})
    return EXIT_OK if ok else EXIT_FAILURE


def _cmd_scenarios(args: argparse.Namespace) -> int:
    _emit({"scenarios": {name: SCENARIO_DESCRIPTIONS[name] for name in BUNDLED_SCENARIOS}})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="rodshell: soft-body simulation of elastic rods, shells and their assemblies",
        prog="rodshell",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-every",
        type=int,
        default=None,
        help="Log a frame every N steps (default: output.log_every from the config)",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=0,
        help="Seed for random stencils and random meshes (default: 0)",
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Print progress and debug logs to stderr",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Run a simulation and write states/summary CSVs")
    source = sim.add_mutually_exclusive_group(required=True)
    source.add_argument("--geometry", help="Geometry text file (*Nodes, *Edges, *Triangles)")
    source.add_argument("--scenario", choices=BUNDLED_SCENARIOS, help="Run a bundled scenario")
    sim.add_argument("--config", help="TOML config file (required with --geometry)")
    sim.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config key, e.g. env.floor.mu=0.25 (repeatable)",
    )
    sim.add_argument("--out", required=True, help="Output directory")
    sim.set_defaults(handler=_cmd_simulate)

    grad = sub.add_parser("check-gradients", help="Finite-difference check of energies and force Jacobians")
    grad.add_argument("--module", action="append", choices=GRADIENT_MODULES, help="Restrict to a module (repeatable)")
    grad.add_argument("--samples", type=int, default=100, help="Random stencils per module (default: 100)")
    grad.add_argument("--report", help="Also write the per-module report as CSV")
    grad.set_defaults(handler=_cmd_check_gradients)

    cant = sub.add_parser("validate-cantilever", help="Static cantilever deflection against Euler–Bernoulli")
    cant.add_argument("--model", choices=["rod", "hinge", "midedge"], required=True)
    cant.add_argument("--youngs", type=float, action="append", help="Young's modulus in Pa (repeatable)")
    cant.add_argument("--family", choices=MESH_FAMILIES, default="equilateral", help="Shell mesh family")
    cant.add_argument("--report", help="Also write the results as CSV")
    cant.set_defaults(handler=_cmd_validate_cantilever)

    mesh = sub.add_parser("mesh-study", help="Normalized shell cantilever deflection across mesh families")
    mesh.add_argument("--model", action="append", choices=["hinge", "midedge"], help="Bending model (repeatable)")
    mesh.add_argument("--family", action="append", choices=MESH_FAMILIES, help="Mesh family (repeatable)")
    mesh.add_argument("--report", help="Also write the results as CSV")
    mesh.set_defaults(handler=_cmd_mesh_study)

    loco = sub.add_parser("check-locomotion", help="Run a showcase's variants and check its locomotion properties")
    loco.add_argument("--scenario", choices=["earthworm", "snake", "manta"], required=True)
    loco.add_argument("--out", required=True, help="Output directory for the runs and properties.csv")
    loco.add_argument("--total-time", type=float, default=None, help="Override solver.total_time")
    loco.set_defaults(handler=_cmd_check_locomotion)

    scen = sub.add_parser("scenarios", help="List the bundled scenarios")
    scen.set_defaults(handler=_cmd_scenarios)
    return parser


def main(argv: list[str] | None = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)

    # Input validation
    if args.log_every is not None and args.log_every < 1:
        parser.error("--log-every must be >= 1")
    if args.command == "simulate" and args.geometry and not args.config:
        parser.error("--config is required with --geometry")
    if args.command == "check-gradients" and args.samples < 1:
        parser.error("--samples must be >= 1")
    if args.command == "mesh-study" and not args.model:
        args.model = ["hinge", "midedge"]

    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, stream=sys.stderr, format="%(name)s %(levelname)s %(message)s")
    else:
        logging.basicConfig(level=logging.WARNING, stream=sys.stderr)

    start = time.monotonic()
    try:
        status = args.handler(args)
    except (GeometryParseError, FileNotFoundError) as e:
        print(f"rodshell: error: {e}", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    except ValueError as e:
        # Config and argument validation surface as ValueError.
        print(f"rodshell: error: {e}", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    except RuntimeError as e:
        print(f"rodshell: failed: {e}", file=sys.stderr)
        sys.exit(EXIT_FAILURE)
    _progress(f"{args.command} finished in {time.monotonic() - start:.1f}s", args.verbose)
    sys.exit(status)


if __name__ == "__main__":
    main()
