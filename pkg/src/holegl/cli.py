"""Command-line entry point: ``holegl <command> [options]``.

Exit status is 0 when every asserted check passes, 1 when a run finishes
with a failed check, and 2 for invalid input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import AtThreshold, ConfigError, DomainValidationError, HoleGLError, SchemaMismatch
from .experiment import (
    RunConfig,
    cmd_gl,
    cmd_london,
    cmd_predict,
    cmd_report,
    cmd_sweep_delta,
    cmd_sweep_sigma,
    cmd_verify_degrees,
    load_config,
    parse_holes,
    write_report,
)
from .gl import dump_state_csv

COMMANDS = ("predict", "london", "gl", "verify-degrees", "sweep-sigma", "sweep-delta", "report")


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holegl", description="Vortex pinning by small holes: London predictions and GL checks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI or JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--threads", type=int, help="worker threads for sweeps")
    common.add_argument("--delta", type=float, help="hole radius")
    common.add_argument("--sigma", type=float, help="applied field over |log delta|")
    common.add_argument("--grid-h", type=float, help="grid spacing (default delta/4)")
    common.add_argument("--eps-rule", help="cube, square or fixed:VALUE")
    common.add_argument("--holes", help="hole centers as 'x y; x y; ...'")
    common.add_argument("--degrees", type=_int_list, help="hole degrees, one per hole")
    common.add_argument("--max-iters", type=int, help="GL iteration cap")
    common.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("predict", parents=[common], help="screening field and predicted degrees")
    sub.add_parser("london", parents=[common], help="London energy form and integer argmin")
    p_gl = sub.add_parser("gl", parents=[common], help="GL minimization from one seed")
    p_gl.add_argument("--start", choices=("london", "meissner"), default="london")
    sub.add_parser("verify-degrees", parents=[common], help="full pipeline with degree assertions")
    p_ss = sub.add_parser("sweep-sigma", parents=[common], help="argmin along a sigma grid")
    p_ss.add_argument("--range", type=_float_list, metavar="START,STOP,STEP")
    p_sd = sub.add_parser("sweep-delta", parents=[common], help="energy coefficients across delta")
    p_sd.add_argument("--deltas", type=_float_list)
    p_rep = sub.add_parser("report", help="merge report.json files below a directory")
    p_rep.add_argument("directory", type=Path)
    p_rep.add_argument("--out", type=Path)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    updates = {}
    if args.out is not None:
        updates["out"] = str(args.out)
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.threads is not None:
        updates["threads"] = args.threads
    if args.delta is not None:
        updates["delta"] = args.delta
    if args.sigma is not None:
        updates["sigma"] = args.sigma
    if args.grid_h is not None:
        updates["grid_h"] = args.grid_h
    if args.eps_rule is not None:
        updates["eps_rule"] = args.eps_rule
    if args.holes is not None:
        updates["holes"] = tuple(tuple(h) for h in parse_holes(args.holes))
    if args.degrees is not None:
        updates["degrees"] = args.degrees
    if args.max_iters is not None:
        updates["max_iters"] = args.max_iters
    if getattr(args, "range", None) is not None:
        updates["sigma_sweep"] = args.range
    if getattr(args, "deltas", None) is not None:
        updates["delta_sweep"] = args.deltas
    return replace(cfg, **updates)


def _dump_fields(out: Path, report) -> None:
    state = getattr(report, "_state", None)
    if state is None:
        return
    dump_state_csv(state, out / "fields")
    state.grid.dump_labels_csv(out / "fields" / "labels.csv")


def _error_payload(exc: Exception) -> str:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    hole = getattr(exc, "hole", None)
    if hole is not None:
        payload["hole"] = hole
    return json.dumps(payload)


def run(args: argparse.Namespace) -> int:
    if args.command == "report":
        report, tables = cmd_report(args.directory)
        out = args.out or (args.directory / "_summary")
        write_report(report, out, tables)
        print(out / "report.json")
        return 0

    cfg = config_from_args(args)
    out = Path(cfg.out)
    try:
        if args.command == "predict":
            report, tables = cmd_predict(cfg)
        elif args.command == "london":
            report, tables = cmd_london(cfg)
        elif args.command == "gl":
            report, tables = cmd_gl(cfg, seed_kind=args.start)
        elif args.command == "verify-degrees":
            report, tables = cmd_verify_degrees(cfg)
        elif args.command == "sweep-sigma":
            report, tables = cmd_sweep_sigma(cfg)
        else:
            report, tables = cmd_sweep_delta(cfg)
    except AtThreshold as exc:
        write_report(exc.report, out, exc.tables)
        print(_error_payload(exc), file=sys.stderr)
        return 1
    write_report(report, out, tables)
    _dump_fields(out, report)
    print(out / "report.json")
    if not report.status["passed"]:
        for failure in report.status["failures"]:
            print(json.dumps({"error": failure["kind"], "message": failure["message"]}), file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (ConfigError, DomainValidationError, SchemaMismatch) as exc:
        print(_error_payload(exc), file=sys.stderr)
        return 2
    except HoleGLError as exc:
        print(_error_payload(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
