"""Command-line front end.

    superrotor simulate CONFIG [--seed S] [--jobs J] [--out-dir D] [--format csv|json] [--quiet]
    superrotor scan CONFIG --param {tau,delta,omega_max,probe_fwhm} --range START:STOP:NUM [...]
    superrotor validate CONFIG

Exit codes: 0 success, 2 configuration/schema error, 3 numerical or
physical guard, 4 I/O error. Failures print a single line to stderr:
``superrotor: error exit=<code> kind=<kind> detail="<message>"``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCAN_PARAMETERS, load_config, parse_range
from .errors import ConfigError, GuardError, OutputError
from .io import OutputWriter, config_hash
from .observables.scans import map_points
from .runner import scan_point, simulate, validate_report

EXIT_SCHEMA = 2
EXIT_GUARD = 3
EXIT_IO = 4

log = logging.getLogger("superrotor")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.exit(_error(EXIT_SCHEMA, "usage", message))


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="superrotor", description="Laser-driven molecular rotation simulator.")
    p.add_argument("--version", action="version", version=f"superrotor {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("config", help="run configuration (YAML)")
        sp.add_argument("--seed", type=int, default=None, help="override ensemble.seed")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
        sp.add_argument("--out-dir", default=None, help="output directory (default: output.dir of the config)")
        sp.add_argument("--format", choices=("csv", "json"), default=None)
        sp.add_argument("--quiet", action="store_true", help="suppress progress output")

    common(sub.add_parser("simulate", help="run a configuration and write its observables"))
    sc = sub.add_parser("scan", help="repeat a run over one parameter and aggregate")
    common(sc)
    sc.add_argument("--param", required=True, help=f"one of {', '.join(SCAN_PARAMETERS)}")
    sc.add_argument("--range", required=True, dest="range_", help="START:STOP:NUM or a single value (use --range=-1:1:5 for negative starts)")
    va = sub.add_parser("validate", help="check a configuration without running it")
    va.add_argument("config")
    va.add_argument("--seed", type=int, default=None)
    return p


def _error(code: int, kind: str, message: str) -> int:
    detail = " ".join(str(message).split()).replace('"', "'")
    print(f'superrotor: error exit={code} kind={kind} detail="{detail}"', file=sys.stderr)
    return code


def _writer(cfg, args):
    out_dir = Path(args.out_dir) if args.out_dir else Path(cfg.output["dir"])
    fmt = args.format or cfg.output["format"]
    return OutputWriter(out_dir, config_hash(cfg.raw), fmt, args.quiet)


def _write_result(writer: OutputWriter, result) -> None:
    for name, tab in result.tables.items():
        writer.table(name, tab.columns, tab.rows, tab.meta)
    for name, grid in result.grids.items():
        writer.grid(name, grid.row_axis, grid.col_axis, grid.values, grid.meta)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed)
    writer = _writer(cfg, args)
    if not args.quiet:
        log.info("simulating %s (%s)", cfg.name, ", ".join(s.molecule.name for s in cfg.species))
    result = simulate(cfg, args.jobs)
    _write_result(writer, result)
    if not args.quiet:
        for path in writer.written:
            print(path)
    return 0


def cmd_scan(args) -> int:
    if args.param not in SCAN_PARAMETERS:
        raise ConfigError(f"unknown scan parameter {args.param!r}; choose from {', '.join(SCAN_PARAMETERS)}")
    cfg = load_config(args.config, args.seed)
    values = parse_range(args.range_)
    cfg.with_param(args.param, float(values[0]))  # fail fast on inapplicable parameters
    writer = _writer(cfg, args)
    points = map_points(scan_point, [(cfg, args.param, float(v)) for v in values], args.jobs)
    units = {"tau": "ps", "delta": "rad", "omega_max": "rad/ps", "probe_fwhm": "cm^-1"}[args.param]
    meta = {"parameter": args.param, "units": {args.param: units}, "values": values}
    pops = np.array([p["populations"] for p in points])
    writer.grid("scan_populations", (args.param, values), ("N", np.arange(pops.shape[1])), pops, meta)
    if "directionality" in points[0]:
        d = np.array([p["directionality"] for p in points])
        writer.grid("scan_directionality", (args.param, values), ("N", np.arange(d.shape[1])), d, meta)
    if "trace" in points[0]:
        tr = np.array([p["trace"] for p in points])
        writer.grid("scan_trace", (args.param, values), ("delay_index", np.arange(tr.shape[1])), tr, meta)
    jz = np.array([p["jz"][0] for p in points])
    writer.table("scan_jz", [args.param, "jz"], np.column_stack([values, jz]), meta)
    if not args.quiet:
        for path in writer.written:
            print(path)
    return 0


def cmd_validate(args) -> int:
    report = {"config": str(args.config), "violations": []}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg = load_config(args.config, args.seed)
        report["violations"] = validate_report(cfg)
    except GuardError as exc:
        report["violations"].append({"kind": getattr(exc, "code", "guard"), "detail": str(exc)})
    except ConfigError as exc:
        report["violations"].append({"kind": "schema", "detail": str(exc)})
    except OSError as exc:
        report["violations"].append({"kind": "io", "detail": str(exc)})
    print(json.dumps(report, sort_keys=True))
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    if quiet:
        warnings.simplefilter("ignore")
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "scan":
            return cmd_scan(args)
        return cmd_validate(args)
    except ConfigError as exc:
        return _error(EXIT_SCHEMA, "schema", exc)
    except GuardError as exc:
        return _error(EXIT_GUARD, getattr(exc, "code", "guard"), exc)
    except (OutputError, OSError) as exc:
        return _error(EXIT_IO, "io", exc)
    except ValueError as exc:
        return _error(EXIT_SCHEMA, "invalid_request", exc)


if __name__ == "__main__":
    sys.exit(main())
