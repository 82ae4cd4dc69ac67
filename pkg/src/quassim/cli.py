"""Command-line front end.

Subcommands: twin (generate and save a twin experiment), run (one method on
one config), compare (a list of configs on the identical twin), scale (a
sweep).  Exit codes: 0 success, 2 config/validation error, 1 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config, load_config_list
from .errors import ConfigValidationError
from .pipeline import build_twin, compare_methods, run
from .report import dump_json, write_csv, write_report
from .scaling import scaling_experiment, write_scaling_report
from .twin import twin_to_json


def _apply_overrides(config, args):
    if args.seed is not None:
        # the seed defines the experiment, so the override lands in the echo
        config.seed = args.seed
        config.raw["seed"] = args.seed
    if args.out is not None:
        # output location is plumbing; the echoed config stays verbatim
        config.out_dir = args.out
    return config


def _cmd_twin(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    twin = build_twin(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "twin.json"
    path.write_text(twin_to_json(twin, config.problem.twin_config(), config.seed) + "\n")
    print(f"wrote {path}")
    return 0


def _cmd_run(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    report = run(config)
    files = write_report(report, config.out_dir)
    print(f"method={report.method} final_rmse={report.final_rmse():.6g} "
          f"free_run_rmse={float(report.free_run_rmse[-1]):.6g}")
    for f in files:
        print(f"wrote {f}")
    return 0


def _cmd_compare(args) -> int:
    configs = load_config_list(args.config)
    for cfg in configs:
        _apply_overrides(cfg, args)
    rows = compare_methods(configs)
    out = Path(args.out if args.out is not None else configs[0].out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(rows, out / "compare.json")
    columns = ["method", "final_rmse", "mean_rmse", "ess", "acceptance_rate",
               "oracle_calls", "error", "wall_s"]
    write_csv(out / "compare.csv", columns, [[row[c] for c in columns] for row in rows])
    for row in rows:
        status = row["error"] or f"final_rmse={row['final_rmse']:.6g}"
        print(f"{row['method']:10s} {status}")
    print(f"wrote {out / 'compare.json'}")
    print(f"wrote {out / 'compare.csv'}")
    return 0


def _cmd_scale(args) -> int:
    doc = json.loads(Path(args.config).read_text())
    kind = doc.get("kind")
    grid = doc.get("grid")
    if kind is None or grid is None:
        raise ConfigValidationError(["scale config needs 'kind' and 'grid' fields"])
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    report = scaling_experiment(kind, grid, seed)
    out = args.out if args.out is not None else doc.get("out_dir", "out")
    files = write_scaling_report(report, out)
    for name, fit in report.fits.items():
        print(f"{name}: slope={fit.slope:.4f} intercept={fit.intercept:.4f}")
    for f in files:
        print(f"wrote {f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quassim",
        description="Hybrid quantum-classical data assimilation experiments",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("twin", "generate and save a twin experiment"),
        ("run", "run one method on one config"),
        ("compare", "run a list of configs on the identical twin"),
        ("scale", "run a scaling sweep (epsilon_scaling or particle_scaling)"),
    ]:
        cmd = sub.add_parser(name, help=helptext)
        cmd.add_argument("--config", required=True, help="path to the JSON config")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "twin": _cmd_twin,
        "run": _cmd_run,
        "compare": _cmd_compare,
        "scale": _cmd_scale,
    }
    try:
        return handlers[args.command](args)
    except ConfigValidationError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"invalid JSON: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        logging.getLogger("quassim").exception("run failed")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
