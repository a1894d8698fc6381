"""Command line entry point: ``cover <experiment> --config FILE``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as cf
from .experiments import emit, run

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cover", description="Run one random-covering experiment "
                                 "and write a JSON or CSV report.")
    ap.add_argument("experiment", choices=cf.EXPERIMENTS)
    ap.add_argument("--config", type=Path, help="flat key = value config file")
    ap.add_argument("--seed", type=int, help="override master_seed")
    ap.add_argument("--out", type=Path, help="write the report here instead of stdout")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--parallelism", type=int, help="worker threads (capped by COVERING_LAB_THREADS)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key; may be repeated")
    ap.add_argument("--timing", action="store_true",
                    help="include wall-clock seconds in the JSON (breaks byte stability)")
    return ap


def load(args) -> tuple[cf.ExperimentConfig, Path | None]:
    raw: dict[str, str] = {}
    base = None
    if args.config is not None:
        raw = cf.read_pairs(args.config.read_text(encoding="utf-8"))
        base = args.config.parent
    if raw.get("experiment", args.experiment) != args.experiment:
        raise cf.ConfigError("experiment", f"config is for {raw['experiment']!r}, "
                             f"not {args.experiment!r}")
    raw["experiment"] = args.experiment
    for item in args.set:
        if "=" not in item:
            raise cf.ConfigError(item, "expected KEY=VALUE")
        k, v = (p.strip() for p in item.split("=", 1))
        raw[k] = v
    if args.seed is not None:
        raw["master_seed"] = str(args.seed)
    if args.parallelism is not None:
        raw["parallelism"] = str(args.parallelism)
    if args.out is None and "output" in raw and raw["output"]:
        args.out = Path(raw["output"])
    return cf.build_config(raw), base


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, base = load(args)
        report = run(cfg, base)
        text = emit(report, args.format, args.out, args.timing)
    except (cf.ConfigError, ValueError, OSError) as exc:
        print(f"cover {args.experiment}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.out is None:
        sys.stdout.write(text)
    print(f"cover {args.experiment}: {'passed' if report.passed else 'FAILED'} "
          f"in {report.wall_clock:.1f}s", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
