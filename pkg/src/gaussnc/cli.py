"""Command-line entry point.

Examples
--------
::

    gaussnc correction --config scripts/configs/c01_second_moment_goe.json --seed 1 --out out.csv
    gaussnc dyson-density --config scripts/configs/density_two_interval.json --out density.csv

Each run writes a CSV to ``--out`` (default ``<experiment>.csv``) and a
JSON sidecar next to it with the seed, the SHA-256 of the config, library
versions and the wall time.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .harness import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    _metadata,
    _to_jsonable,
    run,
    write_density_csv,
)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gaussnc", description="Gaussian random matrix experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", required=True, type=Path, help="JSON config file")
        sp.add_argument("--seed", type=int, default=0, help="64-bit seed (default 0)")
        sp.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
        sp.add_argument("--out", type=Path, default=None, help="output CSV path")
    return ap


def load_config(path, command: str, seed: int, workers: int) -> ExperimentConfig:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data.setdefault("experiment", command)
    if data["experiment"] != command:
        raise ConfigError(f"config is for {data['experiment']!r}, not {command!r}")
    return ExperimentConfig.from_dict(data, seed=seed, workers=workers)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command, args.seed, args.workers)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = args.out or Path(f"{args.command}.csv")
    start = time.perf_counter()
    result = run(cfg)
    if args.command == "dyson-density":
        write_density_csv(result, out)
        meta = _metadata(cfg, start, support=[list(iv) for iv in result.support_intervals])
        out.with_name(out.name + ".json").write_text(
            json.dumps(_to_jsonable(meta), indent=2, sort_keys=True), encoding="utf-8")
    else:
        result.write(out)
        if args.command == "correction":
            lam_path = out.with_name(out.stem + "_lambda.csv")
            result.correction.write_csv(lam_path, out.with_name(out.stem + "_lambda_atoms.csv"))
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
