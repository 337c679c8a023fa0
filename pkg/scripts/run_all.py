"""Run every experiment config in scripts/configs through the CLI.

Usage::

    python scripts/run_all.py [--seed 0] [--workers 1] [--out results] [--only c05]

Each config produces ``<out>/<stem>.csv`` plus its JSON sidecar.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from gaussnc.cli import main as cli_main

HERE = Path(__file__).resolve().parent
CONFIGS = HERE / "configs"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--only", default="", help="run configs whose name starts with this prefix")
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for path in sorted(CONFIGS.glob("*.json")):
        if path.name == "acceptance.json" or not path.name.startswith(args.only):
            continue
        experiment = json.loads(path.read_text())["experiment"]
        start = time.perf_counter()
        rc = cli_main([experiment, "--config", str(path), "--seed", str(args.seed),
                       "--workers", str(args.workers), "--out", str(args.out / f"{path.stem}.csv")])
        print(f"{path.stem:40s} rc={rc} {time.perf_counter() - start:7.1f}s", flush=True)
        failures += rc != 0
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
