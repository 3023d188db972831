"""Run every CLI experiment on the shipped configs and print the verdicts.

Usage: python3 scripts/run_all.py [--out results] [--only momentum,rde] [--seed N]
"""

import argparse
import json
import pathlib
import time

from roughmag.cli import RunConfig, run

ROOT = pathlib.Path(__file__).resolve().parent.parent
RUNS = [
    ("correction", "example.toml"),
    ("correction", "symmetric.toml"),
    ("simulate", "example.toml"),
    ("momentum", "momentum.toml"),
    ("theorem", "theorem.toml"),
    ("rate", "rate.toml"),
    ("driver", "driver_smooth.toml"),
    ("driver", "driver_fourier.toml"),
    ("rde", "rde.toml"),
    ("signature", "signature.toml"),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", default="", help="comma-separated command names")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    only = set(filter(None, args.only.split(",")))
    for command, cfg in RUNS:
        if only and command not in only:
            continue
        out = pathlib.Path(args.out) / f"{command}_{pathlib.Path(cfg).stem}"
        t0 = time.perf_counter()
        code = run(RunConfig(command, str(ROOT / "configs" / cfg), str(out), args.seed))
        summary = out / "summary.json"
        crit = json.loads(summary.read_text())["criteria"] if summary.exists() else {}
        print(f"{command:11s} {cfg:22s} exit={code} {time.perf_counter() - t0:7.1f}s {crit}")


if __name__ == "__main__":
    main()
