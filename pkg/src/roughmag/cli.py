"""Command line front end: ``roughmag <command> --config <path> [--seed N] [--workers N] [--out DIR]``.

Writes ``report.csv`` (columns eps, statistic, mean, se, n) and
``summary.json`` into the output directory. Exit codes: 0 all criteria
pass, 1 a criterion failed, 2 usage or config error, 3 numerical error.
"""

import argparse
import dataclasses
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, matops, montecarlo as mc, ousim
from . import homogenize as hz
from . import rde as rdemod
from . import signature as sig
from .config import load_config
from .errors import ConfigError, NumericalError

COMMANDS = ("correction", "simulate", "momentum", "theorem", "rate", "driver", "rde", "signature")
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


@dataclasses.dataclass
class RunConfig:
    command: str
    config_path: str
    output_dir: str = "."
    seed: int = None
    workers: object = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def _correction(spec):
    M = spec.experiment.params.M
    n = M.shape[0]
    rep = hz.Report("correction")
    C = matops.solve_C(M)
    G = matops.area_correction_W(M)
    GX = matops.area_correction_X(M)
    for name, A in (("C", C), ("Gamma", G), ("GammaX", GX)):
        for i in range(n):
            for j in range(n):
                rep.add(0.0, f"{name}_{i}{j}", A[i, j], 0.0, 0)
    for (i, j), g in sorted(matops.gamma_coefficients(M).items()):
        rep.add(0.0, f"gamma_{i}{j}", g, 0.0, 0)
    rep.criteria["lyapunov_residual"] = bool(
        np.linalg.norm(M @ C + C @ M.T - np.eye(n)) <= 1e-10)
    rep.criteria["gamma_antisymmetric"] = bool(np.abs(G + G.T).max() <= 1e-12)
    if np.allclose(M @ M.T, M.T @ M, atol=1e-12):
        alt = 0.5 * matops.anti(M) @ np.linalg.inv(matops.sym(M))
        rep.criteria["normal_formula"] = bool(np.abs(G - alt).max() <= 1e-10)
    rep.details["symmetric_M"] = bool(np.allclose(M, M.T))
    return rep


def _simulate(spec, out_dir):
    cfg = spec.experiment
    rep = hz.Report("simulate")
    n_obs = cfg.grid_steps
    ok = True
    for i, eps in enumerate(cfg.eps_list):
        p = cfg.params_at(eps)
        nf = hz.fine_steps(p, n_obs, cfg.resolution)
        grid = ousim.uniform_grid(p.T, nf)
        errs, gaps = [], []
        for b, size in enumerate(mc.blocks(cfg.n_paths)):
            s = ousim.sample_joint(p, grid, mc.substream(cfg.seed, 800 + i, b), n_paths=size)
            r = s.W.values - s.X.values @ p.M.T
            errs.append(np.abs(r - eps * (s.Y.values - s.Y.values[:, :1])).max())
            gaps.append(np.abs(r).max(axis=(1, 2)))
            if b == 0 and i == len(cfg.eps_list) - 1:
                stride = nf // n_obs
                values = np.concatenate([s.W[0].values, s.Y[0].values, s.X[0].values], axis=-1)
                ousim.GridPath(grid[::stride], values[::stride]).to_csv(
                    os.path.join(out_dir, "path.csv"))
        gaps = np.concatenate(gaps)
        m, se = mc.mean_se(gaps)
        rep.add(eps, "sup_abs_W_minus_MX", m, se, gaps.size)
        rep.add(eps, "identity_max_error", max(errs), 0.0, gaps.size)
        ok &= max(errs) <= 1e-10 * max(1.0, gaps.max())
    rep.criteria["residual_identity"] = bool(ok)
    return rep


def _signature(spec):
    cfg = spec.experiment
    L = spec.L
    mean, se, N = sig.empirical_expected_signature(cfg, L)
    lim = sig.expected_signature_limit(cfg.params.M, cfg.params.T, L)
    eps = cfg.eps_list[-1]
    rep = hz.Report("signature")
    ok = True
    for k in range(1, L + 1):
        for idx in np.ndindex(*(cfg.params.n,) * k):
            label = "".join(map(str, idx))
            m, s, target = mean[k][idx], se[k][idx], lim[k][idx]
            rep.add(eps, f"level{k}_{label}", m, s, N)
            rep.add(eps, f"limit{k}_{label}", target, 0.0, 0)
            if k <= 2:
                ok &= abs(m - target) <= 3 * s
    rep.criteria["levels_1_2_within_3se"] = bool(ok)
    rep.details["limit"] = json.loads(lim.to_json())
    return rep


def _driver(spec):
    M = spec.experiment.params.M
    T = spec.experiment.params.T
    d = spec.driver
    if d.kind == "fourier":
        return hz.finite_energy_experiment(M, d.masses, d.make(), n_steps=d.n_steps, T=T)
    return hz.smooth_driver_experiment(M, d.masses, d.make(), n_steps=d.n_steps, T=T)


def execute(command, spec, out_dir):
    cfg = spec.experiment
    if command == "correction":
        return _correction(spec)
    if command == "simulate":
        return _simulate(spec, out_dir)
    if command == "momentum":
        return hz.momentum_limit_experiment(cfg)
    if command == "theorem":
        return hz.theorem_limit_experiment(cfg)
    if command == "rate":
        return hz.rate_report(cfg)[0]
    if command == "driver":
        return _driver(spec)
    if command == "rde":
        return rdemod.rde_experiment(cfg, spec.rde.fields, spec.rde.y0, spec.rde.tol)
    if command == "signature":
        return _signature(spec)
    raise ConfigError(f"unknown command {command!r}")


def run(rc):
    """Execute ``rc`` and write the reports; returns the exit status."""
    t0 = time.perf_counter()
    try:
        spec = load_config(rc.config_path)
        over = {}
        if rc.seed is not None:
            over["seed"] = int(rc.seed)
        if rc.workers is not None:
            over["workers"] = rc.workers
        if over:
            spec.experiment = spec.experiment.replace(**over)
        os.makedirs(rc.output_dir, exist_ok=True)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"roughmag: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rep = execute(rc.command, spec, rc.output_dir)
    except NumericalError as exc:
        print(f"roughmag: numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        print(f"roughmag: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    with open(os.path.join(rc.output_dir, "report.csv"), "w", newline="") as fh:
        fh.write(rep.to_csv())
    summary = {
        "command": rc.command,
        "version": __version__,
        "seed": spec.experiment.seed,
        "workers": spec.experiment.workers,
        "config": spec.raw,
        "criteria": rep.criteria,
        "passed": rep.passed,
        "details": rep.details,
        "wall_time_s": time.perf_counter() - t0,
    }
    with open(os.path.join(rc.output_dir, "summary.json"), "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, ok in rep.criteria.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _workers(text):
    if text == "auto":
        return "auto"
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1 or 'auto'")
    return v


def build_parser():
    ap = argparse.ArgumentParser(prog="roughmag", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="TOML experiment config")
    ap.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    ap.add_argument("--workers", type=_workers, default=None, help="worker processes or 'auto'")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--version", action="version", version=f"roughmag {__version__}")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    rc = RunConfig(args.command, args.config, args.out, args.seed, args.workers)
    return run(rc)


if __name__ == "__main__":
    sys.exit(main())
