"""TOML experiment configs, validated at parse time.

Example::

    [model]
    M = [[1.0, 1.0], [-1.0, 1.0]]   # row-major; or A, q, B
    T = 1.0
    y0_mode = "zero"

    [experiment]
    eps_list = [0.2, 0.1, 0.05]
    n_paths = 2000
    grid_steps = 512
    alpha = 0.4

Errors name the failing key and, where it can be located, its line.
"""

import re
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import matops
from .errors import ParseError, RoughMagError, ValidationError
from .homogenize import DRIVERS, ExperimentConfig
from .ousim import ModelParams
from .rde import PolyField, VectorFieldSet, example_fields

SECTIONS = {"model", "experiment", "driver", "rde", "signature"}


@dataclass
class DriverConfig:
    kind: str = "sinusoid"
    masses: tuple = tuple(2.0**-k for k in range(2, 11))
    n_steps: int = 2**16
    options: dict = field(default_factory=dict)

    def make(self):
        return DRIVERS[self.kind](**self.options)


@dataclass
class RdeConfig:
    fields: VectorFieldSet
    y0: tuple = (1.0, 1.0)
    tol: float = 1e-3


@dataclass
class RunSpec:
    experiment: ExperimentConfig
    driver: DriverConfig
    rde: RdeConfig
    L: int = 2
    raw: dict = field(default_factory=dict)


class _Locator:
    def __init__(self, text):
        self.lines = text.splitlines()

    def line(self, section, key):
        current = None
        pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
        for i, ln in enumerate(self.lines, 1):
            m = re.match(r"^\s*\[([^\]]+)\]", ln)
            if m:
                current = m.group(1).strip()
                continue
            if current == section and pat.match(ln):
                return i
        return None


def _fail(loc, section, key, msg):
    raise ValidationError(f"{section}.{key}" if section else key, msg, loc.line(section, key))


def _matrix(loc, section, key, value, square=True):
    try:
        A = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        _fail(loc, section, key, "must be a numeric array")
    if A.ndim != 2 or (square and A.shape[0] != A.shape[1]):
        _fail(loc, section, key, f"must be a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        _fail(loc, section, key, "entries must be finite")
    return A


def _positive(loc, section, key, value, kind=float):
    try:
        v = kind(value)
    except (TypeError, ValueError):
        _fail(loc, section, key, f"must be a {kind.__name__}")
    if isinstance(value, bool) or not v > 0:
        _fail(loc, section, key, "must be > 0")
    return v


def _model(loc, d, eps0):
    sec = "model"
    if "T" not in d:
        raise ValidationError("T", "horizon T is required in [model]", loc.line(sec, "T"))
    T = _positive(loc, sec, "T", d["T"])
    mode = d.get("y0_mode", "zero")
    if mode not in ("zero", "stationary"):
        _fail(loc, sec, "y0_mode", "must be 'zero' or 'stationary'")
    if "M" in d:
        M = _matrix(loc, sec, "M", d["M"])
    elif {"A", "q", "B"} <= set(d):
        A = _matrix(loc, sec, "A", d["A"])
        B = _matrix(loc, sec, "B", d["B"])
        if np.abs(A - A.T).max() > 1e-12:
            _fail(loc, sec, "A", "friction matrix must be symmetric")
        if np.abs(B + B.T).max() > 1e-12:
            _fail(loc, sec, "B", "magnetic matrix must be antisymmetric")
        M = A + float(d["q"]) * B
    else:
        raise ValidationError("M", "give M or all of A, q, B", loc.line(sec, "M"))
    try:
        matops.spectral_abscissa(M)
    except RoughMagError as exc:
        key = "M" if "M" in d else "A"
        _fail(loc, sec, key, f"not admissible: {exc}")
    return ModelParams.from_eps(M, eps0, T, mode)


def _experiment(loc, d, n):
    sec = "experiment"
    eps = d.get("eps_list", [0.2, 0.1, 0.05])
    if not isinstance(eps, list) or not eps:
        _fail(loc, sec, "eps_list", "must be a non-empty array")
    eps = [_positive(loc, sec, "eps_list", e) for e in eps]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        _fail(loc, sec, "eps_list", "must be strictly decreasing")
    alpha = float(d.get("alpha", 0.4))
    if not 1 / 3 < alpha < 0.5:
        _fail(loc, sec, "alpha", "must lie in (1/3, 1/2)")
    pairs = d.get("pairs", "auto")
    if pairs not in ("auto", "all", "dyadic"):
        _fail(loc, sec, "pairs", "must be 'auto', 'all' or 'dyadic'")
    workers = d.get("workers", "auto")
    if workers != "auto":
        workers = _positive(loc, sec, "workers", workers, int)
    return dict(
        eps_list=tuple(eps),
        n_paths=_positive(loc, sec, "n_paths", d.get("n_paths", 2000), int),
        grid_steps=_positive(loc, sec, "grid_steps", d.get("grid_steps", 512), int),
        alpha=alpha,
        seed=int(d.get("seed", 0)),
        resolution=_positive(loc, sec, "resolution", d.get("resolution", 10.0)),
        workers=workers,
        pairs=pairs,
    )


def _driver(loc, d):
    sec = "driver"
    kind = d.get("kind", "sinusoid")
    if kind not in DRIVERS:
        _fail(loc, sec, "kind", f"must be one of {sorted(DRIVERS)}")
    cfg = DriverConfig(kind=kind)
    if "masses" in d:
        masses = [_positive(loc, sec, "masses", m) for m in d["masses"]]
        if any(b >= a for a, b in zip(masses, masses[1:])):
            _fail(loc, sec, "masses", "must be strictly decreasing")
        cfg.masses = tuple(masses)
    if "n_steps" in d:
        cfg.n_steps = _positive(loc, sec, "n_steps", d["n_steps"], int)
    cfg.options = {k: v for k, v in d.items() if k not in ("kind", "masses", "n_steps")}
    try:
        cfg.make()
    except TypeError as exc:
        raise ValidationError("driver", f"bad driver options: {exc}", None) from None
    return cfg


def _field(loc, key, d, e):
    if not isinstance(d, dict):
        _fail(loc, "rde", key, "field must be a table with c0/c1/c2")
    c0 = np.asarray(d.get("c0", np.zeros(e)), float)
    c1 = np.asarray(d.get("c1", np.zeros((e, e))), float)
    c2 = d.get("c2")
    try:
        return PolyField(c0, c1, None if c2 is None else np.asarray(c2, float))
    except (RoughMagError, ValueError) as exc:
        _fail(loc, "rde", key, str(exc))


def _rde(loc, d, M):
    sec = "rde"
    y0 = tuple(float(v) for v in d.get("y0", [1.0, 1.0]))
    tol = _positive(loc, sec, "tol", d.get("tol", 1e-3))
    if "V" not in d:
        if len(y0) != 2 or M.shape[0] != 2:
            _fail(loc, sec, "V", "fields are required unless n = e = 2")
        return RdeConfig(example_fields(M, float(d.get("sigma", 1.0))), y0, tol)
    e = len(y0)
    V = d["V"]
    if not isinstance(V, list) or len(V) != M.shape[0]:
        _fail(loc, sec, "V", f"need {M.shape[0]} driving fields")
    V0 = _field(loc, "V0", d.get("V0", {}), e)
    fields = tuple(_field(loc, "V", v, e) for v in V)
    if any(f.e != e for f in (V0, *fields)):
        _fail(loc, sec, "V", f"fields must act on R^{e} (length of y0)")
    return RdeConfig(VectorFieldSet(V0, fields), y0, tol)


def parse_config(text):
    """Parse and validate TOML text into a :class:`RunSpec`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"malformed config: {exc}") from None
    loc = _Locator(text)
    unknown = set(raw) - SECTIONS
    if unknown:
        k = sorted(unknown)[0]
        raise ValidationError(k, f"unknown section or key {k!r}", None)
    for s in raw:
        if not isinstance(raw[s], dict):
            raise ValidationError(s, "must be a [section]", None)
    exp = _experiment(loc, raw.get("experiment", {}), None)
    params = _model(loc, raw.get("model", {}), exp["eps_list"][0])
    experiment = ExperimentConfig(params=params, **exp)
    driver = _driver(loc, raw.get("driver", {}))
    rde = _rde(loc, raw.get("rde", {}), params.M)
    L = int(raw.get("signature", {}).get("L", 2))
    if not 1 <= L <= 4:
        _fail(loc, "signature", "L", "truncation level must be in 1..4")
    return RunSpec(experiment, driver, rde, L, raw)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
