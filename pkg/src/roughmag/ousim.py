"""Exact Gaussian simulation of physical Brownian motion.

With mass ``m = eps**2`` and rescaled momentum ``Y = P / eps`` the system is

    dW = dW
    dY = -eps^-2 M Y dt + eps^-1 dW
    dX = eps^-1 Y dt

and is simulated as one linear SDE in the augmented state ``xi = (W, Y, X)``
of dimension ``3n``. Per-step transitions ``(Phi, Q)`` are exact, so node
values carry no time-discretization bias and the identity
``M X_t = W_t - eps (Y_t - Y_0)`` holds pathwise up to rounding.

Array layout: path-valued arrays have shape ``(..., N + 1, d)`` where the
leading axes (if any) index independent paths.
"""

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import matops
from .errors import GridTooCoarse, IdentityViolation, StepTooLarge

Y0_MODES = ("zero", "stationary")


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Drift matrix ``M``, mass ``m``, horizon ``T`` and initial-momentum mode."""

    M: np.ndarray
    m: float
    T: float = 1.0
    y0_mode: str = "zero"

    def __post_init__(self):
        M = matops.as_square(self.M, "M")
        M.setflags(write=False)
        object.__setattr__(self, "M", M)
        if not self.m > 0:
            raise ValueError(f"mass must be > 0, got {self.m}")
        if not self.T > 0:
            raise ValueError(f"horizon T must be > 0, got {self.T}")
        if self.y0_mode not in Y0_MODES:
            raise ValueError(f"y0_mode must be one of {Y0_MODES}, got {self.y0_mode!r}")
        matops.spectral_abscissa(M)

    @classmethod
    def from_eps(cls, M, eps, T=1.0, y0_mode="zero"):
        return cls(M, float(eps) ** 2, T, y0_mode)

    @classmethod
    def from_physical(cls, A, q, B, m, T=1.0, y0_mode="zero"):
        """Build from friction ``A`` (symmetric), charge ``q`` and antisymmetric field ``B``."""
        A = matops.as_square(A, "A")
        B = matops.as_square(B, "B")
        if np.abs(A - A.T).max() > 1e-12:
            raise ValueError("friction matrix A must be symmetric")
        if np.abs(B + B.T).max() > 1e-12:
            raise ValueError("magnetic matrix B must be antisymmetric")
        return cls(A + q * B, m, T, y0_mode)

    @property
    def n(self):
        return self.M.shape[0]

    @property
    def eps(self):
        return float(np.sqrt(self.m))

    def with_eps(self, eps):
        return ModelParams(self.M, float(eps) ** 2, self.T, self.y0_mode)


@dataclass(frozen=True, eq=False)
class GridPath:
    """Values on a strictly increasing time grid starting at 0."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or t.size < 1:
            raise ValueError("times must be a non-empty 1-d array")
        if t[0] != 0.0:
            raise ValueError(f"grid must start at 0, got {t[0]}")
        if np.any(np.diff(t) <= 0):
            raise ValueError("grid must be strictly increasing")
        if v.shape[-2] != t.size:
            raise ValueError(f"{v.shape[-2]} value rows for {t.size} time nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def d(self):
        return self.values.shape[-1]

    @property
    def n_steps(self):
        return self.times.size - 1

    @property
    def batch_shape(self):
        return self.values.shape[:-2]

    def increments(self):
        return np.diff(self.values, axis=-2)

    def __getitem__(self, idx):
        """Select paths from the batch axes."""
        return GridPath(self.times, self.values[idx])

    def map(self, fn):
        return GridPath(self.times, fn(self.values))

    def to_csv(self, path):
        """Write ``t,c0,...,c{d-1}`` rows at 17 significant digits (single path only)."""
        if self.batch_shape:
            raise ValueError("to_csv needs a single path; index the batch first")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"c{i}" for i in range(self.d)])
            for t, row in zip(self.times, self.values):
                w.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in row])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1:])


@dataclass(frozen=True, eq=False)
class JointSample:
    W: GridPath
    Y: GridPath
    X: GridPath
    seed: dict = field(default_factory=dict)


def uniform_grid(T, n_steps):
    t = np.linspace(0.0, float(T), int(n_steps) + 1)
    t[0] = 0.0
    return t


def augmented_system(M, eps):
    """Drift and noise covariance of ``xi = (W, Y, X)``."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    I = np.eye(n)
    A = np.zeros((3 * n, 3 * n))
    A[n:2 * n, n:2 * n] = -M / eps**2
    A[2 * n:, n:2 * n] = I / eps
    load = np.vstack([I, I / eps, np.zeros((n, n))])
    return A, load @ load.T


@lru_cache(maxsize=256)
def _transition_cached(Mbytes, n, eps, h):
    M = np.frombuffer(Mbytes).reshape(n, n)
    A, Bcov = augmented_system(M, eps)
    try:
        Phi, Q = matops.van_loan_transition(A, Bcov, h)
    except OverflowError as exc:
        raise StepTooLarge(f"transition for eps={eps}, h={h} overflowed") from exc
    L = matops.psd_factor(Q)
    Phi.setflags(write=False)
    L.setflags(write=False)
    return Phi, L


def transition(params, h):
    """Exact one-step map ``xi' = Phi xi + L z`` with ``z ~ N(0, I)``."""
    M = np.ascontiguousarray(params.M, dtype=float)
    return _transition_cached(M.tobytes(), params.n, params.eps, float(h))


def initial_state(params, n_paths, rng):
    n = params.n
    xi0 = np.zeros((n_paths, 3 * n))
    if params.y0_mode == "stationary":
        Lc = matops.psd_factor(matops.solve_C(params.M))
        xi0[:, n:2 * n] = rng.standard_normal((n_paths, n)) @ Lc.T
    return xi0


def _step_keys(times):
    h = np.diff(times)
    # collapse float noise from linspace so uniform grids share one transition
    return np.round(h, 15)


def _propagate(params, times, xi0, rng):
    B = xi0.shape[0]
    N = times.size - 1
    out = np.empty((B, N + 1, xi0.shape[1]))
    out[:, 0] = xi0
    hs = _step_keys(times)
    z = rng.standard_normal((B, N, xi0.shape[1]))
    state = xi0
    for k in range(N):
        Phi, L = transition(params, hs[k])
        state = state @ Phi.T + z[:, k] @ L.T
        out[:, k + 1] = state
    return out


def sample_joint(params, grid, rng, n_paths=None):
    """Sample ``(W, Y, X)`` at the nodes of ``grid`` with exact transitions.

    With ``n_paths=None`` a single path is returned, otherwise the paths are
    stacked along a leading axis of length ``n_paths``.
    """
    times = np.asarray(grid, dtype=float)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ValueError("grid must start at 0 and be strictly increasing")
    if times[-1] > params.T * (1 + 1e-12):
        raise ValueError("grid exceeds horizon T")
    B = 1 if n_paths is None else int(n_paths)
    xi0 = initial_state(params, B, rng)
    xi = _propagate(params, times, xi0, rng)
    if n_paths is None:
        xi = xi[0]
    n = params.n
    return JointSample(
        W=GridPath(times, xi[..., :n]),
        Y=GridPath(times, xi[..., n:2 * n]),
        X=GridPath(times, xi[..., 2 * n:]),
        seed={"bit_generator": type(rng.bit_generator).__name__},
    )


def iter_uniform_chunks(params, n_steps, n_paths, rng, chunk_steps=2048):
    """Stream an exact uniform-grid simulation in chunks of ``chunk_steps`` steps.

    Yields ``(k0, xi)`` with ``xi`` of shape ``(n_paths, K + 1, 3n)`` holding
    nodes ``k0 .. k0 + K``; consecutive chunks share their boundary node.
    """
    h = params.T / n_steps
    Phi, L = transition(params, h)
    PhiT, LT = Phi.T, L.T
    state = initial_state(params, n_paths, rng)
    d = state.shape[1]
    k0 = 0
    while k0 < n_steps:
        K = min(chunk_steps, n_steps - k0)
        xi = np.empty((n_paths, K + 1, d))
        xi[:, 0] = state
        z = rng.standard_normal((n_paths, K, d)) @ LT
        for k in range(K):
            state = state @ PhiT + z[:, k]
            xi[:, k + 1] = state
        yield k0, xi
        k0 += K


def split_state(xi, n):
    return xi[..., :n], xi[..., n:2 * n], xi[..., 2 * n:]


def momentum_path(sample, params):
    """Momentum ``P = eps * Y``."""
    return sample.Y.map(lambda y: params.eps * y)


def residual_path(sample, M, eps=None, rtol=1e-10):
    """``W - M X``, checked against ``eps (Y - Y_0)``.

    Raises IdentityViolation when the exact linear identity fails, which
    can only happen through a simulation bug.
    """
    M = np.asarray(M, dtype=float)
    if eps is None:
        raise ValueError("eps is required to check the residual identity")
    r = sample.W.values - sample.X.values @ M.T
    y = sample.Y.values
    expected = eps * (y - y[..., :1, :])
    scale = max(1.0, np.abs(sample.W.values).max(), np.abs(expected).max())
    err = np.abs(r - expected).max()
    if err > rtol * scale:
        raise IdentityViolation(f"|W - MX - eps(Y - Y0)| = {err:.3e}")
    return GridPath(sample.W.times, r)


@lru_cache(maxsize=256)
def _relax_cached(Mbytes, n, m, h):
    B = np.frombuffer(Mbytes).reshape(n, n) / m
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, :n] = -B
    blk[:n, n:] = np.eye(n)
    try:
        E = matops.expm(blk * h)
    except OverflowError as exc:
        raise StepTooLarge(f"relaxation step h={h}, m={m} overflowed") from exc
    return E[:n, :n], E[:n, n:]


def relaxation_defect(M, m, gamma):
    """Solve ``z' = -(M/m) z + gamma'`` with ``z_0 = 0``, ``gamma`` piecewise linear.

    Exact at the grid nodes (exponential integrator). Returns ``z`` as a
    GridPath on the grid of ``gamma``.
    """
    M = matops.as_square(M, "M")
    if not m > 0:
        raise ValueError("mass must be > 0")
    Mc = np.ascontiguousarray(M)
    t = gamma.times
    if t.size < 2:
        raise GridTooCoarse("driver needs at least one step")
    hs = _step_keys(t)
    dg = gamma.increments()
    z = np.zeros(gamma.values.shape)
    state = np.zeros(gamma.values.shape[:-2] + (M.shape[0],))
    for k in range(t.size - 1):
        E, G = _relax_cached(Mc.tobytes(), M.shape[0], float(m), float(hs[k]))
        state = state @ E.T + (dg[..., k, :] / hs[k]) @ G.T
        z[..., k + 1, :] = state
    return GridPath(t, z)


def deterministic_drive(M, m, gamma):
    """Position ``x`` of ``m x'' = -M x' + gamma'`` from rest at the origin.

    Uses ``M x = gamma_{0,.} - z`` with ``z`` from :func:`relaxation_defect`.
    """
    M = matops.as_square(M, "M")
    z = relaxation_defect(M, m, gamma)
    g0 = gamma.values - gamma.values[..., :1, :]
    x = (g0 - z.values) @ np.linalg.inv(M).T
    return GridPath(gamma.times, x)
