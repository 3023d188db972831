"""Level-2 rough paths on time grids.

A :class:`RoughPathL2` stores, for each grid step ``[t_k, t_{k+1}]``, the
increment ``X_{t_k,t_{k+1}}`` and the second-level tensor
``XX_{t_k,t_{k+1}}``. Values over longer intervals are always produced by
Chen's relation

    XX_{s,t} = XX_{s,u} + XX_{u,t} + X_{s,u} (x) X_{u,t},

so they are additive-consistent by construction. Arrays may carry leading
batch axes (independent paths) in front of the time axis.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, GridMismatch, GridTooCoarse
from .ousim import GridPath

KINDS = ("ito", "stratonovich", "smooth")
EXHAUSTIVE_MAX_NODES = 2000


@dataclass(frozen=True, eq=False)
class RoughPathL2:
    times: np.ndarray
    increments: np.ndarray  # (..., N, n)
    level2: np.ndarray  # (..., N, n, n)
    kind: str = "smooth"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        dx = np.asarray(self.increments, dtype=float)
        xx = np.asarray(self.level2, dtype=float)
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if dx.shape[-2] != t.size - 1 or xx.shape[:-1] != dx.shape:
            raise DimensionMismatch(
                f"increments {dx.shape} / level2 {xx.shape} do not fit {t.size} nodes")
        if xx.shape[-1] != dx.shape[-1]:
            raise DimensionMismatch("level-2 tensors must be n x n")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "increments", dx)
        object.__setattr__(self, "level2", xx)

    @property
    def n(self):
        return self.increments.shape[-1]

    @property
    def n_steps(self):
        return self.times.size - 1

    @property
    def batch_shape(self):
        return self.increments.shape[:-2]

    def __getitem__(self, idx):
        return RoughPathL2(self.times, self.increments[idx], self.level2[idx], self.kind)

    def path(self):
        """First level as a GridPath started at 0."""
        x = np.cumsum(self.increments, axis=-2)
        zero = np.zeros(x.shape[:-2] + (1, self.n))
        return GridPath(self.times, np.concatenate([zero, x], axis=-2))

    def cumulative(self):
        """``(X_{0,t_k}, XX_{0,t_k})`` for every node ``k``."""
        dx = self.increments
        x = np.cumsum(dx, axis=-2)
        prev = x - dx
        xx = np.cumsum(self.level2 + prev[..., :, None] * dx[..., None, :], axis=-3)
        shape = dx.shape[:-2]
        x0 = np.concatenate([np.zeros(shape + (1, self.n)), x], axis=-2)
        xx0 = np.concatenate([np.zeros(shape + (1, self.n, self.n)), xx], axis=-3)
        return x0, xx0

    def interval(self, i, j):
        """``(X_{t_i,t_j}, XX_{t_i,t_j})`` by direct Chen accumulation over steps i..j-1."""
        if not 0 <= i <= j <= self.n_steps:
            raise IndexError(f"bad node pair ({i}, {j})")
        dx = self.increments[..., i:j, :]
        x = np.cumsum(dx, axis=-2)
        prev = x - dx
        xx = (self.level2[..., i:j, :, :] + prev[..., :, None] * dx[..., None, :]).sum(axis=-3)
        return dx.sum(axis=-2), xx

    def restrict(self, nodes):
        """Coarsen to the sub-grid ``times[nodes]`` (must contain 0 and N)."""
        nodes = np.asarray(nodes, dtype=int)
        if nodes[0] != 0 or nodes[-1] != self.n_steps or np.any(np.diff(nodes) <= 0):
            raise GridMismatch("restriction nodes must increase from 0 to N")
        seg = np.diff(nodes)
        if np.all(seg == seg[0]):
            dx, xx = coarsen_steps(self.increments, self.level2, int(seg[0]))
            return RoughPathL2(self.times[nodes], dx, xx, self.kind)
        parts = [self.interval(a, b) for a, b in zip(nodes[:-1], nodes[1:])]
        dx = np.stack([p[0] for p in parts], axis=-2)
        xx = np.stack([p[1] for p in parts], axis=-3)
        return RoughPathL2(self.times[nodes], dx, xx, self.kind)

    def shift(self, G):
        """Replace ``XX_{s,t}`` by ``XX_{s,t} + (t - s) G`` (a Chen-preserving translation)."""
        G = np.asarray(G, dtype=float)
        h = np.diff(self.times)
        return RoughPathL2(self.times, self.increments,
                           self.level2 + h[:, None, None] * G, self.kind)

    def to_csv(self, path):
        """Per-step rows ``t_k,t_{k+1},dx_*,xx_**`` at 17 significant digits."""
        if self.batch_shape:
            raise ValueError("to_csv needs a single path; index the batch first")
        n = self.n
        head = ["t_k", "t_k1"] + [f"dx_{i}" for i in range(n)]
        head += [f"xx_{i}{j}" for i in range(n) for j in range(n)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for k in range(self.n_steps):
                row = [self.times[k], self.times[k + 1], *self.increments[k],
                       *self.level2[k].ravel()]
                w.writerow([f"{v:.17g}" for v in row])


def concatenate(parts):
    """Join rough paths on consecutive grids (each starting where the previous ends)."""
    t = [parts[0].times]
    for p in parts[1:]:
        if p.times[0] != t[-1][-1] and not np.isclose(p.times[0], t[-1][-1]):
            raise GridMismatch("pieces are not contiguous in time")
        t.append(p.times[1:])
    kind = parts[0].kind
    return RoughPathL2(
        np.concatenate(t),
        np.concatenate([p.increments for p in parts], axis=-2),
        np.concatenate([p.level2 for p in parts], axis=-3),
        kind,
    )


def chen_combine(x_su, xx_su, x_ut, xx_ut):
    """``XX_{s,t} = XX_{s,u} + XX_{u,t} + X_{s,u} (x) X_{u,t}``."""
    x_su, x_ut = np.asarray(x_su, float), np.asarray(x_ut, float)
    xx_su, xx_ut = np.asarray(xx_su, float), np.asarray(xx_ut, float)
    n = x_su.shape[-1]
    if x_ut.shape[-1] != n or xx_su.shape[-2:] != (n, n) or xx_ut.shape[-2:] != (n, n):
        raise DimensionMismatch("incompatible increment/tensor dimensions")
    return xx_su + xx_ut + x_su[..., :, None] * x_ut[..., None, :]


def lift_smooth(X, Y, eps=1.0):
    """Lift a C^1 path ``X`` with derivative ``Y / eps`` sampled at the nodes.

    Per step the iterated integral ``int X_{t_k,u} (x) dX_u`` is evaluated by
    the trapezoid rule in ``u`` (the left end of the integrand vanishes), which
    gives a global O(h^2) error for smooth integrands and is exact for
    linear paths.
    """
    if X.times.shape != Y.times.shape or np.any(X.times != Y.times):
        raise GridMismatch("X and its derivative must share a grid")
    if X.n_steps < 2:
        raise GridTooCoarse("smooth lift needs at least 2 steps")
    dx = X.increments()
    xx = smooth_level2(dx, Y.values[..., 1:, :] / eps, np.diff(X.times))
    return RoughPathL2(X.times, dx, xx, "smooth")


def smooth_level2(dx, xdot_right, h):
    """Per-step trapezoid value of ``int X_{t_k,u} (x) dX_u``."""
    return 0.5 * h[:, None, None] * dx[..., :, None] * xdot_right[..., None, :]


def coarsen_steps(dx, xx, r):
    """Chen-combine groups of ``r`` consecutive steps (step axis is -2 / -3)."""
    n = dx.shape[-1]
    shp = dx.shape[:-2]
    dx = dx.reshape(shp + (-1, r, n))
    xx = xx.reshape(shp + (-1, r, n, n))
    x = np.cumsum(dx, axis=-2)
    prev = x - dx
    return x[..., -1, :], (xx + prev[..., :, None] * dx[..., None, :]).sum(axis=-3)


def lift_brownian_ito(W):
    """Ito lift: left-point sums, i.e. zero second level on every grid step.

    Interval values over several steps come from Chen, which reproduces the
    left-point Riemann sums ``sum_k W_{s,t_k} (x) W_{t_k,t_{k+1}}``.
    """
    if W.n_steps < 1:
        raise GridTooCoarse("lift needs at least one step")
    dx = W.increments()
    return RoughPathL2(W.times, dx, np.zeros(dx.shape + (dx.shape[-1],)), "ito")


def _bracket_steps(rp, mode):
    dx = rp.increments
    if mode == "pathwise":
        return 0.5 * dx[..., :, None] * dx[..., None, :]
    if mode == "expected":
        h = np.diff(rp.times)
        return 0.5 * h[:, None, None] * np.eye(rp.n)
    raise ValueError("mode must be 'pathwise' or 'expected'")


def to_stratonovich(rp, mode="pathwise"):
    """Add the Ito-Stratonovich correction to an Ito lift.

    ``mode="pathwise"`` adds ``1/2 dX (x) dX`` per step (the discrete
    quadratic variation), which makes ``Sym(XX_{s,t}) = 1/2 X_{s,t} (x) X_{s,t}``
    exact; ``mode="expected"`` adds its Brownian expectation ``1/2 h I``.
    """
    if rp.kind != "ito":
        raise ValueError(f"expected an Ito lift, got {rp.kind}")
    return RoughPathL2(rp.times, rp.increments, rp.level2 + _bracket_steps(rp, mode),
                       "stratonovich")


def to_ito(rp, mode="pathwise"):
    if rp.kind != "stratonovich":
        raise ValueError(f"expected a Stratonovich lift, got {rp.kind}")
    return RoughPathL2(rp.times, rp.increments, rp.level2 - _bracket_steps(rp, mode), "ito")


def pair_lags(n_nodes, pairs="auto"):
    """Lags ``j - i`` over which Hoelder sups are taken."""
    N = n_nodes - 1
    if pairs == "auto":
        pairs = "all" if n_nodes <= EXHAUSTIVE_MAX_NODES else "dyadic"
    if pairs == "all":
        return np.arange(1, N + 1)
    if pairs == "dyadic":
        return 2 ** np.arange(int(np.floor(np.log2(N))) + 1)
    raise ValueError("pairs must be 'auto', 'all' or 'dyadic'")


def _check_alpha(alpha):
    if not 1.0 / 3.0 < alpha <= 0.5:
        raise ValueError(f"alpha must lie in (1/3, 1/2], got {alpha}")


def _holder_sups(x0, xx0, times, alpha, pairs):
    lvl1 = np.zeros(x0.shape[:-2])
    lvl2 = np.zeros(x0.shape[:-2])
    for lag in pair_lags(times.size, pairs):
        dt = times[lag:] - times[:-lag]
        dx = x0[..., lag:, :] - x0[..., :-lag, :]
        dxx = xx0[..., lag:, :, :] - xx0[..., :-lag, :, :] - x0[..., :-lag, :, None] * dx[..., None, :]
        r1 = np.sqrt((dx**2).sum(-1)) / dt**alpha
        r2 = np.sqrt((dxx**2).sum((-1, -2))) / dt ** (2 * alpha)
        lvl1 = np.maximum(lvl1, r1.max(-1))
        lvl2 = np.maximum(lvl2, r2.max(-1))
    return lvl1, lvl2


def holder_distance_parts(a, b, alpha, pairs="auto"):
    """The two sups of the inhomogeneous Hoelder metric, returned separately."""
    _check_alpha(alpha)
    if a.times.shape != b.times.shape or np.any(a.times != b.times):
        raise GridMismatch("rough paths live on different grids")
    if a.n != b.n:
        raise DimensionMismatch("rough paths have different dimensions")
    xa, xxa = a.cumulative()
    xb, xxb = b.cumulative()
    lvl1 = np.zeros(np.broadcast_shapes(xa.shape, xb.shape)[:-2])
    lvl2 = np.zeros_like(lvl1)
    times = a.times
    for lag in pair_lags(times.size, pairs):
        dt = times[lag:] - times[:-lag]
        da = xa[..., lag:, :] - xa[..., :-lag, :]
        db = xb[..., lag:, :] - xb[..., :-lag, :]
        Xa = xxa[..., lag:, :, :] - xxa[..., :-lag, :, :] - xa[..., :-lag, :, None] * da[..., None, :]
        Xb = xxb[..., lag:, :, :] - xxb[..., :-lag, :, :] - xb[..., :-lag, :, None] * db[..., None, :]
        r1 = np.sqrt(((da - db) ** 2).sum(-1)) / dt**alpha
        r2 = np.sqrt(((Xa - Xb) ** 2).sum((-1, -2))) / dt ** (2 * alpha)
        lvl1 = np.maximum(lvl1, r1.max(-1))
        lvl2 = np.maximum(lvl2, r2.max(-1))
    return lvl1, lvl2


def holder_distance(a, b, alpha, pairs="auto"):
    """Inhomogeneous alpha-Hoelder rough path distance evaluated over grid pairs.

    All pairs are used up to 2000 nodes, dyadic lags ``(i, i + 2^k)`` beyond.
    Norms are Euclidean on R^n and Frobenius on R^{n x n}.
    """
    l1, l2 = holder_distance_parts(a, b, alpha, pairs)
    return l1 + l2


def holder_norms(a, alpha, pairs="auto"):
    """``(||X||_alpha, ||XX||_{2 alpha})`` over grid pairs."""
    _check_alpha(alpha)
    x0, xx0 = a.cumulative()
    return _holder_sups(x0, xx0, a.times, alpha, pairs)
