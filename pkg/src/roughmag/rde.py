"""ODEs driven by physical Brownian motion and their corrected Ito limit.

As the mass vanishes, ``dY = V0(Y) dt + sum_i V_i(Y) dX^i`` converges to the
Ito SDE

    dY = V0~(Y) dt + sum_i V~_i(Y) dW^i,
    (V~_1, ..., V~_n) = (V_1, ..., V_n) M^{-1},
    V0~ = V0 + 1/2 sum_i DV~_i V~_i + sum_{i<j} Gamma_ij [V~_i, V~_j],

with ``Gamma = (MC - CM^T)/2`` and ``[U, V] = DV U - DU V``. The last term
is the drift created by the area correction; dropping it gives the plain
Stratonovich (Wong-Zakai) limit.
"""

from dataclasses import dataclass

import numpy as np

from . import matops
from .errors import DimensionMismatch, StepRejected, UnsupportedRepresentation
from .ousim import GridPath


@dataclass(frozen=True, eq=False)
class PolyField:
    """``f(y) = c0 + c1 y + c2[y, y]`` on R^e, with ``c2`` optional."""

    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray = None

    def __post_init__(self):
        c0 = np.asarray(self.c0, dtype=float)
        c1 = np.asarray(self.c1, dtype=float)
        e = c0.shape[0]
        if c1.shape != (e, e):
            raise DimensionMismatch(f"linear part must be {e}x{e}, got {c1.shape}")
        c2 = None
        if self.c2 is not None:
            c2 = np.asarray(self.c2, dtype=float)
            if c2.shape != (e, e, e):
                raise DimensionMismatch(f"quadratic part must be {e}x{e}x{e}")
            if not np.any(c2):
                c2 = None
        for c in (c0, c1, c2):
            if c is not None and not np.all(np.isfinite(c)):
                raise ValueError("field coefficients must be finite")
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "c2", c2)

    @classmethod
    def linear(cls, A):
        A = np.asarray(A, dtype=float)
        return cls(np.zeros(A.shape[0]), A)

    @classmethod
    def constant(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v, np.zeros((v.size, v.size)))

    @property
    def e(self):
        return self.c0.shape[0]

    @property
    def representation(self):
        return "affine" if self.c2 is None else "polynomial-degree-2"

    def __call__(self, y):
        out = self.c0 + y @ self.c1.T
        if self.c2 is not None:
            out = out + np.einsum("ijk,...j,...k->...i", self.c2, y, y)
        return out

    def jacobian(self, y):
        y = np.asarray(y, dtype=float)
        J = np.broadcast_to(self.c1, y.shape[:-1] + self.c1.shape)
        if self.c2 is not None:
            J = J + np.einsum("ijk,...k->...ij", self.c2 + self.c2.transpose(0, 2, 1), y)
        return J

    def scaled(self, w):
        return PolyField(w * self.c0, w * self.c1, None if self.c2 is None else w * self.c2)

    def __add__(self, other):
        c2 = None
        if self.c2 is not None or other.c2 is not None:
            c2 = (0 if self.c2 is None else self.c2) + (0 if other.c2 is None else other.c2)
        return PolyField(self.c0 + other.c0, self.c1 + other.c1, c2)


@dataclass(frozen=True, eq=False)
class VectorFieldSet:
    """Drift ``V0`` and driving fields ``V[0..n-1]`` on R^e."""

    V0: object
    V: tuple

    def __post_init__(self):
        object.__setattr__(self, "V", tuple(self.V))
        e = self.V0.e
        if any(v.e != e for v in self.V):
            raise DimensionMismatch("all fields must act on the same R^e")

    @property
    def e(self):
        return self.V0.e

    @property
    def n(self):
        return len(self.V)

    @property
    def representation(self):
        reps = {getattr(f, "representation", "callable") for f in (self.V0, *self.V)}
        if "callable" in reps:
            return "callable"
        return "affine" if reps == {"affine"} else "polynomial-degree-2"


def _require_jacobian(f):
    if not hasattr(f, "jacobian"):
        raise UnsupportedRepresentation(f"{type(f).__name__} has no analytic Jacobian")


def lie_bracket(U, V, y):
    """``[U, V](y) = DV(y) U(y) - DU(y) V(y)``."""
    _require_jacobian(U)
    _require_jacobian(V)
    return (np.einsum("...ij,...j->...i", V.jacobian(y), U(y))
            - np.einsum("...ij,...j->...i", U.jacobian(y), V(y)))


def tilde_fields(vf, M):
    """Recombine driving fields: ``V~_j = sum_i V_i (M^{-1})_{ij}``."""
    M = matops.as_square(M, "M")
    if M.shape[0] != vf.n:
        raise DimensionMismatch(f"M is {M.shape[0]}x{M.shape[0]} but there are {vf.n} fields")
    if np.linalg.cond(M) > 1e13:
        from .errors import SingularSystem

        raise SingularSystem("M is not invertible")
    Minv = np.linalg.inv(M)
    new = []
    for j in range(vf.n):
        if not all(isinstance(v, PolyField) for v in vf.V):
            raise UnsupportedRepresentation("only polynomial fields can be recombined")
        acc = vf.V[0].scaled(Minv[0, j])
        for i in range(1, vf.n):
            acc = acc + vf.V[i].scaled(Minv[i, j])
        new.append(acc)
    return VectorFieldSet(vf.V0, tuple(new))


class DriftField:
    """Corrected (or plain Stratonovich) Ito drift of the limiting SDE."""

    def __init__(self, V0, Vt, Gamma):
        for f in (V0, *Vt):
            _require_jacobian(f)
        self.V0 = V0
        self.Vt = tuple(Vt)
        self.Gamma = np.asarray(Gamma, dtype=float)
        self.e = V0.e

    @property
    def representation(self):
        reps = {f.representation for f in (self.V0, *self.Vt)}
        return "affine" if reps == {"affine"} else "polynomial"

    def ito_term(self, y):
        return 0.5 * sum(np.einsum("...ij,...j->...i", V.jacobian(y), V(y)) for V in self.Vt)

    def bracket_term(self, y):
        n = len(self.Vt)
        out = np.zeros(np.shape(y))
        for i in range(n):
            for j in range(i + 1, n):
                if self.Gamma[i, j] != 0.0:
                    out = out + self.Gamma[i, j] * lie_bracket(self.Vt[i], self.Vt[j], y)
        return out

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self.V0(y) + self.ito_term(y) + self.bracket_term(y)

    def as_affine(self):
        """``(A, b)`` with ``drift(y) = A y + b``; only for affine fields."""
        if self.representation != "affine":
            raise UnsupportedRepresentation("drift is not affine")
        b = self(np.zeros(self.e))
        A = np.stack([self(np.eye(self.e)[k]) - b for k in range(self.e)], axis=1)
        return A, b


def corrected_drift(vf, M, corrected=True):
    """Drift ``V0~`` of the Ito limit; ``corrected=False`` drops the area term."""
    if vf.representation == "callable":
        raise UnsupportedRepresentation("fields need analytic Jacobians")
    vt = tilde_fields(vf, M)
    Gamma = matops.area_correction_W(M) if corrected else np.zeros((vf.n, vf.n))
    return DriftField(vf.V0, vt.V, Gamma)


def _heun(vf, y, dt, dX):
    def rhs(z):
        out = vf.V0(z) * dt
        for i, V in enumerate(vf.V):
            out = out + V(z) * dX[..., i:i + 1]
        return out

    k1 = rhs(y)
    k2 = rhs(y + k1)
    err = 0.5 * np.abs(k2 - k1).max() / (1.0 + np.abs(y).max())
    return y + 0.5 * (k1 + k2), err


def _heun_adaptive(vf, y, dt, dX, tol, level=0):
    ynew, err = _heun(vf, y, dt, dX)
    if not np.all(np.isfinite(ynew)):
        raise StepRejected("solution is not finite")
    if tol is None or err <= tol:
        return ynew
    if level >= 10:
        raise StepRejected(f"local error {err:.3e} > {tol:g} after 10 halvings")
    half = _heun_adaptive(vf, y, 0.5 * dt, 0.5 * dX, tol, level + 1)
    return _heun_adaptive(vf, half, 0.5 * dt, 0.5 * dX, tol, level + 1)


def solve_driven_ode(vf, X, y0, tol=1e-4):
    """Heun scheme for ``dY = V0(Y) dt + sum_i V_i(Y) dX^i`` along the grid of ``X``.

    ``X`` is a GridPath (possibly a batch). Each grid step uses the exact
    increment of ``X``; if the Heun/Euler difference exceeds ``tol`` the step
    is halved (``X`` linearly interpolated), at most 10 times.
    """
    if X.d != vf.n:
        raise DimensionMismatch(f"driver has {X.d} components, fields expect {vf.n}")
    dX = X.increments()
    hs = np.diff(X.times)
    y = np.broadcast_to(np.asarray(y0, dtype=float), X.batch_shape + (vf.e,)).copy()
    out = np.empty(X.batch_shape + (X.times.size, vf.e))
    out[..., 0, :] = y
    for k in range(hs.size):
        y = _heun_adaptive(vf, y, hs[k], dX[..., k, :], tol)
        out[..., k + 1, :] = y
    return GridPath(X.times, out)


def solve_limit_sde(vf_tilde, drift, W, y0):
    """Euler-Maruyama for ``dY = drift(Y) dt + sum_i V~_i(Y) dW^i`` (Ito)."""
    dW = W.increments()
    hs = np.diff(W.times)
    y = np.broadcast_to(np.asarray(y0, dtype=float), W.batch_shape + (vf_tilde.e,)).copy()
    out = np.empty(W.batch_shape + (W.times.size, vf_tilde.e))
    out[..., 0, :] = y
    for k in range(hs.size):
        incr = drift(y) * hs[k]
        for i, V in enumerate(vf_tilde.V):
            incr = incr + V(y) * dW[..., k, i:i + 1]
        y = y + incr
        if not np.all(np.isfinite(y)):
            raise StepRejected(f"Euler-Maruyama blew up at step {k}")
        out[..., k + 1, :] = y
    return GridPath(W.times, out)


def affine_mean(drift, y0, T):
    """Exact ``E[Y_T]`` for an Ito SDE with affine drift ``A y + b``."""
    A, b = drift.as_affine()
    e = A.shape[0]
    blk = np.zeros((e + 1, e + 1))
    blk[:e, :e] = A
    blk[:e, e] = b
    return (matops.expm(blk * T) @ np.append(np.asarray(y0, dtype=float), 1.0))[:e]


def example_fields(M=None, sigma=1.0):
    """Non-commuting linear fields with ``V~_1 = sigma E_12 y``, ``V~_2 = sigma E_21 y``.

    The driving fields are ``V = V~ M`` so that the recombination by ``M^{-1}``
    returns the nilpotent pair. With ``M = I - J`` the area drift is
    ``sigma^2 diag(-1, 1) y / 2`` while the Ito term vanishes.
    """
    M = np.eye(2) - np.array([[0.0, -1.0], [1.0, 0.0]]) if M is None else np.asarray(M, float)
    Vt = [sigma * np.array([[0.0, 1.0], [0.0, 0.0]]), sigma * np.array([[0.0, 0.0], [1.0, 0.0]])]
    A = [sum(Vt[j] * M[j, i] for j in range(2)) for i in range(2)]
    return VectorFieldSet(PolyField.linear(np.zeros((2, 2))), tuple(PolyField.linear(a) for a in A))


def _rde_block(params, n_fine, n_obs, vf, y0, tol, seed, key, size):
    from . import homogenize as hz
    from . import montecarlo as mc

    rng = mc.substream(seed, *key)
    y = np.broadcast_to(np.asarray(y0, dtype=float), (size, vf.e)).copy()
    w_obs = []
    for h, r, W, Y, X in hz._chunks(params, n_fine, n_obs, rng, size):
        dX = np.diff(X, axis=1)
        for k in range(dX.shape[1]):
            y = _heun_adaptive(vf, y, h, dX[:, k], tol)
        w_obs.append(W[:, :-1:r])
        w_last = W[:, -1:]
    Wp = GridPath(hz._obs_times(params, n_obs), np.concatenate(w_obs + [w_last], axis=1))
    vt = tilde_fields(vf, params.M)
    out = {"driven": y}
    for label, corr in (("corrected", True), ("uncorrected", False)):
        drift = corrected_drift(vf, params.M, corrected=corr)
        out[label] = solve_limit_sde(vt, drift, Wp, y0).values[:, -1]
    return out


def rde_experiment(cfg, vf=None, y0=(1.0, 1.0), tol=1e-3):
    """``E[Y_T]`` of the driven ODE at the smallest eps versus both Ito limits.

    The limits are solved by Euler-Maruyama on the observation grid with the
    same Brownian path that drives ``X``. Differences use pooled SEs.
    """
    from . import homogenize as hz
    from . import montecarlo as mc

    vf = vf or example_fields(cfg.params.M)
    eps = cfg.eps_list[-1]
    p = cfg.params_at(eps)
    nf = hz.fine_steps(p, cfg.grid_steps, cfg.resolution)
    out = hz._run_blocks(_rde_block, cfg, p, (nf, cfg.grid_steps, vf, tuple(y0), tol), 700)
    rep = hz.Report("rde")
    stats = {}
    for label in ("driven", "corrected", "uncorrected"):
        m, s = mc.mean_se(out[label])
        stats[label] = (m, s)
        for i in range(vf.e):
            rep.add(eps, f"{label}_mean_{i}", m[i], s[i], out[label].shape[0])
    for label in ("corrected", "uncorrected"):
        dm = stats["driven"][0] - stats[label][0]
        pooled = np.hypot(stats["driven"][1], stats[label][1])
        rep.details[f"z_{label}"] = (dm / pooled).tolist()
    drift = corrected_drift(vf, p.M)
    rep.details["exact_corrected_mean"] = affine_mean(drift, y0, p.T).tolist() \
        if drift.representation == "affine" else None
    rep.details["fine_steps"] = nf
    zc = np.abs(rep.details["z_corrected"])
    zu = np.abs(rep.details["z_uncorrected"])
    rep.criteria["matches_corrected_within_3se"] = bool(np.all(zc <= 3))
    rep.criteria["differs_from_uncorrected_3se"] = bool(np.any(zu > 3))
    return rep
