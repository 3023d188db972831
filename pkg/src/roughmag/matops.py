"""Dense small-matrix kernel.

Spectrum checks, a Pade-13 matrix exponential, the stationary covariance
``C`` of the fast Ornstein-Uhlenbeck process, the two closed-form area
corrections, and exact Gaussian transitions for linear SDEs.

Matrices are plain ``numpy`` arrays. Conventions::

    Sym(M)  = (M + M^T) / 2
    Anti(M) = (M - M^T) / 2
    [e_i, e_j] = e_i (x) e_j - e_j (x) e_i
"""

from dataclasses import dataclass

import numpy as np

from .errors import IdentityViolation, NonPSD, SingularSystem, SpectrumViolation, StepTooLarge

SPECTRUM_TOL = 1e-12
ANTISYM_TOL = 1e-12

# Higham (2005) degree-13 Pade coefficients and the matching 1-norm threshold.
_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
    16380.0, 182.0, 1.0,
])
_THETA13 = 5.371920351148152


@dataclass(frozen=True)
class SpectralGap:
    """Lower bound ``lam`` on the real parts of the spectrum of ``M``."""

    lam: float

    def __float__(self):
        return float(self.lam)


def as_square(A, name="matrix"):
    """Validate and return ``A`` as a finite float64 square matrix."""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def anti(A):
    return 0.5 * (A - np.swapaxes(A, -1, -2))


def bracket(i, j, n):
    """Matrix of ``[e_i, e_j]`` in R^{n x n}."""
    E = np.zeros((n, n))
    E[i, j] += 1.0
    E[j, i] -= 1.0
    return E


def spectral_abscissa(M, tol=SPECTRUM_TOL):
    """Smallest real part of the eigenvalues of ``M``.

    Raises SpectrumViolation unless every eigenvalue has real part above
    ``tol``, i.e. unless ``M`` is an admissible friction/drift matrix.
    """
    M = as_square(M, "M")
    re = np.linalg.eigvals(M).real
    lam = float(re.min())
    if lam <= tol:
        raise SpectrumViolation(f"min Re(eig M) = {lam:.3e} is not > {tol:g}")
    return SpectralGap(lam)


def expm(A):
    """Matrix exponential by scaling and squaring with a [13/13] Pade approximant."""
    A = as_square(A, "A")
    n = A.shape[0]
    norm1 = np.abs(A).sum(axis=0).max()
    s = 0
    if norm1 > _THETA13:
        s = int(np.ceil(np.log2(norm1 / _THETA13)))
    if s > 1100:
        raise OverflowError(f"matrix exponential of norm {norm1:.3e} overflows")
    As = A / 2.0**s
    b = _PADE13
    ident = np.eye(n)
    A2 = As @ As
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = As @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
              + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    with np.errstate(over="ignore", invalid="ignore"):
        R = np.linalg.solve(V - U, V + U)
        for _ in range(s):
            R = R @ R
    if not np.all(np.isfinite(R)):
        raise OverflowError("matrix exponential overflowed")
    return R


def solve_C(M):
    """Stationary covariance ``C = int_0^inf e^{-Ms} e^{-M^T s} ds``.

    Computed as the solution of the Lyapunov equation ``M C + C M^T = I``
    (differentiate ``e^{-Ms} e^{-M^T s}`` and integrate over [0, inf)).
    """
    M = as_square(M, "M")
    spectral_abscissa(M)
    n = M.shape[0]
    ident = np.eye(n)
    if n <= 20:
        # row-major vec: vec(MC) = (M kron I) vec C, vec(C M^T) = (I kron M) vec C
        K = np.kron(M, ident) + np.kron(ident, M)
        if np.linalg.cond(K) > 1e13:
            raise SingularSystem("Lyapunov operator is numerically singular")
        C = np.linalg.solve(K, ident.ravel()).reshape(n, n)
    else:
        from scipy.linalg import solve_continuous_lyapunov

        C = solve_continuous_lyapunov(M, ident)
    C = sym(C)
    resid = np.linalg.norm(M @ C + C @ M.T - ident)
    if resid > 1e-10 * max(1.0, np.linalg.norm(M) * np.linalg.norm(C)):
        raise SingularSystem(f"Lyapunov residual {resid:.3e} too large")
    return C


def _antisymmetrize(G, what):
    S = sym(G)
    scale = max(1.0, np.abs(G).max())
    if np.abs(S).max() > ANTISYM_TOL * scale * G.shape[0]:
        raise IdentityViolation(f"{what} has symmetric part {np.abs(S).max():.3e}")
    return anti(G)


def area_correction_W(M):
    """Area correction ``Gamma = (M C - C M^T) / 2`` of the small-mass limit.

    The limit of the lift of ``M X`` is the Stratonovich lift of ``W`` with
    second level shifted by ``(t - s) Gamma``. ``Gamma`` vanishes exactly
    when ``M`` is symmetric.
    """
    M = as_square(M, "M")
    C = solve_C(M)
    return _antisymmetrize(0.5 * (M @ C - C @ M.T), "Gamma_W")


def area_correction_X(M):
    """Area correction ``(C M^{-T} - M^{-1} C) / 2`` seen by ``X`` itself."""
    M = as_square(M, "M")
    C = solve_C(M)
    if np.linalg.cond(M) > 1e13:
        raise SingularSystem("M is not invertible")
    Minv = np.linalg.inv(M)
    return _antisymmetrize(0.5 * (C @ Minv.T - Minv @ C), "Gamma_X")


def gamma_coefficients(M):
    """Coefficients ``gamma_ij`` (i < j) with ``M C - C M^T = sum gamma_ij [e_i, e_j]``.

    Note ``gamma_ij = 2 * Gamma_ij`` where ``Gamma = area_correction_W(M)``.
    """
    G = 2.0 * area_correction_W(M)
    n = G.shape[0]
    return {(i, j): float(G[i, j]) for i in range(n) for j in range(i + 1, n)}


def check_psd(Q, tol=1e-10):
    """Symmetrize ``Q`` and raise NonPSD if an eigenvalue is below ``-tol * scale``."""
    Q = sym(np.asarray(Q, dtype=float))
    w = np.linalg.eigvalsh(Q)
    scale = max(1.0, np.abs(w).max())
    if w.min() < -tol * scale:
        raise NonPSD(f"covariance eigenvalue {w.min():.3e} < 0")
    return Q


def psd_factor(Q, tol=1e-10):
    """Return ``L`` with ``L @ L.T == Q`` for a (possibly singular) PSD ``Q``.

    Uses the symmetric eigendecomposition so exact null directions of ``Q``
    stay null in ``L``; eigenvalues within ``tol * scale`` of zero are
    clipped.
    """
    Q = sym(np.asarray(Q, dtype=float))
    w, U = np.linalg.eigh(Q)
    scale = max(1.0, np.abs(w).max())
    if w.min() < -tol * scale:
        raise NonPSD(f"covariance eigenvalue {w.min():.3e} < 0")
    w = np.where(w > 1e-15 * scale, w, 0.0)
    return U * np.sqrt(w)


def van_loan_transition(A, Bcov, h):
    """Exact discretization of ``d xi = A xi dt + B dW`` over a step ``h``.

    Returns ``(Phi, Q)`` with ``Phi = e^{A h}`` and
    ``Q = int_0^h e^{A s} B B^T e^{A^T s} ds``. The block exponential of
    ``[[A, BB^T], [0, -A^T]] h`` is evaluated on ``h / 2^k`` with
    ``||A|| h / 2^k <= 1`` and then doubled back up via
    ``Q(2t) = Q(t) + Phi(t) Q(t) Phi(t)^T``, which keeps stiff steps from
    overflowing the ``e^{+A^T h}`` block.
    """
    A = as_square(A, "A")
    Bcov = as_square(Bcov, "Bcov")
    n = A.shape[0]
    if Bcov.shape != A.shape:
        raise ValueError("A and Bcov must have the same shape")
    h = float(h)
    if h < 0 or not np.isfinite(h):
        raise ValueError(f"step must be finite and >= 0, got {h}")
    if h == 0:
        return np.eye(n), np.zeros((n, n))
    norm = np.abs(A).sum(axis=0).max() * h
    if not np.isfinite(norm):
        raise StepTooLarge("step times drift norm is not finite")
    k = 0 if norm <= 1.0 else int(np.ceil(np.log2(norm)))
    if k > 200:
        raise StepTooLarge(f"step too large: ||A|| h = {norm:.3e}")
    tau = h / 2.0**k
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, :n] = A
    blk[:n, n:] = sym(Bcov)
    blk[n:, n:] = -A.T
    E = expm(blk * tau)
    Phi = E[:n, :n]
    Q = E[:n, n:] @ Phi.T
    for _ in range(k):
        Q = Q + Phi @ Q @ Phi.T
        Phi = Phi @ Phi
    Q = check_psd(Q)
    if not (np.all(np.isfinite(Phi)) and np.all(np.isfinite(Q))):
        raise OverflowError("transition overflowed")
    return Phi, Q
