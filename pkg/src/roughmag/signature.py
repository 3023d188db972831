"""Truncated tensor algebra: signatures and the limiting expected signature.

A :class:`TensorPoly` holds levels ``0..L``; level ``k`` is an array of shape
``batch + (n,) * k``. Multi-indices are ordered lexicographically, which is
numpy's C order for the flattened levels.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import matops
from .errors import DimensionMismatch, NonZeroScalarPart, TruncationUnsupported

MAX_LEVEL = 4


@dataclass(frozen=True, eq=False)
class TensorPoly:
    n: int
    L: int
    levels: tuple

    def __post_init__(self):
        levels = tuple(np.asarray(x, dtype=float) for x in self.levels)
        if len(levels) != self.L + 1:
            raise DimensionMismatch(f"expected {self.L + 1} levels, got {len(levels)}")
        batch = levels[0].shape
        for k, lv in enumerate(levels):
            if lv.shape != batch + (self.n,) * k:
                raise DimensionMismatch(f"level {k} has shape {lv.shape}")
            if not np.all(np.isfinite(lv)):
                raise ValueError(f"level {k} has non-finite entries")
        object.__setattr__(self, "levels", levels)

    @property
    def batch_shape(self):
        return self.levels[0].shape

    def __getitem__(self, k):
        return self.levels[k]

    def __add__(self, other):
        _check_compatible(self, other)
        return TensorPoly(self.n, self.L, tuple(a + b for a, b in zip(self.levels, other.levels)))

    def __sub__(self, other):
        _check_compatible(self, other)
        return TensorPoly(self.n, self.L, tuple(a - b for a, b in zip(self.levels, other.levels)))

    def scale(self, c):
        return TensorPoly(self.n, self.L, tuple(c * a for a in self.levels))

    def mean(self, axis=0):
        return TensorPoly(self.n, self.L, tuple(a.mean(axis=axis) for a in self.levels))

    def to_json(self):
        if self.batch_shape:
            raise ValueError("serialize a single tensor, not a batch")
        return json.dumps({
            "n": self.n,
            "L": self.L,
            "ordering": "lexicographic",
            "levels": [lv.ravel().tolist() for lv in self.levels],
        })

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        n, L = d["n"], d["L"]
        levels = [np.asarray(v, dtype=float).reshape((n,) * k) for k, v in enumerate(d["levels"])]
        return cls(n, L, tuple(levels))


def _check_compatible(a, b):
    if a.n != b.n or a.L != b.L:
        raise DimensionMismatch(f"(n, L) = ({a.n}, {a.L}) vs ({b.n}, {b.L})")


def _outer(a, i, b, j):
    """Tensor product of level-``i`` array ``a`` and level-``j`` array ``b``."""
    bshape = b.shape[: b.ndim - j]
    return a.reshape(a.shape + (1,) * j) * b.reshape(bshape + (1,) * i + b.shape[b.ndim - j:])


def unit(n, L, batch_shape=()):
    levels = [np.ones(batch_shape)] + [np.zeros(batch_shape + (n,) * k) for k in range(1, L + 1)]
    return TensorPoly(n, L, tuple(levels))


def from_levels(n, L, *parts, batch_shape=()):
    """Tensor with level 0 = 0 and levels ``1..len(parts)`` given; rest zero."""
    levels = [np.zeros(batch_shape)]
    for k in range(1, L + 1):
        levels.append(np.asarray(parts[k - 1], float) if k <= len(parts)
                      else np.zeros(batch_shape + (n,) * k))
    return TensorPoly(n, L, tuple(levels))


def tensor_mul(a, b):
    """Truncated product: ``(ab)_k = sum_{i+j=k} a_i (x) b_j``."""
    _check_compatible(a, b)
    out = []
    for k in range(a.L + 1):
        acc = _outer(a.levels[0], 0, b.levels[k], k)
        for i in range(1, k + 1):
            acc = acc + _outer(a.levels[i], i, b.levels[k - i], k - i)
        out.append(acc)
    return TensorPoly(a.n, a.L, tuple(out))


def tensor_exp(a):
    """``sum_k a^k / k!`` truncated at level L (exact: higher powers vanish)."""
    if np.any(a.levels[0] != 0):
        raise NonZeroScalarPart("exponential needs a zero scalar part")
    result = unit(a.n, a.L, a.batch_shape)
    power = unit(a.n, a.L, a.batch_shape)
    for k in range(1, a.L + 1):
        power = tensor_mul(power, a)
        result = result + power.scale(1.0 / math.factorial(k))
    return result


def step_signatures(rp, L):
    """Per-step signatures ``exp(dx + (XX - dx (x) dx / 2))`` truncated at ``L``.

    Level 2 of each step equals its stored tensor exactly; levels 3 and 4
    come from the level-2 log-signature of the step.
    """
    if L > MAX_LEVEL:
        raise TruncationUnsupported(f"level {L} > {MAX_LEVEL}")
    dx = rp.increments
    log2 = rp.level2 - 0.5 * dx[..., :, None] * dx[..., None, :]
    return tensor_exp(from_levels(rp.n, L, dx, log2, batch_shape=dx.shape[:-1]))


def path_signature(rp, L):
    """Signature over the whole grid: Chen product of the step signatures."""
    if L > MAX_LEVEL:
        raise TruncationUnsupported(f"level {L} > {MAX_LEVEL}")
    steps = step_signatures(rp, L)
    # move the time axis to the front so each factor is a batch slice
    lv = [np.moveaxis(x, len(rp.batch_shape), 0) for x in steps.levels]
    sig = TensorPoly(rp.n, L, tuple(x[0] for x in lv))
    for k in range(1, rp.n_steps):
        sig = tensor_mul(sig, TensorPoly(rp.n, L, tuple(x[k] for x in lv)))
    return sig


def limit_generator(M, T):
    """Level-2 argument ``(T/2)(sum e_i (x) e_i + sum_{i<j} gamma_ij [e_i, e_j])``."""
    M = matops.as_square(M, "M")
    n = M.shape[0]
    A = np.eye(n)
    for (i, j), g in matops.gamma_coefficients(M).items():
        A = A + g * matops.bracket(i, j, n)
    return 0.5 * T * A


def expected_signature_limit(M, T, L):
    """Expected signature of the limit rough path over ``[0, T]``, truncated at ``L``."""
    if L > MAX_LEVEL:
        raise TruncationUnsupported(f"level {L} > {MAX_LEVEL}")
    A = limit_generator(M, T)
    return tensor_exp(from_levels(A.shape[0], L, np.zeros(A.shape[0]), A))


def empirical_expected_signature(cfg, L=2):
    """MC mean and SE of ``path_signature`` of the ``M X`` lift at the smallest eps.

    Returns ``(mean, se, n_paths)`` with ``mean`` and ``se`` as TensorPolys.
    """
    from .homogenize import empirical_expected_signature as _impl

    return _impl(cfg, L)
