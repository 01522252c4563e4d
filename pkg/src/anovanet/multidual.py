"""Truncated multivariate jets over nilpotent generators.

A :class:`MultiDual` in ``k`` variables stores ``2**k`` coefficients, one per
subset of generators. Bit ``i`` of a mask stands for variable ``i + 1``, so
``coeffs[0]`` is the value and ``coeffs[2**k - 1]`` is the full mixed partial
``d^k f / dx_1 ... dx_k`` of a lifted function. Leading axes batch independent
jets; the coefficient axis is always last.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.polynomial import polynomial as P

from anovanet import kernels
from anovanet.errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InsufficientOrder,
    UnsupportedOrder,
)

MAX_VARIABLES = 12
MAX_ORDER = 12
ACTIVATIONS = ("sigmoid", "relu", "swish", "rep", "identity")


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


class MultiDual:
    """Element of R[eps_1..eps_k]/(eps_i^2), possibly batched."""

    __slots__ = ("coeffs", "k")

    def __init__(self, coeffs):
        coeffs = _frozen(coeffs)
        if coeffs.ndim == 0:
            raise DimensionMismatch("coefficient array must have a last axis")
        n = coeffs.shape[-1]
        k = n.bit_length() - 1
        if n != 1 << k or not 1 <= k <= MAX_VARIABLES:
            raise DimensionMismatch(f"coefficient length {n} is not 2**k, 1<=k<={MAX_VARIABLES}")
        self.coeffs = coeffs
        self.k = k

    @property
    def value(self):
        return self.coeffs[..., 0]

    @property
    def mixed_partial(self):
        """Coefficient of eps_1 * ... * eps_k."""
        return self.coeffs[..., -1]

    def coefficient(self, mask):
        if not 0 <= mask < 1 << self.k:
            raise IndexOutOfRange(f"mask {mask} outside 0..{(1 << self.k) - 1}")
        return self.coeffs[..., mask]

    def _coerce(self, other):
        if isinstance(other, MultiDual):
            if other.k != self.k:
                raise DimensionMismatch(f"k={self.k} vs k={other.k}")
            return other
        return md_constant(other, self.k)

    def __add__(self, other):
        return md_add(self, self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return md_sub(self, self._coerce(other))

    def __rsub__(self, other):
        return md_sub(self._coerce(other), self)

    def __neg__(self):
        return MultiDual(-self.coeffs)

    def __mul__(self, other):
        if isinstance(other, MultiDual):
            return md_mul(self, other)
        return md_scale(self, other)

    __rmul__ = __mul__

    def __eq__(self, other):
        return (isinstance(other, MultiDual) and other.k == self.k
                and np.array_equal(self.coeffs, other.coeffs))

    __hash__ = None

    def __repr__(self):
        return f"MultiDual(k={self.k}, coeffs={self.coeffs!r})"


@dataclass(frozen=True)
class UnivariateJet:
    """Derivatives ``[f(v), f'(v), ..., f^(order)(v)]`` of a scalar function."""

    order: int
    derivs: np.ndarray

    def __post_init__(self):
        d = _frozen(self.derivs)
        if d.shape[-1] != self.order + 1:
            raise DimensionMismatch(f"expected {self.order + 1} derivatives, got {d.shape[-1]}")
        object.__setattr__(self, "derivs", d)


def md_constant(c, k):
    if not 1 <= k <= MAX_VARIABLES:
        raise DimensionMismatch(f"k must be in 1..{MAX_VARIABLES}")
    c = np.asarray(c, dtype=np.float64)
    coeffs = np.zeros(c.shape + (1 << k,))
    coeffs[..., 0] = c
    return MultiDual(coeffs)


def md_variable(x, i, k):
    """Seed coordinate ``x`` as variable ``i`` (1-based) of ``k``."""
    if not 1 <= i <= k:
        raise IndexOutOfRange(f"variable index {i} outside 1..{k}")
    x = np.asarray(x, dtype=np.float64)
    coeffs = np.zeros(x.shape + (1 << k,))
    coeffs[..., 0] = x
    coeffs[..., 1 << (i - 1)] = 1.0
    return MultiDual(coeffs)


def _same_k(a, b):
    if a.k != b.k:
        raise DimensionMismatch(f"k={a.k} vs k={b.k}")


def md_add(a, b):
    _same_k(a, b)
    return MultiDual(a.coeffs + b.coeffs)


def md_sub(a, b):
    _same_k(a, b)
    return MultiDual(a.coeffs - b.coeffs)


def md_scale(a, s):
    return MultiDual(a.coeffs * np.asarray(s, dtype=np.float64)[..., None])


def _rows(arr, width):
    return np.ascontiguousarray(np.reshape(arr, (-1, width)), dtype=np.float64)


def md_mul(a, b):
    """Subset-convolution product, O(3**k) per element."""
    _same_k(a, b)
    ca, cb = np.broadcast_arrays(a.coeffs, b.coeffs)
    M = 1 << a.k
    out = kernels.subset_mul(_rows(ca, M), _rows(cb, M))
    return MultiDual(out.reshape(ca.shape))


def md_lift(jet, a):
    """Apply the function described by ``jet`` (expanded at ``a.value``) to ``a``.

    Exact: the nilpotent part ``n = a - a.value`` satisfies ``n**(k+1) = 0``,
    so the Taylor series truncates after ``k`` terms.
    """
    if jet.order < a.k:
        raise InsufficientOrder(f"jet order {jet.order} < k={a.k}")
    d = jet.derivs[..., : a.k + 1]
    lead = np.broadcast_shapes(d.shape[:-1], a.coeffs.shape[:-1])
    d = np.broadcast_to(d, lead + d.shape[-1:])
    c = np.broadcast_to(a.coeffs, lead + a.coeffs.shape[-1:])
    out = kernels.lift_forward(_rows(d, a.k + 1), _rows(c, 1 << a.k))
    return MultiDual(out.reshape(c.shape))


@lru_cache(maxsize=None)
def _sigmoid_polys(order):
    # d^n/dv^n sigma = P_n(sigma), P_{n+1}(s) = P_n'(s) * (s - s^2)
    polys = [np.array([0.0, 1.0])]
    for _ in range(order):
        polys.append(P.polymul(P.polyder(polys[-1]), [0.0, 1.0, -1.0]))
    return tuple(polys)


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def activation_derivs(kind, v, order, degree=None):
    """Array form of :func:`activation_jet`: shape ``v.shape + (order + 1,)``."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape + (order + 1,))
    if kind == "sigmoid":
        s = _sigmoid(v)
        for n, poly in enumerate(_sigmoid_polys(order)):
            out[..., n] = P.polyval(s, poly)
    elif kind == "swish":
        s = _sigmoid(v)
        polys = _sigmoid_polys(order)
        sig = [P.polyval(s, p) for p in polys]
        out[..., 0] = v * sig[0]
        for n in range(1, order + 1):
            out[..., n] = v * sig[n] + n * sig[n - 1]
    elif kind == "relu":
        pos = v > 0
        out[..., 0] = np.where(pos, v, 0.0)
        if order >= 1:
            out[..., 1] = pos
    elif kind == "rep":
        p = order + 1 if degree is None else int(degree)
        if p < 1:
            raise ValueError("rectified polynomial degree must be >= 1")
        pos = v > 0
        vp = np.where(pos, v, 0.0)
        for m in range(min(order, p) + 1):
            out[..., m] = factorial(p) // factorial(p - m) * vp ** (p - m) * pos
    elif kind == "identity":
        out[..., 0] = v
        if order >= 1:
            out[..., 1] = 1.0
    else:
        raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")
    return out


def activation_jet(kind, v, order, degree=None):
    """Taylor jet of a named activation at ``v`` up to ``order``.

    ``degree`` only applies to ``"rep"`` (``max(0, v)**degree``); it defaults
    to ``order + 1``.
    """
    if not 0 <= order <= MAX_ORDER:
        raise UnsupportedOrder(f"order {order} outside 0..{MAX_ORDER}")
    return UnivariateJet(order, activation_derivs(kind, v, order, degree))


def exp_jet(v, order):
    """Jet of ``exp``; every derivative equals the value."""
    e = np.exp(np.asarray(v, dtype=np.float64))
    return UnivariateJet(order, np.repeat(e[..., None], order + 1, axis=-1))


def seed_point(x):
    """Seed every coordinate of ``x`` (shape ``(..., k)``) as its own variable."""
    x = np.asarray(x, dtype=np.float64)
    k = x.shape[-1]
    if not 1 <= k <= MAX_VARIABLES:
        raise DimensionMismatch(f"k must be in 1..{MAX_VARIABLES}")
    coeffs = np.zeros(x.shape + (1 << k,))
    coeffs[..., 0] = x
    for i in range(k):
        coeffs[..., i, 1 << i] = 1.0
    return MultiDual(coeffs)
