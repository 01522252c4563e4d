"""Independent numerical references for the analytic machinery.

Nothing here touches the corner-sum path: integrals come from a
low-discrepancy rule or tensor Gauss-Legendre quadrature, derivatives from
nested central differences, and the brute-force ANOVA integrates the
component definition directly on a grid.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np

from anovanet.errors import BoundaryTooClose, DimensionTooLarge

# Joe & Kuo primitive polynomials and initial direction numbers,
# dimensions 2..12 as (degree s, coefficient bits a, m_1..m_s).
SOBOL_TABLE = (
    (1, 0, (1,)),
    (2, 1, (1, 3)),
    (3, 1, (1, 3, 1)),
    (3, 2, (1, 1, 1)),
    (4, 1, (1, 1, 3, 3)),
    (4, 4, (1, 3, 5, 13)),
    (5, 2, (1, 1, 5, 5, 17)),
    (5, 4, (1, 1, 5, 5, 5)),
    (5, 7, (1, 1, 7, 11, 19)),
    (5, 11, (1, 1, 5, 1, 1)),
    (5, 13, (1, 1, 1, 3, 11)),
)
SOBOL_MAX_DIM = len(SOBOL_TABLE) + 1
_BITS = 32


def _directions(dim):
    v = np.zeros((dim, _BITS), dtype=np.uint64)
    v[0] = [1 << (_BITS - 1 - j) for j in range(_BITS)]
    for d in range(1, dim):
        s, a, m0 = SOBOL_TABLE[d - 1]
        m = list(m0)
        for j in range(s, _BITS):
            new = m[j - s] ^ (m[j - s] << s)
            for t in range(1, s):
                if (a >> (s - 1 - t)) & 1:
                    new ^= m[j - t] << t
            m.append(new)
        v[d] = [m[j] << (_BITS - 1 - j) for j in range(_BITS)]
    return v


def sobol_points(n, dim):
    """First ``n`` points of the unscrambled Sobol sequence in ``[0, 1)^dim``."""
    if not 1 <= dim <= SOBOL_MAX_DIM:
        raise DimensionTooLarge(f"Sobol table covers 1..{SOBOL_MAX_DIM} dimensions")
    v = _directions(dim)
    idx = np.arange(n, dtype=np.uint64)
    x = np.zeros((n, dim), dtype=np.uint64)
    for j in range(int(max(n - 1, 0)).bit_length()):
        bit = ((idx >> np.uint64(j)) & np.uint64(1)).astype(bool)
        x[bit] ^= v[:, j]
    return x.astype(np.float64) / float(1 << _BITS)


def sobol_nodes(n, m):
    """First ``n`` Sobol points shifted by half a cell, ``n`` a power of two.

    The raw points sit on the left edges ``k/n`` of their strata, which biases
    equal-weight averages by O(1/n); the shift makes every one-dimensional
    projection the midpoint rule.
    """
    return sobol_points(n, m) + 0.5 / n


def qmc_integrate(g, m, nodes=1 << 14, kind="sobol"):
    """Equal-weight average of ``g`` over ``nodes`` centred Sobol points.

    ``g`` maps an ``(n, m)`` array to ``n`` values.
    """
    if kind != "sobol":
        raise ValueError(f"unknown sequence kind {kind!r}")
    if nodes < 1 or nodes & (nodes - 1):
        raise ValueError("nodes must be a power of two")
    return float(np.mean(g(sobol_nodes(nodes, m))))


def gauss_legendre(n):
    """Nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def grid_integrate(g, nodes_per_axis, m):
    """Tensor-product Gauss-Legendre quadrature of ``g`` over ``[0, 1]^m``."""
    if m > 4:
        raise DimensionTooLarge("tensor grids are limited to m <= 4")
    x, w = gauss_legendre(nodes_per_axis)
    pts = np.stack(np.meshgrid(*([x] * m), indexing="ij"), axis=-1).reshape(-1, m)
    wts = np.prod(np.stack(np.meshgrid(*([w] * m), indexing="ij"), axis=-1).reshape(-1, m), axis=1)
    return float(np.dot(wts, g(pts)))


def fd_mixed_partial(h, x, S, step=1e-4, lo=0.0, hi=1.0):
    """Nested central differences of ``h`` over the 0-based coordinates ``S``."""
    x = np.asarray(x, dtype=np.float64)
    S = tuple(S)
    if S:
        margin = step * len(S)
        xs = x[list(S)]
        if np.any(xs - margin < lo) or np.any(xs + margin > hi):
            raise BoundaryTooClose(f"active coordinates within {margin} of the box")
    pts, signs = [], []
    for pattern in product((1.0, -1.0), repeat=len(S)):
        p = x.copy()
        for j, sgn in zip(S, pattern):
            p[j] += sgn * step
        pts.append(p)
        signs.append(np.prod(pattern))
    vals = np.asarray(h(np.array(pts)), dtype=np.float64)
    return float(np.dot(signs, vals) / (2.0 * step) ** len(S))


@dataclass
class BruteForceAnova:
    """Components tabulated on ``grid**|S|`` per subset mask, plus variances."""

    K: int
    grid: np.ndarray
    components: dict
    variances: dict
    total_variance: float
    mean: float


def _subsets(mask):
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def brute_force_anova(h, K, resolution=33, quad_nodes=32):
    """Functional ANOVA of ``h`` on ``[0,1]^K`` by direct quadrature.

    Each axis carries a uniform grid (for tabulation) and Gauss-Legendre
    nodes (for integration); ``h`` is evaluated once on the product.
    """
    if K > 3:
        raise DimensionTooLarge("brute force is limited to K <= 3")
    grid = np.linspace(0.0, 1.0, resolution)
    q, w = gauss_legendre(quad_nodes)
    axis = np.concatenate([grid, q])
    wv = np.concatenate([np.zeros(resolution), w])
    mesh = np.stack(np.meshgrid(*([axis] * K), indexing="ij"), axis=-1).reshape(-1, K)
    vals = np.asarray(h(mesh), dtype=np.float64).reshape((len(axis),) * K)

    def integrate_out(arr, axes):
        for ax in sorted(axes, reverse=True):
            arr = np.tensordot(arr, wv, axes=([ax], [0]))
        return arr

    comps = {}
    for mask in sorted(range(1 << K), key=lambda m: (bin(m).count("1"), m)):
        active = [i for i in range(K) if mask >> i & 1]
        inactive = [i for i in range(K) if not mask >> i & 1]
        c = integrate_out(vals, inactive)
        for sub in _subsets(mask):
            if sub == mask:
                continue
            sub_axes = [active.index(i) for i in range(K) if sub >> i & 1]
            shape = [1] * len(active)
            for a in sub_axes:
                shape[a] = len(axis)
            c = c - comps[sub].reshape(shape)
        comps[mask] = c
    variances = {}
    for mask, c in comps.items():
        if mask == 0:
            continue
        variances[mask] = float(integrate_out(c * c, range(c.ndim)))
    mean = float(comps[0])
    total = float(integrate_out(vals * vals, range(K))) - mean ** 2
    tab = {}
    for mask, c in comps.items():
        tab[mask] = c[(slice(0, resolution),) * c.ndim] if c.ndim else c
    return BruteForceAnova(K, grid, tab, variances, total, mean)
