"""Functional ANOVA of a network trained through its mixed partial.

Subset integrals of the fitted function ``f = d^K NN / dx_1..dx_K`` over the
unit box reduce to signed sums of lower-order mixed partials of ``NN`` at the
corners of the integrated-out coordinates. Components follow by subtracting
every proper-subset component; variances are QMC averages of squared
components over one shared Sobol node set.

Subsets are bitmasks: bit ``i`` is variable ``i + 1``.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from anovanet.errors import ActiveValueOutOfRange, DegenerateVariance, IndexOutOfRange
from anovanet.network import chunk_rows, propagate
from anovanet.oracle import sobol_nodes

DECOMPOSITION_FORMAT = "anovanet-decomposition"
DECOMPOSITION_VERSION = 1
DEFAULT_NODES = 1 << 14


def popcount(mask):
    return bin(mask).count("1")


@dataclass(frozen=True, order=True)
class SubsetIndex:
    """A subset of ``{1..K}`` stored as a bitmask."""

    mask: int
    K: int

    def __post_init__(self):
        if not 0 <= self.mask < (1 << self.K):
            raise IndexOutOfRange(f"mask {self.mask} is not a subset of {self.K} variables")

    @classmethod
    def of(cls, vars_1based, K):
        return cls(mask_of(vars_1based), K)

    @property
    def order(self):
        return popcount(self.mask)

    @property
    def variables(self):
        return tuple(i + 1 for i in variables(self.mask))

    def __str__(self):
        return label(self.mask)


def _as_mask(S, K=None):
    if isinstance(S, SubsetIndex):
        if K is not None and S.K != K:
            raise IndexOutOfRange(f"subset over {S.K} variables used with K={K}")
        return S.mask
    m = int(S)
    if K is not None and not 0 <= m < (1 << K):
        raise IndexOutOfRange(f"mask {m} is not a subset of {K} variables")
    return m


def variables(mask):
    """0-based coordinates in ``mask``, ascending."""
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


def mask_of(vars_1based):
    m = 0
    for v in vars_1based:
        m |= 1 << (int(v) - 1)
    return m


def label(mask):
    return "{" + ",".join(str(i + 1) for i in variables(mask)) + "}"


def masks_by_order(K, max_order=None):
    """All subset masks of ``K`` variables, by cardinality then value."""
    top = K if max_order is None else max_order
    return [m for m in sorted(range(1 << K), key=lambda m: (popcount(m), m)) if popcount(m) <= top]


def proper_subsets(mask):
    """Proper submasks of ``mask`` in ascending order."""
    out = []
    sub = (mask - 1) & mask
    while True:
        if sub != mask:
            out.append(sub)
        if sub == 0:
            break
        sub = (sub - 1) & mask
    return out[::-1]


def _corner_table(K, mask):
    """Corner assignments of the inactive coordinates with their signs."""
    inactive = [i for i in range(K) if not mask >> i & 1]
    n = len(inactive)
    corners = np.zeros((1 << n, K))
    signs = np.empty(1 << n)
    for c in range(1 << n):
        lower = 0
        for r, j in enumerate(inactive):
            if c >> r & 1:
                corners[c, j] = 1.0
            else:
                lower += 1
        signs[c] = -1.0 if lower % 2 else 1.0
    return inactive, corners, signs


def subspace_integral(params, spec, mask, X):
    """``I_S`` at the projections of full points ``X`` (``(N, K)``) onto ``S``.

    Only the active coordinates of ``X`` are read.
    """
    K = spec.input_dim
    X = np.asarray(X, dtype=np.float64).reshape(-1, K)
    active = variables(mask)
    inactive, corners, signs = _corner_table(K, mask)
    n_c = len(signs)
    per = max(1, chunk_rows(spec, len(active)) // n_c)
    out = np.empty(len(X))
    for s in range(0, len(X), per):
        block = X[s:s + per]
        pts = np.repeat(block, n_c, axis=0)
        pts[:, inactive] = np.tile(corners[:, inactive], (len(block), 1))
        coef = propagate(params, spec, pts, active)[:, -1].reshape(len(block), n_c)
        out[s:s + per] = coef @ signs
    return out


def _check_active(x_S, k):
    x_S = np.asarray(x_S, dtype=np.float64)
    if k == 0:
        return x_S.reshape(-1, 0) if x_S.size == 0 else x_S.reshape(x_S.shape + (0,))
    if x_S.ndim == 0 or x_S.shape[-1] != k:
        x_S = x_S.reshape(-1, k) if x_S.size % k == 0 and x_S.ndim <= 1 and k == 1 else x_S
    if x_S.shape[-1] != k:
        raise ActiveValueOutOfRange(f"expected {k} active values, got shape {x_S.shape}")
    if np.any(x_S < 0.0) or np.any(x_S > 1.0):
        raise ActiveValueOutOfRange("active values must lie in [0, 1]")
    return x_S


def _embed(mask, x_S, K):
    x_S = np.asarray(x_S, dtype=np.float64).reshape(-1, popcount(mask))
    X = np.zeros((len(x_S), K))
    X[:, list(variables(mask))] = x_S
    return X


def corner_sum(params, spec, mask, x_S):
    """Integral of the fitted function over the inactive coordinates.

    ``x_S`` holds values of the active variables (ascending order), shape
    ``(|S|,)`` or ``(N, |S|)``; the empty subset takes no values.
    """
    mask = _as_mask(mask, spec.input_dim)
    k = popcount(mask)
    if k == 0:
        return float(subspace_integral(params, spec, 0, np.zeros((1, spec.input_dim)))[0])
    x_S = _check_active(x_S, k)
    vals = subspace_integral(params, spec, mask, _embed(mask, x_S, spec.input_dim))
    return vals.reshape(x_S.shape[:-1]) if x_S.ndim > 1 else float(vals[0])


def _restrict(mask, sub, x_S):
    pos = [variables(mask).index(i) for i in variables(sub)]
    return x_S[..., pos]


@dataclass(frozen=True)
class AnovaDecomposition:
    """Trained network plus its component variances; built by :func:`decompose`.

    The only mutable part is the component memo, which never changes results.
    """

    spec: object
    params: object
    mean: float
    variances: dict
    total_variance: float
    mc_nodes: int = DEFAULT_NODES
    sequence: str = "sobol-centred"
    normalization: dict | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def K(self):
        return self.spec.input_dim

    def integral(self, mask, x_S):
        return corner_sum(self.params, self.spec, mask, x_S)

    def _component(self, mask, x_S, memo):
        if memo is not None:
            key = (mask, np.asarray(x_S).tobytes())
            if key in memo:
                return memo[key]
        if mask == 0:
            val = self.mean
        else:
            val = self.integral(mask, x_S)
            for sub in proper_subsets(mask):
                val = val - self._component(sub, _restrict(mask, sub, x_S), memo)
        if memo is not None:
            memo[key] = val
        return val

    def component(self, mask, x_S=(), cache=True):
        """``NN_S(x_S)``: subset integral minus all proper-subset components."""
        mask = _as_mask(mask, self.K)
        k = popcount(mask)
        x_S = np.asarray(x_S, dtype=np.float64)
        if k:
            x_S = _check_active(x_S, k)
        return self._component(mask, x_S, self._cache if cache else None)

    def clear_cache(self):
        self._cache.clear()

    def components_at(self, X, max_order=None):
        """All components with ``|S| <= max_order`` at full points ``X``.

        Returns ``{mask: values}``; each component reads only its own
        coordinates of ``X``.
        """
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.K)
        comps = {}
        for mask in masks_by_order(self.K, max_order):
            if mask == 0:
                comps[0] = np.full(len(X), self.mean)
                continue
            val = subspace_integral(self.params, self.spec, mask, X)
            for sub in proper_subsets(mask):
                val = val - comps[sub]
            comps[mask] = val
        return comps

    def truncated_predict(self, d, X):
        """Sum of components up to interaction order ``d`` (0 <= d <= K)."""
        if not 0 <= d <= self.K:
            raise ValueError(f"order must be in 0..{self.K}")
        X = np.asarray(X, dtype=np.float64)
        comps = self.components_at(X, d)
        total = np.zeros(X.reshape(-1, self.K).shape[0])
        for mask in masks_by_order(self.K, d):
            total = total + comps[mask]
        return total.reshape(X.shape[:-1])

    def truncation_curve(self, X, orders=None):
        """``{d: truncated_predict(d, X)}`` for several orders from one pass over the components."""
        orders = list(range(self.K + 1)) if orders is None else [int(d) for d in orders]
        if any(not 0 <= d <= self.K for d in orders):
            raise ValueError(f"orders must be in 0..{self.K}")
        X = np.asarray(X, dtype=np.float64)
        comps = self.components_at(X, max(orders, default=0))
        by_order = {}
        for mask, val in comps.items():
            c = popcount(mask)
            by_order[c] = by_order.get(c, 0.0) + val
        running, out = 0.0, {}
        for c in range(max(orders, default=0) + 1):
            running = running + by_order[c]
            out[c] = np.asarray(running).reshape(X.shape[:-1])
        return {d: out[d] for d in orders}

    def node_set(self, nodes=None):
        return sobol_nodes(nodes or self.mc_nodes, self.K)

    def sobol_indices(self, tol=1e-12):
        """``sigma_S^2 / sigma^2`` for every nonempty subset."""
        if not self.total_variance > tol * max(1.0, self.mean ** 2):
            raise DegenerateVariance(f"total variance {self.total_variance:.3e} is degenerate")
        return {m: v / self.total_variance for m, v in self.variances.items()}

    def to_dict(self, include_indices=True):
        try:
            idx = self.sobol_indices() if include_indices else {}
        except DegenerateVariance:
            idx = {m: 0.0 for m in self.variances}
        rows = []
        for m in masks_by_order(self.K):
            if m == 0:
                continue
            rows.append({"mask": m, "variables": [i + 1 for i in variables(m)],
                         "variance": self.variances[m], "sobol_index": idx.get(m)})
        return {"format": DECOMPOSITION_FORMAT, "version": DECOMPOSITION_VERSION,
                "K": self.K, "mc_nodes": self.mc_nodes, "sequence": self.sequence,
                "mean": self.mean, "total_variance": self.total_variance,
                "subsets": rows, "normalization": self.normalization}

    def tabulate(self, mask, resolution):
        """Component on a uniform ``resolution**|S|`` grid: ``(axes, values)``."""
        mask = _as_mask(mask, self.K)
        k = popcount(mask)
        ax = np.linspace(0.0, 1.0, resolution)
        if k == 0:
            return [], np.array(self.mean)
        mesh = np.stack(np.meshgrid(*([ax] * k), indexing="ij"), axis=-1).reshape(-1, k)
        X = _embed(mask, mesh, self.K)
        vals = self.components_at_subset(mask, X)
        return [ax] * k, vals.reshape((resolution,) * k)

    def components_at_subset(self, mask, X):
        """``NN_S`` alone at full points ``X``, computing only its subsets."""
        mask = _as_mask(mask, self.K)
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.K)
        comps = {0: np.full(len(X), self.mean)}
        for sub in sorted(proper_subsets(mask) + [mask], key=lambda m: (popcount(m), m)):
            if sub == 0:
                continue
            val = subspace_integral(self.params, self.spec, sub, X)
            for s2 in proper_subsets(sub):
                val = val - comps[s2]
            comps[sub] = val
        return comps[mask]


def component(decomp, S, x_S=()):
    return decomp.component(S, x_S)


def component_variance(decomp, mask, nodes=None):
    """QMC estimate of ``int NN_S^2`` on the decomposition's Sobol nodes."""
    mask = _as_mask(mask, decomp.K)
    if mask == 0:
        return 0.0
    X = decomp.node_set(nodes)
    vals = decomp.components_at_subset(mask, X)
    return float(np.mean(vals * vals))


def total_variance(decomp, nodes=None):
    """QMC ``int f^2`` minus the squared mean."""
    from anovanet.network import mixed_partial

    f = mixed_partial(decomp.params, decomp.spec, decomp.node_set(nodes))
    return float(np.mean(f * f)) - decomp.mean ** 2


def sobol_indices(decomp):
    return decomp.sobol_indices()


def truncated_predict(decomp, d, X):
    return decomp.truncated_predict(d, X)


def decompose(params, spec, nodes=DEFAULT_NODES, normalization=None):
    """Full decomposition with all variances on one shared node set."""
    if nodes < 1 or nodes & (nodes - 1):
        raise ValueError("nodes must be a power of two")
    mean = corner_sum(params, spec, 0, ())
    probe = AnovaDecomposition(spec, params, mean, {}, 0.0, nodes)
    X = probe.node_set()
    comps = probe.components_at(X)
    f = np.zeros(len(X))
    variances = {}
    for mask in masks_by_order(spec.input_dim):
        f = f + comps[mask]
        if mask:
            variances[mask] = float(np.mean(comps[mask] ** 2))
    # sum of components equals the mixed partial at every node
    sigma2 = float(np.mean(f * f)) - mean ** 2
    return AnovaDecomposition(spec, params, mean, variances, sigma2, nodes,
                              normalization=normalization)


def random_pairs(K, n, rng):
    """``n`` distinct unordered pairs of distinct nonempty masks."""
    masks = list(range(1, 1 << K))
    pairs = list(combinations(masks, 2))
    pick = rng.choice(len(pairs), size=min(n, len(pairs)), replace=False)
    return [pairs[i] for i in sorted(pick)]
