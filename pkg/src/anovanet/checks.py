"""Structural checks of a network's decomposition against the oracles.

Each check returns the measured error; :class:`Check` pairs it with a
tolerance for reporting. They hold for any parameters, trained or not.
"""

from dataclasses import dataclass

import numpy as np

from anovanet.anova import masks_by_order, popcount, random_pairs, subspace_integral, variables
from anovanet.network import MlpParams, mixed_partial
from anovanet.oracle import grid_integrate, qmc_integrate, sobol_nodes
from anovanet.training import loss, loss_and_grad


@dataclass(frozen=True)
class Check:
    name: str
    error: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.error) and self.error <= self.tol)

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<22} error={self.error:.3e}  tol={self.tol:.1e}"


def _random_anchor(rng, mask, K):
    x = np.zeros(K)
    x[list(variables(mask))] = rng.uniform(0.05, 0.95, size=popcount(mask))
    return x


def _inactive_integrand(params, spec, mask, anchor):
    inactive = [i for i in range(spec.input_dim) if not mask >> i & 1]

    def g(U):
        X = np.tile(anchor, (len(U), 1))
        X[:, inactive] = U
        return mixed_partial(params, spec, X)

    return g, len(inactive)


def corner_vs_quadrature(params, spec, n_subsets=10, seed=0, nodes=1 << 14, kind="qmc"):
    """Worst relative error of corner sums against integration of the mixed partial.

    ``kind`` is ``"qmc"`` (Sobol, any K) or ``"grid"`` (Gauss-Legendre,
    at most 4 integrated coordinates, 32 nodes per axis).
    """
    K = spec.input_dim
    rng = np.random.default_rng(seed)
    full = (1 << K) - 1
    worst = 0.0
    done = 0
    while done < n_subsets:
        mask = int(rng.integers(0, full))  # never the full set: nothing to integrate
        if kind == "grid" and K - popcount(mask) > 4:
            continue
        anchor = _random_anchor(rng, mask, K)
        exact = float(subspace_integral(params, spec, mask, anchor[None])[0])
        g, m = _inactive_integrand(params, spec, mask, anchor)
        if kind == "qmc":
            ref = qmc_integrate(g, m, nodes)
        else:
            ref = grid_integrate(g, 32, m)
        worst = max(worst, abs(exact - ref) / max(abs(ref), 1e-12))
        done += 1
    return worst


def orthogonality(decomp, n_pairs=10, seed=0, eps=None):
    """Worst ``|<NN_S, NN_U>| / (||NN_S|| ||NN_U|| + eps)`` over random pairs.

    ``eps`` defaults to ``1e-3 * sigma^2`` so that pairs of null components,
    whose norms are themselves quadrature noise, are judged against the
    total variance rather than against each other.
    """
    if eps is None:
        eps = 1e-3 * max(decomp.total_variance, 0.0) + 1e-300
    rng = np.random.default_rng(seed)
    X = decomp.node_set()
    comps = decomp.components_at(X)
    worst = 0.0
    for a, b in random_pairs(decomp.K, n_pairs, rng):
        ca, cb = comps[a], comps[b]
        inner = abs(float(np.mean(ca * cb)))
        norm = float(np.sqrt(np.mean(ca * ca) * np.mean(cb * cb)))
        worst = max(worst, inner / (norm + eps))
    return worst


def marginal_means(decomp, n_subsets=10, n_anchors=4, nodes=1 << 12, seed=0):
    """Worst ``|int_0^1 NN_S dx_i|`` over random subsets, active ``i`` and anchors."""
    rng = np.random.default_rng(seed)
    K = decomp.K
    t = sobol_nodes(nodes, 1)[:, 0]
    worst = 0.0
    for _ in range(n_subsets):
        mask = int(rng.integers(1, 1 << K))
        for i in variables(mask):
            for _ in range(n_anchors):
                X = np.tile(_random_anchor(rng, mask, K), (nodes, 1))
                X[:, i] = t
                worst = max(worst, abs(float(np.mean(decomp.components_at_subset(mask, X)))))
    return worst


def variance_identity(decomp):
    """``|sum_S sigma_S^2 - sigma^2| / sigma^2``."""
    total = decomp.total_variance
    return abs(sum(decomp.variances.values()) - total) / max(abs(total), 1e-300)


def completeness(decomp, n_points=100, seed=0):
    """Worst ``|sum_S NN_S(x) - f(x)|`` at random points."""
    X = np.random.default_rng(seed).uniform(size=(n_points, decomp.K))
    pred = decomp.truncated_predict(decomp.K, X)
    return float(np.max(np.abs(pred - mixed_partial(decomp.params, decomp.spec, X))))


def gradient_fd(params, spec, X, y, n_coords=12, step=1e-6, seed=0, kind="squared"):
    """Relative error of the loss gradient against central differences.

    Compares on ``n_coords`` random parameter coordinates, as the norm of the
    difference over the norm of the finite-difference vector.
    """
    rng = np.random.default_rng(seed)
    theta = params.flat()
    _, g = loss_and_grad(params, spec, X, y, kind)
    idx = rng.choice(len(theta), size=min(n_coords, len(theta)), replace=False)
    fd = np.empty(len(idx))
    for j, p in enumerate(idx):
        e = np.zeros_like(theta)
        e[p] = step
        hi = loss(MlpParams.from_flat(spec, theta + e), spec, X, y, kind)
        lo = loss(MlpParams.from_flat(spec, theta - e), spec, X, y, kind)
        fd[j] = (hi - lo) / (2 * step)
    return float(np.linalg.norm(fd - g[idx]) / max(np.linalg.norm(fd), 1e-300))


def bottom_up_consistency(decomp, n_points=5, seed=0):
    """Max gap between the batched and the recursive component evaluators."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n_points, decomp.K))
    comps = decomp.components_at(X)
    worst = 0.0
    for mask in masks_by_order(decomp.K):
        if not mask:
            continue
        xs = X[:, list(variables(mask))]
        rec = decomp.component(mask, xs, cache=False)
        worst = max(worst, float(np.max(np.abs(rec - comps[mask]))))
    return worst

