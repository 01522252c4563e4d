"""Dense scalar networks evaluated either plainly or over multidual jets."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from anovanet import kernels
from anovanet.errors import ShapeMismatch, UnsupportedOrder
from anovanet.multidual import ACTIVATIONS, MultiDual, activation_derivs

MAX_JET_VARIABLES = 10
CHECKPOINT_FORMAT = "anovanet-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of ``NN: R^K -> R``; the output layer is linear."""

    input_dim: int
    hidden: tuple = (32, 32, 32)
    activation: str = "sigmoid"
    rep_degree: int | None = None
    l2_weight: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("need at least one hidden layer, widths >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.l2_weight < 0:
            raise ValueError("l2_weight must be nonnegative")

    @property
    def degree(self):
        """Rectified-polynomial degree, ``K + 1`` unless overridden."""
        return self.input_dim + 1 if self.rep_degree is None else self.rep_degree

    @property
    def widths(self):
        return (self.input_dim, *self.hidden, 1)

    @property
    def n_params(self):
        w = self.widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "hidden": tuple(d["hidden"])})


@dataclass
class MlpParams:
    """Per-layer ``(weight[out, in], bias[out])`` pairs."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def flat(self):
        """Layer-major, each layer's weights row-major then its bias."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, spec, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (spec.n_params,):
            raise ShapeMismatch(f"expected {spec.n_params} parameters, got {theta.shape}")
        weights, biases, pos = [], [], 0
        w = spec.widths
        for i in range(len(w) - 1):
            n = w[i] * w[i + 1]
            weights.append(theta[pos:pos + n].reshape(w[i + 1], w[i]).copy())
            pos += n
            biases.append(theta[pos:pos + w[i + 1]].copy())
            pos += w[i + 1]
        return cls(weights, biases)

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def check(self, spec):
        w = spec.widths
        if len(self.weights) != len(w) - 1 or len(self.biases) != len(w) - 1:
            raise ShapeMismatch("layer count does not match spec")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (w[i + 1], w[i]) or b.shape != (w[i + 1],):
                raise ShapeMismatch(f"layer {i}: got {W.shape}/{b.shape}")


def init_params(spec, seed):
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    w = spec.widths
    weights, biases = [], []
    for i in range(len(w) - 1):
        lim = np.sqrt(6.0 / (w[i] + w[i + 1]))
        weights.append(rng.uniform(-lim, lim, size=(w[i + 1], w[i])))
        biases.append(np.zeros(w[i + 1]))
    return MlpParams(weights, biases)


def _as_points(spec, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (spec.input_dim,):
        raise ShapeMismatch(f"expected points with {spec.input_dim} coordinates, got {x.shape}")
    return x


def forward(params, spec, x):
    """Plain value of the network at ``x`` (shape ``(K,)`` or ``(N, K)``)."""
    x = _as_points(spec, x)
    params.check(spec)
    h = x.reshape(-1, spec.input_dim)
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W.T + b
        h = z if i == last else activation_derivs(spec.activation, z, 0, spec.degree)[..., 0]
    return h[:, 0].reshape(x.shape[:-1])


def seed_inputs(x, active):
    """Input jets ``(N, K, 2**k)``: coordinate ``active[r]`` becomes variable ``r``."""
    n, K = x.shape
    H = np.zeros((n, K, 1 << len(active)))
    H[:, :, 0] = x
    for r, j in enumerate(active):
        H[:, j, 1 << r] = 1.0
    return H


def subset_popcounts(k):
    return np.array([bin(u).count("1") for u in range(1 << k)])


def singleton_products(a, k):
    """``P[:, u] = prod_{i in u} a[:, 1 << i]`` for rows of linear jets."""
    P = np.ones_like(a)
    for i in range(k):
        bit = 1 << i
        P[:, bit:2 * bit] = P[:, :bit] * a[:, bit:bit + 1]
    return P


def lift_linear(d, a, k):
    """Compose with jets whose only nonzero coefficients are the scalar and singletons.

    Then ``f(a)[u] = f^(|u|)(a_0) prod_{i in u} a_i``, which costs ``O(2**k)``
    per row instead of the general composition.
    """
    return d[:, subset_popcounts(k)] * singleton_products(a, k)


def lift_linear_backward(d, a, g, k):
    """Adjoint of :func:`lift_linear`; ``ga`` is filled on singletons only."""
    n, M = a.shape
    pc = subset_popcounts(k)
    P = singleton_products(a, k)
    gd = np.zeros((n, k + 1))
    gP = g * P
    for m in range(k + 1):
        gd[:, m] = gP[:, pc == m].sum(axis=1)
    G = g * d[:, pc]
    ga = np.zeros_like(a)
    for i in range(k):
        bit = 1 << i
        hi = G.reshape(n, -1, 2, bit)[:, :, 1, :]
        lo = P.reshape(n, -1, 2, bit)[:, :, 0, :]
        ga[:, bit] = np.einsum("rjb,rjb->r", hi, lo)
    return gd, ga


def lift_layer(spec, Z, k, linear=False):
    """Apply the activation to pre-activation jets ``Z`` of shape ``(N, w, 2**k)``.

    Returns the output jets and the activation derivatives up to order
    ``k + 1`` (the extra order chains the scalar part in the reverse sweep).
    ``linear`` promises that ``Z`` has no coefficients of order two or more,
    as for the first layer over seeded inputs.
    """
    derivs = activation_derivs(spec.activation, Z[..., 0], k + 1, spec.degree)
    M = Z.shape[-1]
    rows = np.ascontiguousarray(Z.reshape(-1, M))
    d = np.ascontiguousarray(derivs[..., : k + 1].reshape(-1, k + 1))
    lift = lift_linear(d, rows, k) if linear else kernels.lift_forward(d, rows)
    return lift.reshape(Z.shape), derivs


def propagate(params, spec, x, active):
    """Jet forward pass over points ``x`` (``(N, K)``), seeding coordinates ``active``.

    Returns ``(N, 2**len(active))`` coefficients.
    """
    k = len(active)
    if k > MAX_JET_VARIABLES:
        raise UnsupportedOrder(f"at most {MAX_JET_VARIABLES} seeded variables, got {k}")
    H = seed_inputs(x, active)
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        Z = np.matmul(W, H)
        Z[:, :, 0] += b
        if i == last:
            return Z[:, 0, :]
        H, _ = lift_layer(spec, Z, k, linear=i == 0)
    raise AssertionError("unreachable")


def forward_multidual(params, spec, x, active=None):
    """All first-order-per-variable mixed partials of NN at ``x``.

    ``active`` lists the 0-based coordinates to seed (default: all), so the
    result is a MultiDual in ``len(active)`` variables.
    """
    x = _as_points(spec, x)
    params.check(spec)
    active = tuple(range(spec.input_dim)) if active is None else tuple(active)
    if not active:
        raise ValueError("at least one seeded coordinate is required")
    coeffs = propagate(params, spec, x.reshape(-1, spec.input_dim), active)
    return MultiDual(coeffs.reshape(x.shape[:-1] + (1 << len(active),)))


def chunk_rows(spec, k, budget=1 << 21):
    """Points per batch so one layer of jets stays under ``budget`` doubles."""
    return max(1, budget // (max(spec.widths) << k))


def mixed_partial(params, spec, x, chunk=None):
    """``d^K NN / dx_1 ... dx_K`` at each point of ``x`` (the fitted function)."""
    x = _as_points(spec, x)
    params.check(spec)
    pts = x.reshape(-1, spec.input_dim)
    active = tuple(range(spec.input_dim))
    chunk = chunk or chunk_rows(spec, len(active))
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        out[s:s + chunk] = propagate(params, spec, pts[s:s + chunk], active)[:, -1]
    return out.reshape(x.shape[:-1])


def save_checkpoint(path, spec, params, normalization=None, seed=None, extra=None):
    """Write a JSON checkpoint; floats are stored with round-trip ``repr``."""
    record = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": spec.to_dict(),
        "params": [float(v) for v in params.flat()],
        "normalization": normalization,
        "seed": seed,
        "extra": extra or {},
    }
    text = json.dumps(record, sort_keys=True, indent=1)
    with open(path, "w") as fh:
        fh.write(text + "\n")
    return record


def load_checkpoint(path):
    """Return ``(spec, params, record)``."""
    with open(path) as fh:
        record = json.load(fh)
    if record.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint file")
    if record.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {record.get('version')}")
    spec = NetworkSpec.from_dict(record["spec"])
    params = MlpParams.from_flat(spec, record["params"])
    return spec, params, record
