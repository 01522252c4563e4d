"""Reverse-mode parameter gradients of jet-valued network outputs.

The forward sweep runs the network over :class:`~anovanet.multidual.MultiDual`
inputs for a whole batch and records one node per layer primitive. The
reverse sweep then yields ``d(coefficient)/d(theta)`` for any selected output
coefficient, typically the full mixed partial that the training loss reads.
"""

from dataclasses import dataclass, field

import numpy as np

from anovanet import kernels
from anovanet.errors import EmptyTape, ShapeMismatch, UnsupportedOrder
from anovanet.multidual import MultiDual
from anovanet.network import MAX_JET_VARIABLES, lift_layer, lift_linear_backward, seed_inputs


@dataclass
class Node:
    op: str  # "seed" | "affine" | "lift"
    layer: int
    operand: int | None
    value: np.ndarray
    derivs: np.ndarray | None = None


@dataclass
class Tape:
    """Single-use record of one batched forward sweep."""

    params: object
    spec: object
    active: tuple
    nodes: list = field(default_factory=list)

    def push(self, op, layer, value, derivs=None):
        operand = len(self.nodes) - 1 if self.nodes else None
        self.nodes.append(Node(op, layer, operand, value, derivs))
        return len(self.nodes) - 1

    @property
    def n_points(self):
        return self.nodes[0].value.shape[0]


def record_forward(params, spec, x, active=None):
    """Run the jet forward pass and keep what the reverse sweep needs.

    ``x`` is one point ``(K,)`` or a batch ``(N, K)``. Returns the tape and
    the output MultiDual (batched like ``x``).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (spec.input_dim,):
        raise ShapeMismatch(f"expected {spec.input_dim} coordinates, got {x.shape}")
    params.check(spec)
    active = tuple(range(spec.input_dim)) if active is None else tuple(active)
    k = len(active)
    if not 1 <= k <= MAX_JET_VARIABLES:
        raise UnsupportedOrder(f"need 1..{MAX_JET_VARIABLES} seeded variables, got {k}")
    pts = x.reshape(-1, spec.input_dim)
    tape = Tape(params, spec, active)
    H = seed_inputs(pts, active)
    tape.push("seed", -1, H)
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        Z = np.matmul(W, H)
        Z[:, :, 0] += b
        tape.push("affine", i, Z)
        if i == last:
            out = Z[:, 0, :]
            break
        H, derivs = lift_layer(spec, Z, k, linear=i == 0)
        tape.push("lift", i, H, derivs)
    return tape, MultiDual(out.reshape(x.shape[:-1] + (1 << k,)))


def backward(tape, seed=None, cotangent=None):
    """Gradient of ``sum_n cotangent[n] * out[n, seed]`` w.r.t. all parameters.

    ``seed`` is the output coefficient mask (default: the full subset).
    Returned in the flat layout of :meth:`MlpParams.flat`.
    """
    if not tape.nodes:
        raise EmptyTape("tape has no recorded operations")
    params, spec = tape.params, tape.spec
    k = len(tape.active)
    M = 1 << k
    seed = M - 1 if seed is None else int(seed)
    n = tape.n_points
    cot = np.ones(n) if cotangent is None else np.broadcast_to(
        np.asarray(cotangent, dtype=np.float64), (n,))

    g = np.zeros((n, 1, M))
    g[:, 0, seed] = cot
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.weights)
    for node in reversed(tape.nodes[1:]):
        if node.op == "affine":
            H_in = tape.nodes[node.operand].value
            W = params.weights[node.layer]
            w_out, w_in = W.shape
            gz = g.transpose(1, 0, 2).reshape(w_out, -1)
            grads_w[node.layer] = gz @ H_in.transpose(1, 0, 2).reshape(w_in, -1).T
            grads_b[node.layer] = g[:, :, 0].sum(axis=0)
            if node.layer > 0:
                g = np.matmul(W.T, g)
        else:
            Z = tape.nodes[node.operand].value
            d = node.derivs
            rows_d = np.ascontiguousarray(d[..., : k + 1].reshape(-1, k + 1))
            rows_z = np.ascontiguousarray(Z.reshape(-1, M))
            rows_g = np.ascontiguousarray(g.reshape(-1, M))
            if node.layer == 0:
                # seeded inputs are linear; only singleton adjoints reach the weights
                gd, ga = lift_linear_backward(rows_d, rows_z, rows_g, k)
            else:
                gd, ga = kernels.lift_backward(rows_d, rows_z, rows_g)
            # derivs depend on the scalar part through f^(m) -> f^(m+1)
            ga[:, 0] += np.einsum("rm,rm->r", gd, d[..., 1:].reshape(-1, k + 1))
            g = ga.reshape(Z.shape)
    parts = []
    for gw, gb in zip(grads_w, grads_b):
        parts.append(gw.ravel())
        parts.append(gb)
    return np.concatenate(parts)
