import numpy as np
import pytest

from anovanet.errors import EmptyTape, ShapeMismatch
from anovanet.network import MlpParams, NetworkSpec, forward, init_params
from anovanet.oracle import fd_mixed_partial
from anovanet.paramgrad import Tape, backward, record_forward


def _theta_fd(spec, theta, fun, step=1e-5):
    g = np.empty_like(theta)
    for j in range(len(theta)):
        e = np.zeros_like(theta)
        e[j] = step
        g[j] = (fun(MlpParams.from_flat(spec, theta + e)) - fun(MlpParams.from_flat(spec, theta - e))) / (2 * step)
    return g


def _scaled(spec, seed, scale=2.0):
    p = init_params(spec, seed)
    rng = np.random.default_rng(seed)
    for W, b in zip(p.weights, p.biases):
        W *= scale
        b[:] = rng.normal(scale=0.3, size=b.shape)
    return p


def test_mixed_partial_matches_input_fd():
    spec = NetworkSpec(2, (6,))
    p = _scaled(spec, 0)
    x = np.array([0.35, 0.6])
    _, out = record_forward(p, spec, x)
    ref = fd_mixed_partial(lambda pts: forward(p, spec, pts), x, (0, 1), step=1e-4)
    assert abs(out.mixed_partial - ref) <= 1e-5 * abs(ref)


def test_zero_weights():
    spec = NetworkSpec(3, (4, 4))
    p = init_params(spec, 0)
    for W in p.weights:
        W[:] = 0.0
    p.biases[-1][:] = 0.75
    _, out = record_forward(p, spec, np.full(3, 0.5))
    assert out.value == 0.75 and not np.any(out.coeffs[1:])


def test_output_bias_gradient_is_zero():
    spec = NetworkSpec(2, (5,))
    p = _scaled(spec, 1)
    tape, _ = record_forward(p, spec, np.array([0.2, 0.9]))
    g = backward(tape)
    assert g[-1] == 0.0


def test_linear_special_case():
    # identity activation, K=1: coefficient {1} is w2 . w1
    spec = NetworkSpec(1, (3,), "identity")
    p = _scaled(spec, 2)
    x = np.array([0.4])
    tape, out = record_forward(p, spec, x)
    w1, w2 = p.weights[0][:, 0], p.weights[1][0]
    assert np.isclose(out.mixed_partial, w2 @ w1, rtol=1e-14)
    y = 0.3
    cot = 2.0 * (out.mixed_partial - y)
    g = MlpParams.from_flat(spec, backward(tape, seed=1, cotangent=cot))
    assert np.allclose(g.weights[0][:, 0], cot * w2)
    assert np.allclose(g.weights[1][0], cot * w1)
    assert not np.any(g.biases[0]) and g.biases[1][0] == 0.0


CONFIGS = [(act, layers, K) for act in ("sigmoid", "swish", "rep")
           for layers in (1, 2, 3) for K in (2, 3)]


@pytest.mark.parametrize("activation,layers,K", CONFIGS)
def test_gradient_matches_fd(activation, layers, K):
    spec = NetworkSpec(K, (4,) * layers, activation)
    seed = 13 * layers + K
    p = _scaled(spec, seed, 1.5)
    x = np.random.default_rng(seed).uniform(0.1, 0.9, size=(3, K))
    w = np.array([0.5, -1.0, 2.0])
    tape, _ = record_forward(p, spec, x)
    g = backward(tape, cotangent=w)

    def fun(q):
        _, out = record_forward(q, spec, x)
        return float(w @ out.mixed_partial)

    ref = _theta_fd(spec, p.flat(), fun)
    assert np.linalg.norm(g - ref) <= 1e-4 * np.linalg.norm(ref)


def test_lower_coefficient_seed():
    spec = NetworkSpec(3, (4, 4))
    p = _scaled(spec, 4)
    x = np.array([0.3, 0.5, 0.7])
    tape, _ = record_forward(p, spec, x)
    g = backward(tape, seed=0b101)

    def fun(q):
        return float(record_forward(q, spec, x)[1].coefficient(0b101))

    ref = _theta_fd(spec, p.flat(), fun)
    assert np.linalg.norm(g - ref) <= 1e-4 * np.linalg.norm(ref)


def test_linearity_and_determinism():
    spec = NetworkSpec(3, (5, 5), "swish")
    p = _scaled(spec, 5)
    x = np.random.default_rng(5).uniform(size=(4, 3))
    tape, _ = record_forward(p, spec, x)
    c1, c2 = np.array([1.0, 0.0, 2.0, -1.0]), np.array([0.5, 3.0, -1.0, 0.0])
    g1, g2 = backward(tape, cotangent=c1), backward(tape, cotangent=c2)
    mix = backward(tape, cotangent=2.0 * c1 - 3.0 * c2)
    assert np.allclose(mix, 2.0 * g1 - 3.0 * g2, rtol=1e-12, atol=1e-12)
    tape2, _ = record_forward(p, spec, x)
    assert np.array_equal(backward(tape2, cotangent=c1), g1)


def test_batch_gradient_is_sum():
    spec = NetworkSpec(2, (4,))
    p = _scaled(spec, 6)
    x = np.random.default_rng(6).uniform(size=(5, 2))
    total = backward(record_forward(p, spec, x)[0])
    parts = sum(backward(record_forward(p, spec, xi)[0]) for xi in x)
    assert np.allclose(total, parts, rtol=1e-12, atol=1e-13)


def test_errors():
    spec = NetworkSpec(2, (3,))
    p = init_params(spec, 0)
    with pytest.raises(EmptyTape):
        backward(Tape(p, spec, (0, 1)))
    with pytest.raises(ShapeMismatch):
        record_forward(p, spec, np.zeros(3))
