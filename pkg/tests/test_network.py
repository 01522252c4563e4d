import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anovanet.errors import ShapeMismatch, UnsupportedOrder
from anovanet.network import (MlpParams, NetworkSpec, forward, forward_multidual, init_params,
                              load_checkpoint, mixed_partial, save_checkpoint)
from anovanet.oracle import fd_mixed_partial


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def test_param_count_default():
    assert NetworkSpec(3).n_params == 3 * 32 + 32 + 2 * (32 * 32 + 32) + 32 + 1 == 2273


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.lists(st.integers(1, 12), min_size=1, max_size=4))
def test_param_count_formula(K, hidden):
    spec = NetworkSpec(K, tuple(hidden))
    w = [K, *hidden, 1]
    assert spec.n_params == sum(a * b + b for a, b in zip(w[:-1], w[1:]))
    assert init_params(spec, 0).flat().shape == (spec.n_params,)


def test_init_deterministic_and_glorot():
    spec = NetworkSpec(3, (16, 8))
    a, b = init_params(spec, 7), init_params(spec, 7)
    assert np.array_equal(a.flat(), b.flat())
    assert not np.array_equal(a.flat(), init_params(spec, 8).flat())
    for W, bias in zip(a.weights, a.biases):
        lim = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
        assert np.all(np.abs(W) <= lim)
        assert not np.any(bias)


def test_flat_roundtrip():
    spec = NetworkSpec(2, (3, 4))
    p = init_params(spec, 1)
    q = MlpParams.from_flat(spec, p.flat())
    assert np.array_equal(p.flat(), q.flat())
    # layer-major, weights row-major then bias
    assert np.array_equal(p.flat()[:6], p.weights[0].ravel())
    with pytest.raises(ShapeMismatch):
        MlpParams.from_flat(spec, np.zeros(3))


def test_constant_network():
    spec = NetworkSpec(3, (4,))
    p = init_params(spec, 0)
    for W in p.weights:
        W[:] = 0.0
    p.biases[-1][:] = 1.25
    x = np.random.default_rng(0).uniform(size=(10, 3))
    assert np.all(forward(p, spec, x) == 1.25)
    md = forward_multidual(p, spec, x)
    assert np.all(md.value == 1.25)
    assert not np.any(md.coeffs[:, 1:])
    assert not np.any(mixed_partial(p, spec, x))


def test_hand_computed_221():
    spec = NetworkSpec(2, (2,))
    W1 = np.array([[0.1, -0.2], [0.3, 0.4]])
    b1 = np.array([0.05, -0.1])
    W2 = np.array([[0.7, -0.5]])
    b2 = np.array([0.2])
    p = MlpParams([W1, W2], [b1, b2])
    x = np.array([0.3, 0.8])
    h = _sigmoid(W1 @ x + b1)
    want = float((W2 @ h + b2)[0])
    assert abs(forward(p, spec, x) - want) <= 1e-12
    # mixed partial: sum_j w2_j * W1[j,0] * W1[j,1] * sigma''(z_j)
    z = W1 @ x + b1
    s = _sigmoid(z)
    s2 = s * (1 - s) * (1 - 2 * s)
    assert abs(mixed_partial(p, spec, x) - float(np.sum(W2[0] * W1[:, 0] * W1[:, 1] * s2))) <= 1e-14


def test_forward_matches_multidual_value():
    spec = NetworkSpec(4, (8, 8), "swish")
    p = init_params(spec, 3)
    x = np.random.default_rng(1).uniform(size=(20, 4))
    assert np.allclose(forward_multidual(p, spec, x).value, forward(p, spec, x), rtol=0, atol=1e-12)


@pytest.mark.parametrize("activation", ["sigmoid", "swish", "rep"])
def test_coefficients_match_fd(activation):
    spec = NetworkSpec(3, (8, 8), activation)
    p = init_params(spec, 5)
    for W in p.weights:
        W *= 2.0
    x = np.array([0.4, 0.55, 0.3])
    md = forward_multidual(p, spec, x)

    def h(pts):
        return forward(p, spec, pts)

    for mask in range(1, 8):
        S = [i for i in range(3) if mask >> i & 1]
        ref = fd_mixed_partial(h, x, S, step=1e-4 if len(S) < 3 else 1e-3)
        got = md.coefficient(mask)
        assert abs(got - ref) <= 1e-4 * max(abs(ref), 1e-3), (mask, got, ref)


def test_relu_mixed_partial_vanishes():
    spec = NetworkSpec(2, (16, 16), "relu")
    p = init_params(spec, 0)
    x = np.random.default_rng(2).uniform(size=(100, 2))
    assert np.all(mixed_partial(p, spec, x) == 0.0)


def test_permutation_symmetry():
    spec = NetworkSpec(3, (6, 6))
    p = init_params(spec, 9)
    perm = [2, 0, 1]
    q = p.copy()
    q.weights[0] = p.weights[0][:, perm]
    x = np.random.default_rng(3).uniform(size=(10, 3))
    assert np.allclose(mixed_partial(q, spec, x), mixed_partial(p, spec, x[:, np.argsort(perm)]), rtol=0, atol=1e-12)


def test_shape_errors():
    spec = NetworkSpec(3, (4,))
    p = init_params(spec, 0)
    with pytest.raises(ShapeMismatch):
        forward(p, spec, np.zeros(2))
    with pytest.raises(ShapeMismatch):
        forward_multidual(p, spec, np.zeros((5, 4)))
    big = NetworkSpec(11, (2,))
    with pytest.raises(UnsupportedOrder):
        forward_multidual(init_params(big, 0), big, np.zeros(11))


def test_chunking_is_exact():
    spec = NetworkSpec(3, (8,))
    p = init_params(spec, 4)
    x = np.random.default_rng(4).uniform(size=(50, 3))
    assert np.array_equal(mixed_partial(p, spec, x, chunk=7), mixed_partial(p, spec, x))


def test_checkpoint_roundtrip(tmp_path):
    spec = NetworkSpec(3, (5, 3), "rep", rep_degree=5, l2_weight=1e-4)
    p = init_params(spec, 11)
    path = tmp_path / "m.ckpt.json"
    norm = {"input_maps": [[0, 1]] * 3, "output_map": [-1.5, 2.0]}
    save_checkpoint(path, spec, p, norm, seed=11)
    spec2, p2, rec = load_checkpoint(path)
    assert spec2 == spec
    assert np.array_equal(p2.flat(), p.flat())
    assert rec["normalization"] == norm and rec["seed"] == 11
    text = path.read_text()
    save_checkpoint(path, spec2, p2, norm, seed=11)
    assert path.read_text() == text
    bad = json.loads(text)
    bad["version"] = 99
    path.write_text(json.dumps(bad))
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_spec_validation():
    with pytest.raises(ValueError):
        NetworkSpec(0)
    with pytest.raises(ValueError):
        NetworkSpec(2, ())
    with pytest.raises(ValueError):
        NetworkSpec(2, (4,), "tanh")
    assert NetworkSpec(4).degree == 5
    assert NetworkSpec(4, rep_degree=7).degree == 7


def test_linear_lift_matches_general_kernel():
    from anovanet import kernels
    from anovanet.network import lift_linear, lift_linear_backward

    k, n = 5, 7
    rng = np.random.default_rng(3)
    a = np.zeros((n, 1 << k))
    a[:, 0] = rng.normal(size=n)
    for i in range(k):
        a[:, 1 << i] = rng.normal(size=n)
    d = rng.normal(size=(n, k + 1))
    g = rng.normal(size=(n, 1 << k))
    assert np.allclose(lift_linear(d, a, k), kernels.lift_forward(d, a), rtol=0, atol=1e-13)
    gd, ga = lift_linear_backward(d, a, g, k)
    gd_ref, ga_ref = kernels.lift_backward(d, a, g)
    singles = [1 << i for i in range(k)]
    assert np.allclose(gd, gd_ref, rtol=0, atol=1e-12)
    assert np.allclose(ga[:, singles], ga_ref[:, singles], rtol=0, atol=1e-12)
