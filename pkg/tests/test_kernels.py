import numpy as np
import pytest

from anovanet import _fallback, kernels

BACKENDS = kernels.backends()


def _inputs(k, n=37, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, k + 1)), rng.normal(size=(n, 1 << k)), rng.normal(size=(n, 1 << k))


def test_backend_selected():
    assert kernels.BACKEND in BACKENDS
    assert "python" in BACKENDS


@pytest.mark.parametrize("k", [1, 2, 3, 5, 7])
def test_lift_forward_agrees(k):
    d, a, _ = _inputs(k)
    ref = _fallback.lift_forward(d, a)
    for name, mod in BACKENDS.items():
        assert np.allclose(mod.lift_forward(d, a), ref, rtol=1e-12, atol=1e-12), name


@pytest.mark.parametrize("k", [1, 2, 4, 6])
def test_lift_backward_agrees(k):
    d, a, g = _inputs(k, seed=1)
    gd_ref, ga_ref = _fallback.lift_backward(d, a, g)
    for name, mod in BACKENDS.items():
        gd, ga = mod.lift_backward(d, a, g)
        assert np.allclose(gd, gd_ref, rtol=1e-12, atol=1e-12), name
        assert np.allclose(ga, ga_ref, rtol=1e-12, atol=1e-12), name


@pytest.mark.parametrize("k", [1, 3, 5])
def test_subset_mul_agrees(k):
    _, a, b = _inputs(k, seed=2)
    ref = _fallback.subset_mul(a, b)
    for name, mod in BACKENDS.items():
        assert np.allclose(mod.subset_mul(a, b), ref, rtol=1e-12, atol=1e-12), name


@pytest.mark.parametrize("k", [2, 3])
def test_lift_backward_is_adjoint(k):
    # <g, J [dd, da]> equals <backward(g), [dd, da]> with ga[:,0] excluded
    d, a, g = _inputs(k, n=5, seed=3)
    rng = np.random.default_rng(4)
    dd, da = rng.normal(size=d.shape), rng.normal(size=a.shape)
    da[:, 0] = 0.0
    h = 1e-6
    for mod in BACKENDS.values():
        jvp = (mod.lift_forward(d + h * dd, a + h * da) - mod.lift_forward(d - h * dd, a - h * da)) / (2 * h)
        gd, ga = mod.lift_backward(d, a, g)
        lhs = np.sum(g * jvp)
        rhs = np.sum(gd * dd) + np.sum(ga * da)
        assert abs(lhs - rhs) <= 1e-7 * max(1.0, abs(lhs))


def test_lift_forward_small_case():
    # exp lifted at x + e1 + e2: every coefficient is e^x
    x = 0.4
    d = np.full((1, 3), np.exp(x))
    a = np.array([[x, 1.0, 1.0, 0.0]])
    for mod in BACKENDS.values():
        assert np.allclose(mod.lift_forward(d, a), np.exp(x), rtol=1e-14)
