"""End-to-end acceptance suite.

Every test records one PASS/FAIL line (see ``conftest.py``); the lines are
repeated in the terminal summary. The trained models are shared per session:
three Ishigami networks with the default architecture and training settings,
and one Piston network.
"""

import hashlib

import numpy as np
import pytest

from anovanet import checks, cli
from anovanet.anova import decompose, label, masks_by_order, variables
from anovanet.data import TestFunctionSpec, generate
from anovanet.data.testfn import ishigami_variances
from anovanet.network import MlpParams, NetworkSpec, init_params, mixed_partial
from anovanet.oracle import brute_force_anova
from anovanet.training import TrainConfig, fit, rmse

pytestmark = pytest.mark.slow

ISHIGAMI_SEEDS = (0, 1, 2)
# order-7 jets make the default 3x32 sigmoid net slow on one CPU, and sigmoid fits
# poorly per epoch; 2x32 swish reaches a far lower error in the same time
PISTON_SPEC = NetworkSpec(7, (32, 32), "swish")
PISTON_CONFIG = TrainConfig(learning_rate=1e-2, max_epochs=200, patience=200, lbfgs_epochs=100)
PISTON_NODES = 1 << 10


@pytest.fixture(scope="session")
def ishigami_data():
    return generate(TestFunctionSpec("ishigami", 10000), 0)


@pytest.fixture(scope="session")
def ishigami_runs(ishigami_data):
    """``[(spec, params, report, decomposition)]``, one per seed."""
    spec = NetworkSpec(3)
    runs = []
    for seed in ISHIGAMI_SEEDS:
        params, report = fit(ishigami_data, spec, TrainConfig(seed=seed))
        runs.append((spec, params, report, decompose(params, spec)))
    return runs


@pytest.fixture(scope="session")
def piston_run():
    ds = generate(TestFunctionSpec("piston", 10000), 0)
    params, report = fit(ds, PISTON_SPEC, PISTON_CONFIG)
    return ds, PISTON_SPEC, params, report


@pytest.fixture(scope="session")
def random_decomps():
    out = []
    for K, seed in ((4, 5), (6, 6)):
        spec = NetworkSpec(K, (16, 16))
        out.append(decompose(_perturbed(spec, seed), spec))
    return out


def _glorot(K, seed=3):
    spec = NetworkSpec(K)
    return spec, init_params(spec, seed)


def _perturbed(spec, seed):
    # Glorot weights with nonzero biases, so scalar parts are not all centred
    p = init_params(spec, seed)
    rng = np.random.default_rng(seed + 100)
    return MlpParams([W * 1.5 for W in p.weights], [rng.normal(scale=0.5, size=b.shape) for b in p.biases])


def test_ishigami_sobol_indices(ishigami_runs, verdict):
    ref = ishigami_variances()
    total = sum(ref.values())
    worst_nonzero, worst_zero = 0.0, 0.0
    per_seed = []
    for _, _, _, dec in ishigami_runs:
        idx = dec.sobol_indices()
        per_seed.append({label(m): round(v, 4) for m, v in idx.items()})
        for mask, v in ref.items():
            if v > 0:
                worst_nonzero = max(worst_nonzero, abs(idx[mask] - v / total))
            else:
                worst_zero = max(worst_zero, abs(idx[mask]))
    ok = worst_nonzero <= 0.03 and worst_zero <= 5e-3
    verdict(1, "Ishigami Sobol indices, 3 seeds", ok,
            f"max |error| nonzero {worst_nonzero:.2e} (tol 3e-2), max null {worst_zero:.2e} (tol 5e-3); "
            f"seeds {per_seed}")


def test_corner_sum_identity(ishigami_runs, verdict):
    spec3, p3, _, _ = ishigami_runs[0]
    spec4, p4 = _glorot(4)
    spec6, p6 = _glorot(6)
    errs = {
        "trained K=3 qmc": checks.corner_vs_quadrature(p3, spec3, seed=1),
        "trained K=3 grid": checks.corner_vs_quadrature(p3, spec3, seed=1, kind="grid"),
        "random K=4 grid": checks.corner_vs_quadrature(p4, spec4, seed=2, kind="grid"),
        "random K=6 qmc": checks.corner_vs_quadrature(p6, spec6, seed=3),
    }
    ok = all(v <= (1e-3 if "qmc" in k else 1e-6) for k, v in errs.items())
    verdict(2, "corner sums vs quadrature", ok,
            ", ".join(f"{k} {v:.2e}" for k, v in errs.items()) + " (tol qmc 1e-3, grid 1e-6)")


def test_orthogonality_and_zero_mean(ishigami_runs, random_decomps, verdict):
    # K=4 only: for K=6 pairs spanning five or six variables, 2^14 nodes resolve the
    # inner product to ~1e-5 sigma^2, which is larger than the pairs' own norms
    decs = [r[3] for r in ishigami_runs] + random_decomps[:1]
    ortho = max(checks.orthogonality(d, seed=i) for i, d in enumerate(decs))
    means = max(checks.marginal_means(d, seed=i) for i, d in enumerate(decs))
    ok = ortho <= 1e-3 and means <= 1e-3
    verdict(3, "orthogonality and zero marginal means", ok,
            f"trained K=3 and random K=4: inner product {ortho:.2e}, marginal mean {means:.2e} "
            f"(tol 1e-3 each)")


def test_variance_identity(ishigami_runs, random_decomps, verdict):
    trained = max(checks.variance_identity(r[3]) for r in ishigami_runs)
    random = max(checks.variance_identity(d) for d in random_decomps)
    verdict(4, "variance identity", max(trained, random) <= 1e-3,
            f"trained {trained:.2e}, random K=4 and K=6 {random:.2e} (tol 1e-3)")


def test_gradient_finite_differences(verdict):
    rng = np.random.default_rng(11)
    worst, configs = 0.0, []
    for c in range(20):
        act = ("sigmoid", "swish", "rep")[c % 3]
        K = (2, 3, 5)[c // 3 % 3]
        hidden = tuple(int(w) for w in rng.integers(3, 7, size=1 + c % 4 % 3))
        spec = NetworkSpec(K, hidden, act)
        params = _perturbed(spec, 20 + c)
        X = rng.uniform(0.05, 0.95, size=(12, K))
        y = rng.normal(size=12)
        err = checks.gradient_fd(params, spec, X, y, n_coords=30, seed=c)
        worst = max(worst, err)
        configs.append((act, K, len(hidden)))
    assert {a for a, _, _ in configs} == {"sigmoid", "swish", "rep"}
    assert {k for _, k, _ in configs} == {2, 3, 5} and {d for _, _, d in configs} == {1, 2, 3}
    verdict(5, "parameter gradients vs central differences", worst <= 1e-4,
            f"20 configs, worst relative error {worst:.2e} (tol 1e-4)")


def test_brute_force_equivalence(ishigami_runs, verdict):
    spec, params, _, dec = ishigami_runs[0]
    bf = brute_force_anova(lambda X: mixed_partial(params, spec, X), 3, resolution=33)
    worst = abs(bf.mean - dec.mean)
    for mask in masks_by_order(3):
        if not mask:
            continue
        act = variables(mask)
        mesh = np.stack(np.meshgrid(*([bf.grid] * len(act)), indexing="ij"), axis=-1).reshape(-1, len(act))
        X = np.zeros((len(mesh), 3))
        X[:, list(act)] = mesh
        ours = dec.components_at_subset(mask, X)
        worst = max(worst, float(np.max(np.abs(ours - bf.components[mask].ravel()))))
    verdict(6, "components vs brute-force ANOVA on 33^3 grid", worst <= 1e-3,
            f"max abs error {worst:.2e} (tol 1e-3)")


def test_piston_truncation_trend(piston_run, verdict):
    ds, spec, params, report = piston_run
    X, y = ds.part("test")
    dec = decompose(params, spec, PISTON_NODES)
    curve = dec.truncation_curve(X, range(1, spec.input_dim + 1))
    errs = [rmse(curve[d], y) for d in range(1, spec.input_dim + 1)]
    rises = [b / a - 1 for a, b in zip(errs, errs[1:]) if b > a]
    trend = len(rises) <= 1 and all(r <= 0.1 for r in rises)
    ratio = errs[0] / errs[-1]
    verdict(7, "Piston truncation trend", trend and ratio >= 10,
            f"RMSE by order {[f'{e:.2e}' for e in errs]}, inversions {[f'{r:.1%}' for r in rises]}, "
            f"RMSE(1)/RMSE(K) {ratio:.1f} (need >= 10, full-model test RMSE {report.test_rmse:.2e})")


def test_ishigami_fit_quality(ishigami_runs, verdict):
    errs = [r[2].test_rmse for r in ishigami_runs]
    verdict(8, "Ishigami full-order test RMSE", max(errs) <= 1e-2,
            f"per seed {[f'{e:.2e}' for e in errs]} (tol 1e-2)")


def test_relu_mixed_partial_vanishes(verdict):
    rng = np.random.default_rng(4)
    worst = 100
    for c, K in enumerate((2, 3, 5, 2, 3, 5)):
        spec = NetworkSpec(K, (8,) * (1 + c % 3), "relu")
        X = rng.uniform(0.01, 0.99, size=(100, K))
        zeros = int(np.sum(mixed_partial(_perturbed(spec, c), spec, X) == 0.0))
        worst = min(worst, zeros)
    verdict(9, "relu mixed partial is exactly zero", worst >= 99,
            f"fewest exact zeros over 6 networks: {worst}/100 (need >= 99)")


def _cli_outputs(root):
    argv = [
        ("generate", "--fn", "ishigami", "--n", 400, "--seed", 2, "--name", "d"),
        ("train", "--data", root / "d.csv", "--hidden", "6,6", "--epochs", 15, "--patience", 15,
         "--batch-size", 32, "--seed", 4),
        ("decompose", "--checkpoint", root / "d.ckpt.json", "--nodes", 1024, "--subset", "1,3", "--grid", 8),
        ("eval", "--checkpoint", root / "d.ckpt.json", "--order", "all", "--nodes", 256),
        ("verify", "--checkpoint", root / "d.ckpt.json", "--subsets", 3, "--rmse-tol", 1.0),
        ("ablate", "--data", root / "d.csv", "--widths", "4", "--activations", "sigmoid,rep",
         "--noise-levels", "0,0.01", "--seeds", "0,1", "--epochs", 3, "--patience", 3),
    ]
    codes = [cli.main([str(a) for a in (*cmd, "--output-dir", root)]) for cmd in argv]
    digests = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(root.iterdir())}
    return codes, digests


def test_cli_determinism(tmp_path, verdict):
    # same flags, same paths: the second run starts from an emptied directory
    codes_a, files_a = _cli_outputs(tmp_path)
    for p in tmp_path.iterdir():
        p.unlink()
    codes_b, files_b = _cli_outputs(tmp_path)
    differ = sorted(n for n in files_a if files_a[n] != files_b.get(n))
    ok = codes_a == codes_b and set(files_a) == set(files_b) and not differ and len(files_a) >= 12
    verdict(10, "byte-identical CLI outputs", ok,
            f"{len(files_a)} files from 6 commands, exit codes {codes_a}, differing {differ or 'none'}")
