"""Fitting the mixed partial of a network to sampled targets."""

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import line_search

from anovanet.errors import LineSearchFailed, NonFiniteLoss
from anovanet.network import MlpParams, chunk_rows, init_params, mixed_partial
from anovanet.paramgrad import backward, record_forward

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "lbfgs")
LOSSES = ("squared", "absolute")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 2e-2
    batch_size: int | None = 64  # None means full batch
    max_epochs: int = 500
    patience: int = 200
    l2_weight: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0
    loss: str = "squared"
    lbfgs_history: int = 10
    lbfgs_epochs: int = 0  # full-batch refinement after the adam phase

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_epochs < 1 or not 0 <= self.patience <= self.max_epochs:
            raise ValueError("need max_epochs >= 1 and 0 <= patience <= max_epochs")
        if self.l2_weight < 0 or self.noise_sigma < 0:
            raise ValueError("l2_weight and noise_sigma must be nonnegative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    best_epoch: int = 0
    train_loss: list = field(default_factory=list)
    val_rmse: list = field(default_factory=list)
    train_rmse: float = float("nan")
    best_val_rmse: float = float("inf")
    test_rmse: float = float("nan")
    wall_time: float = 0.0
    diverged: bool = False
    epochs: int = 0
    line_search_fallbacks: int = 0

    def to_dict(self, include_timing=False):
        d = asdict(self)
        if not include_timing:
            d.pop("wall_time")
        return d


def rmse(pred, target):
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(target)) ** 2)))


def _phi(residual, kind):
    if kind == "squared":
        return residual * residual, 2.0 * residual
    return np.abs(residual), np.sign(residual)


def _l2(params, l2_weight):
    return l2_weight * sum(float(np.sum(W * W)) for W in params.weights)


def _l2_grad(params, l2_weight):
    parts = []
    for W, b in zip(params.weights, params.biases):
        parts.append((2.0 * l2_weight * W).ravel())
        parts.append(np.zeros_like(b))
    return np.concatenate(parts)


def loss(params, spec, X, y, kind="squared", l2_weight=None):
    """Mean penalty of ``y - d^K NN/dx`` plus ``l2 * ||weights||^2``."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("empty batch")
    l2 = spec.l2_weight if l2_weight is None else l2_weight
    pen, _ = _phi(np.asarray(y) - mixed_partial(params, spec, X), kind)
    value = float(np.mean(pen)) + _l2(params, l2)
    if not np.isfinite(value):
        raise NonFiniteLoss("loss is not finite")
    return value


def loss_and_grad(params, spec, X, y, kind="squared", l2_weight=None):
    """Loss and its flat parameter gradient; large batches are chunked."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(X)
    if n == 0:
        raise ValueError("empty batch")
    l2 = spec.l2_weight if l2_weight is None else l2_weight
    chunk = chunk_rows(spec, spec.input_dim, budget=1 << 20)
    total = 0.0
    grad = np.zeros(spec.n_params)
    for s in range(0, n, chunk):
        tape, out = record_forward(params, spec, X[s:s + chunk])
        pen, dpen = _phi(y[s:s + chunk] - out.mixed_partial, kind)
        total += float(np.sum(pen))
        grad += backward(tape, cotangent=-dpen / n)
    value = total / n + _l2(params, l2)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NonFiniteLoss("loss or gradient is not finite")
    if l2:
        grad += _l2_grad(params, l2)
    return value, grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))


def adam_step(state, theta, grad, lr):
    """One bias-corrected Adam update; returns ``(state, theta)``."""
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    mhat = m / (1.0 - state.beta1 ** t)
    vhat = v / (1.0 - state.beta2 ** t)
    theta = theta - lr * mhat / (np.sqrt(vhat) + state.eps)
    return AdamState(m, v, t, state.beta1, state.beta2, state.eps), theta


@dataclass
class LbfgsState:
    history: int = 10
    s: list = field(default_factory=list)
    y: list = field(default_factory=list)
    f: float | None = None
    g: np.ndarray | None = None
    fallbacks: int = 0
    iterations: int = 0


class _Cached:
    """Memoise ``fun(theta) -> (f, g)`` on the last few points."""

    def __init__(self, fun):
        self.fun = fun
        self.memo = {}

    def __call__(self, theta):
        key = theta.tobytes()
        if key not in self.memo:
            if len(self.memo) > 8:
                self.memo.clear()
            self.memo[key] = self.fun(theta)
        return self.memo[key]

    def f(self, theta):
        return self(theta)[0]

    def g(self, theta):
        return self(theta)[1]


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / np.dot(y, s)
        a = rho * np.dot(s, q)
        alphas.append((rho, a))
        q -= a * y
    if S:
        q *= np.dot(S[-1], Y[-1]) / np.dot(Y[-1], Y[-1])
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def lbfgs_step(state, theta, fun):
    """One L-BFGS iteration with a strong-Wolfe line search.

    ``fun(theta)`` returns ``(loss, grad)``. When the line search fails the
    step falls back to a backtracked, gradient-scaled step and the failure is
    counted in ``state.fallbacks``.
    """
    fc = _Cached(fun)
    if state.g is None:
        state.f, state.g = fc(theta)
    f0, g0 = state.f, state.g
    if not np.any(g0):
        return state, theta
    d = _two_loop(g0, state.s, state.y)
    if np.dot(d, g0) >= 0:
        d = -g0
    try:
        alpha, *_rest = line_search(fc.f, fc.g, theta, d, gfk=g0, old_fval=f0,
                                    c1=1e-4, c2=0.9, maxiter=20)
        if alpha is None:
            raise LineSearchFailed("no step satisfying the strong Wolfe conditions")
    except (LineSearchFailed, NonFiniteLoss) as exc:
        log.info("line search failed (%s); using scaled gradient step", exc)
        state.fallbacks += 1
        d = -g0 / max(1.0, float(np.linalg.norm(g0)))
        alpha = 1.0
        while alpha > 1e-12:
            try:
                if fc.f(theta + alpha * d) < f0:
                    break
            except NonFiniteLoss:
                pass
            alpha *= 0.5
        else:
            return state, theta
    new = theta + alpha * d
    f1, g1 = fc(new)
    s, y = new - theta, g1 - g0
    if np.dot(s, y) > 1e-12 * np.dot(y, y):
        state.s.append(s)
        state.y.append(y)
        if len(state.s) > state.history:
            state.s.pop(0)
            state.y.pop(0)
    state.f, state.g = f1, g1
    state.iterations += 1
    return state, new


def fit(dataset, spec, config, params=None, callback=None):
    """Train ``spec`` on ``dataset`` with validation early stopping.

    Returns ``(params, report)`` where ``params`` are the ones with the best
    validation RMSE (mixed partial vs. clean validation targets).
    """
    start = time.perf_counter()
    params = init_params(spec, config.seed) if params is None else params.copy()
    noise_rng = np.random.default_rng([config.seed, 1])
    order_rng = np.random.default_rng([config.seed, 2])
    X_tr, y_tr = dataset.part("train")
    X_va, y_va = dataset.part("val")
    X_te, y_te = dataset.part("test")
    if config.noise_sigma > 0:
        y_tr = y_tr + noise_rng.normal(0.0, config.noise_sigma, size=len(y_tr))
    theta = params.flat()
    report = TrainReport()
    best_theta = theta.copy()

    def objective(th, X=X_tr, y=y_tr):
        return loss_and_grad(MlpParams.from_flat(spec, th), spec, X, y,
                             config.loss, config.l2_weight)

    adam = AdamState.zeros(len(theta))
    lbfgs = LbfgsState(history=config.lbfgs_history)
    n_tr = len(X_tr)
    batch = n_tr if config.batch_size is None else min(config.batch_size, n_tr)
    phases = [(config.optimizer, config.max_epochs, config.patience)]
    if config.optimizer == "adam" and config.lbfgs_epochs:
        phases.append(("lbfgs", config.lbfgs_epochs, min(config.patience, config.lbfgs_epochs)))
    epoch = 0
    for opt, n_epochs, patience in phases:
        phase_start = epoch
        if opt == "lbfgs":
            theta = best_theta.copy()
            lbfgs = LbfgsState(history=config.lbfgs_history)
        try:
            while epoch - phase_start < n_epochs:
                epoch += 1
                if opt == "adam":
                    perm = order_rng.permutation(n_tr)
                    losses = []
                    for s in range(0, n_tr, batch):
                        idx = perm[s:s + batch]
                        f, g = objective(theta, X_tr[idx], y_tr[idx])
                        adam, theta = adam_step(adam, theta, g, config.learning_rate)
                        losses.append(f * len(idx))
                    train_loss = sum(losses) / n_tr
                else:
                    lbfgs, theta = lbfgs_step(lbfgs, theta, objective)
                    train_loss = lbfgs.f
                val = rmse(mixed_partial(MlpParams.from_flat(spec, theta), spec, X_va), y_va)
                if not (np.isfinite(val) and np.isfinite(train_loss)):
                    raise NonFiniteLoss("validation or training loss not finite")
                report.train_loss.append(float(train_loss))
                report.val_rmse.append(val)
                if val < report.best_val_rmse:
                    report.best_val_rmse = val
                    report.best_epoch = epoch
                    best_theta = theta.copy()
                if callback is not None:
                    callback(epoch, train_loss, val)
                if epoch - max(report.best_epoch, phase_start) >= patience:
                    break
        except NonFiniteLoss as exc:
            log.warning("run diverged at epoch %d: %s", epoch, exc)
            report.diverged = True
            break
    report.epochs = epoch
    report.line_search_fallbacks = lbfgs.fallbacks
    best = MlpParams.from_flat(spec, best_theta)
    report.train_rmse = rmse(mixed_partial(best, spec, X_tr), dataset.part("train")[1])
    if len(X_te):
        report.test_rmse = rmse(mixed_partial(best, spec, X_te), y_te)
    report.wall_time = time.perf_counter() - start
    return best, report
