"""Self-verification suites behind ``sida mi-bench`` and ``sida gradcheck``.

Every check returns a :class:`CheckResult`; the suites are deterministic
so their CSV output is reproducible.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import mi, model, surrogate
from .numerics import derive_rng, knn_adjacency


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


def central_difference(f, x, h=1e-5):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def relative_error(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-300))


def pair_sum_mi_loss(M, S, n_classes):
    """Negative NWJ bound summed pair by pair (reference for the matrix form)."""
    n = M.shape[0]
    m = M.sum(axis=1) / n_classes
    joint = marginal = 0.0
    for i in range(n):
        for j in range(n):
            joint += float(M[i] @ M[j]) / n_classes * S[i, j]
            marginal += m[i] * m[j] * math.exp(S[i, j])
    return -(joint - marginal / math.e)


def _random_mixture(rng, n_s, n_t, k):
    y = np.concatenate([np.arange(k), rng.integers(0, k, n_s - k)])
    W = rng.random((n_t, k))
    W /= W.sum(axis=0)
    return y, W, mi.build_mixture_matrix(y, k, W)


# ---------------------------------------------------------------- mi-bench

def check_optimal_critic():
    out = []
    for name, table, expected in (
        ("optimal critic, 0.4/0.1 table", [[0.4, 0.1], [0.1, 0.4]], 0.19274),
        ("optimal critic, diagonal table", [[0.5, 0.0], [0.0, 0.5]], math.log(2.0)),
    ):
        est = mi.nwj_on_table(table, mi.optimal_critic(table))
        exact = mi.discrete_mi_oracle(table)
        gap = abs(est - exact)
        ok = gap <= 1e-9 and abs(exact - expected) < 5e-6
        out.append(CheckResult(name, ok, gap, 1e-9, f"estimate={est:.6f} exact={exact:.6f}"))
    return out


def check_lower_bound(n_critics=20, seed=0):
    rng = derive_rng(seed, "bench/critics")
    table = np.array([[0.4, 0.1], [0.1, 0.4]])
    exact = mi.discrete_mi_oracle(table)
    worst = -np.inf
    for _ in range(n_critics):
        worst = max(worst, mi.nwj_on_table(table, rng.normal(scale=2.0, size=(2, 2))) - exact)
    return [CheckResult(f"{n_critics} random critics stay below MI", worst <= 1e-12, worst, 1e-12,
                        f"max(estimate - exact)={worst:.3e}")]


def check_matrix_form(n_instances=50, seed=0):
    rng = derive_rng(seed, "bench/matrix")
    worst = 0.0
    for _ in range(n_instances):
        k = int(rng.integers(2, 4))
        n_s, n_t = int(rng.integers(k, 16)), int(rng.integers(1, 15))
        _, _, M = _random_mixture(rng, n_s, n_t, k)
        S = rng.normal(size=(n_s + n_t,) * 2)
        worst = max(worst, abs(mi.mi_loss(M, S, k) - pair_sum_mi_loss(M, S, k)))
    return [CheckResult("matrix form equals pair sum", worst <= 1e-10, worst, 1e-10, f"{n_instances} instances")]


def check_constant_critic():
    vals = np.ones(64)
    est = mi.nwj_estimate(vals, vals)
    return [CheckResult("constant critic on independent pairs", abs(est) <= 1e-15, abs(est), 1e-15)]


def check_gaussian_bound(rho=0.9, n=20000, seed=0):
    rng = derive_rng(seed, "bench/gaussian")
    x = rng.normal(size=n)
    y = rho * x + math.sqrt(1 - rho**2) * rng.normal(size=n)
    ys = rng.permutation(y)
    v = 1 - rho**2
    exact = -0.5 * math.log(v)

    def critic(a, b):
        return 1.0 - 0.5 * math.log(v) - (a * a - 2 * rho * a * b + b * b) / (2 * v) + (a * a + b * b) / 2

    jv, mv = critic(x, y), critic(x, ys)
    est = mi.nwj_estimate(jv, mv)
    se = math.sqrt(np.var(jv) / n + np.var(np.exp(np.minimum(mv, mi.EXP_CLAMP)) / math.e) / n)
    excess = est - exact
    return [CheckResult(f"Gaussian rho={rho} bound", excess <= 3 * se, excess, 3 * se,
                        f"estimate={est:.4f} exact={exact:.5f}")]


def mi_bench(seed=0):
    results = []
    for fn in (check_optimal_critic, check_constant_critic):
        results += fn()
    results += check_lower_bound(seed=seed)
    results += check_matrix_form(seed=seed)
    results += check_gaussian_bound(seed=seed)
    return results


# --------------------------------------------------------------- gradcheck

def _max_over_seeds(name, fn, seeds, tol):
    worst = max(fn(derive_rng(s, f"grad/{name}")) for s in range(seeds))
    return CheckResult(name, worst < tol, worst, tol, f"{seeds} seeds")


def _grad_mi_w(rng):
    y, W, M = _random_mixture(rng, 6, 5, 3)
    S = rng.normal(size=(11, 11))
    S = 0.5 * (S + S.T)
    f = lambda w: mi.mi_loss(mi.build_mixture_matrix(y, 3, w), S, 3)  # noqa: E731
    return relative_error(mi.mi_grad_w(M, S, 3, 5), central_difference(f, W))


def _grad_mi_features(rng):
    _, _, M = _random_mixture(rng, 6, 5, 3)
    Z = rng.normal(size=(11, 2))
    params = mi.ScoreParams(m2=2.0 * mi.median_distance(Z))
    f = lambda z: mi.mi_loss(M, mi.score_matrix(z, params), 3)  # noqa: E731
    return relative_error(mi.mi_grad_features(Z, M, params, 3), central_difference(f, Z, h=1e-6))


def _grad_laplacian(rng):
    Z = rng.normal(size=(12, 2))
    L = surrogate.normalized_laplacian(knn_adjacency(Z, 3)).L
    W = rng.random((12, 3))
    f = lambda w: surrogate.laplacian_loss_grad(w, L)[0]  # noqa: E731
    return relative_error(surrogate.laplacian_loss_grad(W, L)[1], central_difference(f, W))


def _grad_classification(rng):
    logits = rng.normal(size=(6, 3))
    labels = rng.integers(0, 3, 6)
    f = lambda lg: model.classification_loss(model.softmax(lg), labels)[0]  # noqa: E731
    return relative_error(model.classification_loss(model.softmax(logits), labels)[1], central_difference(f, logits))


def _grad_auxiliary(rng):
    logits = rng.normal(size=(6, 3))
    W = rng.random((6, 3))
    W /= W.sum(axis=0)
    f = lambda lg: model.auxiliary_loss(model.softmax(lg), W)[0]  # noqa: E731
    return relative_error(model.auxiliary_loss(model.softmax(logits), W)[1], central_difference(f, logits))


def _grad_network(rng):
    enc = model.init_encoder(3, (5, 4), rng, "tanh")
    clf = model.init_classifier(4, 3, rng)
    X = rng.normal(size=(7, 3))
    labels = rng.integers(0, 3, 7)
    tensors = enc.tensors() + clf.tensors()
    n_w = len(enc.weights)

    def loss(ts):
        e = model.EncoderParams(ts[:n_w], ts[n_w:2 * n_w], enc.activation)
        c = model.ClassifierParams(ts[-2], ts[-1])
        _, p = model.classifier_forward(c, model.encode_forward(e, X)[0])
        return model.classification_loss(p, labels)[0]

    Z, cache = model.encode_forward(enc, X)
    _, p = model.classifier_forward(clf, Z)
    dWc, dbc, dZ = model.classifier_backward(clf, Z, model.classification_loss(p, labels)[1])
    dWs, dbs, _ = model.encode_backward(enc, cache, dZ)
    analytic = [*dWs, *dbs, dWc, dbc]
    worst = 0.0
    for i, t in enumerate(tensors):
        def f(x, i=i):
            ts = list(tensors)
            ts[i] = x
            return loss(ts)
        worst = max(worst, relative_error(analytic[i], central_difference(f, t)))
    return worst


def gradcheck(seeds=50):
    return [
        _max_over_seeds("mi_grad_w", _grad_mi_w, seeds, 1e-6),
        _max_over_seeds("laplacian_grad", _grad_laplacian, seeds, 1e-6),
        _max_over_seeds("mi_grad_features", _grad_mi_features, seeds, 1e-4),
        _max_over_seeds("classification_grad", _grad_classification, seeds, 1e-4),
        _max_over_seeds("auxiliary_grad", _grad_auxiliary, seeds, 1e-4),
        _max_over_seeds("network_param_grads", _grad_network, seeds, 1e-4),
    ]


def format_results(results):
    width = max(len(r.name) for r in results)
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}}  {status}  value={r.value:.3e}  tol={r.tolerance:.1e}  {r.detail}".rstrip())
    return "\n".join(lines)


def results_csv(results):
    rows = ["name,passed,value,tolerance"]
    for r in results:
        rows.append(f"{r.name.replace(',', ';')},{int(r.passed)},{r.value!r},{r.tolerance!r}")
    return "\n".join(rows) + "\n"


def quiet(fn, *args, **kwargs):
    """Run ``fn`` with clamp warnings silenced (they are expected in the bench)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", mi.ExpClampWarning)
        return fn(*args, **kwargs)
