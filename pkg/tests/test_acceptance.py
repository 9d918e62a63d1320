"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import subprocess
import sys
import time

import numpy as np
import pytest

from oracles import brute_mi_loss, central_difference, grid_simplex_projection, rel_err
from sida import mi, model, surrogate, trainer
from sida.data import SyntheticSpec, generate_pair
from sida.numerics import knn_adjacency, simplex_project
from sida.trainer import TrainConfig

SEEDS = range(5)


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {n}: {detail}"

    return _report


def test_criterion_1_mi_bound_correctness(report):
    t0 = time.perf_counter()
    gaps = []
    for table, expected in (([[0.4, 0.1], [0.1, 0.4]], 0.19274), ([[0.5, 0.0], [0.0, 0.5]], 0.693147)):
        est = mi.nwj_on_table(table, mi.optimal_critic(table))
        exact = mi.discrete_mi_oracle(table)
        assert exact == pytest.approx(expected, abs=5e-6)
        gaps.append(abs(est - exact))
    rng = np.random.default_rng(0)
    table = np.array([[0.4, 0.1], [0.1, 0.4]])
    excess = max(mi.nwj_on_table(table, rng.normal(scale=2.0, size=(2, 2))) - mi.discrete_mi_oracle(table)
                 for _ in range(20))
    elapsed = time.perf_counter() - t0
    ok = max(gaps) <= 1e-9 and excess <= 1e-12 and elapsed < 1.0
    report(1, ok, f"optimal gap {max(gaps):.1e} (<=1e-9), worst random excess {excess:.3f} (<=1e-12), {elapsed:.2f}s")


def test_criterion_2_matrix_form_consistency(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50):
        k = int(rng.integers(2, 5))
        n_s, n_t = int(rng.integers(k, 31)), int(rng.integers(1, 31))
        y = np.concatenate([np.arange(k), rng.integers(0, k, n_s - k)])
        W = rng.random((n_t, k))
        W /= W.sum(axis=0)
        M = mi.build_mixture_matrix(y, k, W)
        S = -np.abs(rng.normal(size=(n_s + n_t,) * 2))
        worst = max(worst, abs(mi.mi_loss(M, S, k) - brute_mi_loss(M, S, k)))
    elapsed = time.perf_counter() - t0
    report(2, worst <= 1e-10 and elapsed < 5.0, f"max |matrix - pair sum| {worst:.1e} (<=1e-10), {elapsed:.2f}s")


def _mixture(rng, n_s=6, n_t=5, k=3):
    y = np.concatenate([np.arange(k), rng.integers(0, k, n_s - k)])
    W = rng.random((n_t, k))
    W /= W.sum(axis=0)
    return y, W, mi.build_mixture_matrix(y, k, W)


def _network_error(rng):
    enc = model.init_encoder(3, (5, 4), rng, "tanh")
    clf = model.init_classifier(4, 3, rng)
    X = rng.normal(size=(7, 3))
    labels = rng.integers(0, 3, 7)
    W = rng.random((7, 3))
    W /= W.sum(axis=0)
    tensors = enc.tensors() + clf.tensors()

    def loss(ts):
        e = model.EncoderParams(ts[:2], ts[2:4], "tanh")
        c = model.ClassifierParams(ts[4], ts[5])
        _, p = model.classifier_forward(c, model.encode_forward(e, X)[0])
        return model.classification_loss(p, labels)[0] + 0.5 * model.auxiliary_loss(p, W)[0]

    Z, cache = model.encode_forward(enc, X)
    _, p = model.classifier_forward(clf, Z)
    dlog = model.classification_loss(p, labels)[1] + 0.5 * model.auxiliary_loss(p, W)[1]
    dWc, dbc, dZ = model.classifier_backward(clf, Z, dlog)
    dWs, dbs, dX = model.encode_backward(enc, cache, dZ)
    analytic = [*dWs, *dbs, dWc, dbc]
    errs = []
    for i, t in enumerate(tensors):
        def f(x, i=i):
            ts = list(tensors)
            ts[i] = x
            return loss(ts)
        errs.append(rel_err(analytic[i], central_difference(f, t)))

    def f_x(x):
        _, p = model.classifier_forward(clf, model.encode_forward(enc, x)[0])
        return model.classification_loss(p, labels)[0] + 0.5 * model.auxiliary_loss(p, W)[0]

    errs.append(rel_err(dX, central_difference(f_x, X)))
    return max(errs)


def test_criterion_3_gradient_suite(report):
    t0 = time.perf_counter()
    worst = {"mi_grad_w": 0.0, "laplacian": 0.0, "mi_grad_features": 0.0, "model": 0.0}
    for seed in range(50):
        rng = np.random.default_rng(seed)
        y, W, M = _mixture(rng)
        S = rng.normal(size=(11, 11))
        S = 0.5 * (S + S.T)
        f = lambda w: mi.mi_loss(mi.build_mixture_matrix(y, 3, w), S, 3)  # noqa: E731
        worst["mi_grad_w"] = max(worst["mi_grad_w"], rel_err(mi.mi_grad_w(M, S, 3, 5), central_difference(f, W)))

        Zg = rng.normal(size=(12, 2))
        L = surrogate.normalized_laplacian(knn_adjacency(Zg, 3)).L
        Wl = rng.random((12, 3))
        f = lambda w: surrogate.laplacian_loss_grad(w, L)[0]  # noqa: E731
        worst["laplacian"] = max(worst["laplacian"],
                                 rel_err(surrogate.laplacian_loss_grad(Wl, L)[1], central_difference(f, Wl)))

        Z = rng.normal(size=(11, 2))
        D = np.sqrt(((Z[:, None] - Z[None]) ** 2).sum(-1))
        params = mi.ScoreParams(m1=0.0, m2=2.0 * float(np.median(D[np.triu_indices(11, 1)])))
        f = lambda z: mi.mi_loss(M, mi.score_matrix(z, params), 3)  # noqa: E731
        worst["mi_grad_features"] = max(worst["mi_grad_features"], rel_err(
            mi.mi_grad_features(Z, M, params, 3), central_difference(f, Z, h=1e-6)))

        worst["model"] = max(worst["model"], _network_error(rng))
    elapsed = time.perf_counter() - t0
    ok = (worst["mi_grad_w"] < 1e-6 and worst["laplacian"] < 1e-6 and worst["mi_grad_features"] < 1e-4
          and worst["model"] < 1e-4 and elapsed < 30.0)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(3, ok, f"{detail} over 50 seeds, {elapsed:.1f}s")


def test_criterion_4_simplex_projection(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    sum_err = grid_err = 0.0
    min_entry = np.inf
    idempotent = True
    for _ in range(1000):
        d = int(rng.integers(2, 11))
        v = rng.normal(scale=3.0, size=d)
        p = simplex_project(v)
        sum_err = max(sum_err, abs(p.sum() - 1.0))
        min_entry = min(min_entry, p.min())
        idempotent &= np.array_equal(simplex_project(p), p)
        if d <= 3:
            grid_err = max(grid_err, np.abs(p - grid_simplex_projection(v)).max())
    elapsed = time.perf_counter() - t0
    ok = sum_err <= 1e-9 and min_entry >= 0 and idempotent and grid_err <= 1e-6 and elapsed < 5.0
    report(4, ok, f"sum err {sum_err:.1e}, min entry {min_entry:.1e}, idempotent {idempotent}, "
                  f"grid err {grid_err:.1e}, {elapsed:.2f}s")


def test_criterion_5_laplacian_structure(report):
    rng = np.random.default_rng(3)
    null_err = loss_max = 0.0
    for _ in range(20):
        # two far-apart clusters give a graph with (at least) two components
        a = rng.normal(size=(int(rng.integers(6, 20)), 2))
        b = rng.normal(size=(int(rng.integers(6, 20)), 2)) + 100.0
        pair = surrogate.normalized_laplacian(knn_adjacency(np.vstack([a, b]), int(rng.integers(1, 5))))
        root = np.sqrt(np.diag(pair.D))
        null_err = max(null_err, np.abs(pair.L @ root).max())
        n_comp, comp = _components(pair.A)
        for c in range(n_comp):
            col = np.where(comp == c, root, 0.0)
            W = (col / col.sum())[:, None]
            loss_max = max(loss_max, surrogate.laplacian_loss_grad(W, pair.L)[0])
    report(5, null_err <= 1e-12 and loss_max < 1e-10,
           f"max |L D^1/2 1| {null_err:.1e} (<=1e-12), max component-column loss {loss_max:.1e} (<1e-10)")


def _components(A):
    n = A.shape[0]
    comp = -np.ones(n, dtype=int)
    c = 0
    for s in range(n):
        if comp[s] >= 0:
            continue
        stack = [s]
        comp[s] = c
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(A[u]):
                if comp[v] < 0:
                    comp[v] = c
                    stack.append(v)
        c += 1
    return c, comp


def test_criterion_6_surrogate_invariants(report, monkeypatch):
    checked = []
    orig = surrogate.check_weights

    def recording(W, tol=surrogate.COLUMN_SUM_TOL):
        out = orig(W, tol)
        checked.append((float(np.abs(W.sum(axis=0) - 1).max()), float(W.min()), float(W.max())))
        return out

    monkeypatch.setattr(surrogate, "check_weights", recording)
    cfg = TrainConfig(seed=0)
    trainer.train(cfg, generate_pair(SyntheticSpec(seed=0)))
    expected = cfg.epochs * (1 + cfg.surrogate_config.T)
    worst_sum = max(c[0] for c in checked)
    ok = (len(checked) == expected and worst_sum <= 1e-9
          and min(c[1] for c in checked) >= 0 and max(c[2] for c in checked) <= 1)
    report(6, ok, f"{len(checked)} checks ({expected} expected), worst column-sum error {worst_sum:.1e}")


@pytest.fixture(scope="module")
def ablation():
    cfg = TrainConfig()
    data = {s: generate_pair(SyntheticSpec(seed=s)) for s in SEEDS}
    acc, secs = {}, {}
    for mi_on, sd_on in trainer.ABLATION_ROWS:
        t0 = time.perf_counter()
        metrics, _ = trainer.run_seeds(trainer.ablation_config(cfg, mi_on, sd_on), data.__getitem__, SEEDS)
        acc[(mi_on, sd_on)] = np.array(metrics.accuracies) * 100
        secs[(mi_on, sd_on)] = time.perf_counter() - t0
    return acc, secs


def _fmt(a):
    return f"{a.mean():.1f} [{' '.join(f'{x:.1f}' for x in a)}]"


def test_criterion_7_end_to_end_adaptation(report, ablation):
    acc, secs = ablation
    base, full = acc[(False, False)], acc[(True, True)]
    runtime = secs[(False, False)] + secs[(True, True)]
    margin = full.mean() - base.mean()
    worst_seed = (full - base).min()
    ok = margin >= 5.0 and worst_seed >= -1.0 and runtime < 120.0
    report(7, ok, f"full {_fmt(full)} vs base {_fmt(base)}: +{margin:.1f} (>=5), "
                  f"worst seed {worst_seed:+.1f} (>=-1), {runtime:.0f}s")


def test_criterion_8_ablation_structure(report, ablation):
    acc, _ = ablation
    m = {k: v.mean() for k, v in acc.items()}
    base, sd, mi_, full = m[(False, False)], m[(False, True)], m[(True, False)], m[(True, True)]
    ok = full >= max(mi_, sd) - 1.0 and mi_ >= base - 1.0 and sd >= base - 1.0
    report(8, ok, f"base {base:.1f}, SD only {sd:.1f}, MI only {mi_:.1f}, full {full:.1f}")


FAST = "[data]\nn = 40\n[train]\nepochs = 2\nbatch_size = 16\ntarget_batch = 16\nwidths = 8,4\n[run]\nseeds = 0,1\n"


def _cli(*args):
    r = subprocess.run([sys.executable, "-m", "sida", *map(str, args)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    return r


def test_criterion_9_determinism(report, tmp_path):
    cfg = tmp_path / "fast.cfg"
    cfg.write_text(FAST)
    outputs = {}
    for run in ("a", "b"):
        d = tmp_path / run
        _cli("gen", "--config", cfg, "--out", d / "gen")
        _cli("train", "--config", cfg, "--out", d / "train", "--dump-weights")
        _cli("eval", "--checkpoint", d / "train" / "checkpoint-seed0.txt", "--target", d / "gen" / "target.csv",
             "--out", d / "eval")
        _cli("ablate", "--config", cfg, "--out", d / "ablate")
        _cli("mi-bench", "--out", d / "bench")
        _cli("gradcheck", "--seeds", 3, "--out", d / "grad")
        outputs[run] = {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}
    same = outputs["a"] == outputs["b"]
    report(9, same and len(outputs["a"]) >= 10, f"{len(outputs['a'])} files byte-identical across repeats: {same}")
