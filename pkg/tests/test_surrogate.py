import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference, rel_err
from sida.numerics import knn_adjacency
from sida.surrogate import (
    SurrogateConfig,
    check_weights,
    class_centroids,
    hard_labels,
    init_weights,
    laplacian_loss_grad,
    normalized_laplacian,
    target_laplacian,
    update_weights,
)

EDGE = np.array([[0.0, 1.0], [1.0, 0.0]])


def two_blobs(seed, n=20, gap=10.0):
    rng = np.random.default_rng(seed)
    centers = np.array([[-gap, 0.0], [gap, 0.0]])
    labels = np.repeat([0, 1], n)
    Z = centers[labels] + rng.normal(scale=0.5, size=(2 * n, 2))
    return Z, labels, centers


def random_graph_weights(seed, n=15, k=3, K=3):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, 2))
    pair = normalized_laplacian(knn_adjacency(Z, K))
    W = rng.random((n, k))
    W /= W.sum(axis=0)
    return rng, pair, W


def test_init_separated_blobs_uniform_columns():
    Z, labels, centers = two_blobs(0)
    W = init_weights(Z, centers, theta_percentile=100.0)
    for j in range(2):
        np.testing.assert_allclose(W[labels == j, j], 1.0 / 20)
        assert np.all(W[labels != j, j] == 0.0)
    check_weights(W)


def test_init_zero_percentile_point_masses():
    Z, _, centers = two_blobs(1)
    W = init_weights(Z, centers, theta_percentile=0.0, kmeans_iters=0)
    for j in range(2):
        col = W[:, j]
        assert np.count_nonzero(col) == 1
        assert np.argmax(col) == np.argmin(np.sum((Z - centers[j]) ** 2, axis=1))


def test_init_filter_drops_far_points():
    Z, labels, centers = two_blobs(2)
    W = init_weights(Z, centers, theta_percentile=50.0)
    support = (W > 0).sum()
    assert support < Z.shape[0]
    for j in range(2):
        assert np.all(labels[W[:, j] > 0] == j)
    check_weights(W)


def test_init_support_matches_hidden_labels_on_many_seeds():
    for seed in range(20):
        Z, labels, centers = two_blobs(seed)
        W = init_weights(Z, centers, theta_percentile=80.0)
        for j in range(2):
            assert np.all(labels[W[:, j] > 0] == j)


def test_init_rejects_empty_target():
    with pytest.raises(ValueError):
        init_weights(np.empty((0, 2)), np.zeros((2, 2)))


def test_class_centroids_and_hard_labels():
    Z = np.array([[0.0], [2.0], [10.0]])
    np.testing.assert_allclose(class_centroids(Z, [0, 0, 1], 2), [[1.0], [10.0]])
    with pytest.raises(ValueError):
        class_centroids(Z, [0, 0, 0], 2)
    W = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(hard_labels(W), [0, -1, 1])


def test_laplacian_single_edge():
    pair = normalized_laplacian(EDGE)
    np.testing.assert_array_equal(pair.L, [[1.0, -1.0], [-1.0, 1.0]])
    np.testing.assert_array_equal(pair.D, np.eye(2))


def test_laplacian_rejects_isolated_vertex_and_asymmetry():
    with pytest.raises(ValueError, match="isolated"):
        normalized_laplacian(np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
    with pytest.raises(ValueError):
        normalized_laplacian(np.array([[0.0, 1.0], [0.0, 0.0]]))


@pytest.mark.parametrize("seed", range(10))
def test_laplacian_null_space_and_psd(seed):
    _, pair, _ = random_graph_weights(seed, n=25)
    v = np.sqrt(np.diag(pair.D))
    assert np.max(np.abs(pair.L @ v)) < 1e-12
    np.testing.assert_array_equal(pair.L, pair.L.T)
    assert np.linalg.eigvalsh(pair.L).min() > -1e-12


def test_laplacian_disconnected_is_block_diagonal():
    A = np.zeros((4, 4))
    A[0, 1] = A[1, 0] = 1.0
    A[2, 3] = A[3, 2] = 1.0
    L = normalized_laplacian(A).L
    assert np.all(L[:2, 2:] == 0.0) and np.all(L[2:, :2] == 0.0)


def test_laplacian_loss_examples():
    L = normalized_laplacian(EDGE).L
    loss, _ = laplacian_loss_grad(np.array([[1.0], [0.0]]), L)
    assert loss == 1.0
    _, pair, _ = random_graph_weights(3, n=20)
    col = np.sqrt(np.diag(pair.D))
    W = (col / col.sum())[:, None]
    assert laplacian_loss_grad(W, pair.L)[0] < 1e-10
    with pytest.raises(ValueError):
        laplacian_loss_grad(np.ones((3, 1)), L)


@pytest.mark.parametrize("seed", range(10))
def test_laplacian_gradient_finite_differences(seed):
    _, pair, W = random_graph_weights(seed)
    f = lambda w: laplacian_loss_grad(w, pair.L)[0]  # noqa: E731
    assert rel_err(laplacian_loss_grad(W, pair.L)[1], central_difference(f, W)) < 1e-8


def test_update_identity_cases():
    _, pair, W = random_graph_weights(0)
    g = np.ones_like(W)
    for cfg in (SurrogateConfig(eta1=0.0, eta2=0.0), SurrogateConfig(T=0)):
        np.testing.assert_array_equal(update_weights(W, pair.L, g, cfg), W)


def test_update_hand_computed_step():
    # W=(.7,.3): 2LW=(.8,-.8); d1=(-.8,.8); d2=-(.8,.8)*(1,2)=(-.8,-1.6)
    # W + .5 d1 + .05 d2 = (.26,.62), projected: +.06 each -> (.32,.68)
    L = normalized_laplacian(EDGE).L
    W = np.array([[0.7], [0.3]])
    out = update_weights(W, L, np.array([[1.0], [2.0]]), SurrogateConfig(T=1, eta1=0.5, eta2=0.05))
    np.testing.assert_allclose(out, [[0.32], [0.68]], atol=1e-15)


def test_update_recomputes_mi_gradient_each_step():
    _, pair, W = random_graph_weights(1)
    seen = []

    def grad(w):
        seen.append(w.copy())
        return np.zeros_like(w)

    update_weights(W, pair.L, grad, SurrogateConfig(T=3))
    assert len(seen) == 3
    np.testing.assert_array_equal(seen[0], W)
    assert not np.array_equal(seen[1], seen[0])


@pytest.mark.parametrize("seed", range(5))
def test_laplacian_loss_non_increasing_without_mi(seed):
    _, pair, W = random_graph_weights(seed, n=30)
    losses = [laplacian_loss_grad(W, pair.L)[0]]
    update_weights(W, pair.L, None, SurrogateConfig(T=20, eta1=0.1),
                   callback=lambda step, w: losses.append(laplacian_loss_grad(w, pair.L)[0]))
    assert np.all(np.diff(losses) <= 1e-12)


def test_mi_force_is_gated_by_laplacian_gradient():
    # a column already in the null space has zero Laplacian gradient, so
    # no MI gradient can move it
    _, pair, _ = random_graph_weights(2, n=20)
    col = np.sqrt(np.diag(pair.D))
    W = (col / col.sum())[:, None]
    _, g_lap = laplacian_loss_grad(W, pair.L)
    assert np.max(np.abs(g_lap)) < 1e-12
    big = np.random.default_rng(0).normal(size=W.shape) * 1e6
    out = update_weights(W, pair.L, big, SurrogateConfig(T=1, eta1=0.0, eta2=1.0))
    np.testing.assert_allclose(out, W, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_invariants_after_init_and_every_step(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(8, 30)), int(rng.integers(2, 4))
    Z = rng.normal(size=(n, 2))
    W = init_weights(Z, rng.normal(size=(k, 2)), theta_percentile=float(rng.uniform(0, 100)))
    check_weights(W)
    cfg = SurrogateConfig(T=4)
    pair = target_laplacian(Z, cfg)
    update_weights(W, pair.L, lambda w: rng.normal(size=w.shape) * 10, cfg,
                   callback=lambda step, w: check_weights(w))


def test_check_weights_rejects_bad_matrices():
    with pytest.raises(AssertionError):
        check_weights(np.array([[0.5], [0.4]]))
    with pytest.raises(AssertionError):
        check_weights(np.array([[1.5], [-0.5]]))
    with pytest.raises(AssertionError):
        check_weights(np.array([[np.nan], [1.0]]))


def test_config_validation():
    with pytest.raises(ValueError):
        SurrogateConfig(K=0)
    with pytest.raises(ValueError):
        SurrogateConfig(theta_percentile=120.0)
