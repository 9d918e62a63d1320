"""Surrogate class-conditional distribution over target features.

``W`` is an ``n_T x n_Y`` column-stochastic matrix: column ``j`` is a
distribution over target samples standing in for the unknown target
class-conditional of class ``j``. It is seeded by K-means, smoothed over a
k-NN graph with a normalized-Laplacian penalty and nudged by the MI
gradient, projecting every column back onto the simplex after each step.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .numerics import kmeans, knn_adjacency, simplex_project, squared_distances

COLUMN_SUM_TOL = 1e-9


@dataclass
class SurrogateConfig:
    K: int = 3
    T: int = 3
    eta1: float = 0.5
    eta2: float = 0.05
    theta_percentile: float = 80.0
    kmeans_iters: int = 0  # 0: assign to the source centroids, no Lloyd steps
    adjacency: str = "binary"

    def __post_init__(self):
        if self.K < 1 or self.T < 0 or self.eta1 < 0 or self.eta2 < 0:
            raise ValueError("need K >= 1, T >= 0, eta1 >= 0, eta2 >= 0")
        if not 0.0 <= self.theta_percentile <= 100.0:
            raise ValueError("theta_percentile must be in [0, 100]")


class LaplacianPair(NamedTuple):
    A: np.ndarray
    L: np.ndarray
    D: np.ndarray


def check_weights(W, tol=COLUMN_SUM_TOL):
    """Raise ``AssertionError`` unless ``W`` is a valid surrogate matrix."""
    W = np.asarray(W)
    if W.ndim != 2 or not np.all(np.isfinite(W)):
        raise AssertionError("surrogate weights must be a finite matrix")
    if W.min() < 0.0 or W.max() > 1.0:
        raise AssertionError(f"surrogate weights outside [0, 1]: [{W.min()}, {W.max()}]")
    err = np.abs(W.sum(axis=0) - 1.0).max()
    if err > tol:
        raise AssertionError(f"surrogate column sums off by {err:.3e}")
    return W


def class_centroids(Z, labels, n_classes):
    Z = np.asarray(Z, dtype=float)
    labels = np.asarray(labels, dtype=int)
    out = np.empty((n_classes, Z.shape[1]))
    for c in range(n_classes):
        members = labels == c
        if not members.any():
            raise ValueError(f"class {c} has no samples")
        out[c] = Z[members].mean(axis=0)
    return out


def init_weights(Z_T, centroids, theta_percentile=80.0, kmeans_iters=10):
    """K-means surrogate with distance filtering.

    K-means runs from the per-class source centroids, so cluster ``j`` is
    class ``j``. Target ``i`` enters column ``j`` when ``j`` is its nearest
    final center and its distance to that center is below the
    ``theta_percentile``-th percentile of all nearest-center distances
    (100 keeps everything). Columns are normalized to sum to 1; an empty
    column becomes a point mass on the target nearest to its center.
    """
    Z_T = np.atleast_2d(np.asarray(Z_T, dtype=float))
    if Z_T.shape[0] == 0:
        raise ValueError("no target features")
    assign, centers = kmeans(Z_T, centroids, kmeans_iters)
    n, k = Z_T.shape[0], centers.shape[0]
    d2 = squared_distances(Z_T, centers)
    nearest_d = np.sqrt(d2[np.arange(n), assign])

    if theta_percentile >= 100.0:
        keep = np.ones(n, dtype=bool)
    else:
        theta = np.percentile(nearest_d, theta_percentile)
        keep = nearest_d < theta

    Wt = np.zeros((n, k))
    Wt[np.flatnonzero(keep), assign[keep]] = 1.0
    sums = Wt.sum(axis=0)
    for j in np.flatnonzero(sums == 0):
        Wt[np.argmin(d2[:, j]), j] = 1.0
        sums[j] = 1.0
    return Wt / sums


def hard_labels(W):
    """Label implied by ``W`` for each target row (-1 where the row is empty)."""
    W = np.asarray(W)
    lab = np.argmax(W, axis=1)
    lab[W.sum(axis=1) == 0] = -1
    return lab


def normalized_laplacian(A):
    """``L = I - D^{-1/2} A D^{-1/2}`` for a symmetric non-negative ``A``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be square")
    if np.any(A < 0) or not np.array_equal(A, A.T):
        raise ValueError("adjacency must be symmetric and non-negative")
    deg = A.sum(axis=1)
    if np.any(deg <= 0):
        raise ValueError(f"isolated vertices: {np.flatnonzero(deg <= 0).tolist()}")
    s = 1.0 / np.sqrt(deg)
    L = np.eye(A.shape[0]) - s[:, None] * A * s[None, :]
    L = 0.5 * (L + L.T)
    return LaplacianPair(A, L, np.diag(deg))


def target_laplacian(Z_T, cfg):
    A = knn_adjacency(Z_T, cfg.K, weighting=cfg.adjacency)
    return normalized_laplacian(A)


def laplacian_loss_grad(W, L):
    """``Tr(W^T L W)`` and its gradient ``2 L W``."""
    W = np.asarray(W, dtype=float)
    L = np.asarray(L, dtype=float)
    if L.shape != (W.shape[0], W.shape[0]):
        raise ValueError(f"L shape {L.shape} does not match W rows {W.shape[0]}")
    LW = L @ W
    return float(np.sum(W * LW)), 2.0 * LW


def update_weights(W, L, mi_grad, cfg, callback=None):
    """Run ``cfg.T`` projected steps ``W <- Proj(W + eta1*d1 + eta2*d2)``.

    ``d1 = -grad_lap`` and ``d2 = -|grad_lap| * grad_mi`` (entry-wise), so
    the MI force only acts where the Laplacian gradient is non-zero.

    ``mi_grad`` is either a callable ``W -> grad`` re-evaluated at every
    step, a fixed array, or ``None`` for no MI term. ``callback(step, W)``
    runs after each step.
    """
    W = np.array(W, dtype=float)
    for step in range(cfg.T):
        _, g_lap = laplacian_loss_grad(W, L)
        direction = -cfg.eta1 * g_lap
        if mi_grad is not None and cfg.eta2 != 0.0:
            g_mi = mi_grad(W) if callable(mi_grad) else np.asarray(mi_grad)
            direction -= cfg.eta2 * np.abs(g_lap) * g_mi
        W = simplex_project(W + direction)
        if callback is not None:
            callback(step, W)
    return W
