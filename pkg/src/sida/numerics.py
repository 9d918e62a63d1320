"""Dense numerical primitives shared by the rest of the package.

Everything here is a pure function of its inputs. Randomness is always
passed in explicitly as a :class:`numpy.random.Generator`; use
:func:`derive_rng` to split one integer seed into independent streams.
"""

import zlib

import numpy as np
from scipy.spatial.distance import cdist

# Simplex inputs this close to normalized are returned untouched, which makes
# the projection exactly idempotent.
_SIMPLEX_SUM_TOL = 1e-12


def derive_rng(seed, label):
    """Return a Generator for ``(seed, label)``.

    The same pair always yields the same stream, and different labels give
    statistically independent streams.
    """
    key = zlib.crc32(str(label).encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, key]))


def check_finite(a, name="input"):
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def simplex_project(v):
    """Euclidean projection onto the probability simplex.

    A 1-D input is projected as one vector. A 2-D input is projected
    column by column, so each column of the result is a distribution.

    Uses the sort-and-threshold rule: with ``u`` sorted descending, find the
    largest ``rho`` with ``u[rho] + (1 - sum(u[:rho+1])) / (rho+1) > 0`` and
    shift every entry by that amount before clipping at zero.
    """
    v = check_finite(v, "v")
    if v.ndim == 1:
        if v.size == 0:
            raise ValueError("cannot project an empty vector")
        return _project_columns(v[:, None])[:, 0]
    if v.ndim != 2 or v.shape[0] == 0:
        raise ValueError(f"expected a vector or matrix, got shape {v.shape}")
    return _project_columns(v)


def _project_columns(V):
    n = V.shape[0]
    u = -np.sort(-V, axis=0)
    css = np.cumsum(u, axis=0)
    k = np.arange(1, n + 1)[:, None]
    cond = u + (1.0 - css) / k > 0
    # cond holds on a prefix of rows; rho is its last index
    rho = np.maximum(cond.sum(axis=0) - 1, 0)
    cols = np.arange(V.shape[1])
    shift = (1.0 - css[rho, cols]) / (rho + 1.0)
    out = np.maximum(V + shift, 0.0)
    # V + shift cancels badly for large inputs; push the leftover sum error
    # back onto the support so outputs pass the settled test below
    support = out > 0
    resid = (1.0 - out.sum(axis=0)) / np.maximum(support.sum(axis=0), 1)
    out = np.maximum(out + np.where(support, resid, 0.0), 0.0)

    settled = np.all(V >= 0, axis=0) & (np.abs(V.sum(axis=0) - 1.0) <= _SIMPLEX_SUM_TOL)
    out[:, settled] = V[:, settled]
    return out


def pairwise_distances(Z, Y=None):
    """Euclidean distance matrix between the rows of ``Z`` (and ``Y``).

    Each entry is computed from coordinate differences, so ``D`` is exactly
    symmetric with an exactly zero diagonal when ``Y`` is omitted.
    """
    Z = check_finite(np.atleast_2d(Z), "Z")
    if Y is None:
        return cdist(Z, Z)
    Y = check_finite(np.atleast_2d(Y), "Y")
    return cdist(Z, Y)


def squared_distances(Z, Y=None):
    Z = check_finite(np.atleast_2d(Z), "Z")
    Y = Z if Y is None else check_finite(np.atleast_2d(Y), "Y")
    return cdist(Z, Y, "sqeuclidean")


def nearest_index(D):
    """Row-wise argmin with ties going to the lowest column index."""
    return np.argmin(D, axis=1)


def kmeans_objective(points, centers, assignments):
    diff = points - centers[assignments]
    return float(np.sum(diff * diff))


def kmeans(points, init_centers, max_iters=10):
    """Lloyd's algorithm started from ``init_centers``.

    Parameters
    ----------
    points : (n, d) array
    init_centers : (k, d) array
        Starting centers. Their order is preserved, so cluster ``j`` of the
        output grows out of ``init_centers[j]``.
    max_iters : int
        Number of (assign, update) rounds. With 0 the points are only
        assigned to the initial centers.

    Returns
    -------
    assignments : (n,) int array
        Index of the nearest final center for each point.
    centers : (k, d) array

    A cluster that loses all its points keeps its previous center.
    """
    points = check_finite(np.atleast_2d(points), "points")
    centers = check_finite(np.atleast_2d(init_centers), "init_centers").copy()
    if points.shape[0] == 0:
        raise ValueError("kmeans needs at least one point")
    if centers.shape[1] != points.shape[1]:
        raise ValueError(
            f"center dimension {centers.shape[1]} != point dimension {points.shape[1]}"
        )
    if max_iters < 0:
        raise ValueError("max_iters must be >= 0")

    k = centers.shape[0]
    assign = nearest_index(squared_distances(points, centers))
    for _ in range(max_iters):
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, points)
        occupied = counts > 0
        centers[occupied] = sums[occupied] / counts[occupied, None]
        new_assign = nearest_index(squared_distances(points, centers))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return assign, centers


def knn_adjacency(points, K, weighting="binary", bandwidth=None):
    """Symmetric k-nearest-neighbour graph.

    Edge ``(i, j)`` exists when ``j`` is one of the ``K`` nearest points to
    ``i`` (self excluded) or the other way round. Distance ties go to the
    lower index.

    ``weighting="binary"`` gives 0/1 entries. ``weighting="gaussian"`` puts
    ``exp(-d_ij**2 / (2 * bandwidth**2))`` on the same edges; the default
    bandwidth is the median edge length.
    """
    points = check_finite(np.atleast_2d(points), "points")
    n = points.shape[0]
    if K < 1 or K >= n:
        raise ValueError(f"K must satisfy 1 <= K < n (got K={K}, n={n})")

    D = pairwise_distances(points)
    masked = D.copy()
    np.fill_diagonal(masked, np.inf)
    nbrs = np.argsort(masked, axis=1, kind="stable")[:, :K]

    A = np.zeros((n, n))
    A[np.repeat(np.arange(n), K), nbrs.ravel()] = 1.0
    A = np.maximum(A, A.T)
    np.fill_diagonal(A, 0.0)

    if weighting == "binary":
        return A
    if weighting != "gaussian":
        raise ValueError(f"unknown weighting {weighting!r}")
    edges = A > 0
    if bandwidth is None:
        bandwidth = float(np.median(D[edges]))
        if bandwidth <= 0:
            bandwidth = 1.0
    W = np.where(edges, np.exp(-(D**2) / (2.0 * bandwidth**2)), 0.0)
    return np.maximum(W, W.T)
