"""Variational mutual-information machinery.

Pairs of features are scored by a clipped Euclidean distance critic. The
NWJ lower bound ``E_joint[f] - exp(-1) * E_marginal[exp(f)]`` is evaluated
in closed matrix form over a mixture of source and surrogate-target
conditionals, and differentiated both w.r.t. the surrogate weights and the
features themselves.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import squared_distances

EXP_CLAMP = 50.0


class ExpClampWarning(RuntimeWarning):
    """Raised (as a warning) when critic values were clamped before exp."""


@dataclass(frozen=True)
class ScoreParams:
    m1: float = 0.0
    m2: float = np.inf
    sign: int = -1
    eps_norm: float = 1e-8

    def __post_init__(self):
        if self.m1 > self.m2:
            raise ValueError(f"m1={self.m1} exceeds m2={self.m2}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.eps_norm <= 0:
            raise ValueError("eps_norm must be positive")


def threshold(a, m1, m2):
    """Clamp ``a`` into ``[m1, m2]``."""
    return np.maximum(m1, np.minimum(m2, a))


def score(z1, z2, params):
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if z1.shape != z2.shape:
        raise ValueError("feature vectors differ in dimension")
    d = z1 - z2
    r = np.sqrt(np.dot(d, d) + params.eps_norm**2)
    return float(params.sign * threshold(r, params.m1, params.m2))


def smoothed_distances(Z, eps_norm):
    return np.sqrt(squared_distances(Z) + eps_norm**2)


def score_matrix(Z_all, params):
    """``S[i, j] = score(z_i, z_j)`` for every pair of rows of ``Z_all``."""
    R = smoothed_distances(Z_all, params.eps_norm)
    return params.sign * threshold(R, params.m1, params.m2)


def _exp_clamped(S):
    if np.any(S > EXP_CLAMP):
        warnings.warn(f"critic values above {EXP_CLAMP} clamped before exp", ExpClampWarning, stacklevel=3)
        return np.exp(np.minimum(S, EXP_CLAMP))
    return np.exp(S)


def build_mixture_matrix(source_labels, n_classes, W):
    """Stack the source and surrogate conditionals into ``M = [P; W] / 2``.

    ``P[i, j] = 1 / count(j)`` when source sample ``i`` has label ``j``, so
    each column of ``P`` is the uniform distribution over that class.
    """
    y = np.asarray(source_labels, dtype=int)
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[1] != n_classes:
        raise ValueError(f"W must have {n_classes} columns")
    counts = np.bincount(y, minlength=n_classes)
    if counts.size > n_classes:
        raise ValueError("source label outside [0, n_classes)")
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise ValueError(f"classes {missing} have no source samples")
    P = np.zeros((y.size, n_classes))
    P[np.arange(y.size), y] = 1.0 / counts[y]
    return 0.5 * np.vstack([P, W])


def _check_shapes(M, S, n_classes):
    if S.shape != (M.shape[0], M.shape[0]):
        raise ValueError(f"S shape {S.shape} incompatible with M rows {M.shape[0]}")
    if M.shape[1] != n_classes:
        raise ValueError(f"M has {M.shape[1]} columns, expected n_classes={n_classes}")


def mi_loss(M, S, n_classes):
    """Negative NWJ bound in matrix form.

    ``-( Tr(M^T S M) / n_Y  -  1^T M^T exp(S) M 1 / (e * n_Y**2) )``
    """
    M = np.asarray(M, dtype=float)
    S = np.asarray(S, dtype=float)
    _check_shapes(M, S, n_classes)
    joint = np.sum(M * (S @ M)) / n_classes
    m = M.sum(axis=1)
    marginal = m @ _exp_clamped(S) @ m / (np.e * n_classes**2)
    return float(-(joint - marginal))


def mi_grad_m(M, S, n_classes):
    """Gradient of :func:`mi_loss` w.r.t. the whole mixture matrix ``M``."""
    _check_shapes(M, S, n_classes)
    m = M.sum(axis=1)
    eSm = _exp_clamped(S) @ m
    return -2.0 * (S @ M / n_classes - eSm[:, None] / (np.e * n_classes**2))


def mi_grad_w(M, S, n_classes, n_target):
    """Gradient of :func:`mi_loss` w.r.t. the surrogate block ``W``.

    ``W`` occupies the last ``n_target`` rows of ``M = [P; W] / 2``; the
    factor 1/2 from that stacking cancels the 2 of the M-gradient.
    """
    M = np.asarray(M, dtype=float)
    S = np.asarray(S, dtype=float)
    _check_shapes(M, S, n_classes)
    if not 0 < n_target <= M.shape[0]:
        raise ValueError(f"n_target={n_target} out of range")
    St = S[M.shape[0] - n_target:]
    m = M.sum(axis=1)
    eSm = _exp_clamped(St) @ m
    return -(St @ M / n_classes - eSm[:, None] / (np.e * n_classes**2))


def mi_loss_and_feature_grad(Z_all, M, params, n_classes):
    """:func:`mi_loss` at ``score_matrix(Z_all)`` and its gradient w.r.t. ``Z_all``.

    Pairs whose smoothed distance is clamped by the threshold contribute
    nothing. The ``eps_norm`` smoothing keeps the gradient finite at
    coincident points.
    """
    Z = np.asarray(Z_all, dtype=float)
    M = np.asarray(M, dtype=float)
    R = smoothed_distances(Z, params.eps_norm)
    S = params.sign * threshold(R, params.m1, params.m2)
    _check_shapes(M, S, n_classes)
    m = M.sum(axis=1)
    live = S <= EXP_CLAMP
    if not live.all():
        warnings.warn(f"critic values above {EXP_CLAMP} clamped before exp", ExpClampWarning, stacklevel=2)
    E = np.exp(np.minimum(S, EXP_CLAMP))
    MMt = M @ M.T
    c = 1.0 / (np.e * n_classes**2)
    loss = -(np.sum(MMt * S) / n_classes - c * (m @ E @ m))
    # dL/dS is symmetric, so both (i, j) and (j, i) entries give 2 * G
    G = np.where(live, E, 0.0) * np.outer(m, m) * c - MMt / n_classes
    active = (R > params.m1) & (R < params.m2)
    H = np.where(active, G * (2.0 * params.sign / R), 0.0)
    grad = Z * H.sum(axis=1, keepdims=True) - H @ Z
    return float(loss), grad


def mi_grad_features(Z_all, M, params, n_classes):
    """Gradient of :func:`mi_loss` w.r.t. the stacked features ``Z_all``."""
    return mi_loss_and_feature_grad(Z_all, M, params, n_classes)[1]


def nwj_estimate(joint_values, marginal_values, joint_weights=None, marginal_weights=None):
    """NWJ lower bound from critic values on joint and marginal pairs.

    Without weights the expectations are plain sample means. With weights
    (non-negative, normalized internally) the expectations are exact
    weighted sums; pairs of zero weight are ignored, so a critic of
    ``-inf`` there is allowed.
    """
    jv = np.asarray(joint_values, dtype=float).ravel()
    mv = np.asarray(marginal_values, dtype=float).ravel()
    if jv.size == 0 or mv.size == 0:
        raise ValueError("need at least one joint and one marginal pair")

    def expectation(values, weights, fn):
        if weights is None:
            return float(np.mean(fn(values)))
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != values.shape or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative, non-zero and match the values")
        keep = w > 0
        return float(np.sum(w[keep] * fn(values[keep])) / w.sum())

    def clamped_exp(v):
        if np.any(v > EXP_CLAMP):
            warnings.warn(f"critic values above {EXP_CLAMP} clamped before exp", ExpClampWarning, stacklevel=4)
        return np.exp(np.minimum(v, EXP_CLAMP))

    joint = expectation(jv, joint_weights, lambda v: v)
    marginal = expectation(mv, marginal_weights, clamped_exp)
    return joint - marginal / np.e


def discrete_mi_oracle(joint_table):
    """Exact mutual information (nats) of a discrete joint probability table."""
    p = np.asarray(joint_table, dtype=float)
    if p.ndim != 2 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("joint table must be a non-negative matrix summing to 1")
    rows = p.sum(axis=1, keepdims=True)
    cols = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / (rows * cols)[nz])))


def optimal_critic(joint_table):
    """``1 + log(p(a, b) / (p(a) p(b)))``; ``-inf`` where ``p(a, b) = 0``."""
    p = np.asarray(joint_table, dtype=float)
    outer = p.sum(axis=1, keepdims=True) * p.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore"):
        return 1.0 + np.log(p) - np.log(outer)


def nwj_on_table(joint_table, critic):
    """NWJ bound with exact expectations over a discrete joint table."""
    p = np.asarray(joint_table, dtype=float)
    critic = np.asarray(critic, dtype=float)
    outer = p.sum(axis=1, keepdims=True) * p.sum(axis=0, keepdims=True)
    return nwj_estimate(critic, critic, p, outer)


def mixture_pair_weights(M, n_classes):
    """Joint and marginal pair weights implied by ``M`` with uniform classes.

    Returns ``(joint, marginal)`` matrices over index pairs ``(i, j)``.
    """
    joint = (M @ M.T) / n_classes
    m = M.sum(axis=1) / n_classes
    return joint, np.outer(m, m)


def median_distance(Z):
    """Median off-diagonal pairwise distance of the rows of ``Z``."""
    D = np.sqrt(squared_distances(Z))
    iu = np.triu_indices(D.shape[0], k=1)
    if iu[0].size == 0:
        return 0.0
    return float(np.median(D[iu]))
