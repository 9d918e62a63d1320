"""Surrogate target weights on raw two-moons inputs.

Builds the per-class weight matrix W from nearest source centroids, then
smooths it over the target k-NN graph with projected Laplacian steps.
Each column of W stays a distribution over target points.
"""

# %%
import numpy as np

from sida.data import SyntheticSpec, generate_pair
from sida.numerics import simplex_project
from sida.surrogate import (SurrogateConfig, check_weights, class_centroids, hard_labels,
                            init_weights, laplacian_loss_grad, target_laplacian, update_weights)

# %% projection onto the simplex keeps order and clips the tail
v = np.array([0.9, 0.6, -0.2, 0.1])
p = simplex_project(v)
print("project", v, "->", p.round(3), "sum", p.sum())
print("projecting twice changes nothing:", np.array_equal(simplex_project(p), p))

# %% surrogate weights in input space (no encoder)
pair = generate_pair(SyntheticSpec(seed=0))
Xs, ys, Xt, yt = pair.source.X, pair.source.y, pair.target.X, pair.target.hidden_y
cfg = SurrogateConfig()

W = init_weights(Xt, class_centroids(Xs, ys, 2), cfg.theta_percentile, cfg.kmeans_iters)
lap = target_laplacian(Xt, cfg)


def label_accuracy(W):
    lab = hard_labels(W)
    kept = lab >= 0
    return np.mean(lab[kept] == yt[kept]), kept.mean()


acc, cov = label_accuracy(W)
print(f"init: label accuracy {acc:.3f} on {cov:.0%} of target")

# %% many more smoothing steps than one epoch uses, to show the trend
for rnd in range(1, 6):
    W = update_weights(W, lap.L, None, SurrogateConfig(T=20))
    check_weights(W)
    loss, _ = laplacian_loss_grad(W, lap.L)
    acc, cov = label_accuracy(W)
    print(f"after {20 * rnd:3d} steps: Tr(W'LW) {loss:.2e}, label accuracy {acc:.3f} on {cov:.0%}")
