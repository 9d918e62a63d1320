"""The NWJ lower bound on mutual information, on cases with a known answer."""

# %%
import math

import numpy as np

from sida import mi
from sida.numerics import derive_rng

# %% discrete joint table: the optimal critic closes the gap exactly
joint = np.array([[0.30, 0.05, 0.05],
                  [0.05, 0.25, 0.05],
                  [0.02, 0.03, 0.20]])
exact = mi.discrete_mi_oracle(joint)
print(f"exact I(X;Y) = {exact:.6f}")
print(f"NWJ, optimal critic = {mi.nwj_on_table(joint, mi.optimal_critic(joint)):.6f}")

rng = derive_rng(0, "demo/critics")
for _ in range(3):
    critic = rng.normal(size=joint.shape)
    print(f"NWJ, random critic  = {mi.nwj_on_table(joint, critic):.6f}  (below the exact value)")

# %% correlated Gaussians, sampled: the estimate lands near -0.5 log(1 - rho^2)
rho, n = 0.9, 20000
x = rng.normal(size=n)
y = rho * x + math.sqrt(1 - rho**2) * rng.normal(size=n)
v = 1 - rho**2


def critic(a, b):
    # 1 + log density ratio
    return 1 - 0.5 * math.log(v) - (a * a - 2 * rho * a * b + b * b) / (2 * v) + (a * a + b * b) / 2


est = mi.nwj_estimate(critic(x, y), critic(x, rng.permutation(y)))
print(f"rho={rho}: estimate {est:.4f}, exact {-0.5 * math.log(v):.4f}")

# %% the matrix form used in training: a W that matches the clusters scores higher
labels = np.array([0, 0, 1, 1])
Z = np.vstack([[0, 0], [0.1, 0], [3, 3], [3.1, 3], [0, 0.1], [0.1, 0.1], [3, 3.1]])
S = mi.score_matrix(Z, mi.ScoreParams(m1=0.0, m2=10.0, sign=-1, eps_norm=1e-3))
matched = np.array([[0.5, 0.0], [0.5, 0.0], [0.0, 1.0]])
for name, W in {"matched": matched, "swapped": matched[:, ::-1]}.items():
    M = mi.build_mixture_matrix(labels, 2, W)
    # a lower bound: with a plain distance critic it can sit below zero
    print(f"{name}: MI estimate {-mi.mi_loss(M, S, 2):+.4f}")
