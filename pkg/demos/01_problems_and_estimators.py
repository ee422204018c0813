"""Tour of the finite-sum test problems and the two gradient estimators.

Run with:  python3 demos/01_problems_and_estimators.py
"""

import numpy as np

from sgflow.estimators import (estimate_sigma_star_sq, mb_estimate,
                               principal_sqrt, sigma_mb, sigma_vr, vr_estimate)
from sgflow.problems import make_perturbed_quadratic, make_spread_quadratic

rng = np.random.default_rng(7)

# A diagonal quadratic whose two components disagree by an additive vector:
# f_i(x) = 1/2 <x, H x> + <c_i, x>, with c_1 + c_2 = 0 so the full gradient
# is exact.  The noise is the same at every point (additive).
problem = make_perturbed_quadratic(H_diag=[1.0, 2.0], x_star=[0.0, 0.0],
                                   noise_vectors=[[0.5, 0.3], [-0.5, -0.3]])
x = np.array([1.0, -1.0])
print("perturbed quadratic, d=2, N=2 components")
print("  full gradient      ", problem.grad(x))
print("  component gradients", problem.component_grad(0, x),
      problem.component_grad(1, x))
print("  declared constants  L=%g  mu=%g  sigma*^2=%g"
      % (problem.constants.L, problem.constants.mu_pl,
         problem.constants.sigma_star_sq))

# The mini-batch estimator averages b sampled component gradients.  It is
# unbiased, and its covariance is the population covariance divided by b.
draws_b1 = np.array([mb_estimate(problem, x, 1, rng).value
                     for _ in range(2000)])
print("\nmini-batch estimator at b=1 over 2000 draws")
print("  empirical mean ", draws_b1.mean(axis=0))
print("  exact covariance:\n", sigma_mb(problem, x).sigma_matrix)
print("  empirical covariance:\n", np.cov(draws_b1, rowvar=False))

# The variance-reduced estimator recenters each draw at a pivot point y.
# Its noise vanishes as x and y approach the minimizer together, which is
# what gives variance-reduced methods their fast epochs.  On an additive-
# noise problem it is exactly deterministic -- the recentering cancels the
# noise -- so a curvature-spread problem is the interesting case.
spread = make_spread_quadratic(lambda_mean=10.0, spread=1.0, d=2)
y = np.array([0.6, -0.2])
vr_draws = np.array([vr_estimate(spread, x, y, 1, rng).value
                     for _ in range(2000)])
print("\nvariance-reduced estimator on the curvature-spread problem")
print("  empirical mean ", vr_draws.mean(axis=0), " exact:", spread.grad(x))
print("  exact covariance (rank-1 in x - y):\n",
      sigma_vr(spread, x, y).sigma_matrix)
print("  at pivot == x the estimator is exact:",
      sigma_vr(spread, x, x).sigma_matrix.max() == 0.0)

# Matrix square roots of the covariances drive the diffusion simulators.
rep = sigma_mb(problem, x)
S = principal_sqrt(rep.sigma_matrix)
print("\nprincipal square root roundtrip error:",
      np.max(np.abs(S @ S - rep.sigma_matrix)))

# sigma*^2 is the worst one-sample covariance spectral norm over a sample of
# points; for additive noise it is the same everywhere.
pts = rng.normal(size=(64, 2))
print("estimated noise level over 64 random points:",
      estimate_sigma_star_sq(problem, pts),
      " declared:", problem.constants.sigma_star_sq)
