"""The three discrete algorithms side by side on one problem.

The problem mixes the two kinds of gradient noise: its two components
disagree both by an additive vector (noise that persists at the minimizer)
and in curvature (noise that scales with the distance to the pivot).
MB-SGD samples component gradients; PGD replaces the sampling noise with a
Gaussian of matching covariance (the surrogate the diffusion models are
built on); SVRG recenters its draws at a per-epoch pivot.

Run with:  python3 demos/02_discrete_algorithms.py
"""

import numpy as np

from sgflow.discrete import run_mb_sgd, run_pgd, run_svrg_option2
from sgflow.problems import FiniteSumProblem, ProblemConstants
from sgflow.schedules import AdjustmentSchedule, BatchSchedule

problem = FiniteSumProblem.from_affine(
    D=np.array([[1.5], [0.5]]),          # component curvatures 1.5 and 0.5
    C=np.array([[0.4], [-0.4]]),         # additive disagreement, mean zero
    x_star=np.zeros(1),
    constants=ProblemConstants(L=1.5, f_star=0.0, mu_pl=0.5, mu_rsi=0.5,
                               tau_wqc=1.0))
x0, h = [3.0], 0.05
adj, batch = AdjustmentSchedule(h=h), BatchSchedule()
n_steps, m, n_epochs = 500, 100, 5

# average a few hundred independent runs of each method
n_reps = 200
rows = {"mb-sgd": [], "pgd": [], "svrg": []}
for rep in range(n_reps):
    seeds = np.random.SeedSequence([rep, 42]).spawn(3)
    rows["mb-sgd"].append(run_mb_sgd(problem, adj, batch, x0, n_steps,
                                     np.random.default_rng(seeds[0])).dist_sq)
    rows["pgd"].append(run_pgd(problem, adj, batch, x0, n_steps,
                               np.random.default_rng(seeds[1]),
                               volatility_mode="exact").dist_sq)
    rows["svrg"].append(run_svrg_option2(problem, h, m, n_epochs, x0,
                                         np.random.default_rng(seeds[2])).dist_sq)

print(f"mean squared distance to x*, {n_reps} runs each "
      f"(h={h}, {n_steps} steps = {n_epochs} epochs of {m})\n")
print(f"{'step':>6} {'mb-sgd':>12} {'pgd':>12} {'svrg':>12}")
for k in (0, 100, 200, 300, 400, 500):
    vals = [np.mean([r[k] for r in rows[name]])
            for name in ("mb-sgd", "pgd", "svrg")]
    print(f"{k:>6} {vals[0]:>12.3e} {vals[1]:>12.3e} {vals[2]:>12.3e}")

print("""
mb-sgd and pgd flatline on the same noise floor: the additive part of the
noise never shrinks, and the Gaussian surrogate matches its covariance.
svrg keeps contracting geometrically -- recentering at the epoch pivot
cancels additive noise entirely, and what is left (the curvature spread)
decays with the distance between iterate and pivot.""")
