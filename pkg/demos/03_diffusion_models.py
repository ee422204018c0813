"""How well the stochastic differential equations model the algorithms.

Two checks, both on problems with known answers:

 1. on the isotropic quadratic the constant-schedule diffusion is an
    Ornstein-Uhlenbeck process with a closed-form mean suboptimality, so the
    Euler-Maruyama simulator can be compared against an exact curve;
 2. the gap between the algorithm's mean iterate and the flow's mean decays
    linearly in the stepsize (first-order weak error) -- halving h halves it.

Run with:  python3 demos/03_diffusion_models.py
"""

import numpy as np

from sgflow.continuous import simulate_mb_pgf, simulate_vr_pgf
from sgflow.problems import (expected_value_ou, make_isotropic_quadratic,
                             make_spread_quadratic)
from sgflow.schedules import AdjustmentSchedule, BatchSchedule, StalenessSchedule

# --- Ornstein-Uhlenbeck closed form vs the simulator -----------------------
problem = make_isotropic_quadratic(mu=1.0, d=2, sigma_star_sq=0.25)
adj, batch = AdjustmentSchedule(h=0.05), BatchSchedule()
x0, T, dt = [2.0, 0.0], 4.0, 0.005

seeds = np.random.SeedSequence(11).spawn(400)
paths = np.array([
    simulate_mb_pgf(problem, adj, batch, x0, dt, T,
                    np.random.default_rng(s), record_every=100).f_gap
    for s in seeds])
ts = np.arange(paths.shape[1]) * (100 * dt)
print("mean f-gap of the simulated flow vs the exact OU curve (400 paths)\n")
print(f"{'t':>5} {'simulated':>12} {'exact':>12} {'se':>10}")
for i, t in enumerate(ts):
    exact = expected_value_ou(problem, x0, adj.h, 0.25, t)
    se = paths[:, i].std(ddof=1) / np.sqrt(len(seeds))
    print(f"{t:>5.1f} {paths[:, i].mean():>12.5f} {exact:>12.5f} {se:>10.2g}")

# --- weak error: the mean iterate error is O(h) -----------------------------
# For SGD on this problem E[x_K] = (1 - h)^K x0 while the flow's mean is
# e^{-T} x0; the difference shrinks linearly with h.
print("\nmean-iterate error of SGD vs the flow at T=1 (closed forms):")
prev = None
for h in (0.04, 0.02, 0.01, 0.005):
    K = round(1.0 / h)
    err = abs((1.0 - h) ** K - np.exp(-1.0)) * 2.0
    line = f"  h={h:<6} error={err:.6f}"
    if prev is not None:
        line += f"   ratio vs previous: {prev / err:.3f}"
    prev = err
    print(line)

# --- the delay equation behind variance reduction ---------------------------
# Its volatility depends on the distance to the last epoch-start state, so
# the noise dies out as the path converges; epoch ends optionally resample
# the state from the finished epoch (the jump part of the model).
spread = make_spread_quadratic(10.0, 1.0, d=1)
stale = StalenessSchedule(m=100, h=0.01)
tr = simulate_vr_pgf(spread, stale, [3.0], 0.002, 5.0, np.random.default_rng(3))
marks = tr.jump_flags.nonzero()[0]
print("\nvariance-reduced flow: squared distance at the five epoch ends")
print(" ", np.array2string(tr.dist_sq[marks], precision=3))
print("  (contrast: its own start was", tr.dist_sq[0], ")")
