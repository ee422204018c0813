"""Checking a convergence guarantee against a Monte-Carlo ensemble.

A rate bound is a curve the mean trajectory must stay under.  The harness
runs an ensemble, picks the empirical quantity the guarantee is stated
about (plain mean f-gap here; weighted averages for the randomized-output
guarantees), and tests bound compliance at geometric checkpoints with a
statistical slack of a few standard errors.

Run with:  python3 demos/04_rate_bounds.py
"""

import numpy as np

from sgflow.bounds import BoundInputs, RateBound, ball_bound
from sgflow.harness import RunSpec, ball_experiment, ensemble_run, verify_bound
from sgflow.problems import make_isotropic_quadratic, make_perturbed_quadratic
from sgflow.schedules import AdjustmentSchedule

problem = make_perturbed_quadratic([1.0, 2.0], [0.0, 0.0],
                                   [[0.5, 0.3], [-0.5, -0.3]])
x0 = [1.0, 1.0]
adj = AdjustmentSchedule(h=0.25)

spec = RunSpec(mode="sgd", problem=problem, x0=x0, adj=adj, n_steps=2000,
               record_every=10)
stats = ensemble_run(spec, n_paths=300, master_seed=2024)

inputs = BoundInputs.from_problem(problem, x0, adj)
report = verify_bound(stats, RateBound("pl_dt", inputs), slack_se=3.0)

print(f"gradient-domination bound check: "
      f"{'PASS' if report.passed else 'FAIL'} "
      f"(worst margin {report.max_violation_se:.1f} SE, "
      f"{report.n_paths} paths)\n")
print(f"{'step':>6} {'mean f-gap':>12} {'bound':>12} {'se':>10}")
for t, emp, ref, se in list(zip(report.checkpoints, report.empirical,
                                report.reference, report.se))[::5]:
    print(f"{int(t):>6} {emp:>12.4e} {ref:>12.4e} {se:>10.2g}")

# With a constant schedule the mean f-gap cannot go to zero -- it settles on
# a noise floor, and the theory puts an exact number on it for the isotropic
# problem: h*d*sigma*^2/4 at mu = L.  The ball experiment runs long past the
# mixing time and compares the time-averaged tail against that level.
iso = make_isotropic_quadratic(2.0, 2, sigma_star_sq=0.1)
rep = ball_experiment(iso, h=1e-3, b=1, dt=1e-3, T_long=4.0, n_paths=400,
                      seed=5, mode="continuous")
det = rep.details
print(f"\nnoise-floor check: {'PASS' if rep.passed else 'FAIL'}")
print(f"  time-averaged tail   {det['tail_mean']:.4e}")
print(f"  exact level          {det['exact_level']:.4e}")
print(f"  relative error       {det['relative_error']:.2%}")
print(f"  discrete-mode bound is exactly twice the continuous one:",
      ball_bound(BoundInputs.from_problem(iso, [0.0, 0.0],
                                          AdjustmentSchedule(h=1e-3)),
                 "discrete")
      / ball_bound(BoundInputs.from_problem(iso, [0.0, 0.0],
                                            AdjustmentSchedule(h=1e-3)),
                   "continuous"))
