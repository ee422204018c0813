"""Stochastic-gradient methods, their diffusion limits, and the rate bounds
they provably satisfy — with a Monte-Carlo harness that checks the bounds
empirically.

The package splits along the theory it implements:

``schedules``
    stepsize adjustment psi, batch-size and pivot-staleness schedules, and
    the deformed clock phi with its inverse.
``problems``
    finite-sum objectives with exact per-component gradients; quadratic
    test-problem factories and function-class verification.
``estimators``
    mini-batch and variance-reduced gradient estimates and their exact
    covariance matrices (with principal square roots).
``discrete``
    the three recursions: mini-batch SGD, the Gaussian surrogate (PGD) and
    the epoch-based variance-reduced method.
``continuous``
    Euler–Maruyama simulation of the matching diffusions: the annealed
    gradient flow, the variance-reduced delay diffusion, and the
    time-changed (unwarped) process.
``bounds``
    every convergence guarantee in closed form, admissibility checks and
    asymptotic-rate descriptors.
``harness``
    ensemble simulation with per-path seed spawning, one-sided bound
    verification, and the named experiments (time change, landscape
    stretching, weak-error order, convergence ball, supermartingale probe).

The ``sgflow`` command line exposes simulation, bound evaluation, and the
verification suite; see ``sgflow --help``.
"""

from .bounds import (
    CONTINUOUS_KINDS,
    DISCRETE_KINDS,
    AdmissibilityError,
    BoundInputs,
    RateBound,
    RateDescriptor,
    asymptotic_exponent,
    ball_bound,
    bound_discrete,
    bound_discrete_curve,
    bound_pl_ct,
    bound_smooth_ct,
    bound_vr,
    bound_wqc,
    equivalent_gradient_rhs,
    landscape_stretch_reference,
    lyapunov_energy,
)
from .continuous import (
    SdeSpec,
    euler_maruyama,
    simulate_mb_pgf,
    simulate_time_changed,
    simulate_vr_pgf,
)
from .discrete import Trajectory, run_mb_sgd, run_pgd, run_svrg_option2
from .estimators import (
    CovarianceReport,
    GradientEstimate,
    NotPsdError,
    estimate_sigma_star_sq,
    mb_estimate,
    principal_sqrt,
    sigma_mb,
    sigma_vr,
    vr_estimate,
)
from .harness import (
    EnsembleDivergenceError,
    EnsembleStats,
    RunSpec,
    VerificationReport,
    ball_experiment,
    ensemble_run,
    geometric_checkpoints,
    landscape_stretch_experiment,
    pl_supermartingale_probe,
    time_change_experiment,
    verify_bound,
    weak_error_experiment,
)
from .problems import (
    ClassReport,
    FiniteSumProblem,
    ProblemConstants,
    expected_value_ou,
    full_gradient,
    make_isotropic_quadratic,
    make_perturbed_quadratic,
    make_spread_quadratic,
    verify_class,
)
from .schedules import (
    AdjustmentSchedule,
    BatchSchedule,
    StalenessSchedule,
    discrete_phi,
    phi,
    phi_inverse,
    randomized_index,
    randomized_time,
)

__version__ = "0.1.0"

__all__ = [
    "AdjustmentSchedule",
    "AdmissibilityError",
    "BatchSchedule",
    "BoundInputs",
    "CONTINUOUS_KINDS",
    "ClassReport",
    "CovarianceReport",
    "DISCRETE_KINDS",
    "EnsembleDivergenceError",
    "EnsembleStats",
    "FiniteSumProblem",
    "GradientEstimate",
    "NotPsdError",
    "ProblemConstants",
    "RateBound",
    "RateDescriptor",
    "RunSpec",
    "SdeSpec",
    "StalenessSchedule",
    "Trajectory",
    "VerificationReport",
    "asymptotic_exponent",
    "ball_bound",
    "ball_experiment",
    "bound_discrete",
    "bound_discrete_curve",
    "bound_pl_ct",
    "bound_smooth_ct",
    "bound_vr",
    "bound_wqc",
    "discrete_phi",
    "ensemble_run",
    "equivalent_gradient_rhs",
    "estimate_sigma_star_sq",
    "euler_maruyama",
    "expected_value_ou",
    "full_gradient",
    "geometric_checkpoints",
    "landscape_stretch_experiment",
    "landscape_stretch_reference",
    "lyapunov_energy",
    "make_isotropic_quadratic",
    "make_perturbed_quadratic",
    "make_spread_quadratic",
    "mb_estimate",
    "phi",
    "phi_inverse",
    "pl_supermartingale_probe",
    "principal_sqrt",
    "randomized_index",
    "randomized_time",
    "run_mb_sgd",
    "run_pgd",
    "run_svrg_option2",
    "sigma_mb",
    "sigma_vr",
    "simulate_mb_pgf",
    "simulate_time_changed",
    "simulate_vr_pgf",
    "time_change_experiment",
    "verify_bound",
    "verify_class",
    "vr_estimate",
    "weak_error_experiment",
]
