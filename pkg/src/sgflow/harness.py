"""Monte-Carlo ensemble runner and the verification experiments.

``ensemble_run`` simulates many independent sample paths of any of the six
run modes (the three discrete recursions and the three diffusions), derives
every path's generator from one master seed, and aggregates the observables
into means, variances and standard errors on a shared record grid.  Fast
vectorised kernels (:mod:`sgflow._kernels`) are used whenever the
configuration supports them; otherwise each path runs through the plain
simulator.  Either way the sample paths — and hence the statistics — are the
same, and results are deterministic functions of (config, seed).

On top of the runner sit the named experiments: rate-bound verification
(``verify_bound``), the time-change distribution match, landscape
stretching under the 1/(1+t) schedule, the weak-error order probe, the
convergence-ball level, and a Lyapunov supermartingale probe for
gradient-dominated runs.  Each returns a :class:`VerificationReport` with
per-checkpoint pass/fail detail; checks are one-sided against a bound plus
``slack_se`` standard errors, or two-sided within ``slack_se`` combined
standard errors for distribution matches.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import _kernels
from .bounds import (
    BoundInputs,
    RateBound,
    ball_bound,
    equivalent_gradient_rhs,
    landscape_stretch_reference,
)
from .continuous import (
    simulate_mb_pgf,
    simulate_time_changed,
    simulate_vr_pgf,
)
from .discrete import Trajectory, run_mb_sgd, run_pgd, run_svrg_option2
from .problems import FiniteSumProblem, ProblemConstants
from .schedules import (
    AdjustmentSchedule,
    BatchSchedule,
    StalenessSchedule,
    discrete_phi,
    phi,
    phi_inverse,
)

__all__ = [
    "EnsembleDivergenceError",
    "EnsembleStats",
    "RunSpec",
    "VerificationReport",
    "ensemble_run",
    "geometric_checkpoints",
    "verify_bound",
    "time_change_experiment",
    "landscape_stretch_experiment",
    "weak_error_experiment",
    "ball_experiment",
    "pl_supermartingale_probe",
]

_MODES = ("sgd", "pgd", "svrg", "mb-pgf", "vr-pgf", "time-changed")


class EnsembleDivergenceError(RuntimeError):
    """More than half of an ensemble's paths diverged."""


@dataclass
class EnsembleStats:
    """Cross-path statistics of the recorded observables on a shared grid.

    ``mean``/``variance`` map observable names to arrays over the grid:
    scalar observables ``f_gap``, ``grad_norm_sq``, ``dist_sq`` (shape
    (n_records,)), the per-coordinate ``state`` (shape (n_records, d)), and —
    when the run requested weight tracking — ``f_gap_wavg`` and
    ``grad_norm_sq_wavg``, the running psi-weighted averages that the
    randomized-output guarantees bound.  ``n_paths`` counts the paths that
    entered the statistics; diverged paths are excluded and counted
    separately.  Standard error is sqrt(variance / n_paths) throughout.
    """

    grid: np.ndarray
    record_ks: np.ndarray
    n_paths: int
    divergence_count: int
    mean: dict = field(default_factory=dict)
    variance: dict = field(default_factory=dict)

    def se(self, key: str) -> np.ndarray:
        return np.sqrt(self.variance[key] / self.n_paths)


@dataclass
class RunSpec:
    """One simulation configuration, shared by every path of an ensemble.

    mode selects the recursion/diffusion; the schedule fields that apply
    depend on it (see ``__post_init__`` for the exact requirements).  With
    ``weights=True`` the run also tracks the running psi-weighted averages of
    f-gap and squared gradient norm (prefix sums for the discrete modes,
    trapezoidal time integrals for mb-pgf), which the randomized-output
    bounds are stated against.
    """

    mode: str
    problem: FiniteSumProblem
    x0: np.ndarray
    adj: AdjustmentSchedule | None = None
    batch: BatchSchedule | None = None
    n_steps: int | None = None
    dt: float | None = None
    T: float | None = None
    h: float | None = None                 # svrg stepsize (psi = 1 regime)
    epoch_steps: int | None = None         # svrg epoch length m
    n_epochs: int | None = None
    staleness: StalenessSchedule | None = None  # vr-pgf epoch clock
    volatility_mode: str | None = None
    record_every: int = 1
    record_ks: np.ndarray | None = None
    weights: bool = False

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {_MODES}")
        self.x0 = np.asarray(self.x0, dtype=float).reshape(self.problem.d)
        if self.batch is None:
            self.batch = BatchSchedule()
        if self.mode in ("sgd", "pgd"):
            if self.adj is None or self.n_steps is None:
                raise ValueError(f"mode {self.mode!r} needs adj and n_steps")
        elif self.mode in ("mb-pgf", "time-changed"):
            if self.adj is None or self.dt is None or self.T is None:
                raise ValueError(f"mode {self.mode!r} needs adj, dt and T")
        elif self.mode == "svrg":
            if self.h is None or self.epoch_steps is None or self.n_epochs is None:
                raise ValueError("mode 'svrg' needs h, epoch_steps and n_epochs")
        elif self.mode == "vr-pgf":
            if self.staleness is None or self.dt is None or self.T is None:
                raise ValueError("mode 'vr-pgf' needs staleness, dt and T")
        if self.volatility_mode is None:
            self.volatility_mode = "constant" if self.mode == "time-changed" else "exact"
        if self.weights and self.mode in ("svrg", "vr-pgf", "time-changed"):
            raise ValueError(f"weighted averages are not defined for mode {self.mode!r}")

    @property
    def total_steps(self) -> int:
        if self.mode in ("sgd", "pgd"):
            return int(self.n_steps)
        if self.mode == "svrg":
            return self.epoch_steps * self.n_epochs
        return int(round(self.T / self.dt))

    @property
    def grid_spacing(self) -> float:
        if self.mode in ("sgd", "pgd"):
            return self.adj.h
        if self.mode == "svrg":
            return self.h
        return self.dt

    def resolved_record_ks(self) -> np.ndarray:
        n = self.total_steps
        if self.record_ks is not None:
            ks = np.asarray(self.record_ks, dtype=int)
            if ks.ndim != 1 or ks.size == 0 or np.any(np.diff(ks) <= 0):
                raise ValueError("record_ks must be a non-empty increasing index array")
            if ks[0] < 0 or ks[-1] > n:
                raise ValueError(f"record_ks out of range [0, {n}]")
            return ks
        ks = np.arange(0, n + 1, self.record_every)
        if ks[-1] != n:
            ks = np.append(ks, n)
        return ks


def geometric_checkpoints(last: int, n_points: int = 30, start: int = 1) -> np.ndarray:
    """~n_points geometrically spaced integer checkpoints in [start, last]."""
    if last < start:
        raise ValueError(f"need last >= start, got [{start}, {last}]")
    raw = np.geomspace(start, last, n_points)
    return np.unique(np.round(raw).astype(int))


# -- ensemble runner ---------------------------------------------------------


def _observable_arrays(problem: FiniteSumProblem, states: np.ndarray):
    """(f_gap, grad_norm_sq, dist_sq) row-wise for a (n, d) block of states."""
    if problem.affine is not None:
        U = states - problem.x_star
        d_mean = problem.affine.D.mean(axis=0)
        c_mean = problem.affine.C.mean(axis=0)
        G = U * d_mean + c_mean
        f_gap = (0.5 * np.einsum("nd,nd->n", U, U * d_mean) + U @ c_mean
                 - problem.constants.f_star)
        return f_gap, np.einsum("nd,nd->n", G, G), np.einsum("nd,nd->n", U, U)
    f_gap = np.empty(states.shape[0])
    grad_sq = np.empty(states.shape[0])
    dist_sq = np.empty(states.shape[0])
    for i, row in enumerate(states):
        g = problem.grad(row)
        f_gap[i] = problem.gap(row)
        grad_sq[i] = float(g @ g)
        dist_sq[i] = float(np.sum((row - problem.x_star) ** 2))
    return f_gap, grad_sq, dist_sq


def _node_weights(spec: RunSpec) -> np.ndarray:
    """psi at every step index (discrete) or grid node (continuous)."""
    n = spec.total_steps
    if spec.mode in ("sgd", "pgd"):
        return np.asarray(spec.adj.psi_k(np.arange(n + 1)), dtype=float)
    return np.array([spec.adj.psi(k * spec.dt) for k in range(n + 1)])


def weight_denominators(spec: RunSpec, ks: np.ndarray) -> np.ndarray:
    """Denominators of the weighted averages at the recorded steps.

    Discrete modes use the exact prefix sums Phi_{k+1}; mb-pgf uses the same
    trapezoidal quadrature of psi that the numerators accumulate, so the
    weighted average is exact for constant integrands.  The t=0 entry of a
    continuous run has an empty integral and yields NaN.
    """
    w = _node_weights(spec)
    if spec.mode in ("sgd", "pgd"):
        return np.cumsum(w)[ks]
    cum = np.concatenate(([0.0], np.cumsum(0.5 * spec.dt * (w[:-1] + w[1:]))))
    denom = cum[ks]
    return np.where(denom > 0, denom, np.nan)


def _run_one_path(spec: RunSpec, rng: np.random.Generator) -> Trajectory:
    if spec.mode == "sgd":
        return run_mb_sgd(spec.problem, spec.adj, spec.batch, spec.x0,
                          spec.n_steps, rng)
    if spec.mode == "pgd":
        return run_pgd(spec.problem, spec.adj, spec.batch, spec.x0,
                       spec.n_steps, rng, volatility_mode=spec.volatility_mode)
    if spec.mode == "svrg":
        return run_svrg_option2(spec.problem, spec.h, spec.epoch_steps,
                                spec.n_epochs, spec.x0, rng)
    if spec.mode == "mb-pgf":
        return simulate_mb_pgf(spec.problem, spec.adj, spec.batch, spec.x0,
                               spec.dt, spec.T, rng,
                               volatility_mode=spec.volatility_mode)
    if spec.mode == "vr-pgf":
        return simulate_vr_pgf(spec.problem, spec.staleness, spec.x0,
                               spec.dt, spec.T, rng)
    return simulate_time_changed(spec.problem, spec.adj, spec.batch, spec.x0,
                                 spec.dt, spec.T, rng,
                                 volatility_mode=spec.volatility_mode)


def _kernel_dispatch(spec: RunSpec, gens, ks: np.ndarray) -> _kernels.KernelResult | None:
    if not _kernels.supports_kernel(spec.mode, spec.problem, spec.batch):
        return None
    try:
        if spec.mode == "sgd":
            return _kernels.kernel_mb_sgd(spec.problem, spec.adj, spec.batch,
                                          spec.x0, spec.n_steps, gens, ks,
                                          weights=spec.weights)
        if spec.mode == "pgd":
            return _kernels.kernel_pgd(spec.problem, spec.adj, spec.batch,
                                       spec.x0, spec.n_steps, gens, ks,
                                       volatility_mode=spec.volatility_mode,
                                       weights=spec.weights)
        if spec.mode == "mb-pgf":
            return _kernels.kernel_mb_pgf(spec.problem, spec.adj, spec.batch,
                                          spec.x0, spec.dt, spec.total_steps,
                                          gens, ks,
                                          volatility_mode=spec.volatility_mode,
                                          weights=spec.weights)
        if spec.mode == "time-changed":
            return _kernels.kernel_time_changed(spec.problem, spec.adj,
                                                spec.batch, spec.x0, spec.dt,
                                                spec.total_steps, gens, ks,
                                                volatility_mode=spec.volatility_mode)
        if spec.mode == "svrg":
            return _kernels.kernel_svrg(spec.problem, spec.h, spec.epoch_steps,
                                        spec.n_epochs, spec.x0, gens, ks)
        if spec.mode == "vr-pgf":
            return _kernels.kernel_vr_pgf(spec.problem, spec.staleness, spec.x0,
                                          spec.dt, spec.total_steps, gens, ks)
    except ValueError:
        return None  # shape not covered (e.g. non-constant volatility) — fall back
    return None


def ensemble_run(spec: RunSpec, n_paths: int, master_seed,
                 use_kernels: bool = True) -> EnsembleStats:
    """Simulate n_paths independent paths and aggregate their observables.

    Per-path generators are spawned from ``master_seed`` (an int or a
    numpy SeedSequence), so results are reproducible and independent of how
    the work is batched.  Paths that diverge are dropped from the statistics
    and counted; more than 50% divergence raises
    :class:`EnsembleDivergenceError`.
    """
    if n_paths < 2:
        raise ValueError("an ensemble needs n_paths >= 2")
    ks = spec.resolved_record_ks()
    seq = (master_seed if isinstance(master_seed, np.random.SeedSequence)
           else np.random.SeedSequence(master_seed))
    gens = [np.random.default_rng(child) for child in seq.spawn(n_paths)]
    n_rec = ks.size
    d = spec.problem.d

    result = _kernel_dispatch(spec, gens, ks) if use_kernels else None
    if result is not None:
        states = result.states
        diverged = result.diverged
        wsum_f, wsum_g = result.wsum_f_gap, result.wsum_grad_sq
    else:
        states = np.empty((n_paths, n_rec, d))
        diverged = np.zeros(n_paths, dtype=bool)
        wsum_f = np.zeros((n_paths, n_rec)) if spec.weights else None
        wsum_g = np.zeros((n_paths, n_rec)) if spec.weights else None
        node_w = _node_weights(spec) if spec.weights else None
        for p, rng in enumerate(gens):
            tr = _run_one_path(spec, rng)
            if tr.diverged:
                diverged[p] = True
                continue
            states[p] = tr.states[ks]
            if spec.weights:
                f_all, g_all, _ = _observable_arrays(spec.problem, tr.states)
                if spec.mode in ("sgd", "pgd"):
                    wsum_f[p] = np.cumsum(node_w * f_all)[ks]
                    wsum_g[p] = np.cumsum(node_w * g_all)[ks]
                else:
                    wf, wg = node_w * f_all, node_w * g_all
                    cf = np.concatenate(([0.0], np.cumsum(
                        0.5 * spec.dt * (wf[:-1] + wf[1:]))))
                    cg = np.concatenate(([0.0], np.cumsum(
                        0.5 * spec.dt * (wg[:-1] + wg[1:]))))
                    wsum_f[p] = cf[ks]
                    wsum_g[p] = cg[ks]

    div_count = int(diverged.sum())
    if div_count * 2 > n_paths:
        raise EnsembleDivergenceError(
            f"{div_count}/{n_paths} paths diverged; the configuration is "
            "unstable (check the stepsize against the admissibility conditions)")
    alive = ~diverged
    n_alive = int(alive.sum())
    if n_alive < 2:
        raise EnsembleDivergenceError("fewer than two non-divergent paths")

    states = states[alive]
    flat = states.reshape(-1, d)
    f_gap, grad_sq, dist_sq = _observable_arrays(spec.problem, flat)
    obs = {
        "f_gap": f_gap.reshape(n_alive, n_rec),
        "grad_norm_sq": grad_sq.reshape(n_alive, n_rec),
        "dist_sq": dist_sq.reshape(n_alive, n_rec),
    }
    stats = EnsembleStats(grid=ks * spec.grid_spacing, record_ks=ks,
                          n_paths=n_alive, divergence_count=div_count)
    for key, block in obs.items():
        stats.mean[key] = block.mean(axis=0)
        stats.variance[key] = block.var(axis=0, ddof=1)
    stats.mean["state"] = states.mean(axis=0)
    stats.variance["state"] = states.var(axis=0, ddof=1)
    if spec.weights:
        denom = weight_denominators(spec, ks)
        for key, wsum in (("f_gap_wavg", wsum_f), ("grad_norm_sq_wavg", wsum_g)):
            wavg = wsum[alive] / denom
            stats.mean[key] = wavg.mean(axis=0)
            stats.variance[key] = wavg.var(axis=0, ddof=1)
    return stats


# -- reports -----------------------------------------------------------------


@dataclass
class VerificationReport:
    """Per-checkpoint outcome of one experiment.

    ``reference`` holds the bound (one-sided checks) or the target value
    (two-sided checks); ``violation_se`` is (empirical - reference)/SE for
    one-sided checks and |empirical - reference|/SE for two-sided ones, so
    the experiment passes when enough checkpoints have violation_se <=
    slack_se.  ``details`` carries experiment-specific extras (fitted
    slopes, error ratios, sub-reports).
    """

    experiment: str
    passed: bool
    checkpoints: np.ndarray
    empirical: np.ndarray
    reference: np.ndarray
    se: np.ndarray
    checkpoint_pass: np.ndarray
    slack_se: float
    max_violation_se: float
    n_paths: int
    runtime_seconds: float
    details: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, float)):
                f = float(v)
                return f if math.isfinite(f) else repr(f)
            if isinstance(v, (np.integer, int)):
                return int(v)
            if isinstance(v, (np.bool_, bool)):
                return bool(v)
            if isinstance(v, np.ndarray):
                return [clean(x) for x in v.tolist()]
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if isinstance(v, dict):
                return {str(k): clean(x) for k, x in v.items()}
            if isinstance(v, VerificationReport):
                return v.to_json_dict()
            return v
        return {
            "experiment": self.experiment,
            "passed": bool(self.passed),
            "slack_se": float(self.slack_se),
            "max_violation_se": clean(self.max_violation_se),
            "n_paths": int(self.n_paths),
            "runtime_seconds": float(self.runtime_seconds),
            "checkpoints": [
                {"at": clean(c), "empirical": clean(e), "reference": clean(r),
                 "se": clean(s), "pass": bool(p)}
                for c, e, r, s, p in zip(self.checkpoints, self.empirical,
                                         self.reference, self.se,
                                         self.checkpoint_pass)
            ],
            "details": clean(self.details),
        }


def _violations(empirical, reference, se, slack_se, two_sided=False):
    emp = np.asarray(empirical, dtype=float)
    ref = np.asarray(reference, dtype=float)
    se = np.asarray(se, dtype=float)
    delta = np.abs(emp - ref) if two_sided else emp - ref
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(se > 0, delta / np.where(se > 0, se, 1.0),
                     np.where(delta <= 0, 0.0, np.inf))
    ok = (delta <= slack_se * se) | (delta <= 0)
    return v, ok


def _finish_report(experiment, checkpoints, empirical, reference, se, slack_se,
                   n_paths, t0, details=None, two_sided=False,
                   min_pass_fraction=1.0) -> VerificationReport:
    v, ok = _violations(empirical, reference, se, slack_se, two_sided)
    frac = float(ok.mean()) if ok.size else 1.0
    passed = frac >= min_pass_fraction
    details = dict(details or {})
    details.setdefault("pass_fraction", frac)
    return VerificationReport(
        experiment=experiment, passed=bool(passed),
        checkpoints=np.asarray(checkpoints), empirical=np.asarray(empirical, dtype=float),
        reference=np.asarray(reference, dtype=float), se=np.asarray(se, dtype=float),
        checkpoint_pass=ok, slack_se=slack_se,
        max_violation_se=float(np.max(v, initial=-np.inf)),
        n_paths=n_paths, runtime_seconds=time.perf_counter() - t0,
        details=details)


# -- bound verification ------------------------------------------------------

_OBSERVABLE_FOR_KIND = {
    "smooth_ct": "grad_norm_sq_wavg",
    "wqc_rand_ct": "f_gap_wavg",
    "wqc_last_ct": "f_gap",
    "pl_ct": "f_gap",
    "smooth_dt": "grad_norm_sq_wavg",
    "wqc_rand_dt": "f_gap_wavg",
    "wqc_last_dt": "f_gap",
    "pl_dt": "f_gap",
    "vr_ct": "dist_sq",
    "vr_dt": "dist_sq",
}


def verify_bound(stats: EnsembleStats, bound: RateBound, slack_se: float = 3.0,
                 checkpoints: np.ndarray | None = None,
                 n_checkpoints: int = 30) -> VerificationReport:
    """One-sided Monte-Carlo check of a rate guarantee.

    The empirical quantity is chosen to match what the guarantee bounds:
    the psi-weighted average of |grad f|^2 (smooth kinds) or of the f-gap
    (randomized weakly-quasi-convex kinds) — computed by exact quadrature
    over the whole trajectory rather than by sampling the random time —
    the plain mean f-gap (last-iterate and gradient-domination kinds), or the
    mean squared distance at epoch marks (variance-reduced kinds).  Discrete
    last-iterate guarantees for x_k are evaluated as bound_discrete(k-1).

    ``checkpoints`` are positions in the stats grid (indices into
    ``stats.record_ks``); by default ~n_checkpoints geometric positions over
    the admissible part of the grid (epoch marks for the variance-reduced
    kinds).  Every checkpoint must satisfy mean <= bound + slack_se * SE.
    """
    key = _OBSERVABLE_FOR_KIND[bound.kind]
    if key not in stats.mean:
        raise ValueError(f"stats lack the {key!r} observable required by "
                         f"{bound.kind!r} (run with weights=True?)")
    ks = stats.record_ks
    t0 = time.perf_counter()

    if bound.kind == "vr_dt":
        m = bound.inputs.m
        if m is None:
            raise ValueError("the discrete variance-reduced bound needs inputs.m")
        pos = np.nonzero(ks % m == 0)[0]
        if pos.size == 0:
            raise ValueError("no epoch marks on the record grid")
        epochs = ks[pos] // m
        reference = np.array([bound.evaluate(j) for j in epochs])
        where = epochs
    elif bound.kind == "vr_ct":
        m = bound.inputs.m
        if m is None:
            raise ValueError("the continuous variance-reduced bound needs inputs.m")
        epoch_time = m * bound.inputs.h
        j_near = np.round(stats.grid / epoch_time).astype(int)
        on_mark = np.abs(stats.grid - j_near * epoch_time) <= 1e-9 * max(1.0, epoch_time)
        pos = np.nonzero(on_mark)[0]
        if pos.size == 0:
            raise ValueError("no epoch marks on the record grid")
        epochs = j_near[pos]
        reference = np.array([bound.evaluate(j) for j in epochs])
        where = epochs
    else:
        first = 1 if ks[0] == 0 else 0
        if checkpoints is None:
            if ks.size - first < 1:
                raise ValueError("record grid has no usable checkpoints")
            pick = geometric_checkpoints(ks.size - 1, n_checkpoints, start=first)
            pos = np.asarray(pick, dtype=int)
        else:
            pos = np.asarray(checkpoints, dtype=int)
            if np.any((pos < 0) | (pos >= ks.size)):
                raise ValueError("checkpoint positions outside the record grid")
            if np.any(ks[pos] == 0):
                raise ValueError("checkpoints must sit at positive times/steps")
        if bound.is_continuous:
            where = stats.grid[pos]
            reference = np.array([bound.evaluate(t) for t in where])
        else:
            where = ks[pos]
            if bound.kind in ("wqc_last_dt", "pl_dt"):
                reference = np.array([bound.evaluate(k - 1) for k in where])
            else:
                reference = np.array([bound.evaluate(k) for k in where])

    empirical = stats.mean[key][pos]
    se = stats.se(key)[pos]
    return _finish_report(f"bound:{bound.kind}", where, empirical, reference,
                          se, slack_se, stats.n_paths, t0,
                          details={"observable": key})


# -- time change -------------------------------------------------------------


def time_change_experiment(problem: FiniteSumProblem, x0, h: float, T_w: float,
                           n_paths: int, seed, dt: float | None = None,
                           n_checkpoints: int = 30, slack_se: float = 3.0,
                           min_pass_fraction: float = 0.95,
                           use_kernels: bool = True) -> VerificationReport:
    """Distribution match between the annealed flow and its unwarped twin.

    Simulates X under the 1/(1+t)-annealed flow on [0, tau(T_w)] and Y under
    the constant-drift flow with decaying noise on [0, T_w], with independent
    noise, and compares mean and standard deviation of the state at warped
    checkpoints: Y(t) should equal X(tau(t)) in law.  A checkpoint passes
    when both moments agree within slack_se combined standard errors; the
    experiment passes when at least ``min_pass_fraction`` of checkpoints do.
    """
    if problem.constants.sigma_star_sq is None:
        raise ValueError("the time-change experiment runs in constant-volatility "
                         "mode and needs a declared sigma_star_sq")
    x0 = np.asarray(x0, dtype=float)
    t0 = time.perf_counter()
    adj = AdjustmentSchedule(h=h, family="power", a=1.0)
    dt = h if dt is None else dt
    T_x = float(phi_inverse(adj, T_w))
    n_x = int(math.ceil(T_x / dt))
    n_y = int(math.ceil(T_w / dt))

    warped_pos = geometric_checkpoints(n_y, n_checkpoints, start=1)
    s_times = warped_pos * dt
    x_pos = np.round(np.asarray(phi_inverse(adj, s_times)) / dt).astype(int)
    x_pos = np.minimum(np.maximum(x_pos, 1), n_x)
    x_ks = np.unique(x_pos)
    y_ks = warped_pos

    seq = (seed if isinstance(seed, np.random.SeedSequence)
           else np.random.SeedSequence(seed))
    seed_x, seed_y = seq.spawn(2)
    spec_x = RunSpec(mode="mb-pgf", problem=problem, x0=x0, adj=adj, dt=dt,
                     T=n_x * dt, record_ks=x_ks, volatility_mode="constant")
    spec_y = RunSpec(mode="time-changed", problem=problem, x0=x0, adj=adj,
                     dt=dt, T=n_y * dt, record_ks=y_ks,
                     volatility_mode="constant")
    stats_x = ensemble_run(spec_x, n_paths, seed_x, use_kernels)
    stats_y = ensemble_run(spec_y, n_paths, seed_y, use_kernels)

    lookup = {k: i for i, k in enumerate(x_ks)}
    sel = np.array([lookup[k] for k in x_pos])
    mean_x = stats_x.mean["state"][sel]          # (n_cp, d)
    mean_y = stats_y.mean["state"]
    var_x = stats_x.variance["state"][sel]
    var_y = stats_y.variance["state"]
    n_x_paths, n_y_paths = stats_x.n_paths, stats_y.n_paths

    se_mean = np.sqrt(var_x / n_x_paths + var_y / n_y_paths)
    std_x, std_y = np.sqrt(var_x), np.sqrt(var_y)
    # large-sample SE of a sample standard deviation: sd / sqrt(2 (n - 1))
    se_std = np.sqrt(std_x ** 2 / (2 * (n_x_paths - 1))
                     + std_y ** 2 / (2 * (n_y_paths - 1)))
    dm = np.abs(mean_x - mean_y)
    ds = np.abs(std_x - std_y)
    with np.errstate(divide="ignore", invalid="ignore"):
        v_mean = np.where(se_mean > 0, dm / np.where(se_mean > 0, se_mean, 1.0),
                          np.where(dm == 0, 0.0, np.inf))
        v_std = np.where(se_std > 0, ds / np.where(se_std > 0, se_std, 1.0),
                         np.where(ds == 0, 0.0, np.inf))
    ok = ((dm <= slack_se * se_mean) & (ds <= slack_se * se_std)).all(axis=1)
    frac = float(ok.mean())
    details = {
        "pass_fraction": frac,
        "min_pass_fraction": min_pass_fraction,
        "warped_horizon": T_w,
        "unwarped_horizon": T_x,
        "mean_x": mean_x, "mean_y": mean_y,
        "std_x": std_x, "std_y": std_y,
        "std_violation_se": v_std,
    }
    return VerificationReport(
        experiment="time-change", passed=frac >= min_pass_fraction,
        checkpoints=s_times, empirical=mean_y[:, 0], reference=mean_x[:, 0],
        se=se_mean[:, 0], checkpoint_pass=ok, slack_se=slack_se,
        max_violation_se=float(np.max(np.maximum(v_mean, v_std), initial=-np.inf)),
        n_paths=min(n_x_paths, n_y_paths),
        runtime_seconds=time.perf_counter() - t0, details=details)


# -- landscape stretching ----------------------------------------------------


def landscape_stretch_experiment(lambda_vec, x0, dt: float, T: float,
                                 n_paths: int = 1, seed=0, sigma: float = 0.0,
                                 slack_se: float = 3.0, tol_mult: float = 5.0,
                                 slope_tol: float = 0.02,
                                 n_checkpoints: int = 30) -> VerificationReport:
    """Closed-form check of the 1/(1+t) schedule on a diagonal quadratic.

    Each coordinate of the annealed flow should follow (1+t)^(-lambda_i)
    x0_i — a power law whose exponent is the local curvature, saddle
    directions (lambda_i < 0) included.  Deterministic runs (sigma = 0)
    are compared pathwise with an O(dt) tolerance (tol_mult * dt * |x0|);
    noisy runs compare the ensemble mean within slack_se standard errors
    plus the same discretization allowance.  The autonomous
    equivalent-gradient ODE — plain gradient flow on the stretched
    landscape — is Euler-integrated on the same grid and must reproduce the
    same curves, and each nonzero coordinate's slope of log|u| against
    log(1+t) over the late segment must match -lambda_i within slope_tol.
    """
    lam = np.asarray(lambda_vec, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if lam.shape != x0.shape or lam.ndim != 1:
        raise ValueError("lambda_vec and x0 must be 1-d arrays of equal length")
    d = lam.size
    t0_clock = time.perf_counter()
    L = float(np.max(np.abs(lam)))
    if L <= 0:
        raise ValueError("at least one lambda must be nonzero")
    constants = ProblemConstants(L=L, sigma_star_sq=float(sigma) ** 2)
    problem = FiniteSumProblem.from_affine(
        D=lam[None, :], C=np.zeros((1, d)), x_star=np.zeros(d),
        constants=constants)
    adj = AdjustmentSchedule(h=1.0, family="power", a=1.0)
    n_steps = int(round(T / dt))

    if sigma == 0.0:
        tr = simulate_mb_pgf(problem, adj, BatchSchedule(), x0, dt, n_steps * dt,
                             np.random.default_rng(0), volatility_mode="constant")
        mean_states = tr.states
        se_states = np.zeros_like(mean_states)
        times = tr.times
        n_used = 1
    else:
        spec = RunSpec(mode="mb-pgf", problem=problem, x0=x0, adj=adj, dt=dt,
                       T=n_steps * dt, volatility_mode="constant")
        stats = ensemble_run(spec, n_paths, seed)
        mean_states = stats.mean["state"]
        se_states = np.sqrt(stats.variance["state"] / stats.n_paths)
        times = stats.grid
        n_used = stats.n_paths

    ref = np.stack([landscape_stretch_reference(lam[i], x0[i], times)
                    for i in range(d)], axis=1)
    tol = tol_mult * dt * float(np.linalg.norm(x0))

    # autonomous equivalent-gradient ODE, Euler on the same grid
    ode = np.empty((n_steps + 1, d))
    ode[0] = x0
    u = x0.copy()
    for k in range(n_steps):
        du = np.array([equivalent_gradient_rhs(lam[i], x0[i], u[i])
                       if lam[i] != 0.0 and x0[i] != 0.0 else 0.0
                       for i in range(d)])
        u = u + dt * du
        ode[k + 1] = u
    ode_err = float(np.abs(ode - np.stack(
        [landscape_stretch_reference(lam[i], x0[i], np.arange(n_steps + 1) * dt)
         for i in range(d)], axis=1)).max())

    cp = geometric_checkpoints(len(times) - 1, n_checkpoints, start=1)
    emp = np.abs(mean_states - ref).max(axis=1)[cp]
    allowance = tol + slack_se * np.abs(se_states).max(axis=1)[cp]

    slopes = {}
    slope_ok = True
    fit_mask = times >= max(1.0, T / 10.0)
    if fit_mask.sum() >= 2:
        for i in range(d):
            if x0[i] == 0.0:
                continue
            y = np.abs(mean_states[fit_mask, i])
            if np.any(y <= 0):
                continue
            coef = np.polyfit(np.log1p(times[fit_mask]), np.log(y), 1)
            slopes[f"coord_{i}"] = float(coef[0])
            if abs(coef[0] + lam[i]) > slope_tol:
                slope_ok = False

    ok = emp <= allowance
    passed = bool(ok.all() and ode_err <= tol and slope_ok)
    details = {
        "max_error_vs_closed_form": float(np.abs(mean_states - ref).max()),
        "max_error_ode_vs_closed_form": ode_err,
        "tolerance": tol,
        "slopes": slopes,
        "slope_tolerance": slope_tol,
        "slope_ok": slope_ok,
        "sigma": sigma,
    }
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(allowance > 0, emp / allowance, np.where(emp == 0, 0.0, np.inf))
    return VerificationReport(
        experiment="landscape", passed=passed, checkpoints=times[cp],
        empirical=emp, reference=allowance, se=np.abs(se_states).max(axis=1)[cp],
        checkpoint_pass=ok, slack_se=slack_se,
        max_violation_se=float(np.max(v, initial=-np.inf)), n_paths=n_used,
        runtime_seconds=time.perf_counter() - t0_clock, details=details)


# -- weak error --------------------------------------------------------------


def weak_error_experiment(problem: FiniteSumProblem, h_list, T: float,
                          n_paths: int, seed, x0,
                          slope_range=(0.7, 1.3)) -> VerificationReport:
    """Order-1 weak-error probe of the diffusion model of mini-batch SGD.

    For each stepsize h the mean of the final SGD iterate is compared with
    the analytic mean of the flow, E[X(T)] = x* + e^{-HT}(x0 - x*): the
    log-log slope of the error against h must land in ``slope_range``, i.e.
    near the first-order guarantee.  Error ratios at successive stepsizes
    are reported alongside.
    """
    if problem.affine is None or np.any(problem.affine.C.mean(axis=0) != 0.0):
        raise ValueError("the weak-error probe needs an affine family with "
                         "mean-zero gradient noise (analytic mean available)")
    h_list = [float(h) for h in h_list]
    if len(h_list) < 2:
        raise ValueError("need at least two stepsizes to fit a slope")
    x0 = np.asarray(x0, dtype=float)
    t0 = time.perf_counter()
    d_mean = problem.affine.D.mean(axis=0)
    analytic = problem.x_star + np.exp(-d_mean * T) * (x0 - problem.x_star)

    seq = (seed if isinstance(seed, np.random.SeedSequence)
           else np.random.SeedSequence(seed))
    children = seq.spawn(len(h_list))
    errors, ses = [], []
    for h, child in zip(h_list, children):
        K = round(T / h)
        if abs(K * h - T) > 1e-9 * T:
            raise ValueError(f"horizon T={T} is not a multiple of h={h}")
        adj = AdjustmentSchedule(h=h)
        spec = RunSpec(mode="sgd", problem=problem, x0=x0, adj=adj,
                       n_steps=K, record_ks=np.array([0, K]))
        stats = ensemble_run(spec, n_paths, child)
        diff = stats.mean["state"][-1] - analytic
        errors.append(float(np.linalg.norm(diff)))
        ses.append(float(np.sqrt(np.sum(stats.variance["state"][-1]
                                        / stats.n_paths))))
    errors = np.asarray(errors)
    ses = np.asarray(ses)
    if np.all(errors == 0):
        slope = 1.0
        ratios = np.full(len(h_list) - 1, 2.0)
        passed = True
    else:
        slope = float(np.polyfit(np.log(h_list), np.log(errors), 1)[0])
        ratios = errors[:-1] / errors[1:]
        passed = slope_range[0] <= slope <= slope_range[1]
    details = {
        "h_list": h_list,
        "slope": slope,
        "slope_range": list(slope_range),
        "error_ratios": ratios,
        "analytic_mean": analytic,
    }
    ok = np.full(len(h_list), passed)
    return VerificationReport(
        experiment="weak-error", passed=bool(passed),
        checkpoints=np.asarray(h_list), empirical=errors, reference=errors,
        se=ses, checkpoint_pass=ok, slack_se=0.0,
        max_violation_se=float(abs(slope - 1.0)), n_paths=n_paths,
        runtime_seconds=time.perf_counter() - t0, details=details)


# -- convergence ball --------------------------------------------------------


def ball_experiment(problem: FiniteSumProblem, h: float, b: int, dt: float,
                    T_long: float, n_paths: int, seed, mode: str,
                    tail_fraction: float = 0.5, slack_se: float = 3.0,
                    isotropic_rel_tol: float = 0.10,
                    use_kernels: bool = True,
                    x0=None) -> VerificationReport:
    """Stationary noise-floor check against the convergence-ball level.

    Runs the constant-schedule dynamics well past the mixing time, averages
    E[f - f*] over the tail ``tail_fraction`` of the horizon, and requires
    the average not to exceed the ball bound (h d L sigma*^2 / (4 mu b)
    continuous, twice that discrete) plus slack.  For an isotropic
    constant-covariance problem in continuous mode the level is exact
    (h d sigma*^2 / 4b at mu = L) and the tail must also match it within
    ``isotropic_rel_tol`` relative.
    """
    c = problem.constants
    if c.mu_pl is None:
        raise ValueError("the ball experiment needs the gradient-domination constant")
    if T_long < 5.0 / c.mu_pl:
        raise ValueError(f"T_long={T_long} is below the mixing horizon "
                         f"5/mu={5.0 / c.mu_pl}")
    if mode not in ("continuous", "discrete"):
        raise ValueError(f"unknown mode {mode!r}")
    t0 = time.perf_counter()
    adj = AdjustmentSchedule(h=h)
    batch = BatchSchedule(b=b)
    x0 = problem.x_star.copy() if x0 is None else np.asarray(x0, dtype=float)

    if mode == "continuous":
        n_steps = int(round(T_long / dt))
        spacing = dt
        spec = RunSpec(mode="mb-pgf", problem=problem, x0=x0, adj=adj,
                       batch=batch, dt=dt, T=n_steps * dt)
    else:
        n_steps = int(round(T_long / h))
        spacing = h
        spec = RunSpec(mode="pgd", problem=problem, x0=x0, adj=adj,
                       batch=batch, n_steps=n_steps)
    stride = max(1, n_steps // 512)
    spec.record_every = stride
    spec.record_ks = None
    stats = ensemble_run(spec, n_paths, seed, use_kernels)

    tail_mask = stats.grid >= (1.0 - tail_fraction) * n_steps * spacing
    if tail_mask.sum() < 2:
        raise ValueError("tail window too small; lower tail_fraction or raise T_long")
    inputs = BoundInputs.from_problem(problem, x0, adj, batch)
    bound = ball_bound(inputs, mode)
    tail_mean = float(stats.mean["f_gap"][tail_mask].mean())
    # SE of the time average: variance of the per-time means shrinks with
    # path count; use the average of the pointwise variances (conservative
    # versus assuming independence across tail times).
    tail_se = float(np.sqrt(stats.variance["f_gap"][tail_mask].mean()
                            / stats.n_paths))
    one_sided_ok = tail_mean <= bound + slack_se * tail_se

    details = {"tail_mean": tail_mean, "ball_bound": bound,
               "tail_window_start": float((1.0 - tail_fraction) * n_steps * spacing),
               "mode": mode}
    exact_ok = True
    if (mode == "continuous" and problem.has_constant_mb_covariance
            and c.sigma_star_sq is not None and c.mu_pl == c.L):
        exact_level = h * problem.d * c.sigma_star_sq / (4.0 * b)
        rel_err = abs(tail_mean - exact_level) / exact_level if exact_level else 0.0
        exact_ok = rel_err <= isotropic_rel_tol
        details.update({"exact_level": exact_level, "relative_error": rel_err,
                        "relative_tolerance": isotropic_rel_tol})

    v = (tail_mean - bound) / tail_se if tail_se > 0 else (
        0.0 if tail_mean <= bound else float("inf"))
    return VerificationReport(
        experiment="ball", passed=bool(one_sided_ok and exact_ok),
        checkpoints=np.array([n_steps * spacing]),
        empirical=np.array([tail_mean]), reference=np.array([bound]),
        se=np.array([tail_se]), checkpoint_pass=np.array([one_sided_ok and exact_ok]),
        slack_se=slack_se, max_violation_se=float(v), n_paths=stats.n_paths,
        runtime_seconds=time.perf_counter() - t0, details=details)


# -- Lyapunov probe ----------------------------------------------------------


def pl_supermartingale_probe(problem: FiniteSumProblem, adj: AdjustmentSchedule,
                             batch: BatchSchedule, x0, dt: float, T: float,
                             n_paths: int, seed, slack_se: float = 3.0,
                             n_checkpoints: int = 12,
                             use_kernels: bool = True) -> VerificationReport:
    """Increment check of the gradient-domination energy e^{2 mu phi(t)} (f - f*).

    Along the annealed flow the mean energy may only grow by the injected
    noise, (h d L sigma*^2 / 2) int e^{2 mu phi(s)} psi(s)^2 / b(s) ds per
    interval; each grid increment of the empirical mean energy must stay
    within that allowance plus slack.  Horizons must keep 2 mu phi(T)
    moderate — the energy is evaluated literally.
    """
    c = problem.constants
    if c.mu_pl is None:
        raise ValueError("the probe needs the gradient-domination constant")
    mu = c.mu_pl
    if 2.0 * mu * float(phi(adj, T)) > 600.0:
        raise ValueError("2 mu phi(T) too large; the energy would overflow")
    t0 = time.perf_counter()
    n_steps = int(round(T / dt))
    cp = geometric_checkpoints(n_steps, n_checkpoints, start=1)
    cp = np.concatenate(([0], cp))
    spec = RunSpec(mode="mb-pgf", problem=problem, x0=x0, adj=adj, batch=batch,
                   dt=dt, T=n_steps * dt, record_ks=cp)
    stats = ensemble_run(spec, n_paths, seed, use_kernels)
    times = stats.grid
    factor = np.exp(2.0 * mu * np.asarray(phi(adj, times), dtype=float))
    energy = factor * stats.mean["f_gap"]
    energy_se = factor * stats.se("f_gap")

    s2 = c.sigma_star_sq if c.sigma_star_sq is not None else 0.0
    coef = adj.h * problem.d * c.L * s2 / 2.0

    def integrand(s):
        return (math.exp(2.0 * mu * float(phi(adj, s))) * adj.psi(s) ** 2
                / batch.value(s))

    increments = np.diff(energy)
    allowance = np.empty(increments.size)
    for i in range(increments.size):
        val, _ = integrate.quad(integrand, times[i], times[i + 1],
                                epsrel=1e-10, limit=200)
        allowance[i] = coef * val
    se_inc = energy_se[:-1] + energy_se[1:]  # triangle inequality, conservative
    return _finish_report("pl-supermartingale", times[1:], increments,
                          allowance, se_inc, slack_se, stats.n_paths, t0,
                          details={"mu": mu, "coef": coef})
