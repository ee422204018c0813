"""Stochastic optimization loops: mini-batch SGD, its Gaussian surrogate, and SVRG.

All three walk the same schedule machinery (stepsize h·psi_k, batch b_k) and
record the observables every rate bound is stated in terms of: suboptimality
f(x_k) - f*, squared gradient norm and squared distance to the minimizer.
Runs are deterministic given a numpy Generator; ensembles derive independent
per-path generators from a master seed (see :mod:`sgflow.harness`).

Divergent paths (non-finite iterates, e.g. from an inadmissible stepsize) are
truncated and flagged rather than raising, so an ensemble can report its
divergence fraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimators import mb_estimate, sigma_mb, vr_estimate
from .problems import FiniteSumProblem
from .schedules import AdjustmentSchedule, BatchSchedule

__all__ = ["Trajectory", "run_mb_sgd", "run_pgd", "run_svrg_option2"]


@dataclass
class Trajectory:
    """A recorded sample path on a strictly increasing time grid.

    ``states`` has one row per recorded time.  The observable arrays are
    recomputable from the states (and are spot-checked in the test suite).
    For runs without an attached problem the observables are None.
    ``jump_flags`` marks epoch-boundary resampling events where present.
    """

    times: np.ndarray
    states: np.ndarray
    f_gap: np.ndarray | None = None
    grad_norm_sq: np.ndarray | None = None
    dist_sq: np.ndarray | None = None
    jump_flags: np.ndarray | None = None
    diverged: bool = False
    divergence_step: int | None = None

    def __len__(self) -> int:
        return len(self.times)


class _Recorder:
    """Accumulates a trajectory with an optional thinning stride.

    Records step indices divisible by ``record_every`` plus the final step;
    computes observables from the problem when one is attached.
    """

    def __init__(self, problem: FiniteSumProblem | None, d: int, n_steps: int,
                 dt: float, record_every: int = 1, track_jumps: bool = False):
        if record_every < 1:
            raise ValueError("record_every must be >= 1")
        self.problem = problem
        self.dt = dt
        self.record_every = record_every
        idx = np.arange(0, n_steps + 1, record_every)
        if idx[-1] != n_steps:
            idx = np.append(idx, n_steps)
        self._record_steps = idx
        n_rec = idx.size
        self.times = idx * dt
        self.states = np.empty((n_rec, d))
        self.f_gap = np.empty(n_rec) if problem is not None else None
        self.grad_norm_sq = np.empty(n_rec) if problem is not None else None
        self.dist_sq = np.empty(n_rec) if problem is not None else None
        self.jump_flags = np.zeros(n_rec, dtype=bool) if track_jumps else None
        self._cursor = 0
        self._next_step = idx[0]
        self.diverged = False
        self.divergence_step: int | None = None

    def wants(self, k: int) -> bool:
        return self._cursor < self._record_steps.size and k == self._next_step

    def record(self, k: int, x: np.ndarray, jumped: bool = False) -> None:
        if not self.wants(k):
            return
        i = self._cursor
        self.states[i] = x
        if self.problem is not None:
            g = self.problem.grad(x)
            self.f_gap[i] = self.problem.gap(x)
            self.grad_norm_sq[i] = float(g @ g)
            self.dist_sq[i] = float(np.sum((x - self.problem.x_star) ** 2))
        if self.jump_flags is not None:
            self.jump_flags[i] = jumped
        self._cursor += 1
        if self._cursor < self._record_steps.size:
            self._next_step = self._record_steps[self._cursor]

    def mark_divergence(self, k: int) -> None:
        self.diverged = True
        self.divergence_step = k

    def finish(self) -> Trajectory:
        n = self._cursor
        return Trajectory(
            times=self.times[:n], states=self.states[:n],
            f_gap=None if self.f_gap is None else self.f_gap[:n],
            grad_norm_sq=None if self.grad_norm_sq is None else self.grad_norm_sq[:n],
            dist_sq=None if self.dist_sq is None else self.dist_sq[:n],
            jump_flags=None if self.jump_flags is None else self.jump_flags[:n],
            diverged=self.diverged, divergence_step=self.divergence_step)


def run_mb_sgd(problem: FiniteSumProblem, adj: AdjustmentSchedule,
               batch: BatchSchedule, x0, n_steps: int,
               rng: np.random.Generator, record_every: int = 1) -> Trajectory:
    """Mini-batch SGD:  x_{k+1} = x_k - h psi_k G_MB(x_k, b_k)."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x = np.array(x0, dtype=float).reshape(problem.d)
    rec = _Recorder(problem, problem.d, n_steps, adj.h, record_every)
    rec.record(0, x)
    for k in range(n_steps):
        b_k = batch.size_at_step(k, adj.h)
        g = mb_estimate(problem, x, b_k, rng).value
        x = x - adj.eta_k(k) * g
        if not np.all(np.isfinite(x)):
            rec.mark_divergence(k + 1)
            break
        rec.record(k + 1, x)
    return rec.finish()


def run_pgd(problem: FiniteSumProblem, adj: AdjustmentSchedule,
            batch: BatchSchedule, x0, n_steps: int, rng: np.random.Generator,
            record_every: int = 1, volatility_mode: str = "exact") -> Trajectory:
    """Gaussian surrogate of mini-batch SGD.

    x_{k+1} = x_k - h psi_k grad f(x_k) - h psi_k / sqrt(b_k) · sigma(x_k) Z_k
    with Z_k standard normal, where sigma(x) is the principal square root of
    the one-sample covariance.  The first two moments of each step match the
    sampled estimator exactly.

    volatility_mode="constant" replaces sigma(x) by sqrt(sigma_star_sq)·I
    (requires the constant to be declared); "exact" recomputes — or, for
    constant-covariance families, caches — the true matrix.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x = np.array(x0, dtype=float).reshape(problem.d)
    sigma_const = _pgd_constant_sigma(problem, volatility_mode)
    rec = _Recorder(problem, problem.d, n_steps, adj.h, record_every)
    rec.record(0, x)
    for k in range(n_steps):
        b_k = batch.size_at_step(k, adj.h)
        eta = adj.eta_k(k)
        z = rng.standard_normal(problem.d)
        sig = sigma_const if sigma_const is not None else sigma_mb(problem, x).sqrt_matrix
        x = x - eta * problem.grad(x) - (eta / np.sqrt(b_k)) * (sig @ z)
        if not np.all(np.isfinite(x)):
            rec.mark_divergence(k + 1)
            break
        rec.record(k + 1, x)
    return rec.finish()


def _pgd_constant_sigma(problem: FiniteSumProblem, volatility_mode: str) -> np.ndarray | None:
    if volatility_mode == "constant":
        s2 = problem.constants.sigma_star_sq
        if s2 is None:
            raise ValueError("volatility_mode='constant' needs a declared sigma_star_sq")
        return np.sqrt(s2) * np.eye(problem.d)
    if volatility_mode != "exact":
        raise ValueError(f"unknown volatility_mode {volatility_mode!r}")
    if problem.has_constant_mb_covariance:
        return sigma_mb(problem, problem.x_star).sqrt_matrix
    return None


def run_svrg_option2(problem: FiniteSumProblem, h: float, epoch_steps: int,
                     n_epochs: int, x0, rng: np.random.Generator,
                     record_every: int = 1) -> Trajectory:
    """SVRG with uniform epoch-end resampling (option II), b = 1 and psi = 1.

    Within epoch j the pivot is frozen at the epoch-start iterate x_{jm};
    inner steps use the variance-reduced estimate x_{k+1} = x_k - h G_VR(x_k).
    At the epoch end, the next epoch's start is drawn uniformly from the m
    iterates {x_{jm}, ..., x_{jm+m-1}} — the window the contraction bound
    averages over.  Epoch-boundary states carry a jump flag.
    """
    if epoch_steps < 1:
        raise ValueError("epoch_steps must be >= 1")
    if n_epochs < 1:
        raise ValueError("n_epochs must be >= 1")
    m = epoch_steps
    x = np.array(x0, dtype=float).reshape(problem.d)
    n_steps = m * n_epochs
    rec = _Recorder(problem, problem.d, n_steps, h, record_every, track_jumps=True)
    rec.record(0, x)
    epoch_window = np.empty((m, problem.d))
    for j in range(n_epochs):
        pivot = x.copy()
        for i in range(m):
            epoch_window[i] = x
            g = vr_estimate(problem, x, pivot, 1, rng).value
            x = x - h * g
            if not np.all(np.isfinite(x)):
                rec.mark_divergence(j * m + i + 1)
                return rec.finish()
            if i < m - 1:
                rec.record(j * m + i + 1, x)
        x = epoch_window[rng.integers(0, m)].copy()
        rec.record((j + 1) * m, x, jumped=True)
    return rec.finish()
