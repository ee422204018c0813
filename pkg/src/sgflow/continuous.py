"""Euler-Maruyama integration of the diffusion models behind the algorithms.

The generic integrator advances

    x_{k+1} = x_k + dt * drift(x_k, t_k) + sqrt(dt) * volatility(x_k, t_k) @ Z_k

with fresh standard-normal increments Z_k.  In delay mode it integrates a
delay equation whose lag is the sawtooth staleness xi(t) = t mod T_epoch: the
delayed state is always the most recent epoch-start state, which lies exactly
on the grid because T_epoch must be a multiple of dt (no interpolation, by
construction).  An optional jump rule resamples the state at each epoch end
uniformly from the grid states of the finished epoch.

Three model builders wrap the integrator:

* :func:`simulate_mb_pgf` — annealed gradient flow with mini-batch volatility
  psi(t) sqrt(h/b(t)) sigma(x);
* :func:`simulate_vr_pgf` — variance-reduced flow, volatility
  sqrt(h) sigma_VR(x(t), x(t - xi(t))), with the epoch jumps of SVRG;
* :func:`simulate_time_changed` — the unwarped process Y with
  dY = -grad f(Y) dt + sqrt(h psi(tau(t))/b(tau(t))) sigma dB, which matches
  the annealed process X(tau(t)) in distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .discrete import Trajectory, _Recorder
from .estimators import sigma_mb, sigma_vr
from .problems import FiniteSumProblem
from .schedules import AdjustmentSchedule, BatchSchedule, StalenessSchedule, phi_inverse

__all__ = [
    "SdeSpec",
    "euler_maruyama",
    "simulate_mb_pgf",
    "simulate_vr_pgf",
    "simulate_time_changed",
]


@dataclass
class SdeSpec:
    """A diffusion to integrate: drift/volatility fields, grid, optional delay.

    drift(x, t) returns a vector; volatility(x, t, x_delayed) returns a d×d
    matrix (x_delayed is None unless ``delay`` is set).  ``volatility=None``
    means a deterministic flow (no noise is drawn at all).  When ``delay`` is
    given, its epoch time must be a positive multiple of dt; ``jump_rule``
    may then be "uniform_epoch" to resample at epoch ends.  ``problem`` is
    only used to record observables.
    """

    drift: Callable[[np.ndarray, float], np.ndarray]
    volatility: Callable[[np.ndarray, float, np.ndarray | None], np.ndarray] | None
    x0: np.ndarray
    dt: float
    T: float
    delay: StalenessSchedule | None = None
    jump_rule: str | None = None
    problem: FiniteSumProblem | None = None

    def __post_init__(self) -> None:
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        if self.T < self.dt:
            raise ValueError("horizon T must be at least one step dt")
        if self.jump_rule not in (None, "uniform_epoch"):
            raise ValueError(f"unknown jump rule {self.jump_rule!r}")
        if self.delay is not None:
            ratio = self.delay.epoch_time / self.dt
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValueError(
                    f"epoch time {self.delay.epoch_time} must be a positive "
                    f"multiple of dt={self.dt} so delayed states lie on the grid")
        elif self.jump_rule is not None:
            raise ValueError("a jump rule needs a delay schedule (epochs)")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


def euler_maruyama(spec: SdeSpec, rng: np.random.Generator,
                   record_every: int = 1) -> Trajectory:
    """Integrate an :class:`SdeSpec` to one sample path.

    Non-finite states truncate the path and set the divergence flag.  In delay
    mode the delayed lookup for t in [j·T_epoch, (j+1)·T_epoch) returns the
    stored state at j·T_epoch (pre-history is x0), and with the uniform jump
    rule the state at each epoch end is replaced by a uniformly drawn state of
    the finished epoch before integration continues.
    """
    d = spec.x0.size
    K = spec.n_steps
    rec = _Recorder(spec.problem, d, K, spec.dt, record_every,
                    track_jumps=spec.jump_rule is not None)
    x = spec.x0.copy()
    rec.record(0, x)
    q = None
    epoch_window = None
    if spec.delay is not None:
        q = int(round(spec.delay.epoch_time / spec.dt))
        epoch_window = np.empty((q, d))
    sqrt_dt = np.sqrt(spec.dt)
    for k in range(K):
        t = k * spec.dt
        x_delayed = None
        if q is not None:
            epoch_window[k % q] = x
            x_delayed = epoch_window[0]
        step = spec.dt * spec.drift(x, t)
        if spec.volatility is not None:
            z = rng.standard_normal(d)
            step = step + sqrt_dt * (spec.volatility(x, t, x_delayed) @ z)
        x = x + step
        jumped = False
        if q is not None and spec.jump_rule == "uniform_epoch" and (k + 1) % q == 0:
            x = epoch_window[rng.integers(0, q)].copy()
            jumped = True
        if not np.all(np.isfinite(x)):
            rec.mark_divergence(k + 1)
            break
        rec.record(k + 1, x, jumped=jumped)
    return rec.finish()


def _mb_volatility(problem: FiniteSumProblem, volatility_mode: str) -> Callable:
    """State part sigma(x) of the mini-batch volatility, exact or constant."""
    if volatility_mode == "constant":
        s2 = problem.constants.sigma_star_sq
        if s2 is None:
            raise ValueError("volatility_mode='constant' needs a declared sigma_star_sq")
        const = np.sqrt(s2) * np.eye(problem.d)
        return lambda x: const
    if volatility_mode != "exact":
        raise ValueError(f"unknown volatility_mode {volatility_mode!r}")
    if problem.has_constant_mb_covariance:
        cached = sigma_mb(problem, problem.x_star).sqrt_matrix
        return lambda x: cached
    return lambda x: sigma_mb(problem, x).sqrt_matrix


def simulate_mb_pgf(problem: FiniteSumProblem, adj: AdjustmentSchedule,
                    batch: BatchSchedule, x0, dt: float, T: float,
                    rng: np.random.Generator, volatility_mode: str = "exact",
                    record_every: int = 1) -> Trajectory:
    """Annealed gradient flow with mini-batch noise:

        dX = -psi(t) grad f(X) dt + psi(t) sqrt(h / b(t)) sigma(X) dB.

    The batch schedule enters unrounded.  dt should not exceed the stepsize h
    the model was derived from (the diffusion is the fine-grained limit).
    """
    sig = _mb_volatility(problem, volatility_mode)
    h = adj.h

    def drift(x, t):
        return -adj.psi(t) * problem.grad(x)

    def volatility(x, t, _):
        return (adj.psi(t) * np.sqrt(h / batch.value(t))) * sig(x)

    spec = SdeSpec(drift=drift, volatility=volatility, x0=x0, dt=dt, T=T,
                   problem=problem)
    return euler_maruyama(spec, rng, record_every)


def simulate_vr_pgf(problem: FiniteSumProblem, staleness: StalenessSchedule,
                    x0, dt: float, T: float, rng: np.random.Generator,
                    with_jumps: bool = True, record_every: int = 1) -> Trajectory:
    """Variance-reduced gradient flow (a delay equation):

        dX = -grad f(X) dt + sqrt(h) sigma_VR(X(t), X(t - xi(t))) dB,

    where the delayed argument is the current epoch's start state.  With
    ``with_jumps`` the epoch-end state is resampled uniformly from the epoch's
    grid states, as in the discrete algorithm.  Uses psi = 1 and b = 1 (the
    regime the variance-reduction guarantee covers).
    """
    h = staleness.h

    def drift(x, t):
        return -problem.grad(x)

    def volatility(x, t, x_delayed):
        return np.sqrt(h) * sigma_vr(problem, x, x_delayed).sqrt_matrix

    spec = SdeSpec(drift=drift, volatility=volatility, x0=x0, dt=dt, T=T,
                   delay=staleness, jump_rule="uniform_epoch" if with_jumps else None,
                   problem=problem)
    return euler_maruyama(spec, rng, record_every)


def simulate_time_changed(problem: FiniteSumProblem, adj: AdjustmentSchedule,
                          batch: BatchSchedule, x0, dt: float, T: float,
                          rng: np.random.Generator, volatility_mode: str = "constant",
                          record_every: int = 1) -> Trajectory:
    """The unwarped counterpart of the annealed flow:

        dY = -grad f(Y) dt + sqrt(h psi(tau(t)) / b(tau(t))) sigma dB,

    with tau the inverse of phi(t) = ∫ psi.  Y(t) has the law of X(tau(t)), so
    annealing is traded for a vanishing noise amplitude: with psi = 1/(1+t)
    and constant sigma the amplitude is sqrt(h) sigma e^{-t/2}.
    """
    sig = _mb_volatility(problem, volatility_mode)
    h = adj.h

    def drift(y, t):
        return -problem.grad(y)

    def volatility(y, t, _):
        warped = phi_inverse(adj, t)
        return np.sqrt(h * adj.psi(warped) / batch.value(warped)) * sig(y)

    spec = SdeSpec(drift=drift, volatility=volatility, x0=x0, dt=dt, T=T,
                   problem=problem)
    return euler_maruyama(spec, rng, record_every)
