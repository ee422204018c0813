"""Learning-rate, batch-size and staleness schedules, and the time warp they induce.

The stepsize of every algorithm in this package is factored as ``eta_k = h * psi_k``
where ``h`` is a fixed discretization stepsize and ``psi`` is a nonincreasing
*adjustment function* with ``psi(0) = 1``.  Two families are supported:

* ``constant`` —  psi(t) = 1;
* ``power(a)`` —  psi(t) = (1 + t)^(-a)  with  a in (0, 1].

The discrete weights are read off the continuous function on the step grid,
``psi_k = psi(h*k)``, so both views share a single source of truth.

The running integral ``phi(t) = ∫_0^t psi(s) ds`` acts as a deformed clock: every
convergence rate in :mod:`sgflow.bounds` is a function of ``phi(t)`` rather than
of ``t`` itself.  Its inverse ``phi_inverse`` is the time warp used by the
time-changed process in :mod:`sgflow.continuous`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AdjustmentSchedule",
    "BatchSchedule",
    "StalenessSchedule",
    "phi",
    "phi_inverse",
    "discrete_phi",
    "randomized_index",
    "randomized_time",
]


@dataclass(frozen=True)
class AdjustmentSchedule:
    """Stepsize decomposition eta_k = h * psi_k.

    Parameters
    ----------
    h : float
        Discretization stepsize (equals eta_0, since psi(0) = 1).
    family : str
        Either ``"constant"`` or ``"power"``.
    a : float, optional
        Decay exponent for the power family; must lie in (0, 1].
    """

    h: float
    family: str = "constant"
    a: float | None = None

    def __post_init__(self) -> None:
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ValueError(f"stepsize h must be positive and finite, got {self.h}")
        if self.family not in ("constant", "power"):
            raise ValueError(f"unknown adjustment family {self.family!r}; "
                             "expected 'constant' or 'power'")
        if self.family == "power":
            if self.a is None or not (0.0 < self.a <= 1.0):
                raise ValueError(f"power family needs exponent a in (0, 1], got {self.a}")
        elif self.a is not None:
            raise ValueError("exponent a is only meaningful for the power family")

    def psi(self, t):
        """Adjustment value psi(t); accepts scalars or arrays, requires t >= 0."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("psi is only defined for t >= 0")
        if self.family == "constant":
            return np.ones_like(t)[()] if t.ndim else 1.0
        out = (1.0 + t) ** (-self.a)
        return out[()] if out.ndim == 0 else out

    def psi_k(self, k):
        """Discrete weight psi_k = psi(h*k) for step index k >= 0."""
        k = np.asarray(k)
        if np.any(k < 0):
            raise ValueError("step index must be >= 0")
        return self.psi(self.h * np.asarray(k, dtype=float))

    def eta_k(self, k):
        """Stepsize eta_k = h * psi_k."""
        return self.h * self.psi_k(k)


@dataclass(frozen=True)
class BatchSchedule:
    """Mini-batch size as a function of time.

    ``constant`` keeps b(t) = b; ``linear-growth`` uses b(t) = b0 + rate*t.
    Discrete algorithms round b(h*k) half-up to an integer >= 1; the diffusion
    integrators use the unrounded value.
    """

    family: str = "constant"
    b: int = 1
    b0: float = 1.0
    rate: float = 0.0

    def __post_init__(self) -> None:
        if self.family not in ("constant", "linear-growth"):
            raise ValueError(f"unknown batch family {self.family!r}; "
                             "expected 'constant' or 'linear-growth'")
        if self.family == "constant":
            if not (isinstance(self.b, (int, np.integer)) and self.b >= 1):
                raise ValueError(f"constant batch size must be an integer >= 1, got {self.b}")
        else:
            if self.b0 < 1.0:
                raise ValueError("linear-growth batch requires b0 >= 1")
            if self.rate < 0.0:
                raise ValueError("linear-growth batch requires rate >= 0")

    def value(self, t):
        """Unrounded b(t) >= 1 (used by the SDE integrators)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("batch schedule is only defined for t >= 0")
        if self.family == "constant":
            out = np.full_like(t, float(self.b))
        else:
            out = self.b0 + self.rate * t
        return out[()] if out.ndim == 0 else out

    def size_at_step(self, k, h: float):
        """Integer batch size b_k = round-half-up(b(h*k)), clamped to >= 1."""
        v = self.value(np.asarray(k, dtype=float) * h)
        out = np.maximum(np.floor(np.asarray(v) + 0.5).astype(int), 1)
        return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class StalenessSchedule:
    """Sawtooth staleness xi(t) = t mod T_epoch with T_epoch = m * h.

    ``m`` is the epoch length in steps; the delayed state referenced by the
    variance-reduced diffusion at time t is the state at t - xi(t), i.e. the
    most recent epoch start.
    """

    m: int
    h: float
    epoch_time: float = field(init=False)

    def __post_init__(self) -> None:
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            raise ValueError(f"epoch length m must be an integer >= 1, got {self.m}")
        if not (self.h > 0):
            raise ValueError("stepsize h must be positive")
        object.__setattr__(self, "epoch_time", self.m * self.h)

    def xi(self, t):
        """Staleness xi(t) = t mod (m*h), in [0, m*h)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("staleness is only defined for t >= 0")
        out = np.mod(t, self.epoch_time)
        return out[()] if out.ndim == 0 else out


def phi(schedule: AdjustmentSchedule, t):
    """Deformed clock phi(t) = ∫_0^t psi(s) ds, in closed form.

    constant : phi(t) = t
    power(1) : phi(t) = log(1 + t)
    power(a) : phi(t) = ((1 + t)^(1-a) - 1) / (1 - a)      (a != 1)

    Strictly increasing with phi(0) = 0.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("phi is only defined for t >= 0")
    if schedule.family == "constant":
        out = t.copy()
    elif schedule.a == 1.0:
        out = np.log1p(t)
    else:
        a = schedule.a
        out = ((1.0 + t) ** (1.0 - a) - 1.0) / (1.0 - a)
    return out[()] if out.ndim == 0 else out


def phi_inverse(schedule: AdjustmentSchedule, s):
    """Inverse warp tau(s) with phi(tau(s)) = s.

    Closed forms: constant -> s;  power(1) -> e^s - 1;
    power(a != 1) -> (1 + (1-a) s)^(1/(1-a)) - 1.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("phi_inverse is only defined for s >= 0")
    if schedule.family == "constant":
        out = s.copy()
    elif schedule.a == 1.0:
        out = np.expm1(s)
    else:
        a = schedule.a
        out = (1.0 + (1.0 - a) * s) ** (1.0 / (1.0 - a)) - 1.0
    return out[()] if out.ndim == 0 else out


def phi_inverse_bisect(schedule: AdjustmentSchedule, s: float,
                       rel_tol: float = 1e-12) -> float:
    """Generic inverse of phi by bracketed bisection (cross-check for the closed forms)."""
    if s < 0:
        raise ValueError("phi_inverse is only defined for s >= 0")
    if s == 0.0:
        return 0.0
    hi = 1.0
    while phi(schedule, hi) < s:
        hi *= 2.0
        if hi > 1e300:
            raise ValueError(f"phi never reaches {s}")
    lo = 0.0
    while hi - lo > rel_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if phi(schedule, mid) < s:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def discrete_phi(schedule: AdjustmentSchedule, k: int) -> float:
    """Discrete clock Phi_{k+1} = sum_{i=0}^{k} psi_i.

    Satisfies |h*Phi_{k+1} - phi(h*(k+1))| = O(h) (left Riemann sum of a
    nonincreasing integrand).
    """
    if k < 0:
        raise ValueError("step index must be >= 0")
    return float(np.sum(schedule.psi_k(np.arange(k + 1))))


def psi_prefix_sums(schedule: AdjustmentSchedule, k: int) -> np.ndarray:
    """Array [Phi_1, ..., Phi_{k+1}] of discrete-clock prefix sums (vectorized helper)."""
    if k < 0:
        raise ValueError("step index must be >= 0")
    return np.cumsum(schedule.psi_k(np.arange(k + 1)))


def randomized_index(schedule: AdjustmentSchedule, k: int, rng: np.random.Generator) -> int:
    """Random step index in {0..k} with P(i) = psi_i / Phi_{k+1}.

    This is the index distribution under which the randomized-iterate rate
    bounds hold; drawn by inverse CDF on the cumulative weights.
    """
    if k < 0:
        raise ValueError("step index must be >= 0")
    cum = psi_prefix_sums(schedule, k)
    u = rng.random() * cum[-1]
    return int(np.searchsorted(cum, u, side="right"))


def randomized_time(schedule: AdjustmentSchedule, t: float, rng: np.random.Generator) -> float:
    """Random time in [0, t] with density psi(s)/phi(t), via s = tau(U * phi(t))."""
    if t <= 0:
        raise ValueError("randomized_time needs t > 0")
    u = rng.random()
    return float(phi_inverse(schedule, u * phi(schedule, t)))
