"""Stochastic gradient estimators and their exact covariance matrices.

Two unbiased estimators of the full gradient are provided:

* **mini-batch** — average of b component gradients at indices drawn i.i.d.
  uniformly *with replacement*; one-sample covariance

      Sigma_MB(x) = (1/N) Σ_i (grad f(x) - grad f_i(x)) (grad f(x) - grad f_i(x))ᵀ,

  scaling as Sigma_MB(x)/b for batch size b;

* **variance-reduced** — component gradient corrected by a fixed pivot point,
  G = grad f_i(x) - grad f_i(y) + grad f(y), with covariance Sigma_VR(x, y)
  that vanishes at x = y.

Covariances are always computed by the explicit O(N d²) loop, never sampled,
because they double as the exact volatility inside the diffusion integrators.
The principal matrix square root uses a symmetric eigendecomposition with a
small negative-eigenvalue clamp: the square root is not Lipschitz at zero, so
round-off negatives must be flushed before rooting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import FiniteSumProblem

__all__ = [
    "GradientEstimate",
    "CovarianceReport",
    "NotPsdError",
    "mb_estimate",
    "vr_estimate",
    "sigma_mb",
    "sigma_vr",
    "principal_sqrt",
    "estimate_sigma_star_sq",
]


class NotPsdError(ValueError):
    """Raised when a matrix that must be positive semidefinite is not."""


@dataclass(frozen=True)
class GradientEstimate:
    """A stochastic gradient sample together with the indices that produced it."""

    value: np.ndarray
    batch_indices: np.ndarray

    def recompute(self, problem: FiniteSumProblem, x: np.ndarray,
                  pivot: np.ndarray | None = None) -> np.ndarray:
        """Recompute the estimate from its stored indices (consistency check)."""
        terms = []
        for i in self.batch_indices:
            g = problem.component_grad(int(i), x)
            if pivot is not None:
                g = g - problem.component_grad(int(i), pivot) + problem.grad(pivot)
            terms.append(g)
        return np.mean(terms, axis=0)


@dataclass(frozen=True)
class CovarianceReport:
    """Exact covariance Sigma, its principal square root, and the top eigenvalue."""

    sigma_matrix: np.ndarray
    sqrt_matrix: np.ndarray
    spectral_norm: float


def mb_estimate(problem: FiniteSumProblem, x: np.ndarray, batch_size: int,
                rng: np.random.Generator) -> GradientEstimate:
    """Mini-batch gradient estimate with i.i.d.-uniform-with-replacement sampling.

    Conditionally unbiased: E[value] = grad f(x), with covariance
    Sigma_MB(x) / batch_size.
    """
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    idx = rng.integers(0, problem.n_components, size=batch_size)
    if problem.affine is not None:
        u = np.asarray(x, dtype=float) - problem.x_star
        value = (problem.affine.D[idx] * u + problem.affine.C[idx]).mean(axis=0)
    else:
        value = np.mean([problem.component_grad(int(i), x) for i in idx], axis=0)
    return GradientEstimate(value=value, batch_indices=idx)


def vr_estimate(problem: FiniteSumProblem, x: np.ndarray, pivot: np.ndarray,
                batch_size: int, rng: np.random.Generator) -> GradientEstimate:
    """Variance-reduced gradient estimate anchored at a pivot point.

    value = (1/b) Σ [grad f_i(x) - grad f_i(pivot) + grad f(pivot)] over b
    i.i.d. uniform indices.  Unbiased for grad f(x); exact (zero variance)
    whenever x equals the pivot.
    """
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    pivot = np.asarray(pivot, dtype=float)
    if pivot.shape != (problem.d,):
        raise ValueError(f"pivot has shape {pivot.shape}, expected ({problem.d},)")
    idx = rng.integers(0, problem.n_components, size=batch_size)
    full_at_pivot = problem.grad(pivot)
    if problem.affine is not None:
        w = np.asarray(x, dtype=float) - pivot
        value = (problem.affine.D[idx] * w).mean(axis=0) + full_at_pivot
    else:
        value = np.mean([problem.component_grad(int(i), x)
                         - problem.component_grad(int(i), pivot)
                         for i in idx], axis=0) + full_at_pivot
    return GradientEstimate(value=value, batch_indices=idx)


def sigma_mb(problem: FiniteSumProblem, x: np.ndarray) -> CovarianceReport:
    """Exact one-sample covariance of the mini-batch estimator at x."""
    g = problem.grad(x)
    d = problem.d
    sigma = np.zeros((d, d))
    for i in range(problem.n_components):
        e = g - problem.component_grad(i, x)
        sigma += np.outer(e, e)
    sigma /= problem.n_components
    return _report(sigma)


def sigma_vr(problem: FiniteSumProblem, x: np.ndarray, y: np.ndarray) -> CovarianceReport:
    """Exact one-sample covariance of the variance-reduced estimator at (x, pivot y).

    Zero matrix at y = x; its trace is controlled by the smoothness constant:
    tr Sigma_VR(x, y) <= 2 L² |x - x*|² + 2 L² |y - x*|².
    """
    d = problem.d
    mean_term = problem.grad(x) - problem.grad(y)
    sigma = np.zeros((d, d))
    for i in range(problem.n_components):
        e = (problem.component_grad(i, x) - problem.component_grad(i, y)) - mean_term
        sigma += np.outer(e, e)
    sigma /= problem.n_components
    return _report(sigma)


def principal_sqrt(A: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix.

    Uses the symmetric eigendecomposition A = V diag(w) Vᵀ and returns
    V diag(sqrt(w)) Vᵀ.  Eigenvalues below -1e-8 raise :class:`NotPsdError`;
    smaller round-off negatives are clamped to zero before rooting.

    Raises
    ------
    ValueError
        If A is not symmetric to 1e-10.
    NotPsdError
        If an eigenvalue is below -1e-8.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-10:
        raise ValueError("matrix is not symmetric to 1e-10")
    w, V = np.linalg.eigh(A)
    if w.min(initial=0.0) < -1e-8:
        raise NotPsdError(f"matrix has eigenvalue {w.min():.3e} < -1e-8")
    w = np.maximum(w, 0.0)
    return (V * np.sqrt(w)) @ V.T


def estimate_sigma_star_sq(problem: FiniteSumProblem, sample_points) -> float:
    """Max over sample points of the top eigenvalue of Sigma_MB(x).

    For constant-covariance families the value is identical at every point and
    therefore exact.
    """
    points = list(sample_points)
    if not points:
        raise ValueError("need at least one sample point")
    return max(sigma_mb(problem, np.asarray(x, dtype=float)).spectral_norm
               for x in points)


def _report(sigma: np.ndarray) -> CovarianceReport:
    sigma = 0.5 * (sigma + sigma.T)  # kill round-off asymmetry
    root = principal_sqrt(sigma)
    top = float(np.linalg.eigvalsh(sigma)[-1]) if sigma.any() else 0.0
    return CovarianceReport(sigma_matrix=sigma, sqrt_matrix=root,
                            spectral_norm=max(top, 0.0))
