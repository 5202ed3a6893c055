"""Diagonal-Gaussian KL machinery for priors and posteriors over flat weights.

Covariances are stored as variances (never standard deviations) everywhere in
this package; every interface below takes and returns variances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "GaussianSpec",
    "kl_diag",
    "kl_diag_components",
    "oracle_variance_kl",
    "appc_prior_variance",
    "scaled_l2",
]

# Posterior variances this small are degenerate for 64-bit KL arithmetic.
_MIN_VARIANCE = 1e-24


@dataclass(frozen=True)
class GaussianSpec:
    """A diagonal Gaussian over a flat weight vector.

    ``variance`` is either a per-coordinate vector matching ``mean`` or a
    single isotropic scalar; entries must be strictly positive (>= 1e-24,
    smaller values are rejected rather than clamped).
    """

    mean: np.ndarray
    variance: Union[np.ndarray, float]

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        if mean.ndim != 1:
            raise ValueError(f"mean must be a vector, got shape {mean.shape}")
        var = np.asarray(self.variance, dtype=np.float64)
        if var.ndim == 0:
            var = float(var)
            if not math.isfinite(var) or var < _MIN_VARIANCE:
                raise ValueError(f"isotropic variance {var} is degenerate (< {_MIN_VARIANCE})")
        else:
            if var.shape != mean.shape:
                raise ValueError(f"variance shape {var.shape} != mean shape {mean.shape}")
            if not np.all(np.isfinite(var)) or np.any(var < _MIN_VARIANCE):
                raise ValueError(f"variance entries must be finite and >= {_MIN_VARIANCE}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def variance_vector(self) -> np.ndarray:
        """Per-coordinate variances, broadcasting the isotropic case."""
        if np.isscalar(self.variance):
            return np.full(self.dim, float(self.variance))
        return self.variance

    def sample(self, k: int, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
        """Draw k weight vectors, one per row."""
        std = np.sqrt(self.variance_vector()).astype(dtype)
        eps = rng.standard_normal((int(k), self.dim), dtype=dtype)
        return self.mean.astype(dtype) + eps * std


def _as_pair(q: GaussianSpec, p: GaussianSpec):
    if q.dim != p.dim:
        raise ValueError(f"dimension mismatch: q has {q.dim}, p has {p.dim}")
    return q.mean, q.variance_vector(), p.mean, p.variance_vector()


def kl_diag_components(q: GaussianSpec, p: GaussianSpec) -> tuple[float, float]:
    """(mean component, variance component) of KL(q || p), each nonnegative.

    2 KL = sum (q.mean - p.mean)^2 / p.var            [mean component]
         + sum (q.var / p.var - 1 + ln(p.var / q.var)) [variance component]
    """
    qm, qv, pm, pv = _as_pair(q, p)
    mean_part = 0.5 * float(np.sum((qm - pm) ** 2 / pv))
    r = qv / pv
    var_part = 0.5 * float(np.sum(r - 1.0 - np.log(r)))
    return mean_part, var_part


def kl_diag(q: GaussianSpec, p: GaussianSpec) -> float:
    """KL divergence between two diagonal Gaussians, in nats."""
    mean_part, var_part = kl_diag_components(q, p)
    return max(mean_part + var_part, 0.0)


def oracle_variance_kl(posterior: GaussianSpec, prior_mean: np.ndarray) -> float:
    """Reduced KL after optimizing a diagonal prior variance per coordinate.

    For displacement d_i = posterior.mean_i - prior_mean_i and posterior
    variance s_i, the per-coordinate optimum of kl_diag over the prior
    variance is attained at d_i^2 + s_i, leaving

        (1/2) sum_i ln(1 + d_i^2 / s_i).

    This is a hypothetical (not certifiable) quantity: the prior variance
    peeks at the posterior.
    """
    prior_mean = np.asarray(prior_mean, dtype=np.float64)
    if prior_mean.shape != posterior.mean.shape:
        raise ValueError(
            f"dimension mismatch: prior mean {prior_mean.shape}, posterior {posterior.mean.shape}"
        )
    d2 = (posterior.mean - prior_mean) ** 2
    return 0.5 * float(np.sum(np.log1p(d2 / posterior.variance_vector())))


def appc_prior_variance(trace_cond_cov: float, trace_sigma: float, p_dim: int) -> float:
    """Isotropic prior variance (tr(conditional cov) + tr(posterior cov)) / p."""
    if p_dim < 1 or int(p_dim) != p_dim:
        raise ValueError(f"p_dim={p_dim} must be a positive integer")
    if trace_cond_cov < 0 or trace_sigma < 0:
        raise ValueError("traces must be nonnegative")
    if trace_cond_cov == 0.0 and trace_sigma == 0.0:
        raise ValueError("degenerate posterior: both traces are zero")
    return (float(trace_cond_cov) + float(trace_sigma)) / int(p_dim)


def scaled_l2(w_s: np.ndarray, w_alpha: np.ndarray, alpha: float, n: int) -> float:
    """Squared L2 distance scaled by the effective evaluation-set size.

    d(alpha) = ||w_s - w_alpha||^2 / ((1 - alpha) n); requires alpha in [0, 1)
    and (1 - alpha) n >= 1.
    """
    w_s = np.asarray(w_s, dtype=np.float64)
    w_alpha = np.asarray(w_alpha, dtype=np.float64)
    if w_s.shape != w_alpha.shape:
        raise ValueError(f"dimension mismatch: {w_s.shape} vs {w_alpha.shape}")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha={alpha} outside [0, 1)")
    denom = (1.0 - alpha) * n
    if denom < 1.0:
        raise ValueError(f"(1 - alpha) * n = {denom} < 1")
    return float(np.sum((w_s - w_alpha) ** 2)) / denom
