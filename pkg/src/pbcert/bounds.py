"""Bound algebra for PAC-Bayes risk certificates.

All divergences are in nats and all logs are natural. Every function here is
a pure function of its arguments; ``mc_gibbs_risk`` takes an explicit RNG so
parallel callers never share hidden state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np

if TYPE_CHECKING:
    from pbcert.gaussians import GaussianSpec

__all__ = [
    "InfiniteDivergenceError",
    "BoundInputs",
    "BoundReport",
    "binary_kl",
    "kl_inverse",
    "linear_bound",
    "optimal_beta_bound",
    "maurer_b_term",
    "variational_kl_bound",
    "union_adjusted_delta",
    "mc_gibbs_risk",
]

# Bisection tolerance on the divergence value, and the iteration cap that
# guarantees termination even in the flat region near p = q.
_KL_INV_TOL = 1e-12
_KL_INV_MAX_ITER = 200


class InfiniteDivergenceError(ValueError):
    """binary_kl(q, p) diverges: p lies on the boundary while q != p."""


def _check_prob(name: str, x: float, lo: float = 0.0, hi: float = 1.0) -> float:
    x = float(x)
    if math.isnan(x):
        raise ValueError(f"{name} is NaN")
    if not lo <= x <= hi:
        raise ValueError(f"{name}={x} outside [{lo}, {hi}]")
    return x


@dataclass(frozen=True)
class BoundInputs:
    """Inputs of one bound evaluation.

    ``n_eval`` is the number of samples actually used in the risk estimate,
    i.e. the size of the training set minus whatever the prior saw.
    """

    emp_risk: float
    kl: float
    n_eval: int
    delta: float

    def __post_init__(self):
        _check_prob("emp_risk", self.emp_risk)
        if math.isnan(self.kl) or self.kl < 0:
            raise ValueError(f"kl={self.kl} must be a nonnegative real")
        if self.n_eval < 1:
            raise ValueError(f"n_eval={self.n_eval} must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta={self.delta} outside (0, 1)")


@dataclass(frozen=True)
class BoundReport:
    """Result of one variational-KL bound evaluation.

    ``moment_value`` / ``pinsker_value`` are the two unclamped branch values,
    kept for diagnostics; ``final_bound`` is their minimum clamped to [0, 1].
    ``delta_mc`` records the share of the confidence budget spent on the
    Monte-Carlo risk certification, if any.
    """

    b_term: float
    moment_value: float
    pinsker_value: float
    final_bound: float
    inputs: Optional[BoundInputs] = None
    beta: Optional[float] = None
    delta_mc: Optional[float] = None


def binary_kl(q: float, p: float) -> float:
    """KL divergence between Bernoulli(q) and Bernoulli(p), in nats.

    Uses the convention 0 ln 0 = 0. Requires p in (0, 1) unless q == p;
    a boundary p with q != p raises InfiniteDivergenceError.
    """
    q = _check_prob("q", q)
    p = _check_prob("p", p)
    if p in (0.0, 1.0):
        if q == p:
            return 0.0
        raise InfiniteDivergenceError(f"binary_kl({q}, {p}) is infinite")
    out = 0.0
    if q > 0.0:
        out += q * math.log(q / p)
    if q < 1.0:
        out += (1.0 - q) * math.log((1.0 - q) / (1.0 - p))
    return max(out, 0.0)


def _binary_kl_extended(q: float, p: float) -> float:
    # Internal variant for bisection: +inf on the boundary instead of raising.
    if p <= 0.0 or p >= 1.0:
        return 0.0 if q == p else math.inf
    out = 0.0
    if q > 0.0:
        out += q * math.log(q / p)
    if q < 1.0:
        out += (1.0 - q) * math.log((1.0 - q) / (1.0 - p))
    return out


def kl_inverse(q: float, bound: float) -> float:
    """Largest p in [q, 1) with binary_kl(q, p) <= bound.

    Bisection on [q, 1); stops once the divergence at the midpoint is within
    1e-12 of ``bound`` or after 200 iterations (by which point the interval
    has collapsed to adjacent floats). Returns 1.0 when no p < 1 violates the
    constraint.
    """
    q = _check_prob("q", q)
    if math.isnan(bound) or bound < 0:
        raise ValueError(f"bound={bound} must be a nonnegative real")
    if bound == 0.0 or q == 1.0:
        return q
    if math.isinf(bound):
        return 1.0
    p_max = math.nextafter(1.0, 0.0)
    if _binary_kl_extended(q, p_max) <= bound:
        return 1.0
    lo, hi = q, 1.0
    for _ in range(_KL_INV_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        val = _binary_kl_extended(q, mid)
        if abs(val - bound) <= _KL_INV_TOL:
            return mid
        if val < bound:
            lo = mid
        else:
            hi = mid
    return lo


def linear_bound(emp_risk: float, kl: float, n_eval: int, beta: float, delta: float) -> float:
    """Linear PAC-Bayes bound (1/beta) R + (KL + ln(1/delta)) / (2 beta (1-beta) n).

    Not clamped; callers may clamp to [0, 1] for reporting.
    """
    inputs = BoundInputs(emp_risk=emp_risk, kl=kl, n_eval=n_eval, delta=delta)
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta={beta} outside (0, 1)")
    return inputs.emp_risk / beta + (inputs.kl + math.log(1.0 / inputs.delta)) / (
        2.0 * beta * (1.0 - beta) * inputs.n_eval
    )


def optimal_beta_bound(r: float, c: float) -> float:
    """inf over beta in (0,1) of r/beta + c/(2 beta (1-beta)).

    Closed form r + c + sqrt(2 r c + c^2); the infimum is attained at
    beta = sqrt(r + c/2) / (sqrt(r + c/2) + sqrt(c/2)).
    """
    if math.isnan(r) or r < 0:
        raise ValueError(f"r={r} must be a nonnegative real")
    if math.isnan(c) or c < 0:
        raise ValueError(f"c={c} must be a nonnegative real")
    return r + c + math.sqrt(2.0 * r * c + c * c)


def maurer_b_term(kl: float, n_eval: int, delta: float) -> float:
    """The right-hand side (KL + ln(2 sqrt(n)/delta)) / n of the kl-form bound."""
    inputs = BoundInputs(emp_risk=0.0, kl=kl, n_eval=n_eval, delta=delta)
    return (inputs.kl + math.log(2.0 * math.sqrt(inputs.n_eval) / inputs.delta)) / inputs.n_eval


def variational_kl_bound(
    emp_risk: float,
    b_term: float,
    *,
    inputs: Optional[BoundInputs] = None,
    beta: Optional[float] = None,
    delta_mc: Optional[float] = None,
) -> BoundReport:
    """Piecewise upper bound on the kl-inverted risk.

    moment branch:  R + B + sqrt(B (B + 2 R))
    Pinsker branch: R + sqrt(B / 2)

    The final bound is the smaller branch, clamped to [0, 1]. Always an upper
    bound on kl_inverse(emp_risk, b_term).
    """
    emp_risk = _check_prob("emp_risk", emp_risk)
    if math.isnan(b_term) or b_term < 0:
        raise ValueError(f"b_term={b_term} must be a nonnegative real")
    moment = emp_risk + b_term + math.sqrt(b_term * (b_term + 2.0 * emp_risk))
    pinsker = emp_risk + math.sqrt(b_term / 2.0)
    final = min(1.0, max(0.0, min(moment, pinsker)))
    return BoundReport(
        b_term=b_term,
        moment_value=moment,
        pinsker_value=pinsker,
        final_bound=final,
        inputs=inputs,
        beta=beta,
        delta_mc=delta_mc,
    )


def union_adjusted_delta(delta: float, grid_size: int) -> float:
    """Split a confidence budget across a declared finite grid of choices."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta={delta} outside (0, 1)")
    if int(grid_size) != grid_size or grid_size < 1:
        raise ValueError(f"grid_size={grid_size} must be a positive integer")
    return delta / int(grid_size)


def mc_gibbs_risk(
    posterior: "GaussianSpec",
    losses_fn: Callable[[np.ndarray, object], np.ndarray],
    dataset: object,
    k_samples: int,
    delta_mc: float,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Monte-Carlo estimate and certified upper bound of a Gibbs empirical risk.

    Draws ``k_samples`` weight vectors from the diagonal-Gaussian posterior,
    averages the [0, 1] losses returned by ``losses_fn(weights, dataset)``
    (one mean loss per drawn row), and certifies the sample mean against the
    true Gibbs risk via the kl Chernoff bound: with probability 1 - delta_mc
    over the draws, the true value is at most
    ``kl_inverse(mean, ln(2/delta_mc) / k_samples)``.

    delta_mc must be deducted from the caller's overall confidence budget
    (see union_adjusted_delta); the convention here is delta_mc = delta / 2.
    """
    if k_samples < 1:
        raise ValueError(f"k_samples={k_samples} must be >= 1")
    if not 0.0 < delta_mc < 1.0:
        raise ValueError(f"delta_mc={delta_mc} outside (0, 1)")
    if dataset is None or (hasattr(dataset, "__len__") and len(dataset) == 0):
        raise ValueError("empty dataset")
    draws = posterior.sample(int(k_samples), rng)
    losses = np.asarray(losses_fn(draws, dataset), dtype=np.float64)
    if losses.shape != (int(k_samples),):
        raise ValueError(f"losses_fn returned shape {losses.shape}, expected ({k_samples},)")
    if np.any(losses < -1e-9) or np.any(losses > 1.0 + 1e-9):
        raise ValueError("losses_fn returned values outside [0, 1]")
    mean = float(np.clip(losses, 0.0, 1.0).mean())
    upper = kl_inverse(mean, math.log(2.0 / delta_mc) / int(k_samples))
    return mean, upper
