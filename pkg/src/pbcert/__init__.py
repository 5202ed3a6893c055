"""PAC-Bayes risk certificates with data-dependent priors.

Submodules:

- ``bounds``: binary-KL algebra, kl-inversion, linear / Maurer / variational
  bounds, union-bound delta accounting, Monte-Carlo Gibbs risk certification.
- ``gaussians``: diagonal-Gaussian KL machinery and the scaled L2 diagnostic.
- ``toy``: the analytic decreasing-step-size linear model (exact bound curves
  plus a Monte-Carlo simulator).
- ``nn``: deterministic from-scratch MLP training with prefix/ghost coupling.
- ``pipeline``: bound evaluation, direct bound minimization, and the
  oracle-variance study for trained networks.
- ``data`` / ``results``: dataset ingestion and CSV/manifest persistence.
- ``cli``: command-line entry point (``pbcert``).
"""

from pbcert.bounds import (
    BoundInputs,
    BoundReport,
    binary_kl,
    kl_inverse,
    linear_bound,
    maurer_b_term,
    mc_gibbs_risk,
    optimal_beta_bound,
    union_adjusted_delta,
    variational_kl_bound,
)
from pbcert.gaussians import GaussianSpec, appc_prior_variance, kl_diag, oracle_variance_kl, scaled_l2

__all__ = [
    "BoundInputs",
    "BoundReport",
    "binary_kl",
    "kl_inverse",
    "linear_bound",
    "maurer_b_term",
    "mc_gibbs_risk",
    "optimal_beta_bound",
    "union_adjusted_delta",
    "variational_kl_bound",
    "GaussianSpec",
    "appc_prior_variance",
    "kl_diag",
    "oracle_variance_kl",
    "scaled_l2",
]

__version__ = "0.1.0"
