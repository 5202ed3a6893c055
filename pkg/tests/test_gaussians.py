"""Diagonal-Gaussian KL tests: closed forms against Monte-Carlo log-density
ratios, the reduced optimal-variance KL against grid minimization, and the
isotropic specializations."""

import math

import numpy as np
import pytest

from pbcert.gaussians import (
    GaussianSpec,
    appc_prior_variance,
    kl_diag,
    kl_diag_components,
    oracle_variance_kl,
    scaled_l2,
)


def test_kl_diag_identical_is_zero():
    g = GaussianSpec(np.array([1.0, -2.0]), np.array([0.5, 2.0]))
    assert kl_diag(g, g) == 0.0


def test_kl_diag_unit_shift_closed_form():
    q = GaussianSpec(np.zeros(1), np.ones(1))
    p = GaussianSpec(np.ones(1), np.ones(1))
    assert kl_diag(q, p) == pytest.approx(0.5, abs=1e-15)


def test_kl_diag_nonnegative_zero_iff_equal():
    rng = np.random.Generator(np.random.PCG64(10))
    for _ in range(300):
        d = int(rng.integers(1, 6))
        q = GaussianSpec(rng.normal(size=d), rng.uniform(0.1, 3.0, d))
        p = GaussianSpec(rng.normal(size=d), rng.uniform(0.1, 3.0, d))
        kl = kl_diag(q, p)
        assert kl >= 0.0
        if kl < 1e-12:
            assert np.allclose(q.mean, p.mean) and np.allclose(
                q.variance_vector(), p.variance_vector()
            )


def test_kl_diag_components_nonnegative_and_sum():
    rng = np.random.Generator(np.random.PCG64(11))
    for _ in range(200):
        d = int(rng.integers(1, 8))
        q = GaussianSpec(rng.normal(size=d), rng.uniform(0.1, 3.0, d))
        p = GaussianSpec(rng.normal(size=d), rng.uniform(0.1, 3.0, d))
        m, v = kl_diag_components(q, p)
        assert m >= 0.0 and v >= -1e-15
        assert m + v == pytest.approx(kl_diag(q, p), abs=1e-12)


def test_kl_diag_matches_monte_carlo_log_ratio():
    # E_q[ln q - ln p] estimated from samples; tighter 1e6-sample version in
    # the acceptance suite
    rng = np.random.Generator(np.random.PCG64(12))
    q = GaussianSpec(np.array([0.3, -0.7]), np.array([0.8, 1.6]))
    p = GaussianSpec(np.array([-0.2, 0.5]), np.array([1.2, 0.9]))
    x = q.sample(200_000, rng)

    def logpdf(x, g):
        var = g.variance_vector()
        return -0.5 * np.sum((x - g.mean) ** 2 / var + np.log(2 * math.pi * var), axis=1)

    est = float(np.mean(logpdf(x, q) - logpdf(x, p)))
    assert est == pytest.approx(kl_diag(q, p), rel=0.02)


def test_kl_diag_dimension_mismatch():
    q = GaussianSpec(np.zeros(2), np.ones(2))
    p = GaussianSpec(np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        kl_diag(q, p)


def test_isotropic_specialization_matches_explicit_formula():
    rng = np.random.Generator(np.random.PCG64(13))
    for _ in range(50):
        d = int(rng.integers(1, 10))
        mean_q = rng.normal(size=d)
        mean_p = rng.normal(size=d)
        var_q = rng.uniform(0.2, 2.0, d)
        sp = float(rng.uniform(0.2, 2.0))
        q = GaussianSpec(mean_q, var_q)
        p = GaussianSpec(mean_p, sp)
        explicit = 0.5 * (
            np.sum((mean_q - mean_p) ** 2) / sp
            + np.sum(var_q) / sp
            - d
            + d * math.log(sp)
            - np.sum(np.log(var_q))
        )
        assert kl_diag(q, p) == pytest.approx(explicit, abs=1e-12)


def test_oracle_variance_kl_zero_displacement():
    post = GaussianSpec(np.array([1.0, 2.0]), np.array([0.3, 0.4]))
    assert oracle_variance_kl(post, post.mean.copy()) == 0.0


def test_oracle_variance_kl_closed_form_1d():
    post = GaussianSpec(np.array([1.0]), np.array([1.0]))
    assert oracle_variance_kl(post, np.zeros(1)) == pytest.approx(0.5 * math.log(2), abs=1e-15)


def test_oracle_variance_kl_below_any_fixed_prior_variance():
    rng = np.random.Generator(np.random.PCG64(14))
    for _ in range(100):
        d = int(rng.integers(1, 6))
        post = GaussianSpec(rng.normal(size=d), rng.uniform(0.1, 2.0, d))
        prior_mean = rng.normal(size=d)
        lo = oracle_variance_kl(post, prior_mean)
        for s in np.geomspace(1e-3, 1e3, 25):
            assert lo <= kl_diag(post, GaussianSpec(prior_mean, float(s))) + 1e-12


def test_oracle_variance_kl_attained_at_per_coordinate_optimum():
    # per-coordinate optimal prior variance is displacement^2 + posterior var
    rng = np.random.Generator(np.random.PCG64(15))
    post = GaussianSpec(rng.normal(size=4), rng.uniform(0.2, 1.5, 4))
    prior_mean = rng.normal(size=4)
    opt_var = (post.mean - prior_mean) ** 2 + post.variance_vector()
    at_opt = kl_diag(post, GaussianSpec(prior_mean, opt_var))
    assert oracle_variance_kl(post, prior_mean) == pytest.approx(at_opt, abs=1e-12)


def test_oracle_variance_kl_rescaling_invariance():
    rng = np.random.Generator(np.random.PCG64(16))
    post = GaussianSpec(rng.normal(size=5), rng.uniform(0.1, 1.0, 5))
    prior_mean = rng.normal(size=5)
    base = oracle_variance_kl(post, prior_mean)
    for c in (0.1, 2.0, 17.0):
        d = post.mean - prior_mean
        scaled = GaussianSpec(prior_mean + c * d, c * c * post.variance_vector())
        assert oracle_variance_kl(scaled, prior_mean) == pytest.approx(base, rel=1e-12)


def test_appc_prior_variance_examples():
    # zero conditional covariance returns the posterior variance itself
    assert appc_prior_variance(0.0, 8 * 0.25, 8) == pytest.approx(0.25, abs=1e-15)
    assert appc_prior_variance(3.0, 1.0, 4) == 1.0
    with pytest.raises(ValueError):
        appc_prior_variance(0.0, 0.0, 4)


def test_appc_prior_variance_expected_kl_bound():
    # with isotropic posterior variance s, the expected KL under this prior
    # is at most tr(cond cov) / (2 s): checked by Monte Carlo over a
    # synthetic distribution of posterior centers
    rng = np.random.Generator(np.random.PCG64(17))
    p_dim = 12
    s = 0.4
    center = rng.normal(size=p_dim)
    cond_cov = rng.uniform(0.05, 0.5, p_dim)
    sp = appc_prior_variance(float(cond_cov.sum()), s * p_dim, p_dim)
    prior = GaussianSpec(center, sp)
    kls = []
    for _ in range(4000):
        w = center + rng.normal(size=p_dim) * np.sqrt(cond_cov)
        kls.append(kl_diag(GaussianSpec(w, s), prior))
    bound = float(cond_cov.sum()) / (2 * s)
    se = float(np.std(kls) / math.sqrt(len(kls)))
    assert np.mean(kls) <= bound + 3 * se


def test_variance_validation():
    with pytest.raises(ValueError):
        GaussianSpec(np.zeros(2), np.array([1.0, 1e-30]))
    with pytest.raises(ValueError):
        GaussianSpec(np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        GaussianSpec(np.zeros(2), np.ones(3))


def test_scaled_l2():
    w = np.zeros(4)
    v = np.full(4, 5.0)  # squared distance 100
    assert scaled_l2(v, w, 0.0, 1000) == pytest.approx(0.1, abs=1e-15)
    assert scaled_l2(v, w, 0.5, 1000) == pytest.approx(0.2, abs=1e-15)
    assert scaled_l2(w, w, 0.3, 10) == 0.0
    with pytest.raises(ValueError):
        scaled_l2(v, w, 1.0, 1000)
    with pytest.raises(ValueError):
        scaled_l2(v, w, 0.999, 100)
