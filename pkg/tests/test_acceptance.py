"""Acceptance suite: one test per release criterion, each printing a PASS
line with its measured numbers (run with -s to see them). Tolerances are
fixed here, not configurable.

The optional MNIST tier runs only when PBCERT_MNIST_DIR points at a
directory holding the standard IDX files.
"""

import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from pbcert import bounds, nn, toy
from pbcert.data import synth_dataset
from pbcert.gaussians import GaussianSpec, kl_diag, oracle_variance_kl
from pbcert.pipeline import (
    ExperimentConfig,
    bound_opt,
    build_dataset,
    get_bound,
    l2_sweep,
    oracle_variance_study,
)

# ---------------------------------------------------------------------------
# shared synthetic task: 20-dim 2-class Gaussian pairs, n = 2000


def _task_cfg(**kw):
    base = dict(
        dataset={"kind": "synthetic", "generator": "gaussian_pairs", "n": 2000,
                 "dim": 20, "separation": 3.0, "seed": 100},
        test_dataset={"kind": "synthetic", "generator": "gaussian_pairs", "n": 4000,
                      "dim": 20, "separation": 3.0, "seed": 200},
        layer_sizes=(20, 32, 2),
        alpha_grid=(0.0, 0.4, 0.7, 0.9),
        seeds=tuple(range(20)),
        epsilon=0.06,
        batch=100,
        learning_rate=0.1,
        bound_opt_learning_rate=0.005,
        momentum=0.95,
        max_epochs=60,
        mc_test_samples=512,
    )
    base.update(kw)
    return ExperimentConfig(**base)


GHOST_SPEC = {"kind": "synthetic", "generator": "gaussian_pairs", "n": 2000,
              "dim": 20, "separation": 3.0, "seed": 300}


def test_acceptance_toy_figure1():
    t0 = time.perf_counter()
    cal = toy.calibrated_config()
    rows = toy.sweep_alpha(cal, [0.01 * i for i in range(100)])
    lower_at_zero = rows[0].lower
    best = toy.argmin_upper(rows)
    elapsed = time.perf_counter() - t0
    assert lower_at_zero > 1.0, "no-conditioning lower bound must certify vacuity"
    assert lower_at_zero == pytest.approx(1.0551002179761775, abs=1e-9)
    assert best.m > 0 and 15 <= best.m <= 35
    assert best.upper <= 0.17
    # literal preset: every formula evaluates, and the headline value does
    # NOT reproduce (the lower bound at alpha = 0 comes out near 0.32, far
    # from exceeding 1); the mismatch is asserted, not hidden
    lit = toy.paper_literal_config()
    rows_lit = toy.sweep_alpha(lit, [0.01 * i for i in range(100)])
    assert all(math.isfinite(r.upper) and math.isfinite(r.lower) for r in rows_lit)
    assert rows_lit[0].lower == pytest.approx(0.3181489352644024, abs=1e-9)
    assert rows_lit[0].lower < 1.0
    assert elapsed < 1.0
    print(
        f"\nACCEPTANCE toy-figure1: PASS  lower(0)={lower_at_zero:.4f}>1, "
        f"argmin m={best.m} in [15,35], min upper={best.upper:.4f}<=0.17, "
        f"literal lower(0)={rows_lit[0].lower:.4f} (mismatch documented), {elapsed:.3f}s"
    )


def test_acceptance_toy_monte_carlo_oracle():
    t0 = time.perf_counter()
    worst_rel = 0.0
    for cfg in (toy.calibrated_config(), toy.paper_literal_config()):
        for m in (0, 10, 24):
            j = toy.PrefixSet.initial(m)
            rng = nn.derive_rng(4242, m, int(cfg.kappa_var * 1000))
            res = toy.mc_simulate(cfg, j, 100_000, rng, method="gram")
            analytic = toy.cond_mutual_info(j, cfg)
            rel = abs(res.mean_kl - analytic) / analytic
            worst_rel = max(worst_rel, rel)
            assert rel < 0.02, f"kl mismatch {rel} at m={m}, kappa={cfg.kappa_var}"
            assert res.risk_comp <= toy.risk_upper(cfg) + 3 * res.risk_comp_stderr
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0
    print(
        f"\nACCEPTANCE toy-mc-oracle: PASS  worst rel err={worst_rel:.2e}<0.02 "
        f"(6 configs x 1e5 trials), {elapsed:.0f}s<120s"
    )


def test_acceptance_bound_algebra_properties():
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(31337))
    # kl-inversion round trip at 1e-10 over 1e4 random (q, B). The budget is
    # capped at 8 (1 - q): beyond that the root sits so close to p = 1 that
    # the divergence moves by more than 1e-10 between adjacent doubles, so no
    # 64-bit answer could round-trip tighter (the inverse itself still
    # resolves p to the nearest float there).
    p_top = math.nextafter(1.0, 0.0)
    worst = 0.0
    for _ in range(10_000):
        q = float(rng.uniform(0.0, 0.999))
        b = float(rng.uniform(1e-6, min(1.0, 8.0 * (1.0 - q))))
        p = bounds.kl_inverse(q, b)
        if p < 1.0:
            expected = min(b, bounds.binary_kl(q, p_top))
            worst = max(worst, abs(bounds.binary_kl(q, p) - expected))
    assert worst < 1e-10

    # variational bound dominates the exact inversion on the declared grid;
    # the maximum equality gap is recorded, not asserted
    max_gap = 0.0
    for r in np.arange(0.0, 0.5001, 0.01):
        for b in np.arange(0.001, 0.2001, 0.001):
            v = bounds.variational_kl_bound(float(r), float(b)).final_bound
            inv = bounds.kl_inverse(float(r), float(b))
            assert v >= inv - 1e-12
            max_gap = max(max_gap, v - inv)

    # closed-form optimal beta against a 1e5-point grid search
    betas = np.linspace(1e-5, 1.0 - 1e-5, 100_000)
    worst_beta = 0.0
    for _ in range(100):
        r = float(rng.uniform(0.0, 0.5))
        c = float(rng.uniform(1e-4, 0.5))
        grid_min = float(np.min(r / betas + c / (2.0 * betas * (1.0 - betas))))
        closed = bounds.optimal_beta_bound(r, c)
        assert grid_min >= closed - 1e-12
        worst_beta = max(worst_beta, grid_min - closed)
    assert worst_beta < 1e-6

    # monotonicity sweep
    for _ in range(500):
        r = float(rng.uniform(0, 0.9))
        kl = float(rng.uniform(0, 30))
        n = int(rng.integers(20, 10**5))
        d = float(rng.uniform(0.005, 0.5))
        b = bounds.maurer_b_term(kl, n, d)
        assert bounds.maurer_b_term(kl + 1.0, n, d) >= b
        assert bounds.maurer_b_term(kl, 2 * n, d) <= b
        assert bounds.maurer_b_term(kl, n, min(0.99, 2 * d)) <= b
        v = bounds.variational_kl_bound(r, b).final_bound
        assert bounds.variational_kl_bound(min(1.0, r + 0.05), b).final_bound >= v
        assert bounds.variational_kl_bound(r, b * 1.5).final_bound >= v

    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    print(
        f"\nACCEPTANCE bound-algebra: PASS  round-trip worst={worst:.2e}<1e-10, "
        f"variational-vs-inverse max gap={max_gap:.4f} (recorded), "
        f"beta-grid worst={worst_beta:.2e}<1e-6, {elapsed:.1f}s<30s"
    )


def test_acceptance_gaussian_kl_oracle():
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(999))
    # 2-D Monte-Carlo log-density-ratio estimate, 1e6 samples, 1% relative
    q = GaussianSpec(np.array([0.4, -0.9]), np.array([0.7, 1.8]))
    p = GaussianSpec(np.array([-0.3, 0.6]), np.array([1.4, 0.8]))
    x = q.sample(1_000_000, rng)

    def logpdf(x, g):
        var = g.variance_vector()
        return -0.5 * np.sum((x - g.mean) ** 2 / var + np.log(2 * math.pi * var), axis=1)

    est = float(np.mean(logpdf(x, q) - logpdf(x, p)))
    rel = abs(est - kl_diag(q, p)) / kl_diag(q, p)
    assert rel < 0.01

    # reduced optimal-variance KL below every fixed prior variance on the
    # grid, for 1e3 random instances
    grid = np.geomspace(1e-4, 1e2, 13)
    for _ in range(1000):
        d = int(rng.integers(1, 8))
        post = GaussianSpec(rng.normal(size=d), rng.uniform(0.05, 2.0, d))
        prior_mean = rng.normal(size=d)
        lo = oracle_variance_kl(post, prior_mean)
        for s in grid:
            assert lo <= kl_diag(post, GaussianSpec(prior_mean, float(s))) + 1e-12
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    print(
        f"\nACCEPTANCE gaussian-kl-oracle: PASS  mc rel err={rel:.4f}<0.01, "
        f"oracle<=kl_diag on 13-pt grid x 1000 instances, {elapsed:.0f}s<60s"
    )


def test_acceptance_gradient_checks():
    from tests.test_nn import LAYER_CONFIGS, _finite_difference

    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(52))
    worst = 0.0
    for sizes in LAYER_CONFIGS:
        w = nn.init_weights(sizes, 1, dtype=np.float64)
        w += rng.normal(0, 0.05, w.shape)
        X = rng.normal(size=(12, sizes[0]))
        y = rng.integers(0, sizes[-1], 12)
        _, grad = nn.forward_backward(nn.MLP(sizes, w), X, y)
        fd = _finite_difference(w, sizes, X, y)
        rel = float(np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-6)))
        worst = max(worst, rel)
        assert rel < 1e-4, f"gradient mismatch {rel} for layers {sizes}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    print(
        f"\nACCEPTANCE gradient-checks: PASS  worst rel err={worst:.2e}<1e-4 "
        f"over {len(LAYER_CONFIGS)} architectures, {elapsed:.1f}s<30s"
    )


def test_acceptance_certificate_validity():
    t0 = time.perf_counter()
    cfg = _task_cfg()
    ds = build_dataset(cfg.dataset).truncate_to_multiple(cfg.batch)
    tds = build_dataset(cfg.test_dataset)
    res = get_bound(ds, cfg, test_ds=tds)
    # held-out Gibbs risk (4000-sample test set, 512 draws) below the
    # certificate, per seed across every alpha
    valid_seeds = 0
    for s in cfg.seeds:
        if all(c.bound >= c.test_error for r in res for c in r.cells if c.seed == s):
            valid_seeds += 1
    assert valid_seeds >= 19, f"only {valid_seeds}/20 seeds valid"
    at_zero = next(r for r in res if r.alpha == 0.0)
    best_pos = min((r for r in res if r.alpha > 0.0), key=lambda r: r.bound_mean)
    assert best_pos.bound_mean < at_zero.bound_mean
    elapsed = time.perf_counter() - t0
    assert elapsed < 900.0
    print(
        f"\nACCEPTANCE certificate-validity: PASS  {valid_seeds}/20 seeds valid, "
        f"best alpha={best_pos.alpha} bound {best_pos.bound_mean:.4f} < "
        f"alpha=0 bound {at_zero.bound_mean:.4f}, {elapsed:.0f}s<900s"
    )


def test_acceptance_direct_optimization():
    t0 = time.perf_counter()
    # the direct optimizer runs under a fixed small step budget, so the
    # alpha = 0 posterior must learn from random initialization inside the
    # budget while alpha = 0.7 starts at the prefix-trained prior; the
    # two-hidden-layer net makes that budget genuinely binding
    cfg = _task_cfg(
        layer_sizes=(20, 32, 32, 2),
        alpha_grid=(0.0, 0.7),
        seeds=tuple(range(10)),
        bound_opt_steps=100,
        prefix_epsilon=0.04,
    )
    ds = build_dataset(cfg.dataset).truncate_to_multiple(cfg.batch)
    tds = build_dataset(cfg.test_dataset)
    cells = bound_opt(ds, cfg, test_ds=tds)
    by_alpha = {}
    for c in cells:
        by_alpha.setdefault(c.alpha, []).append(c)
    mean_bound = {a: float(np.mean([c.bound for c in v])) for a, v in by_alpha.items()}
    mean_test = {a: float(np.mean([c.test_error for c in v])) for a, v in by_alpha.items()}
    assert mean_bound[0.7] < mean_bound[0.0]
    assert mean_test[0.7] < mean_test[0.0]
    elapsed = time.perf_counter() - t0
    assert elapsed < 1200.0
    print(
        f"\nACCEPTANCE direct-optimization: PASS  alpha=0.7 bound "
        f"{mean_bound[0.7]:.4f}<{mean_bound[0.0]:.4f}, test "
        f"{mean_test[0.7]:.4f}<{mean_test[0.0]:.4f} (10 seeds), {elapsed:.0f}s<1200s"
    )


def test_acceptance_oracle_variance_study():
    t0 = time.perf_counter()
    cfg = _task_cfg(seeds=tuple(range(10)))
    ds = build_dataset(cfg.dataset).truncate_to_multiple(cfg.batch)
    cells = oracle_variance_study(ds, cfg)
    gaps = {}
    for c in cells:
        assert c.oracle_bound <= c.iso_bound  # exact, by construction
        gaps.setdefault(c.alpha, []).append(c.iso_bound - c.oracle_bound)
    largest_alpha = max(gaps)
    gap_hi = float(np.mean(gaps[largest_alpha]))
    gap_zero = float(np.mean(gaps[0.0]))
    assert gap_hi < gap_zero
    elapsed = time.perf_counter() - t0
    assert elapsed < 1200.0
    print(
        f"\nACCEPTANCE oracle-variance: PASS  oracle<=iso everywhere, mean gap "
        f"at alpha={largest_alpha} {gap_hi:.4f} < at alpha=0 {gap_zero:.4f} "
        f"(10 seeds), {elapsed:.0f}s<1200s"
    )


def test_acceptance_ghost_gap():
    t0 = time.perf_counter()
    cfg = _task_cfg(seeds=tuple(range(10)), alpha_grid=(0.0, 0.4))
    ds = build_dataset(cfg.dataset).truncate_to_multiple(cfg.batch)
    gds = build_dataset(GHOST_SPEC)
    cells = l2_sweep(ds, gds, cfg)
    gaps = {}
    for c in cells:
        gaps.setdefault(c.alpha, []).append(abs(c.d_prefix - c.d_ghost))
    gap_zero = float(np.mean(gaps[0.0]))
    gap_04 = float(np.mean(gaps[0.4]))
    assert gap_04 < gap_zero
    elapsed = time.perf_counter() - t0
    assert elapsed < 900.0
    print(
        f"\nACCEPTANCE ghost-gap: PASS  mean |d_prefix-d_ghost| at alpha=0.4 "
        f"{gap_04:.5f} < at alpha=0 {gap_zero:.5f} (10 seeds), {elapsed:.0f}s<900s"
    )


@pytest.mark.skipif(
    not os.environ.get("PBCERT_MNIST_DIR"),
    reason="optional tier: set PBCERT_MNIST_DIR to a directory with the IDX files",
)
def test_acceptance_mnist_subset_nonvacuous():
    # reduced check: 10k training samples, 784-200-10 net, 5 seeds; a full
    # 60k-sample run with 50 seeds is out of desk scale
    t0 = time.perf_counter()
    root = os.environ["PBCERT_MNIST_DIR"]

    def find(stem):
        for suffix in ("", ".gz"):
            path = os.path.join(root, stem + suffix)
            if os.path.exists(path):
                return path
        raise FileNotFoundError(f"{stem} not found under {root}")

    cfg = _task_cfg(
        dataset={"kind": "idx", "images": find("train-images-idx3-ubyte"),
                 "labels": find("train-labels-idx1-ubyte"), "limit": 10_000},
        test_dataset={"kind": "idx", "images": find("t10k-images-idx3-ubyte"),
                      "labels": find("t10k-labels-idx1-ubyte")},
        layer_sizes=(784, 200, 10),
        alpha_grid=(0.0, 0.3, 0.5, 0.7),
        seeds=(0, 1, 2, 3, 4),
        epsilon=0.02,
        batch=100,
        learning_rate=0.02,
        momentum=0.95,
        max_epochs=40,
        mc_samples=1000,
        mc_select_samples=60,
        mc_test_samples=128,
    )
    ds = build_dataset(cfg.dataset).truncate_to_multiple(cfg.batch)
    tds = build_dataset(cfg.test_dataset)
    res = get_bound(ds, cfg, test_ds=tds)
    best_pos = min((r for r in res if r.alpha > 0.0), key=lambda r: r.bound_mean)
    assert best_pos.bound_mean < 0.5, "expected a nonvacuous certificate at some alpha > 0"
    elapsed = time.perf_counter() - t0
    assert elapsed < 7200.0
    print(
        f"\nACCEPTANCE mnist-subset: PASS  best alpha={best_pos.alpha} mean bound "
        f"{best_pos.bound_mean:.4f}<0.5, {elapsed:.0f}s<7200s"
    )
