import math

import numpy as np
import pytest
from scipy.stats import kstest

from exactquant.applications import (
    ChainState,
    LangevinConfig,
    beta_squared,
    budget_noise_sigma,
    compress_with_budget,
    exact_noise_compressor,
    make_toy_gaussian_data,
    qlsd_star_step,
    run_langevin,
    smoothing_perturb,
)
from exactquant.quantizers import support_bound
from exactquant.distributions import gaussian
from exactquant.randomness import SharedRandomness


# ---------------------------------------------------------------------------
# exact-noise compressor


def test_compressor_zero_variance_identity():
    x = np.array([1.0, -2.0, 0.25])
    y, v = exact_noise_compressor(x, 0.0, SharedRandomness(800))
    assert np.array_equal(y, x) and v == 0.0


def test_compressor_error_covariance():
    d, n = 5, 4 * 10**4
    x = np.tile(np.array([0.5, -1.0, 2.0, 0.0, -3.0]), (n, 1))
    y, v = exact_noise_compressor(x, 2.0, SharedRandomness(801))
    assert v == 2.0
    err = y - x
    cov = np.cov(err.T)
    se = 2.0 / math.sqrt(n)
    assert np.allclose(np.diag(cov), 2.0, atol=5 * se)
    off = cov[~np.eye(d, dtype=bool)]
    assert np.all(np.abs(off) < 3 * se)
    assert kstest(err.ravel() / math.sqrt(2.0), "norm").pvalue > 0.01


def test_compressor_rejects_negative_variance():
    with pytest.raises(ValueError):
        exact_noise_compressor(np.ones(3), -1.0, SharedRandomness(802))


def test_budget_sigma_inverts_support_bound():
    for b in (2, 3, 4, 8):
        sigma_b = budget_noise_sigma(b, t=2.0)
        assert support_bound(gaussian(sigma_b), 2.0) == pytest.approx(2.0**b)
    with pytest.raises(ValueError):
        budget_noise_sigma(1)


def test_compress_with_budget_reported_variance():
    x = np.array([0.5, -0.25, 1.5, 0.75])
    scale = 1.5
    b = 4
    sigma_b = budget_noise_sigma(b)
    _, v = compress_with_budget(x, b, SharedRandomness(804))
    assert v == pytest.approx(sigma_b**2 * scale**2)
    # tiling keeps the sup norm, so one big call realizes i.i.d. trials
    trials = 2 * 10**4
    tiled = np.tile(x, (trials, 1))
    y, v2 = compress_with_budget(tiled, b, SharedRandomness(803))
    assert v2 == pytest.approx(v)
    errs = y - tiled
    rel_se = math.sqrt(2.0 / (trials * x.size))
    assert errs.var() == pytest.approx(v, rel=5 * rel_se)
    assert kstest(errs.ravel() / math.sqrt(v), "norm").pvalue > 0.01


def test_compress_with_budget_zero_vector_passthrough():
    x = np.zeros(7)
    y, v = compress_with_budget(x, 4, SharedRandomness(805))
    assert np.array_equal(y, x) and v == 0.0


# ---------------------------------------------------------------------------
# variance compensation and the Langevin chain


def test_beta_squared_limits():
    gamma = 5e-4
    assert beta_squared(gamma, [0.0, 0.0]) == pytest.approx(2.0 * gamma)
    assert beta_squared(gamma, [1e9]) == 0.0


def test_langevin_config_validation():
    data = np.zeros((3, 10, 4))
    good = dict(step_gamma=1e-3, n_clients=3, dim=4, bits_b=4,
                burn_in=10, n_samples=10, data=data)
    LangevinConfig(**good)
    with pytest.raises(ValueError):
        LangevinConfig(**{**good, "step_gamma": 0.1})  # above 2/N
    with pytest.raises(ValueError):
        LangevinConfig(**{**good, "bits_b": 1})
    with pytest.raises(ValueError):
        LangevinConfig(**{**good, "dim": 5})


def test_one_step_transition_matches_uncompressed_dynamics():
    # with total injected variance topped up to 2*gamma, one-step transitions
    # have the same first two moments as the uncompressed sampler
    rng = SharedRandomness(806)
    data = make_toy_gaussian_data(3, 10, 4, rng)
    cfg = LangevinConfig(step_gamma=1e-3, n_clients=3, dim=4, bits_b=4,
                         burn_in=0, n_samples=0, data=data)
    theta0 = np.array([1.0, -1.0, 0.5, 2.0])
    total = 30
    drift = theta0 - cfg.step_gamma * total * (theta0 - cfg.anchor)
    trials = 10**4
    root = SharedRandomness(807)
    nxt = np.stack([
        qlsd_star_step(ChainState(theta0, 0), cfg, root.substream(t)).theta
        for t in range(trials)
    ])
    se_mean = math.sqrt(2.0 * cfg.step_gamma / trials)
    assert np.all(np.abs(nxt.mean(axis=0) - drift) < 4 * se_mean)
    rel_se = math.sqrt(2.0 / trials)
    assert np.allclose(nxt.var(axis=0), 2.0 * cfg.step_gamma,
                       rtol=5 * rel_se)


def test_langevin_recovers_conjugate_posterior():
    rng = SharedRandomness(808)
    data = make_toy_gaussian_data(3, 10, 4, rng)
    cfg = LangevinConfig(step_gamma=1e-3, n_clients=3, dim=4, bits_b=4,
                         burn_in=2000, n_samples=5000, data=data)
    samples = run_langevin(cfg, SharedRandomness(809))
    post_sd = math.sqrt(cfg.posterior_var)
    assert np.all(np.abs(samples.mean(axis=0) - cfg.posterior_mean)
                  < 3 * post_sd)
    # marginal spread should be near the posterior scale too
    assert np.all(samples.std(axis=0) < 3 * post_sd)
    assert np.all(np.isfinite(samples))


# ---------------------------------------------------------------------------
# randomized smoothing


def test_smoothing_zero_sigma_identity():
    theta = np.array([0.3, -0.7])
    out = smoothing_perturb(theta, 0.0, SharedRandomness(810))
    assert np.array_equal(out, theta)


def test_smoothing_error_law():
    d, trials, sigma = 3, 3 * 10**4, 0.5
    theta = np.tile(np.array([1.0, 0.0, -2.0]), (trials, 1))
    out = smoothing_perturb(theta, sigma, SharedRandomness(811))
    err = (out - theta).ravel() / sigma
    assert kstest(err, "norm").pvalue > 0.01


def test_smoothing_sandwich_l1():
    # f = l1 norm is sqrt(d)-Lipschitz in l2, so the smoothed value sits in
    # [f(theta), f(theta) + sigma * sqrt(d) * sqrt(d)]
    d, trials, sigma = 6, 3 * 10**4, 0.4
    rng = SharedRandomness(812)
    theta = rng.normals(d) * 2.0
    out = smoothing_perturb(np.tile(theta, (trials, 1)), sigma,
                            SharedRandomness(813))
    vals = np.abs(out).sum(axis=1)
    f0 = np.abs(theta).sum()
    excess = vals.mean() - f0
    se = vals.std() / math.sqrt(trials)
    assert excess >= -3 * se
    assert excess <= sigma * d + 3 * se


def test_chain_stable_over_long_run():
    # desk-scale stability: the documented step size keeps 1e5 iterations
    # finite and within a sane neighbourhood of the posterior
    rng = SharedRandomness(814)
    data = make_toy_gaussian_data(5, 20, 10, rng)
    cfg = LangevinConfig(step_gamma=5e-4, n_clients=5, dim=10, bits_b=4,
                         burn_in=0, n_samples=0, data=data)
    state = ChainState(theta=np.zeros(10), iteration=0)
    shared = SharedRandomness(815)
    checkpoints = []
    for _ in range(10**5):
        state = qlsd_star_step(state, cfg, shared)
        if state.iteration % 10**4 == 0:
            checkpoints.append(state.theta.copy())
    assert all(np.all(np.isfinite(t)) for t in checkpoints)
    assert np.linalg.norm(checkpoints[-1] - cfg.posterior_mean) < 5.0
