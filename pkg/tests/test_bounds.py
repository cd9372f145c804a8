import math

import numpy as np
import pytest

from exactquant.aggregate import MixtureSampler, gaussian_mixture
from exactquant.bounds import (
    EntropyReport,
    adaptive_fixed_bits,
    conditional_entropy_mc,
    differential_entropy,
    entropy_report,
    gap_bound_shifted,
    mixture_entropy_lower_bound,
    irwin_hall_cost_bits,
    layered_entropy_pair,
    aggregate_cost_bound,
)
from exactquant.coding import gamma_lengths_array
from exactquant.distributions import gaussian, irwin_hall, laplace, min_step
from exactquant.aggregate import aggregate_config, aggregate_gaussian_rounds
from exactquant.randomness import SharedRandomness, StreamBatch


# ---------------------------------------------------------------------------
# differential entropy


def test_differential_entropy_uniform_unit():
    unit = irwin_hall(1, mu=0.5, sigma=1.0 / math.sqrt(12.0))  # U(0, 1)
    assert differential_entropy(unit) == pytest.approx(0.0, abs=1e-6)


def test_differential_entropy_standard_normal():
    expect = 0.5 * math.log2(2.0 * math.pi * math.e)
    assert differential_entropy(gaussian(1.0)) == pytest.approx(expect, abs=1e-6)


def test_differential_entropy_unit_scale_laplace():
    # Laplace with scale 1 has sigma = sqrt(2); entropy log2(2e)
    assert differential_entropy(laplace(math.sqrt(2.0))) == pytest.approx(
        math.log2(2.0 * math.e), abs=1e-6)


# ---------------------------------------------------------------------------
# layered entropies


def test_layered_entropy_pair_gaussian():
    f = gaussian(1.0)
    h_d, h_w = layered_entropy_pair(f)
    eta = min_step(f)
    assert h_w <= -math.log2(eta) + 1e-9
    assert -1e-9 <= h_w - h_d <= 2.0


def test_layered_entropy_pair_laplace():
    f = laplace(1.0)
    h_d, h_w = layered_entropy_pair(f)
    assert h_w <= -math.log2(min_step(f)) + 1e-9
    assert h_w - h_d <= 2.0


# ---------------------------------------------------------------------------
# conditional message entropy


def test_conditional_entropy_degenerate_input():
    measured, _ = conditional_entropy_mc("direct", gaussian(1.0), 1e-12,
                                         trials=2000,
                                         rng=SharedRandomness(600))
    assert measured == pytest.approx(0.0, abs=1e-9)


def test_conditional_entropy_rejects_tiny_trials():
    with pytest.raises(ValueError):
        conditional_entropy_mc("direct", gaussian(1.0), 8.0, trials=10)


def test_conditional_entropy_gaussian_direct_t64_within_analytic_bounds():
    f = gaussian(1.0)
    rep = entropy_report("direct", f, 64.0, trials=20_000,
                         rng=SharedRandomness(601))
    assert rep.lower - 3 * rep.stderr <= rep.measured <= rep.upper + 3 * rep.stderr
    # the bracket is tight here: upper - lower = 8 log2(e)/64
    assert rep.upper - rep.lower == pytest.approx(8.0 * math.log2(math.e) / 64.0)


@pytest.mark.parametrize("family,sigma", [("gaussian", 1.0), ("laplace", 1.0)])
@pytest.mark.parametrize("t", [8.0, 64.0])
def test_entropy_sandwich_and_scheme_gap(family, sigma, t):
    f = gaussian(sigma) if family == "gaussian" else laplace(sigma)
    rep_d = entropy_report("direct", f, t, trials=20_000,
                           rng=SharedRandomness(602))
    rep_s = entropy_report("shifted", f, t, trials=20_000,
                           rng=SharedRandomness(603))
    for rep in (rep_d, rep_s):
        assert rep.lower - 3 * rep.stderr <= rep.measured
        assert rep.measured <= rep.upper + 3 * rep.stderr
    gap = rep_s.measured - rep_d.measured
    assert gap < 1.0


# ---------------------------------------------------------------------------
# optimality gap and mixture-entropy bounds


def test_gap_bound_values():
    assert gap_bound_shifted(gaussian(1.0), 64.0) == pytest.approx(
        8.0 * math.log2(math.e) / 64.0 + 2.0)
    assert gap_bound_shifted(gaussian(1.0), 1e15) == pytest.approx(2.0, abs=1e-10)


def test_gap_bound_rejects_asymmetric():
    with pytest.raises(ValueError):
        gap_bound_shifted(irwin_hall(3, mu=1.0, sigma=1.0), 64.0)


def test_mixture_entropy_lower_bound_identical_densities():
    f = irwin_hall(5, 0.0, 1.0)
    assert mixture_entropy_lower_bound(f, f) == pytest.approx(0.0, abs=1e-6)


def test_mixture_entropy_lower_bound_below_entropy_difference():
    mix = gaussian_mixture(12)
    bound = mixture_entropy_lower_bound(mix.f, mix.g, lam=mix.lam)
    upper = differential_entropy(mix.g) - differential_entropy(mix.f)
    assert bound <= upper + 1e-9


def test_empirical_log_scale_between_bounds():
    mix = gaussian_mixture(12)
    lanes = StreamBatch(SharedRandomness(604), np.arange(10**5), suffix=(0,))
    a, _ = mix.draw_batch(lanes)
    l2 = np.log2(a)
    se = l2.std() / math.sqrt(l2.size)
    assert l2.mean() >= mixture_entropy_lower_bound(mix.f, mix.g, lam=mix.lam) - 3 * se
    upper = differential_entropy(mix.g) - differential_entropy(mix.f)
    assert l2.mean() <= upper + 3 * se


def test_log_scale_invariant_under_joint_scaling():
    # scaling base and target together conjugates the algorithm draw-for-draw
    c = 2.0
    unit = MixtureSampler(irwin_hall(12, 0.0, 1.0), gaussian(1.0))
    scaled = MixtureSampler(irwin_hall(12, 0.0, c), gaussian(c))
    assert scaled.lam == pytest.approx(unit.lam, rel=1e-6)
    lanes_u = StreamBatch(SharedRandomness(605), np.arange(3000))
    lanes_s = StreamBatch(SharedRandomness(605), np.arange(3000))
    a_u, b_u = unit.draw_batch(lanes_u)
    a_s, b_s = scaled.draw_batch(lanes_s)
    assert np.allclose(a_s, a_u, rtol=1e-9)
    assert np.allclose(b_s, c * b_u, rtol=1e-9, atol=1e-12)


# ---------------------------------------------------------------------------
# cost bounds


def test_irwin_hall_cost_monotone_in_n():
    costs = [irwin_hall_cost_bits(n, 1.0, 64.0) for n in (1, 2, 5, 20, 100, 500)]
    assert all(c2 <= c1 for c1, c2 in zip(costs, costs[1:]))


def test_aggregate_cost_bound_rejects_bad_t():
    with pytest.raises(ValueError):
        aggregate_cost_bound(5, 1.0, 0.0)


def test_measured_gamma_bits_below_bound_plus_one():
    n, sigma, t = 20, 1.0, 64.0
    cfg = aggregate_config(n, sigma)
    rng = SharedRandomness(606)
    x = (rng.uniforms(n) - 0.5) * t
    out = aggregate_gaussian_rounds(x, cfg, SharedRandomness(607), trials=4000)
    mean_bits = gamma_lengths_array(out["messages"]).mean()
    assert mean_bits <= aggregate_cost_bound(n, sigma, t) + 1.0


def test_adaptive_fixed_bits_below_bound():
    # the scale-conditional fixed-length code is what the bound controls
    for n, t in [(20, 64.0), (100, 2048.0)]:
        cfg = aggregate_config(n, 1.0)
        rng = SharedRandomness(608)
        x = (rng.uniforms(n) - 0.5) * t
        out = aggregate_gaussian_rounds(x, cfg, SharedRandomness(609),
                                        trials=4000)
        bits = adaptive_fixed_bits(out["a"], n, 1.0, t)
        assert bits.mean() <= aggregate_cost_bound(n, 1.0, t)
        # and the realized messages always fit in the advertised width
        widths = 2.0 ** bits
        assert np.all(np.abs(out["messages"]).max(axis=1) * 2 + 1 <= widths + 1e-9)


def test_entropy_report_fields():
    rep = entropy_report("shifted", gaussian(1.0), 16.0, trials=2000,
                         rng=SharedRandomness(610))
    assert isinstance(rep, EntropyReport)
    assert rep.scheme == "shifted" and rep.t == 16.0 and rep.stderr > 0
