import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otadp.adversary import interference_cov_dp, mmse_extractor
from otadp.errors import ConfigError, DomainError, InfeasibleError
from otadp.link import design_combiner
from otadp.market import MarketConfig
from otadp.privacy import (
    DpConfig,
    PrivacyCurve,
    alpha_min,
    epsilon_at_receiver,
    epsilon_from_components,
    epsilon_of_alpha,
    epsilon_orthogonal,
    privacy_constant,
    privacy_profile,
    sinr_star_dp,
)

from conftest import random_channel, random_unit

MARKET = MarketConfig(a=100.0, I=3, L=127.0)


def test_epsilon_formula():
    c = 8 * 100 * math.log(1e5)
    assert privacy_constant(100, 1e-5) == pytest.approx(c)
    assert epsilon_from_components(0.5, 4.0, 100, 1e-5) == pytest.approx(math.sqrt(c / 0.75))
    assert epsilon_from_components(0.5, math.inf, 100, 1e-5) == pytest.approx(math.sqrt(c / 0.5))
    assert epsilon_from_components(0.0, math.inf, 100, 1e-5) == math.inf
    with pytest.raises(DomainError):
        epsilon_from_components(-0.1, 1.0, 100, 1e-5)


def test_mmse_receiver_is_worst_case():
    rng = np.random.default_rng(1)
    H = random_channel(8, 3, 3)
    eps, _, link = privacy_profile(0.3, H, MARKET, 1.0, 100, 1e-5, 0.1)
    for i in range(3):
        f = mmse_extractor(interference_cov_dp(H, link.s1, 0.3, 0.1, i), H[:, i])
        at_mmse = epsilon_at_receiver(f, H, link.s1, 0.3, 0.1, i, 100, 1e-5)
        assert at_mmse == pytest.approx(eps[i], rel=1e-9)
        for _ in range(100):
            u = random_unit(rng, 8)
            assert epsilon_at_receiver(u, H, link.s1, 0.3, 0.1, i, 100, 1e-5) <= at_mmse * (1 + 1e-9)


@given(st.integers(0, 10_000), st.sampled_from([1, 2, 4, 8]), st.sampled_from([0.0, 0.01, 1.0]))
def test_closed_form_curve_matches_direct_route(seed, Nr, sigma):
    H = random_channel(Nr, 3, seed)
    curve = PrivacyCurve(H, MARKET, 1.0, 100, 1e-5, sigma)
    for alpha in (0.0, 0.1, 0.7, 3.0):
        direct = epsilon_of_alpha(alpha, H, MARKET, 1.0, 100, 1e-5, sigma)
        fast = curve.epsilon(alpha)
        finite = np.isfinite(direct)
        assert np.array_equal(finite, np.isfinite(fast))
        assert np.allclose(fast[finite], direct[finite], rtol=1e-9)


def test_epsilon_independent_of_bid_bound():
    H = random_channel(8, 3, 4)
    e1 = epsilon_of_alpha(0.2, H, MARKET, 1.0, 100, 1e-5, 0.1)
    e2 = epsilon_of_alpha(0.2, H, MARKET.with_bound(900.0), 1.0, 100, 1e-5, 0.1)
    assert np.allclose(e1, e2, rtol=1e-12)


def test_alpha_min_brackets_targets():
    H = random_channel(8, 3, 5)
    res = alpha_min(DpConfig((150.0,)), H, MARKET, 1.0, 0.1)
    assert np.all(res.epsilon_achieved <= 150.0)
    below = epsilon_of_alpha(res.alpha_min - 1e-4, H, MARKET, 1.0, 100, 1e-5, 0.1)
    assert np.max(below) > 150.0
    assert res.link.alpha == res.alpha_min
    assert res.iterations_used > 0


def test_alpha_min_zero_when_channel_noise_suffices():
    H = random_channel(8, 3, 5)
    eps0 = epsilon_of_alpha(0.0, H, MARKET, 1.0, 100, 1e-5, 1.0)
    res = alpha_min(DpConfig((float(eps0.max()) * 1.01,)), H, MARKET, 1.0, 1.0)
    assert res.alpha_min == 0.0 and res.iterations_used == 0


def test_per_prosumer_targets_and_infeasible():
    H = random_channel(8, 3, 6)
    res = alpha_min(DpConfig((300.0, 120.0, 300.0)), H, MARKET, 1.0, 0.1)
    assert res.epsilon_achieved[1] <= 120.0
    with pytest.raises(InfeasibleError):
        alpha_min(DpConfig((1e-3,)), H, MARKET, 1.0, 0.1, alpha_cap=1e3)
    with pytest.raises(ConfigError):
        DpConfig((1.0, 2.0)).targets_for(3)


def test_dp_config_validation():
    with pytest.raises(ConfigError):
        DpConfig((0.0,))
    with pytest.raises(ConfigError):
        DpConfig((1.0,), delta=1.0)
    with pytest.raises(ConfigError):
        DpConfig((1.0,), K=0)


def test_vectorized_alpha_min_matches_scalar_bisection():
    grid = np.geomspace(60, 800, 8)
    for seed in range(5):
        H = random_channel(8, 3, 50 + seed)
        for sigma in (0.0, 0.1, 1.0):
            fast = PrivacyCurve(H, MARKET, 1.0, 100, 1e-5, sigma).alpha_min(grid)
            slow = [alpha_min(DpConfig((g,)), H, MARKET, 1.0, sigma).alpha_min for g in grid]
            assert np.allclose(fast, slow, atol=2e-4)


def test_noiseless_sinr_is_infinite_when_target_escapes_interference():
    H = random_channel(8, 3, 7)
    s = sinr_star_dp(H, np.ones(3), 0.2, 0.0)
    assert np.all(np.isinf(s))
    # fewer antennas than prosumers: interference spans the space
    H2 = random_channel(2, 3, 7)
    assert np.all(np.isfinite(sinr_star_dp(H2, np.ones(3), 0.2, 0.0)))


def test_orthogonal_baseline_is_no_more_private():
    for seed in range(20):
        H = random_channel(8, 3, seed)
        f0 = design_combiner(H)
        ota = epsilon_of_alpha(0.2, H, MARKET, 1.0, 100, 1e-5, 0.1, f0)
        ortho = epsilon_orthogonal(0.2, H, MARKET, 1.0, 100, 1e-5, 0.1, f0)
        assert np.all(ortho >= ota * (1 - 1e-12))
