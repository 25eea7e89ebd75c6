import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otadp.channel import RngStream, sample_awgn
from otadp.errors import DomainError, IllConditionedChannelError
from otadp.link import (
    alignment_error,
    combine_price,
    design_combiner,
    effective_gains,
    encode_dp,
    noise_error_power,
    ota_aggregate,
    pre_equalize,
)
from otadp.market import MarketConfig, clearing_price

from conftest import random_channel


def test_dominant_combiner_maximizes_total_gain():
    H = random_channel(6, 3, 1)
    f0 = design_combiner(H)
    best = np.linalg.norm(H.conj().T @ f0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        u = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        u /= np.linalg.norm(u)
        assert np.linalg.norm(H.conj().T @ u) <= best + 1e-12


def test_combiner_is_unit_norm_with_fixed_phase():
    H = random_channel(5, 2, 2)
    for strategy in ("dominant", "sum"):
        f0 = design_combiner(H, strategy)
        assert np.linalg.norm(f0) == pytest.approx(1.0)
        assert f0[0].imag == 0 and f0[0].real >= 0
    with pytest.raises(DomainError):
        design_combiner(H, "nope")
    with pytest.raises(DomainError):
        design_combiner(np.zeros((2, 2)))


@given(st.integers(1, 10), st.integers(2, 6), st.integers(0, 10_000), st.floats(0, 3))
def test_pre_equalization_properties(Nr, I, seed, alpha):
    H = random_channel(Nr, I, seed)
    market = MarketConfig(a=50.0, I=I, L=20.0)
    design = pre_equalize(H, design_combiner(H), market, 1.0, alpha)
    g = effective_gains(H, design.f0) * design.s1 / (np.sqrt(design.eta) * market.L)
    assert np.allclose(g, 1.0, atol=1e-9)
    power = design.s1_mag2 * (1 + alpha)
    assert np.all(power <= 1.0 + 1e-12)
    assert power.max() == pytest.approx(1.0, rel=1e-12)
    # eta is the largest value meeting every power constraint
    mag2 = np.abs(effective_gains(H, design.f0)) ** 2
    assert design.eta == pytest.approx(np.min(mag2) / (market.L**2 * (1 + alpha)), rel=1e-12)
    assert np.allclose(design.s2_mag2, alpha * design.s1_mag2)


def test_noiseless_link_returns_clearing_price():
    H = random_channel(8, 3, 4)
    market = MarketConfig(a=100.0, I=3, L=127.0)
    design = pre_equalize(H, design_combiner(H), market, 1.0, 0.0)
    b = np.array([63.4, 46.8, 44.5])
    y = ota_aggregate(H, encode_dp(b, design.s1, design.s2_mag2, market.L, np.zeros(3)), 0.0)
    assert combine_price(y, design, market) == pytest.approx(clearing_price(b, market), abs=1e-12)
    assert abs(alignment_error(H, design, b, market)) < 1e-12


def test_ill_conditioned_channel_reports_prosumer():
    H = random_channel(4, 3, 5)
    f0 = design_combiner(H)
    # make prosumer 2 orthogonal to the combiner
    H[:, 1] -= f0 * np.vdot(f0, H[:, 1])
    with pytest.raises(IllConditionedChannelError) as info:
        pre_equalize(H, f0, MarketConfig(100.0, 3, 10.0), 1.0, 0.0)
    assert info.value.prosumer == 2


def test_pre_equalization_needs_finite_bound():
    H = random_channel(4, 3, 5)
    with pytest.raises(DomainError):
        pre_equalize(H, design_combiner(H), MarketConfig(100.0, 3), 1.0, 0.0)


def test_noise_power_conventions():
    H = random_channel(8, 3, 6)
    market = MarketConfig(a=100.0, I=3, L=127.0)
    design = pre_equalize(H, design_combiner(H), market, 1.0, 0.4)
    real = noise_error_power(design, 0.1, market)
    cplx = noise_error_power(design, 0.1, market, "complex")
    expected = 0.4 * 127.0**2 / (2 * 100.0**2 * 3) + 0.1 / (2 * 100.0**2 * 9 * design.eta)
    assert real == pytest.approx(expected, rel=1e-12)
    assert cplx == pytest.approx(2 * real, rel=1e-12)


def test_noise_power_matches_sample_variance():
    H = random_channel(8, 3, 7)
    market = MarketConfig(a=100.0, I=3, L=127.0)
    design = pre_equalize(H, design_combiner(H), market, 1.0, 0.3)
    s = RngStream(11, 0)
    n = s.complex_normal((50_000, 3))
    z = sample_awgn((50_000, 8), 0.1, s)
    b = np.array([60.0, 40.0, 45.0])
    y = ota_aggregate(H, encode_dp(b, design.s1, design.s2_mag2, market.L, n), z)
    est = combine_price(y, design, market)
    assert est.mean() == pytest.approx(clearing_price(b, market), abs=4 * est.std() / 200)
    assert est.var() == pytest.approx(noise_error_power(design, 0.1, market), rel=0.03)
