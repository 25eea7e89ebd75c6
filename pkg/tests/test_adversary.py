import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otadp.adversary import (
    attack_trial,
    build_extractors,
    infer_private,
    instantaneous_ratio,
    interference_cov_attack,
    interference_cov_dp,
    mmse_extractor,
    recover_bid,
    sinr,
    sinr_closed_form,
)
from otadp.channel import RngStream
from otadp.errors import DomainError, UnrecoverableError
from otadp.link import design_combiner, encode_dp, ota_aggregate, pre_equalize
from otadp.market import MarketConfig

from conftest import random_channel, random_unit


def _design(H, alpha=0.0, L=127.0):
    market = MarketConfig(a=100.0, I=H.shape[1], L=L)
    return pre_equalize(H, design_combiner(H), market, 1.0, alpha), market


def test_covariances_are_hermitian_and_exclude_target():
    H = random_channel(6, 4, 1)
    d, _ = _design(H, 0.3)
    for i in range(4):
        B = interference_cov_attack(H, d.s1, 0.2, i)
        assert np.allclose(B, B.conj().T)
        expected = sum(d.s1_mag2[j] * np.outer(H[:, j], H[:, j].conj()) for j in range(4) if j != i)
        assert np.allclose(B, expected + 0.2 / 3 * np.eye(6))
        Bdp = interference_cov_dp(H, d.s1, 0.3, 0.2, i)
        assert np.allclose(Bdp, 0.3 * expected + 0.2 * np.eye(6))


def test_mmse_beats_random_combiners_and_routes_agree():
    rng = np.random.default_rng(5)
    for k in range(20):
        H = random_channel(8, 3, 100 + k)
        d, _ = _design(H, 0.2)
        for variant, alpha in (("attack", 0.0), ("dp", 0.2)):
            for i in range(3):
                B = (interference_cov_attack(H, d.s1, 0.1, i) if variant == "attack"
                     else interference_cov_dp(H, d.s1, alpha, 0.1, i))
                f = mmse_extractor(B, H[:, i])
                best = sinr(f, H, d.s1, 0.1, i, variant, alpha)
                assert best == pytest.approx(sinr_closed_form(B, H[:, i], d.s1[i]), rel=1e-10)
                for _ in range(50):
                    u = random_unit(rng, 8)
                    assert sinr(u, H, d.s1, 0.1, i, variant, alpha) <= best + 1e-9


def test_noiseless_interference_free_recovery_is_exact():
    # orthogonal channels: the extractor isolates each prosumer perfectly
    H = np.eye(4, 3, dtype=complex) * np.array([1.0, 0.7, 1.3])
    market = MarketConfig(a=100.0, I=3, L=127.0)
    d = pre_equalize(H, design_combiner(H, "sum"), market, 1.0, 0.0)
    bids = np.array([30.0, -12.0, 55.0])
    ext = build_extractors(H, d, 1e-30, market.L)
    y = ota_aggregate(H, encode_dp(bids, d.s1, d.s2_mag2, market.L, np.zeros(3)), 0.0)
    b_hat = [recover_bid(y, ext.f[:, i], ext.g[i]) for i in range(3)]
    assert np.allclose(b_hat, bids, atol=1e-10)


def test_inversion_identity():
    market = MarketConfig(a=100.0, I=3, L=127.0)
    p, d, lam = np.array([3.0, 4.0, 5.0]), np.array([6.0, 2.0, 4.0]), 0.37
    b = d - p + market.a * lam
    assert np.allclose(infer_private(b, lam, market), d - p, atol=1e-12)


@given(st.integers(0, 5000), st.floats(-50, 50), st.floats(0, 1))
def test_estimation_error_equals_bid_error(seed, shift, lam):
    H = random_channel(8, 3, seed)
    d, market = _design(H)
    bids = np.array([40.0, 20.0, 10.0]) + shift
    res = attack_trial(H, d, bids, lam, RngStream(seed, 1), 0.1, market)
    b_hat = res.q_hat + market.a * lam
    assert np.allclose(res.q_hat - res.q_true, b_hat - bids, atol=1e-9)


def test_dp_sinr_non_increasing_in_alpha():
    for k in range(10):
        H = random_channel(8, 3, 200 + k)
        prev = None
        for alpha in np.linspace(0, 2, 21):
            d, _ = _design(H, alpha)
            s = np.array([sinr_closed_form(interference_cov_dp(H, d.s1, alpha, 0.1, i),
                                           H[:, i], d.s1[i]) for i in range(3)])
            if prev is not None:
                assert np.all(s <= prev * (1 + 1e-12))
            prev = s


def test_zero_bids_recover_near_zero():
    H = random_channel(16, 3, 9)
    d, market = _design(H)
    res = attack_trial(H, d, np.zeros(3), 0.0, RngStream(9, 1), 1e-6, market)
    assert np.all(np.abs(res.q_hat) < 0.1)


def test_larger_array_reduces_attack_error():
    market = MarketConfig(a=100.0, I=3, L=127.0)
    bids = np.array([63.4, 46.8, 44.5])
    med = []
    for Nr in (4, 16, 64):
        errs = []
        for t in range(200):
            s = RngStream(3, t)
            H = s.complex_normal((Nr, 3))
            d = pre_equalize(H, design_combiner(H), market, 1.0, 0.0)
            errs.append(attack_trial(H, d, bids, 0.5, s, 0.1, market).error)
        med.append(np.median(np.abs(errs)))
    assert med[0] > med[1] > med[2]


def test_diagnostic_ratio_and_errors():
    H = random_channel(4, 3, 2)
    d, _ = _design(H)
    f = mmse_extractor(interference_cov_attack(H, d.s1, 0.1, 0), H[:, 0])
    assert instantaneous_ratio(f, H, d.s1 * 0.5, 0.1, 0) > 0
    with pytest.raises(UnrecoverableError):
        recover_bid(np.ones(4), f, 0.0)
    with pytest.raises(DomainError):
        sinr(f, H, d.s1, 0.1, 0, "bogus")
    with pytest.raises(DomainError):
        interference_cov_attack(H[:, :1], d.s1[:1], 0.1, 0)
