import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq, minimize

from otadp.errors import ConfigError, DomainError
from otadp.market import (
    TABLE_ONE,
    MarketConfig,
    Prosumer,
    best_response,
    best_responses,
    bid_from_decision,
    check_population,
    clearing_price,
    decision,
    default_bid_bound,
    gne_oracle,
    map_derivative,
    price_map,
    surrogate_payoff,
    table_one_prosumers,
)

# Frozen from the independent fixed-point oracle below (brentq over numerically
# maximized payoffs), reference population, a = 100.
LAMBDA_STAR = 0.5158213510580576


def _numeric_best_response(pr, lam, market):
    res = minimize(
        lambda x: -surrogate_payoff(pr, x[0], x[1], lam, market),
        x0=[10.0, 10.0],
        method="BFGS",
        options={"gtol": 1e-10},
    )
    return res.x


def _numeric_price_map(lam, prosumers, market):
    bids = []
    for pr in prosumers:
        p, d = _numeric_best_response(pr, lam, market)
        bids.append(d - p + market.a * lam)
    return sum(bids) / (market.a * market.I)


def test_table_one_matches_published_coefficients():
    assert TABLE_ONE == (
        (0.018, 0.025, -0.006, 0.9),
        (0.012, 0.065, -0.008, 0.7),
        (0.014, 0.045, -0.007, 0.6),
    )


def test_table_one_cycles_for_larger_populations():
    pr = table_one_prosumers(7)
    assert [p.id for p in pr] == list(range(1, 8))
    assert pr[3].cost == pr[0].cost and pr[6].utility == pr[0].utility


def test_equilibrium_matches_independent_fixed_point(prosumers, market):
    oracle = brentq(lambda lam: _numeric_price_map(lam, prosumers, market) - lam, 0.0, 2.0,
                    xtol=1e-12)
    eq = gne_oracle(prosumers, market)
    assert eq.lambda_star == pytest.approx(oracle, abs=1e-6)
    assert eq.lambda_star == pytest.approx(LAMBDA_STAR, abs=1e-12)


def test_equilibrium_balances_and_is_a_fixed_point(prosumers, market, equilibrium):
    eq = equilibrium
    assert abs(eq.p_star.sum() - eq.d_star.sum()) < 1e-9
    assert price_map(eq.lambda_star, prosumers, market) == pytest.approx(eq.lambda_star, abs=1e-12)
    assert clearing_price(eq.b_star, market) == pytest.approx(eq.lambda_star, abs=1e-12)
    for i, pr in enumerate(prosumers):
        p, d = best_response(pr, eq.lambda_star, market)
        assert p == pytest.approx(eq.p_star[i], abs=1e-9)
        assert d == pytest.approx(eq.d_star[i], abs=1e-9)


def test_best_response_matches_numerical_maximizer(prosumers, market):
    for lam in (0.0, 0.3, 1.7):
        for pr in prosumers:
            assert np.allclose(best_response(pr, lam, market), _numeric_best_response(pr, lam, market),
                               atol=1e-4)


def test_vectorized_best_responses_match_scalar(prosumers, market):
    lams = np.array([0.0, 0.5, 2.0])
    p, d = best_responses(prosumers, lams, market)
    assert p.shape == (3, 3)
    for t, lam in enumerate(lams):
        for i, pr in enumerate(prosumers):
            assert (p[t, i], d[t, i]) == pytest.approx(best_response(pr, lam, market), abs=1e-10)


def test_decision_and_bid_identity(prosumers, market):
    dec = decision(prosumers[0], 0.4, market)
    assert dec.b == pytest.approx(dec.q + market.a * 0.4)
    assert bid_from_decision(1.0, 3.0, 0.5, market) == pytest.approx(2.0 + 50.0)


def test_slope_matches_finite_difference(prosumers, market):
    kappa, gammas = map_derivative(prosumers, market)
    h = 1e-4
    fd = (price_map(0.5 + h, prosumers, market) - price_map(0.5 - h, prosumers, market)) / (2 * h)
    assert kappa == pytest.approx(fd, rel=1e-8)
    assert kappa == pytest.approx(0.30103612, abs=1e-8)
    assert gammas == pytest.approx([1 / 0.036 + 1 / 0.012, 1 / 0.024 + 1 / 0.016,
                                    1 / 0.028 + 1 / 0.014])


def test_default_bid_bound(prosumers):
    eq = gne_oracle(prosumers, MarketConfig(100.0, 3))
    L = default_bid_bound(prosumers, 100.0)
    assert L == math.ceil(2 * np.max(np.abs(eq.b_star))) == 127.0


def test_validation_errors(prosumers):
    with pytest.raises(ConfigError):
        MarketConfig(a=-1.0, I=3)
    with pytest.raises(ConfigError):
        MarketConfig(a=1.0, I=1)
    with pytest.raises(ConfigError):
        clearing_price([1.0, 2.0], MarketConfig(1.0, 3))
    with pytest.raises((ConfigError, DomainError)):
        Prosumer.from_coefficients(1, -0.1, 0.0, -0.1, 0.0)
    with pytest.raises((ConfigError, DomainError)):
        Prosumer.from_coefficients(1, 0.1, 0.0, 0.1, 0.0)
    with pytest.raises(ConfigError):
        check_population(prosumers[:2], MarketConfig(100.0, 3))


coef = st.tuples(
    st.floats(0.002, 0.2), st.floats(-1.0, 1.0), st.floats(-0.2, -0.002), st.floats(-1.0, 2.0)
)


@given(st.lists(coef, min_size=2, max_size=6), st.floats(1.0, 500.0))
def test_equilibrium_properties_random_populations(rows, a):
    prosumers = [Prosumer.from_coefficients(k + 1, *r) for k, r in enumerate(rows)]
    market = MarketConfig(a=a, I=len(rows))
    eq = gne_oracle(prosumers, market)
    assert abs(eq.p_star.sum() - eq.d_star.sum()) <= 1e-8 * max(1.0, np.abs(eq.p_star).sum())
    lam = eq.lambda_star
    assert price_map(lam, prosumers, market) == pytest.approx(lam, abs=1e-8 * max(1, abs(lam)))


@given(st.lists(coef, min_size=2, max_size=6), st.floats(1.0, 500.0), st.floats(-5, 5),
       st.floats(-5, 5))
def test_price_map_is_affine_with_slope_kappa(rows, a, x, y):
    prosumers = [Prosumer.from_coefficients(k + 1, *r) for k, r in enumerate(rows)]
    market = MarketConfig(a=a, I=len(rows))
    kappa, _ = map_derivative(prosumers, market)
    lhs = price_map(x, prosumers, market) - price_map(y, prosumers, market)
    assert lhs == pytest.approx(kappa * (x - y), abs=1e-9 * max(1.0, abs(x) + abs(y)))


@given(coef, st.floats(1.0, 500.0), st.floats(-3, 3))
def test_best_response_first_order_conditions(row, a, lam):
    pr = Prosumer.from_coefficients(1, *row)
    market = MarketConfig(a=a, I=3)
    p, d = best_response(pr, lam, market)
    target = lam + (d - p) / market.price_impact
    assert pr.cost.grad(p) == pytest.approx(target, abs=1e-9 * max(1.0, abs(target)))
    assert pr.utility.grad(d) == pytest.approx(target, abs=1e-9 * max(1.0, abs(target)))
