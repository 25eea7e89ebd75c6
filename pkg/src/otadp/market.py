"""Energy-sharing market with quadratic prosumers under ideal communication.

Each prosumer ``i`` produces ``p_i`` at cost ``c1 p^2 + c2 p`` and consumes
``d_i`` with utility ``v1 d^2 + v2 d``.  Bids ``b_i`` clear at the uniform
price ``sum(b) / (a I)``; given a broadcast price a prosumer answers with the
maximizer of its price-impact-aware surrogate payoff and bids
``d - p + a * price``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, NumericError

# Production cost / consumption utility coefficients of the three reference
# prosumers (c1, c2, v1, v2).
TABLE_ONE = (
    (0.018, 0.025, -0.006, 0.9),
    (0.012, 0.065, -0.008, 0.7),
    (0.014, 0.045, -0.007, 0.6),
)


@dataclass(frozen=True)
class QuadraticCost:
    """Production cost ``f(p) = c1 p^2 + c2 p`` with ``c1 > 0``."""

    c1: float
    c2: float

    def __post_init__(self):
        if not (self.c1 > 0 and math.isfinite(self.c1)):
            raise DomainError(f"cost curvature c1 must be positive, got {self.c1}")

    def __call__(self, p):
        return self.c1 * p * p + self.c2 * p

    def grad(self, p):
        return 2.0 * self.c1 * p + self.c2

    @property
    def mu(self) -> float:
        """Strong-convexity modulus, equal to the gradient Lipschitz constant."""
        return 2.0 * self.c1


@dataclass(frozen=True)
class QuadraticUtility:
    """Consumption utility ``u(d) = v1 d^2 + v2 d`` with ``v1 < 0``."""

    v1: float
    v2: float

    def __post_init__(self):
        if not (self.v1 < 0 and math.isfinite(self.v1)):
            raise DomainError(f"utility curvature v1 must be negative, got {self.v1}")

    def __call__(self, d):
        return self.v1 * d * d + self.v2 * d

    def grad(self, d):
        return 2.0 * self.v1 * d + self.v2

    @property
    def mu(self) -> float:
        return 2.0 * abs(self.v1)


@dataclass(frozen=True)
class Prosumer:
    id: int
    cost: QuadraticCost
    utility: QuadraticUtility

    @classmethod
    def from_coefficients(cls, id: int, c1: float, c2: float, v1: float, v2: float):
        return cls(id, QuadraticCost(c1, c2), QuadraticUtility(v1, v2))

    @property
    def gamma(self) -> float:
        """Combined inverse curvature ``1/f'' - 1/u''``."""
        return 1.0 / self.cost.mu + 1.0 / self.utility.mu


@dataclass(frozen=True)
class MarketConfig:
    """Market sensitivity ``a``, prosumer count ``I`` and bid bound ``L``."""

    a: float
    I: int
    L: float = math.inf

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ConfigError(f"market sensitivity a must be positive, got {self.a}")
        if int(self.I) != self.I or self.I < 2:
            raise ConfigError(f"prosumer count I must be an integer >= 2, got {self.I}")
        if not self.L > 0:
            raise ConfigError(f"bid bound L must be positive, got {self.L}")

    @property
    def price_impact(self) -> float:
        """``a (I - 1)``, the denominator of the surrogate's quadratic term."""
        return self.a * (self.I - 1)

    def with_bound(self, L: float) -> "MarketConfig":
        return MarketConfig(self.a, self.I, L)


@dataclass(frozen=True)
class ProsumerDecision:
    p: float
    d: float
    b: float
    q: float


@dataclass(frozen=True)
class Equilibrium:
    p_star: np.ndarray
    d_star: np.ndarray
    lambda_star: float
    b_star: np.ndarray

    @property
    def q_star(self) -> np.ndarray:
        return self.d_star - self.p_star


def table_one_prosumers(I: int = 3) -> list[Prosumer]:
    """Reference population, cycling the three reference rows when ``I > 3``."""
    return [
        Prosumer.from_coefficients(i + 1, *TABLE_ONE[i % len(TABLE_ONE)])
        for i in range(I)
    ]


def check_population(prosumers: Sequence[Prosumer], market: MarketConfig) -> None:
    if len(prosumers) != market.I:
        raise ConfigError(
            f"population has {len(prosumers)} prosumers but market.I = {market.I}"
        )
    ids = [pr.id for pr in prosumers]
    if ids != list(range(1, len(prosumers) + 1)):
        raise ConfigError(f"prosumer ids must be 1..I in order, got {ids}")


def coefficient_arrays(prosumers: Sequence[Prosumer]):
    """Return ``(c1, c2, v1, v2)`` as float arrays indexed by prosumer."""
    c1 = np.array([pr.cost.c1 for pr in prosumers], dtype=float)
    c2 = np.array([pr.cost.c2 for pr in prosumers], dtype=float)
    v1 = np.array([pr.utility.v1 for pr in prosumers], dtype=float)
    v2 = np.array([pr.utility.v2 for pr in prosumers], dtype=float)
    return c1, c2, v1, v2


def clearing_price(bids, market: MarketConfig) -> float:
    bids = np.asarray(bids, dtype=float)
    if bids.shape != (market.I,):
        raise ConfigError(f"expected {market.I} bids, got shape {bids.shape}")
    return float(bids.sum() / (market.a * market.I))


def surrogate_payoff(prosumer: Prosumer, p, d, lam: float, market: MarketConfig):
    q = d - p
    return (
        prosumer.utility(d)
        - prosumer.cost(p)
        - lam * q
        - q * q / (2.0 * market.price_impact)
    )


def best_response(prosumer: Prosumer, lam: float, market: MarketConfig):
    """Maximize the surrogate payoff at price ``lam``.

    The first-order conditions ``f'(p) = u'(d) = lam + (d - p) / (a (I - 1))``
    are linear in ``(p, d)`` for quadratic prosumers.

    Returns:
        Tuple ``(p, d)``.
    """
    m = market.price_impact
    c1, c2 = prosumer.cost.c1, prosumer.cost.c2
    v1, v2 = prosumer.utility.v1, prosumer.utility.v2
    A = np.array([[2.0 * c1 + 1.0 / m, -1.0 / m], [1.0 / m, 2.0 * v1 - 1.0 / m]])
    rhs = np.array([lam - c2, lam - v2])
    p, d = np.linalg.solve(A, rhs)
    return float(p), float(d)


def best_responses(prosumers: Sequence[Prosumer], lam, market: MarketConfig):
    """Vectorized best responses for every prosumer.

    ``lam`` may be a scalar or an array of prices (one per trial); the
    returned ``p`` and ``d`` have shape ``np.shape(lam) + (I,)``.
    """
    c1, c2, v1, v2 = coefficient_arrays(prosumers)
    inv_m = 1.0 / market.price_impact
    a11 = 2.0 * c1 + inv_m
    a22 = 2.0 * v1 - inv_m
    # a12 = -inv_m, a21 = inv_m
    det = a11 * a22 + inv_m * inv_m
    lam = np.asarray(lam, dtype=float)[..., None]
    r0 = lam - c2
    r1 = lam - v2
    p = (a22 * r0 + inv_m * r1) / det
    d = (a11 * r1 - inv_m * r0) / det
    return p, d


def bid_from_decision(p, d, lam, market: MarketConfig):
    return d - p + market.a * lam


def decision(prosumer: Prosumer, lam: float, market: MarketConfig) -> ProsumerDecision:
    p, d = best_response(prosumer, lam, market)
    return ProsumerDecision(p=p, d=d, b=bid_from_decision(p, d, lam, market), q=d - p)


def gne_oracle(prosumers: Sequence[Prosumer], market: MarketConfig) -> Equilibrium:
    """Solve the equality-constrained QP characterizing the equilibrium.

    Unknowns are ordered ``(p_1..p_I, d_1..d_I, zeta)``; ``zeta`` is the dual
    of the balance constraint and equals the equilibrium price.
    """
    check_population(prosumers, market)
    I = market.I
    m = market.price_impact
    c1, c2, v1, v2 = coefficient_arrays(prosumers)
    n = 2 * I + 1
    K = np.zeros((n, n))
    rhs = np.zeros(n)
    idx = np.arange(I)
    # stationarity in p: f'(p) - q/m - zeta = 0
    K[idx, idx] = 2.0 * c1 + 1.0 / m
    K[idx, I + idx] = -1.0 / m
    K[idx, 2 * I] = -1.0
    rhs[idx] = -c2
    # stationarity in d: -u'(d) + q/m + zeta = 0
    K[I + idx, idx] = -1.0 / m
    K[I + idx, I + idx] = -2.0 * v1 + 1.0 / m
    K[I + idx, 2 * I] = 1.0
    rhs[I + idx] = v2
    # balance: sum(p) - sum(d) = 0
    K[2 * I, :I] = 1.0
    K[2 * I, I : 2 * I] = -1.0
    try:
        x = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular KKT system: {exc}") from exc
    resid = np.linalg.norm(K @ x - rhs)
    scale = np.linalg.norm(K, ord=np.inf) * np.linalg.norm(x) + np.linalg.norm(rhs)
    if not np.isfinite(resid) or resid > 1e-10 * max(scale, 1.0):
        raise NumericError(f"KKT residual {resid:.3e} too large")
    p_star = x[:I]
    d_star = x[I : 2 * I]
    lam = float(x[2 * I])
    b_star = bid_from_decision(p_star, d_star, lam, market)
    return Equilibrium(p_star=p_star, d_star=d_star, lambda_star=lam, b_star=b_star)


def price_map(lam, prosumers: Sequence[Prosumer], market: MarketConfig):
    """Clearing price of the best-response bids at price ``lam``.

    Accepts scalar or array ``lam``.
    """
    p, d = best_responses(prosumers, lam, market)
    bids = bid_from_decision(p, d, np.asarray(lam, dtype=float)[..., None], market)
    out = bids.sum(axis=-1) / (market.a * market.I)
    return float(out) if np.ndim(out) == 0 else out


def slope_term(gamma, market: MarketConfig):
    """``(I-1) gamma / (a (I-1) + gamma)``, the per-prosumer price-map pull."""
    m = market.price_impact
    return (market.I - 1) * gamma / (m + gamma)


def map_derivative(prosumers: Sequence[Prosumer], market: MarketConfig):
    """Constant slope ``kappa`` of the (affine) price map and the gammas."""
    gammas = np.array([pr.gamma for pr in prosumers])
    kappa = 1.0 - float(np.mean(slope_term(gammas, market)))
    return kappa, gammas


def default_bid_bound(prosumers: Sequence[Prosumer], a: float) -> float:
    """Twice the largest equilibrium bid magnitude, rounded up to an integer."""
    market = MarketConfig(a, len(prosumers))
    eq = gne_oracle(prosumers, market)
    return float(max(1.0, math.ceil(2.0 * np.max(np.abs(eq.b_star)))))
