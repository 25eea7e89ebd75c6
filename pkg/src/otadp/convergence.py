"""Contraction factor, condition on the market sensitivity, and mean-square bounds.

For quadratic prosumers the ideal price map is affine with slope ``kappa``;
the noisy iteration obeys ``tau_{k+1} = kappa tau_k + e_k`` so the squared
slope ``rho = kappa^2`` controls both the mean and the mean-square error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DivergenceError
from .market import MarketConfig, Prosumer, map_derivative, slope_term


@dataclass(frozen=True)
class ConvergenceReport:
    rho: float
    kappa: float
    a_threshold: float
    gamma_list: np.ndarray
    sigma_e2: float = 0.0
    sigma_e2_complex: float = 0.0
    rho_interval: tuple = (math.nan, math.nan)
    condition_holds: bool = True

    @property
    def converges(self) -> bool:
        return self.rho < 1.0

    def predicted_mse_bound(self, K: int, lambda0: float, lambda_star: float) -> float:
        return mse_bound(K, lambda0, lambda_star, self.rho, self.sigma_e2)

    def noise_floor(self, convention: str = "real") -> float:
        """``sigma_e^2 / (1 - rho)``, the limit of the bound as ``K`` grows."""
        s = self.sigma_e2 if convention == "real" else self.sigma_e2_complex
        if self.rho >= 1:
            return math.inf
        return s / (1.0 - self.rho)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "kappa": self.kappa,
            "a_threshold": self.a_threshold,
            "condition_holds": self.condition_holds,
            "converges": self.converges,
            "gamma_list": self.gamma_list.tolist(),
            "rho_interval": list(self.rho_interval),
            "sigma_e2_real": self.sigma_e2,
            "sigma_e2_complex": self.sigma_e2_complex,
            "noise_floor_real": self.noise_floor("real"),
            "noise_floor_complex": self.noise_floor("complex"),
        }


@dataclass
class UnbiasednessReport:
    passed: bool
    first_violation: int | None
    deviation: np.ndarray
    allowance: np.ndarray
    stderr: np.ndarray = field(repr=False)


def convergence_condition(prosumers: Sequence[Prosumer], market: MarketConfig):
    """Whether ``a`` exceeds ``(I-3)/(2(I-1)) * gamma_max``; returns ``(holds, threshold)``."""
    I = market.I
    gamma_max = max(pr.gamma for pr in prosumers)
    threshold = (I - 3) / (2.0 * (I - 1)) * gamma_max
    return bool(market.a > threshold), float(threshold)


def _rho_of_gamma_range(g_lo: float, g_hi: float, market: MarketConfig) -> tuple:
    # 1 - slope_term(gamma) decreases in gamma; square it over the interval
    k_hi = 1.0 - slope_term(g_lo, market)
    k_lo = 1.0 - slope_term(g_hi, market)
    sq = sorted((k_lo * k_lo, k_hi * k_hi))
    lo = 0.0 if k_lo <= 0.0 <= k_hi else sq[0]
    return (float(lo), float(sq[1]))


def contraction_factor(
    prosumers: Sequence[Prosumer],
    market: MarketConfig,
    sigma_e2: float = 0.0,
    sigma_e2_complex: float | None = None,
) -> ConvergenceReport:
    """Slope and squared slope of the price map, with the condition on ``a``.

    ``rho_interval`` spans the squared slope over a homogeneous population
    with any ``gamma`` between the smallest and largest prosumer value.
    """
    kappa, gammas = map_derivative(prosumers, market)
    holds, threshold = convergence_condition(prosumers, market)
    return ConvergenceReport(
        rho=kappa * kappa,
        kappa=kappa,
        a_threshold=threshold,
        gamma_list=gammas,
        sigma_e2=float(sigma_e2),
        sigma_e2_complex=float(2.0 * sigma_e2 if sigma_e2_complex is None else sigma_e2_complex),
        rho_interval=_rho_of_gamma_range(float(gammas.min()), float(gammas.max()), market),
        condition_holds=holds,
    )


def mse_bound(K: int, lambda0: float, lambda_star: float, rho: float, sigma_e2: float) -> float:
    """``rho^K |lambda0 - lambda*|^2 + (1 - rho^K) / (1 - rho) * sigma_e2``."""
    if not 0 <= rho < 1:
        raise DivergenceError(f"contraction factor rho={rho:.6g} is not below 1")
    rk = rho**K
    return rk * (lambda0 - lambda_star) ** 2 + (1.0 - rk) / (1.0 - rho) * sigma_e2


def empirical_mse(lam_final, lambda_star: float):
    """Mean squared distance to ``lambda_star`` and its standard error."""
    sq = (np.asarray(lam_final, dtype=float) - lambda_star) ** 2
    n = sq.size
    se = float(sq.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(sq.mean()), se


def _stack_lambdas(traces) -> np.ndarray:
    if isinstance(traces, np.ndarray):
        return np.atleast_2d(traces)
    if hasattr(traces, "lam") and np.ndim(traces.lam) == 2:
        return traces.lam
    return np.vstack([t.lam for t in traces])


def unbiasedness_check(traces, lambda_star: float, kappa: float) -> UnbiasednessReport:
    """Compare the across-trial mean price with the geometric decay ``|kappa|^k``.

    At every iteration ``k`` the deviation ``|mean(lambda^k) - lambda*|`` must
    stay within ``|kappa|^k |lambda^0 - lambda*| + 3 stderr(k)``.  A single
    noiseless trace has zero stderr and gets a 1e-9 relative slack.
    """
    lam = _stack_lambdas(traces)
    n, length = lam.shape
    ks = np.arange(length)
    mean = lam.mean(axis=0)
    se = lam.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(length)
    start = abs(lam[0, 0] - lambda_star)
    decay = np.abs(kappa) ** ks * start
    allowance = decay + 3.0 * se + 1e-9 * max(start, abs(lambda_star), 1e-12)
    deviation = np.abs(mean - lambda_star)
    bad = np.flatnonzero(deviation > allowance)
    return UnbiasednessReport(
        passed=bad.size == 0,
        first_violation=int(bad[0]) if bad.size else None,
        deviation=deviation,
        allowance=allowance,
        stderr=se,
    )
