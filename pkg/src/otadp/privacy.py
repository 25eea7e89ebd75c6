"""Differential-privacy accounting for the perturbed over-the-air uplink.

A prosumer's privacy loss over ``K`` rounds is governed by the noise its
signal is buried in at the strongest possible receiver:

    eps_i(alpha) = sqrt(8 K ln(1/delta) / (alpha + 1 / SINR_i*(alpha)))

where ``SINR_i*`` is reached by the MMSE extractor against the other
prosumers' artificial noise plus channel noise.  Because the transmit scalars
shrink as ``alpha`` grows, every quantity is a function of ``alpha`` alone
once the channel is fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adversary import interference_cov_dp, sinr_closed_form
from .errors import ConfigError, DomainError, InfeasibleError, NonMonotoneError
from .link import LinkDesign, design_combiner, pre_equalize
from .market import MarketConfig


@dataclass(frozen=True)
class DpConfig:
    epsilon_target: tuple
    delta: float = 1e-5
    K: int = 100

    def __post_init__(self):
        targets = tuple(float(e) for e in np.atleast_1d(self.epsilon_target))
        object.__setattr__(self, "epsilon_target", targets)
        if not targets or any(not e > 0 for e in targets):
            raise ConfigError(f"privacy targets must be positive, got {targets}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"iteration count K must be an integer >= 1, got {self.K}")

    def targets_for(self, I: int) -> np.ndarray:
        """Per-prosumer targets; a single value is broadcast to all prosumers."""
        t = np.asarray(self.epsilon_target, dtype=float)
        if t.size == 1:
            return np.full(I, t[0])
        if t.size != I:
            raise ConfigError(f"{t.size} privacy targets given for {I} prosumers")
        return t


@dataclass(frozen=True)
class CalibrationResult:
    alpha_min: float
    epsilon_achieved: np.ndarray
    iterations_used: int
    link: LinkDesign
    sinr_star: np.ndarray = field(default_factory=lambda: np.empty(0))


def sensitivity_bound(f0, h_i, s1_i) -> float:
    return 2.0 * abs(np.vdot(f0, h_i)) * abs(s1_i)


def privacy_constant(K: int, delta: float) -> float:
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    return 8.0 * K * math.log(1.0 / delta)


def epsilon_from_components(alpha, sinr_star, K: int, delta: float):
    """Tight privacy loss for noise ratio ``alpha`` and worst-case SINR.

    An infinite ``sinr_star`` (interference-free, noiseless) contributes no
    masking; with ``alpha == 0`` as well the loss is infinite.
    """
    c = privacy_constant(K, delta)
    alpha = np.asarray(alpha, dtype=float)
    sinr_star = np.asarray(sinr_star, dtype=float)
    if np.any(alpha < 0) or np.any(sinr_star <= 0):
        raise DomainError("need alpha >= 0 and sinr_star > 0")
    with np.errstate(divide="ignore"):
        denom = alpha + 1.0 / sinr_star
        eps = np.sqrt(c / denom)
    return float(eps) if eps.ndim == 0 else eps


def _sinr_star_noiseless(H, s1, alpha, i) -> float:
    """Worst-case SINR when there is no channel noise.

    If ``h_i`` has a component outside the span of the other prosumers'
    artificial noise the adversary can null all masking and the SINR is
    unbounded.
    """
    A = interference_cov_dp(H, s1, alpha, 0.0, i)
    w, U = np.linalg.eigh(A)
    h = H[:, i]
    coef = np.abs(U.conj().T @ h) ** 2
    tol = max(w.max(initial=0.0), 1.0) * 1e-12
    pos = w > tol
    if coef[~pos].sum() > 1e-20 * max(np.vdot(h, h).real, 1e-300):
        return math.inf
    return float(abs(s1[i]) ** 2 * np.sum(coef[pos] / w[pos]))


def sinr_star_dp(H, s1, alpha: float, sigma_z2: float) -> np.ndarray:
    """Worst-case SINR of every prosumer against the protocol-aware adversary."""
    H = np.asarray(H, dtype=complex)
    I = H.shape[1]
    out = np.empty(I)
    for i in range(I):
        if sigma_z2 > 0:
            B = interference_cov_dp(H, s1, alpha, sigma_z2, i)
            out[i] = sinr_closed_form(B, H[:, i], s1[i])
        else:
            out[i] = _sinr_star_noiseless(H, s1, alpha, i)
    return out


def link_at_alpha(alpha, H, market: MarketConfig, P: float, f0=None) -> LinkDesign:
    if f0 is None:
        f0 = design_combiner(H)
    return pre_equalize(H, f0, market, P, alpha)


def privacy_profile(alpha, H, market, P, K, delta, sigma_z2, f0=None):
    """Return ``(epsilon, sinr_star, link)`` at noise ratio ``alpha``."""
    link = link_at_alpha(alpha, H, market, P, f0)
    s = sinr_star_dp(H, link.s1, alpha, sigma_z2)
    return epsilon_from_components(alpha, s, K, delta), s, link


def epsilon_of_alpha(alpha, H, market, P, K, delta, sigma_z2, f0=None) -> np.ndarray:
    eps, _, _ = privacy_profile(alpha, H, market, P, K, delta, sigma_z2, f0)
    return np.atleast_1d(eps)


def epsilon_at_receiver(f, H, s1, alpha, sigma_z2, i, K, delta) -> float:
    """Privacy loss of prosumer ``i`` against an arbitrary unit-norm receiver ``f``.

    Uses the sensitivity ``2 |f^H h_i| |s1_i|`` and all artificial noise
    projected onto ``f`` plus channel noise.
    """
    H = np.asarray(H, dtype=complex)
    delta_i = sensitivity_bound(f, H[:, i], s1[i])
    proj = np.abs(np.conj(f) @ H) ** 2
    noise = float(np.sum(proj * alpha * np.abs(s1) ** 2) + sigma_z2)
    if noise == 0:
        return math.inf
    return math.sqrt(delta_i**2 * 2.0 * K * math.log(1.0 / delta) / noise)


def alpha_min(
    targets: DpConfig,
    H,
    market: MarketConfig,
    P: float,
    sigma_z2: float,
    tol: float = 1e-4,
    alpha_hi: float = 1.0,
    alpha_cap: float = 2.0**20,
    f0=None,
) -> CalibrationResult:
    """Smallest noise ratio meeting every prosumer's privacy target, by bisection.

    The upper end starts at ``alpha_hi`` and doubles until feasible.  The
    returned ratio is the feasible end of the final bracket, so the targets
    hold there and fail at ``alpha_min - tol``.

    Raises:
        InfeasibleError: no feasible ratio up to ``alpha_cap``.
        NonMonotoneError: evaluations contradicted monotonicity in ``alpha``.
    """
    H = np.asarray(H, dtype=complex)
    if f0 is None:
        f0 = design_combiner(H)
    target = targets.targets_for(H.shape[1])
    seen: list[tuple[float, np.ndarray]] = []

    def evaluate(a):
        eps, s, link = privacy_profile(a, H, market, P, targets.K, targets.delta, sigma_z2, f0)
        eps = np.atleast_1d(eps)
        seen.append((a, eps))
        return bool(np.all(eps <= target)), eps, s, link

    steps = 0
    ok, eps, s, link = evaluate(0.0)
    if ok:
        return CalibrationResult(0.0, eps, 0, link, s)
    lo, hi = 0.0, float(alpha_hi)
    while True:
        ok, eps, s, link = evaluate(hi)
        steps += 1
        if ok:
            break
        lo, hi = hi, 2.0 * hi
        if hi > alpha_cap:
            raise InfeasibleError(
                f"privacy targets {target.tolist()} not reachable with alpha <= {alpha_cap:g}"
            )
    best = (hi, eps, s, link)
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        ok, eps, s, link = evaluate(mid)
        steps += 1
        if ok:
            hi = mid
            best = (mid, eps, s, link)
        else:
            lo = mid
    _check_monotone(seen, target)
    a, eps, s, link = best
    return CalibrationResult(a, eps, steps, link, s)


def _check_monotone(seen, target):
    seen = sorted(seen, key=lambda t: t[0])
    eps = np.array([e for _, e in seen])
    rises = np.diff(eps, axis=0) > 1e-9 * np.maximum(eps[:-1], 1.0)
    if np.any(rises):
        k = int(np.argwhere(rises)[0][0])
        raise NonMonotoneError(
            f"privacy loss increased between alpha={seen[k][0]:.6g} "
            f"and alpha={seen[k + 1][0]:.6g}"
        )


def epsilon_orthogonal(alpha, H, market, P, K, delta, sigma_z2, f0=None) -> np.ndarray:
    """Privacy loss when every prosumer has its own slot.

    Transmit powers are those of the over-the-air design at the same
    ``alpha``; the adversary matched-filters each clean slot, so only the
    prosumer's own artificial noise and the channel noise mask the bid.
    """
    H = np.asarray(H, dtype=complex)
    link = link_at_alpha(alpha, H, market, P, f0)
    energy = link.s1_mag2 * np.sum(np.abs(H) ** 2, axis=0)
    with np.errstate(divide="ignore"):
        s = energy / sigma_z2 if sigma_z2 > 0 else np.full(H.shape[1], math.inf)
    return np.atleast_1d(epsilon_from_components(alpha, s, K, delta))


class PrivacyCurve:
    """Closed-form ``eps_i(alpha)`` for one channel, vectorized over ``alpha``.

    Transmit scalars scale as ``|s1_i(alpha)|^2 = m_i / (1 + alpha)``, so with
    ``t = alpha / (1 + alpha)`` the interference covariance is
    ``t A_i + sigma_z2 Id`` for a fixed ``A_i``.  One eigendecomposition per
    prosumer then gives the worst-case SINR at any ``alpha`` without solves.
    """

    def __init__(self, H, market: MarketConfig, P: float, K: int, delta: float,
                 sigma_z2: float, f0=None):
        H = np.asarray(H, dtype=complex)
        self.K, self.delta, self.sigma_z2 = K, delta, float(sigma_z2)
        self.link0 = link_at_alpha(0.0, H, market, P, f0)
        self.m = self.link0.s1_mag2
        I = H.shape[1]
        self._w, self._c = [], []
        for i in range(I):
            A = interference_cov_dp(H, self.link0.s1, 1.0, 0.0, i)
            w, U = np.linalg.eigh(A)
            self._w.append(np.clip(w, 0.0, None))
            self._c.append(np.abs(U.conj().T @ H[:, i]) ** 2)
        self._tol = [max(w.max(initial=0.0), 1.0) * 1e-12 for w in self._w]

    def sinr_star(self, alpha) -> np.ndarray:
        """Worst-case SINR, shape ``alpha.shape + (I,)``."""
        alpha = np.asarray(alpha, dtype=float)
        t = (alpha / (1.0 + alpha))[..., None]
        out = np.empty(alpha.shape + (len(self._w),))
        for i, (w, c, tol) in enumerate(zip(self._w, self._c, self._tol)):
            denom = t * w + self.sigma_z2
            null = denom <= tol * 1e-3 if self.sigma_z2 == 0 else np.zeros_like(denom, bool)
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.where(null, np.where(c > 1e-20 * c.sum(), np.inf, 0.0), c / denom)
            out[..., i] = self.m[i] / (1.0 + alpha) * terms.sum(axis=-1)
        return out

    def epsilon(self, alpha) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float)
        return epsilon_from_components(alpha[..., None], self.sinr_star(alpha), self.K, self.delta)

    def alpha_min(self, targets, tol: float = 1e-4, alpha_hi: float = 1.0,
                  alpha_cap: float = 2.0**20) -> np.ndarray:
        """Smallest ``alpha`` with ``max_i eps_i <= target`` for each scalar target.

        Same bracket rules as :func:`alpha_min`; infeasible targets give NaN.
        """
        targets = np.atleast_1d(np.asarray(targets, dtype=float))

        def ok(a):
            return np.max(self.epsilon(a), axis=-1) <= targets

        lo = np.zeros_like(targets)
        hi = np.full_like(targets, float(alpha_hi))
        done0 = ok(lo)
        grow = ~done0 & ~ok(hi)
        while np.any(grow):
            lo = np.where(grow, hi, lo)
            hi = np.where(grow, 2.0 * hi, hi)
            hi = np.where(grow & (hi > alpha_cap), np.nan, hi)
            grow = grow & np.isfinite(hi)
            grow = grow & ~ok(np.where(grow, hi, 0.0))
        step = ~done0 & np.isfinite(hi) & (hi - lo >= tol)
        while np.any(step):
            mid = np.where(step, 0.5 * (lo + hi), 0.0)
            m_ok = ok(mid)
            hi = np.where(step & m_ok, mid, hi)
            lo = np.where(step & ~m_ok, mid, lo)
            step = step & (hi - lo >= tol)
        return np.where(done0, 0.0, hi)
