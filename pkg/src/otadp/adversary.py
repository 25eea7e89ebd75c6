"""Honest-but-curious base station: isolate, recover and invert each prosumer's bid.

The adversary whitens interference plus noise with a per-prosumer MMSE
combiner, normalizes by the effective gain to recover the bid, and inverts
the bidding rule ``b = q + a * price`` to estimate the private net demand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import RngStream, hermitian_solve, sample_awgn
from .errors import DomainError, UnrecoverableError
from .link import LinkDesign, encode_dp, ota_aggregate
from .market import MarketConfig

VARIANTS = ("attack", "dp")


@dataclass(frozen=True)
class ExtractorSet:
    """Per-prosumer combiners (columns of ``f``), effective gains and SINRs."""

    f: np.ndarray
    g: np.ndarray
    sinr: np.ndarray
    variant: str


@dataclass(frozen=True)
class AttackResult:
    b_hat: np.ndarray
    q_hat: np.ndarray
    q_true: np.ndarray

    @property
    def error(self) -> np.ndarray:
        return self.q_hat - self.q_true


def _others(I: int, i: int) -> np.ndarray:
    return np.array([j for j in range(I) if j != i], dtype=int)


def _interference(H, s1, i):
    H = np.asarray(H, dtype=complex)
    others = _others(H.shape[1], i)
    Ho = H[:, others] * np.abs(np.asarray(s1)[others])
    return Ho @ Ho.conj().T


def interference_cov_attack(H, s1, sigma_z2: float, i: int) -> np.ndarray:
    """``sum_{j != i} |s1_j|^2 h_j h_j^H + sigma_z2 / (I - 1) * Id`` (0-based ``i``)."""
    H = np.asarray(H, dtype=complex)
    Nr, I = H.shape
    if I < 2:
        raise DomainError("the attack covariance needs at least two prosumers")
    return _interference(H, s1, i) + (sigma_z2 / (I - 1)) * np.eye(Nr)


def interference_cov_dp(H, s1, alpha: float, sigma_z2: float, i: int) -> np.ndarray:
    """``alpha * sum_{j != i} |s1_j|^2 h_j h_j^H + sigma_z2 * Id`` (0-based ``i``)."""
    if alpha < 0:
        raise DomainError(f"noise-to-signal ratio must be >= 0, got {alpha}")
    H = np.asarray(H, dtype=complex)
    return alpha * _interference(H, s1, i) + sigma_z2 * np.eye(H.shape[0])


def mmse_extractor(B, h) -> np.ndarray:
    w = hermitian_solve(B, h)
    return w / np.linalg.norm(w)


def sinr(f, H, s1, sigma_z2: float, i: int, variant: str = "attack", alpha: float = 0.0):
    """Target-to-interference-plus-noise ratio at combiner ``f`` for prosumer ``i``.

    ``variant="attack"`` is the equivalent SINR of the plain-transmission
    attack (noise scaled by ``1/(I-1)``); ``variant="dp"`` weights the other
    prosumers by their artificial-noise power ``alpha |s1_j|^2`` and keeps the
    full channel noise.
    """
    H = np.asarray(H, dtype=complex)
    s1_mag2 = np.abs(np.asarray(s1)) ** 2
    proj = np.abs(np.conj(f) @ H) ** 2
    others = _others(H.shape[1], i)
    signal = proj[i] * s1_mag2[i]
    interference = np.sum(proj[others] * s1_mag2[others])
    if variant == "attack":
        if H.shape[1] < 2:
            raise DomainError("the attack SINR needs at least two prosumers")
        return float(signal / (interference + sigma_z2 / (H.shape[1] - 1)))
    if variant == "dp":
        return float(signal / (alpha * interference + sigma_z2))
    raise DomainError(f"unknown SINR variant {variant!r}")


def sinr_closed_form(B, h, s1_i) -> float:
    """``|s1_i|^2 h^H B^{-1} h``, the SINR reached by the MMSE extractor."""
    return float(abs(s1_i) ** 2 * np.real(np.vdot(h, hermitian_solve(B, h))))


def instantaneous_ratio(f, H, x, sigma_z2: float, i: int) -> float:
    """Diagnostic power ratio for one realized transmit vector ``x``.

    Unlike :func:`sinr` the interference term is the coherent sum of the
    other prosumers' contributions rather than its upper bound.
    """
    H = np.asarray(H, dtype=complex)
    contrib = (np.conj(f) @ H) * np.asarray(x)
    others = _others(H.shape[1], i)
    noise = sigma_z2 * np.linalg.norm(f) ** 2
    return float(abs(contrib[i]) ** 2 / (abs(contrib[others].sum()) ** 2 + noise))


def build_extractors(
    H, design: LinkDesign, sigma_z2: float, L: float, variant: str | None = None
) -> ExtractorSet:
    """MMSE extractors for all prosumers.

    The plain-attack covariance is used when the link carries no artificial
    noise and the protocol-aware one otherwise, unless ``variant`` forces a
    choice.
    """
    H = np.asarray(H, dtype=complex)
    Nr, I = H.shape
    if variant is None:
        variant = "attack" if design.alpha == 0 and I >= 2 else "dp"
    F = np.empty((Nr, I), dtype=complex)
    sinrs = np.empty(I)
    for i in range(I):
        if variant == "attack":
            B = interference_cov_attack(H, design.s1, sigma_z2, i)
        elif variant == "dp":
            B = interference_cov_dp(H, design.s1, design.alpha, sigma_z2, i)
        else:
            raise DomainError(f"unknown covariance variant {variant!r}")
        F[:, i] = mmse_extractor(B, H[:, i])
        sinrs[i] = sinr(F[:, i], H, design.s1, sigma_z2, i, variant, design.alpha)
    g = np.einsum("ri,ri->i", np.conj(F), H) * design.s1 / L
    return ExtractorSet(f=F, g=g, sinr=sinrs, variant=variant)


def recover_bid(y, f_adv, g):
    """``Re(f_adv^H y / g)``; batched over leading axes of ``y``."""
    if abs(g) < 1e-12:
        raise UnrecoverableError(f"effective gain {abs(g):.3e} is too small to invert")
    out = np.real((np.asarray(y) @ np.conj(f_adv)) / g)
    return float(out) if np.ndim(out) == 0 else out


def infer_private(b_hat, lam, market: MarketConfig):
    """Net demand implied by a recovered bid: ``-a * price + b_hat``."""
    return -market.a * lam + b_hat


def attack_trial(
    H,
    design: LinkDesign,
    bids,
    lam: float,
    rng: RngStream,
    sigma_z2: float,
    market: MarketConfig,
    q_true=None,
    extractors: ExtractorSet | None = None,
) -> AttackResult:
    """Transmit ``bids`` once over the DP link and attack every prosumer.

    Draws the artificial noise (``I`` values) then the channel noise (``Nr``
    values) from ``rng``.
    """
    H = np.asarray(H, dtype=complex)
    Nr, I = H.shape
    bids = np.asarray(bids, dtype=float)
    if bids.shape != (I,):
        raise DomainError(f"expected {I} bids, got shape {bids.shape}")
    n = rng.complex_normal(I)
    z = sample_awgn(Nr, sigma_z2, rng)
    x = encode_dp(bids, design.s1, design.s2_mag2, market.L, n)
    y = ota_aggregate(H, x, z)
    ext = extractors or build_extractors(H, design, sigma_z2, market.L)
    b_hat = np.array([recover_bid(y, ext.f[:, i], ext.g[i]) for i in range(I)])
    q_hat = infer_private(b_hat, lam, market)
    if q_true is None:
        q_true = bids - market.a * lam
    return AttackResult(b_hat=b_hat, q_hat=q_hat, q_true=np.asarray(q_true, dtype=float))
