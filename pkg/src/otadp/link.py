"""Over-the-air uplink: combiner, pre-equalization, encoding and price recovery.

Every prosumer transmits ``s1 * b / L + sqrt(s2_mag2) * n`` simultaneously;
the base station sees ``y = H x + z`` and recovers the clearing price as
``Re(f0^H y) / (a I sqrt(eta))``.  With the pre-equalized transmit scalars
the signal part of that estimate equals ``sum(b) / (a I)`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, IllConditionedChannelError
from .market import MarketConfig

GAIN_THRESHOLD = 1e-9


@dataclass(frozen=True)
class LinkDesign:
    f0: np.ndarray
    eta: float
    s1: np.ndarray
    s2_mag2: np.ndarray
    alpha: float
    P: float

    def __post_init__(self):
        if abs(np.linalg.norm(self.f0) - 1.0) > 1e-12:
            raise DomainError("combiner f0 must have unit norm")
        if not self.eta > 0:
            raise DomainError(f"normalization eta must be positive, got {self.eta}")
        if self.alpha < 0:
            raise DomainError(f"noise-to-signal ratio must be >= 0, got {self.alpha}")
        s1_mag2 = np.abs(self.s1) ** 2
        if np.any(s1_mag2 * (1.0 + self.alpha) > self.P * (1 + 1e-12) + 1e-12):
            raise DomainError("transmit scalars violate the power budget")

    @property
    def s1_mag2(self) -> np.ndarray:
        return np.abs(self.s1) ** 2

    @property
    def transmit_power(self) -> np.ndarray:
        """Worst-case expected power ``|s1|^2 + |s2|^2`` per prosumer."""
        return self.s1_mag2 + self.s2_mag2

    def to_manifest(self) -> dict:
        return {
            "f0_re": self.f0.real.tolist(),
            "f0_im": self.f0.imag.tolist(),
            "eta": self.eta,
            "s1_mag2": self.s1_mag2.tolist(),
            "alpha": self.alpha,
            "P": self.P,
        }


def _fix_phase(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-14 * np.max(np.abs(v)))
    first = v[nz[0]]
    v = v * (np.conj(first) / abs(first))
    v[nz[0]] = abs(v[nz[0]])
    return v / np.linalg.norm(v)


def dominant_combiner(H: np.ndarray) -> np.ndarray:
    """Dominant left singular vector of ``H``: maximizes ``||H^H f||``."""
    U, _, _ = np.linalg.svd(H, full_matrices=False)
    return U[:, 0]


def sum_combiner(H: np.ndarray) -> np.ndarray:
    return H.sum(axis=1)


COMBINERS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "dominant": dominant_combiner,
    "sum": sum_combiner,
}


def design_combiner(H: np.ndarray, strategy: str = "dominant") -> np.ndarray:
    """Unit-norm receive combiner with a deterministic phase.

    The phase is rotated so the first non-negligible entry is real and
    non-negative.
    """
    H = np.asarray(H, dtype=complex)
    if not np.any(H):
        raise DomainError("channel matrix is identically zero")
    try:
        f = COMBINERS[strategy](H)
    except KeyError:
        raise DomainError(f"unknown combiner strategy {strategy!r}") from None
    if np.linalg.norm(f) == 0:
        raise DomainError(f"combiner strategy {strategy!r} produced a zero vector")
    return _fix_phase(np.asarray(f, dtype=complex))


def effective_gains(H: np.ndarray, f0: np.ndarray) -> np.ndarray:
    """``f0^H h_i`` for each prosumer."""
    return np.conj(f0) @ H


def pre_equalize(H, f0, market: MarketConfig, P: float, alpha: float) -> LinkDesign:
    """Align every prosumer to unit end-to-end gain with the largest feasible eta.

    ``s1_i = sqrt(eta) L / (f0^H h_i)`` and ``eta`` is the largest value for
    which ``|s1_i|^2 (1 + alpha) <= P`` holds for every prosumer.
    """
    if alpha < 0:
        raise DomainError(f"noise-to-signal ratio must be >= 0, got {alpha}")
    if not np.isfinite(market.L):
        raise DomainError("pre-equalization needs a finite bid bound L")
    H = np.asarray(H, dtype=complex)
    g = effective_gains(H, f0)
    mag = np.abs(g)
    for i, m in enumerate(mag):
        if m < GAIN_THRESHOLD:
            raise IllConditionedChannelError(i + 1, float(m))
    L = market.L
    caps = P * mag**2 / (L * L * (1.0 + alpha))
    # argmin picks the lowest index on ties
    eta = float(caps[np.argmin(caps)])
    s1 = np.sqrt(eta) * L / g
    s1_mag2 = np.abs(s1) ** 2
    # the binding prosumer sits exactly on the budget
    j = int(np.argmin(caps))
    s1[j] = s1[j] * np.sqrt(P / ((1.0 + alpha) * s1_mag2[j]))
    s1_mag2 = np.abs(s1) ** 2
    return LinkDesign(
        f0=np.asarray(f0, dtype=complex),
        eta=eta,
        s1=s1,
        s2_mag2=alpha * s1_mag2,
        alpha=float(alpha),
        P=float(P),
    )


def encode_dp(b, s1, s2_mag2, L: float, n):
    """Transmit symbol ``s1 b / L + sqrt(s2_mag2) n``; plain encoding when ``s2_mag2 == 0``."""
    return s1 * (np.asarray(b) / L) + np.sqrt(s2_mag2) * n


def ota_aggregate(H, x, z):
    """Superposed received vector ``sum_i h_i x_i + z``.

    ``x`` may carry leading batch axes: shape ``(..., I)`` gives ``(..., Nr)``.
    """
    return np.asarray(x) @ np.asarray(H).T + z


def combine_price(y, design: LinkDesign, market: MarketConfig):
    """Price estimate ``Re(f0^H y) / (a I sqrt(eta))``.  Batched over leading axes."""
    r = np.asarray(y) @ np.conj(design.f0)
    est = r.real / (market.a * market.I * np.sqrt(design.eta))
    return float(est) if np.ndim(est) == 0 else est


def alignment_error(H, design: LinkDesign, bids, market: MarketConfig):
    """Signal mismatch ``sum_i (f0^H h_i s1_i / (sqrt(eta) L) - 1) b_i / (a I)``."""
    g = effective_gains(H, design.f0) * design.s1 / (np.sqrt(design.eta) * market.L)
    return float(np.real(np.sum((g - 1.0) * np.asarray(bids))) / (market.a * market.I))


def noise_error_power(
    design: LinkDesign, sigma_z2: float, market: MarketConfig, convention: str = "real"
) -> float:
    """Predicted mean-square price error from artificial plus channel noise.

    ``convention="real"`` is the variance of the real-part estimator used by
    :func:`combine_price`; ``"complex"`` is ``E|e|^2`` of the complex
    combiner output, twice as large.
    """
    a, I, L = market.a, market.I, market.L
    complex_power = design.alpha * L * L / (a * a * I) + sigma_z2 / (
        a * a * I * I * design.eta
    )
    if convention == "complex":
        return complex_power
    if convention == "real":
        return complex_power / 2.0
    raise DomainError(f"unknown noise convention {convention!r}")
