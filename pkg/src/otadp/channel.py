"""Channel and noise sampling, Hermitian solves, reproducible random streams."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ConfigError, DomainError, NumericError


class RngStream:
    """Counter-based random stream identified by ``(seed, index)``.

    Streams are Philox generators keyed by a ``SeedSequence`` spawn key, so
    trial ``index`` draws the same numbers regardless of how many other
    trials exist or in what order they run.
    """

    def __init__(self, seed: int, index: int = 0):
        if seed < 0 or index < 0:
            raise ConfigError("seed and stream index must be non-negative")
        self.seed = int(seed)
        self.index = int(index)
        self.draws = 0
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.index,))
        self._gen = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, index={self.index}, draws={self.draws})"

    def standard_normal(self, shape) -> np.ndarray:
        out = self._gen.standard_normal(shape)
        self.draws += out.size
        return out

    def complex_normal(self, shape, variance: float = 1.0) -> np.ndarray:
        """Circularly symmetric complex Gaussian samples of the given variance."""
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        raw = self.standard_normal(shape + (2,))
        scale = math.sqrt(variance / 2.0)
        return scale * (raw[..., 0] + 1j * raw[..., 1])


@dataclass(frozen=True)
class ChannelRealization:
    H: np.ndarray
    sigma_z2: float

    def __post_init__(self):
        H = np.asarray(self.H)
        if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] < 1:
            raise ConfigError(f"channel matrix must be 2-D Nr x I, got shape {H.shape}")
        if not np.all(np.isfinite(H)):
            raise ConfigError("channel matrix has non-finite entries")
        if not self.sigma_z2 >= 0:
            raise ConfigError(f"noise variance must be >= 0, got {self.sigma_z2}")
        object.__setattr__(self, "H", H.astype(complex))

    @property
    def Nr(self) -> int:
        return self.H.shape[0]

    @property
    def I(self) -> int:
        return self.H.shape[1]


def sample_rayleigh(Nr: int, I: int, stream: RngStream) -> np.ndarray:
    """Nr x I matrix with i.i.d. CN(0, 1) entries."""
    if Nr < 1 or I < 1:
        raise DomainError(f"need Nr >= 1 and I >= 1, got {Nr}, {I}")
    return stream.complex_normal((Nr, I))


def sample_awgn(Nr: int, sigma_z2: float, stream: RngStream) -> np.ndarray:
    # Draws are consumed even when sigma_z2 == 0 so streams stay aligned
    # across SNR settings.
    if sigma_z2 < 0:
        raise DomainError(f"noise variance must be >= 0, got {sigma_z2}")
    return stream.complex_normal(Nr, sigma_z2)


def hermitian_solve(B: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Solve ``B x = h`` for Hermitian positive definite ``B`` via Cholesky."""
    B = np.asarray(B, dtype=complex)
    h = np.asarray(h, dtype=complex)
    try:
        factor = scipy.linalg.cho_factor(B, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"matrix is not Hermitian positive definite: {exc}") from exc
    x = scipy.linalg.cho_solve(factor, h)
    # backward error: Cholesky is stable, so failure here means non-finite data
    scale = np.linalg.norm(B, 2) * np.linalg.norm(x) + np.linalg.norm(h)
    if not np.all(np.isfinite(x)) or np.linalg.norm(B @ x - h) > 1e-10 * scale:
        raise NumericError("Hermitian solve lost accuracy (ill-conditioned matrix)")
    return x


def snr_to_sigma(snr_db: float, P: float = 1.0) -> float:
    """Noise variance for a transmit-power-to-noise ratio given in dB."""
    if not P > 0:
        raise DomainError(f"transmit power must be positive, got {P}")
    if snr_db == math.inf:
        return 0.0
    return P / 10.0 ** (snr_db / 10.0)


def save_channel(path, channel: ChannelRealization) -> None:
    """Write ``channel`` as text: a header line, then one matrix row per line.

    Entries are whitespace-separated ``re,im`` pairs printed with ``repr`` so
    a save/load round trip is exact.
    """
    H = channel.H
    lines = [f"Nr={H.shape[0]} I={H.shape[1]} sigma_z2={float(channel.sigma_z2)!r}"]
    for row in H:
        lines.append(" ".join(f"{float(v.real)!r},{float(v.imag)!r}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_channel(path) -> ChannelRealization:
    text = Path(path).read_text().splitlines()
    rows = [ln.strip() for ln in text if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise ConfigError(f"{path}: empty channel file")
    try:
        header = dict(tok.split("=", 1) for tok in rows[0].split())
        Nr, I = int(header["Nr"]), int(header["I"])
        sigma_z2 = float(header["sigma_z2"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}:1: bad header {rows[0]!r}") from exc
    if len(rows) - 1 != Nr:
        raise ConfigError(f"{path}: header says Nr={Nr} but found {len(rows) - 1} rows")
    H = np.empty((Nr, I), dtype=complex)
    for r, line in enumerate(rows[1:]):
        entries = line.split()
        if len(entries) != I:
            raise ConfigError(f"{path}: row {r + 1} has {len(entries)} entries, expected {I}")
        for c, pair in enumerate(entries):
            try:
                re_s, im_s = pair.split(",")
                H[r, c] = complex(float(re_s), float(im_s))
            except ValueError as exc:
                raise ConfigError(f"{path}: row {r + 1} col {c + 1}: bad pair {pair!r}") from exc
    return ChannelRealization(H, sigma_z2)
