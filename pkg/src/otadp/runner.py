"""Iterative private bidding over the simulated uplink, plus the Monte Carlo harness.

Each round every prosumer best-responds to the broadcast price, turns its
decision into a bid, perturbs and transmits it; the base station combines the
superposed signal into the next price.  The channel is drawn once per trial
and held fixed; artificial and receiver noise are redrawn every round.

Random draws per trial, in order: the channel (when sampled), then per round
``I`` artificial-noise values followed by ``Nr`` receiver-noise values.  The
batched engine consumes exactly the same sequence, so a trial gives the same
trace whichever path runs it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import RngStream, sample_awgn, sample_rayleigh, snr_to_sigma
from .errors import BidOverflowError, ConfigError
from .link import (
    LinkDesign,
    alignment_error,
    combine_price,
    design_combiner,
    encode_dp,
    ota_aggregate,
    pre_equalize,
)
from .market import (
    MarketConfig,
    Prosumer,
    best_responses,
    bid_from_decision,
    check_population,
    clearing_price,
    default_bid_bound,
    gne_oracle,
)

logger = logging.getLogger(__name__)

STOP_MODES = ("fixed", "tolerance")
OVERFLOW_POLICIES = ("error", "clamp")
Z95 = 1.959963984540054


@dataclass(frozen=True)
class RunConfig:
    max_iter: int = 100
    tol_nu: float = 1e-6
    alpha: float = 0.0
    snr_db: float = 10.0
    Nr: int = 8
    n_trials: int = 100
    seed: int = 0
    bid_overflow_policy: str = "error"
    stop_mode: str = "fixed"
    P: float = 1.0
    sigma_z2: float | None = None
    combiner: str = "dominant"

    def __post_init__(self):
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError(f"max_iter must be an integer >= 1, got {self.max_iter}")
        if not self.tol_nu > 0:
            raise ConfigError(f"tol_nu must be positive, got {self.tol_nu}")
        if int(self.n_trials) != self.n_trials or self.n_trials < 1:
            raise ConfigError(f"n_trials must be an integer >= 1, got {self.n_trials}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.Nr < 1:
            raise ConfigError(f"Nr must be >= 1, got {self.Nr}")
        if self.bid_overflow_policy not in OVERFLOW_POLICIES:
            raise ConfigError(f"bid_overflow_policy must be one of {OVERFLOW_POLICIES}")
        if self.stop_mode not in STOP_MODES:
            raise ConfigError(f"stop_mode must be one of {STOP_MODES}")
        if self.sigma_z2 is not None and self.sigma_z2 < 0:
            raise ConfigError(f"sigma_z2 must be >= 0, got {self.sigma_z2}")

    @property
    def noise_variance(self) -> float:
        if self.sigma_z2 is not None:
            return float(self.sigma_z2)
        return snr_to_sigma(self.snr_db, self.P)


@dataclass
class TrialTrace:
    """Record of one run of the bidding loop.

    ``lam[k]`` is the price after ``k`` rounds (``lam[0] = 0``); row ``k-1`` of
    ``p``, ``d``, ``b`` holds the decisions that produced ``lam[k]``.
    """

    lam: np.ndarray
    p: np.ndarray
    d: np.ndarray
    b: np.ndarray
    e_noise: np.ndarray
    e_align: np.ndarray
    iterations: int
    trial: int
    seed: int
    H: np.ndarray
    design: LinkDesign
    overflows: list = field(default_factory=list)


@dataclass
class BatchTraces:
    """Traces of many fixed-length trials stacked along axis 0."""

    lam: np.ndarray
    p: np.ndarray
    d: np.ndarray
    b: np.ndarray
    e_noise: np.ndarray
    overflow_count: np.ndarray
    trials: np.ndarray
    designs: list
    market: MarketConfig


@dataclass
class MonteCarloSummary:
    alpha: float
    n_trials: int
    iterations: int
    lambda_star: float
    mean_lambda: np.ndarray
    std_lambda: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    mean_p: np.ndarray
    mean_d: np.ndarray
    mse: np.ndarray
    mse_stderr: np.ndarray
    divergence_count: int
    overflow_count: int
    p_star: np.ndarray
    d_star: np.ndarray
    L: float

    @property
    def mse_final(self) -> float:
        return float(self.mse[-1])

    @property
    def ci_width(self) -> np.ndarray:
        return self.ci_high - self.ci_low

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "n_trials": self.n_trials,
            "iterations": self.iterations,
            "L": self.L,
            "lambda_star": self.lambda_star,
            "p_star": self.p_star.tolist(),
            "d_star": self.d_star.tolist(),
            "final_mean_lambda": float(self.mean_lambda[-1]),
            "final_ci": [float(self.ci_low[-1]), float(self.ci_high[-1])],
            "final_ci_width": float(self.ci_width[-1]),
            "mse_final": self.mse_final,
            "mse_final_stderr": float(self.mse_stderr[-1]),
            "divergence_count": self.divergence_count,
            "overflow_count": self.overflow_count,
        }


def resolve_market(prosumers: Sequence[Prosumer], market: MarketConfig) -> MarketConfig:
    """Fill in the default bid bound when ``market.L`` is unset (infinite)."""
    check_population(prosumers, market)
    if math.isfinite(market.L):
        return market
    return market.with_bound(default_bid_bound(prosumers, market.a))


def _handle_overflow(b, L, policy, k, trial, events):
    over = np.abs(b) > L
    if not np.any(over):
        return b
    for i in np.flatnonzero(over):
        logger.debug("bid overflow trial=%d iter=%d prosumer=%d bid=%.6g", trial, k, i + 1, b[i])
        if policy == "error":
            raise BidOverflowError(k, int(i) + 1, float(b[i]), L)
        events.append((k, int(i) + 1, float(b[i])))
    return np.clip(b, -L, L)


def run_trial(
    prosumers: Sequence[Prosumer],
    market: MarketConfig,
    run: RunConfig,
    rng: RngStream,
    H=None,
) -> TrialTrace:
    """One execution of the private bidding loop, starting from price 0."""
    market = resolve_market(prosumers, market)
    I, L = market.I, market.L
    sigma_z2 = run.noise_variance
    if H is None:
        H = sample_rayleigh(run.Nr, I, rng)
    H = np.asarray(H, dtype=complex)
    Nr = H.shape[0]
    design = pre_equalize(H, design_combiner(H, run.combiner), market, run.P, run.alpha)

    lams = [0.0]
    ps, ds, bs, e_noise, e_align, events = [], [], [], [], [], []
    lam = 0.0
    for k in range(1, run.max_iter + 1):
        p, d = best_responses(prosumers, lam, market)
        b = _handle_overflow(
            bid_from_decision(p, d, lam, market), L, run.bid_overflow_policy, k, rng.index, events
        )
        n = rng.complex_normal(I)
        z = sample_awgn(Nr, sigma_z2, rng)
        y = ota_aggregate(H, encode_dp(b, design.s1, design.s2_mag2, L, n), z)
        new = combine_price(y, design, market)
        ea = alignment_error(H, design, b, market)
        ps.append(p)
        ds.append(d)
        bs.append(b)
        e_align.append(ea)
        e_noise.append(new - clearing_price(b, market) - ea)
        lams.append(new)
        done = run.stop_mode == "tolerance" and abs(new - lam) <= run.tol_nu
        lam = new
        if done:
            break
    if events:
        logger.warning("trial %d: %d bid overflows clamped", rng.index, len(events))
    return TrialTrace(
        lam=np.array(lams),
        p=np.array(ps),
        d=np.array(ds),
        b=np.array(bs),
        e_noise=np.array(e_noise),
        e_align=np.array(e_align),
        iterations=len(lams) - 1,
        trial=rng.index,
        seed=rng.seed,
        H=H,
        design=design,
        overflows=events,
    )


def simulate_batch(
    prosumers: Sequence[Prosumer],
    market: MarketConfig,
    run: RunConfig,
    trials: Sequence[int] | None = None,
    H=None,
) -> BatchTraces:
    """Run fixed-length trials vectorized across trials.

    Produces the same numbers as :func:`run_trial` in fixed-K mode for each
    trial index; trials are independent of one another and of ordering.
    """
    market = resolve_market(prosumers, market)
    I, L, K = market.I, market.L, run.max_iter
    trials = np.arange(run.n_trials) if trials is None else np.asarray(trials, dtype=int)
    T = len(trials)
    sigma_z2 = run.noise_variance
    H_fixed = None if H is None else np.asarray(H, dtype=complex)
    Nr = run.Nr if H_fixed is None else H_fixed.shape[0]

    Hs = np.empty((T, Nr, I), dtype=complex)
    F0 = np.empty((T, Nr), dtype=complex)
    S1 = np.empty((T, I), dtype=complex)
    S2 = np.empty((T, I))
    eta = np.empty(T)
    nz = np.empty((T, K, I + Nr, 2))
    designs = []
    for t, idx in enumerate(trials):
        stream = RngStream(run.seed, int(idx))
        Ht = sample_rayleigh(Nr, I, stream) if H_fixed is None else H_fixed
        design = pre_equalize(Ht, design_combiner(Ht, run.combiner), market, run.P, run.alpha)
        designs.append(design)
        Hs[t], F0[t], S1[t], S2[t], eta[t] = Ht, design.f0, design.s1, design.s2_mag2, design.eta
        nz[t] = stream.standard_normal((K, I + Nr, 2))
    # same scaling expressions as RngStream.complex_normal
    n_all = math.sqrt(1.0 / 2.0) * (nz[:, :, :I, 0] + 1j * nz[:, :, :I, 1])
    z_all = math.sqrt(sigma_z2 / 2.0) * (nz[:, :, I:, 0] + 1j * nz[:, :, I:, 1])
    gain_err = np.einsum("tr,tri->ti", np.conj(F0), Hs) * S1 / (np.sqrt(eta)[:, None] * L) - 1.0
    scale = market.a * I * np.sqrt(eta)

    lam = np.zeros((T, K + 1))
    P_ = np.empty((T, K, I))
    D_ = np.empty((T, K, I))
    B_ = np.empty((T, K, I))
    E_ = np.empty((T, K))
    overflow = np.zeros(T, dtype=int)
    for k in range(K):
        p, d = best_responses(prosumers, lam[:, k], market)
        b = bid_from_decision(p, d, lam[:, k, None], market)
        over = np.abs(b) > L
        if np.any(over):
            rows = np.flatnonzero(over.any(axis=1))
            for t in rows:
                for i in np.flatnonzero(over[t]):
                    logger.debug(
                        "bid overflow trial=%d iter=%d prosumer=%d bid=%.6g",
                        trials[t], k + 1, i + 1, b[t, i],
                    )
            if run.bid_overflow_policy == "error":
                t = rows[0]
                i = int(np.flatnonzero(over[t])[0])
                raise BidOverflowError(k + 1, i + 1, float(b[t, i]), L)
            overflow += over.sum(axis=1)
            b = np.clip(b, -L, L)
        x = encode_dp(b, S1, S2, L, n_all[:, k])
        y = np.einsum("tri,ti->tr", Hs, x) + z_all[:, k]
        new = np.einsum("tr,tr->t", np.conj(F0), y).real / scale
        P_[:, k], D_[:, k], B_[:, k] = p, d, b
        e_align = np.real(np.sum(gain_err * b, axis=1)) / (market.a * I)
        E_[:, k] = new - b.sum(axis=1) / (market.a * I) - e_align
        lam[:, k + 1] = new
    if overflow.any():
        logger.warning(
            "%d bid overflows clamped across %d of %d trials",
            int(overflow.sum()), int(np.count_nonzero(overflow)), T,
        )
    return BatchTraces(
        lam=lam, p=P_, d=D_, b=B_, e_noise=E_, overflow_count=overflow,
        trials=trials, designs=designs, market=market,
    )


def summarize(lam, p, d, lambda_star, eq, alpha, overflow_count, L) -> MonteCarloSummary:
    """Aggregate stacked trajectories (trials along axis 0) into band statistics."""
    n = lam.shape[0]
    mean = lam.mean(axis=0)
    std = lam.std(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    half = Z95 * std / math.sqrt(n)
    sq = (lam - lambda_star) ** 2
    mse = sq.mean(axis=0)
    mse_se = sq.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mse)
    start = abs(lam[0, 0] - lambda_star)
    final = np.abs(lam[:, -1] - lambda_star)
    divergent = int(np.sum(~np.isfinite(final) | (final > start)))
    return MonteCarloSummary(
        alpha=float(alpha),
        n_trials=n,
        iterations=lam.shape[1] - 1,
        lambda_star=float(lambda_star),
        mean_lambda=mean,
        std_lambda=std,
        ci_low=mean - half,
        ci_high=mean + half,
        mean_p=p.mean(axis=0),
        mean_d=d.mean(axis=0),
        mse=mse,
        mse_stderr=mse_se,
        divergence_count=divergent,
        overflow_count=int(overflow_count),
        p_star=eq.p_star,
        d_star=eq.d_star,
        L=float(L),
    )


def _pad(rows, length):
    out = np.empty((len(rows), length) + rows[0].shape[1:])
    for t, r in enumerate(rows):
        out[t, : len(r)] = r
        out[t, len(r) :] = r[-1]
    return out


def run_monte_carlo(
    prosumers: Sequence[Prosumer],
    market: MarketConfig,
    run: RunConfig,
    n_trials: int | None = None,
    H=None,
    return_traces: bool = False,
):
    """Independent trials with per-trial streams, aggregated in trial order.

    Fixed-K runs use the batched engine; tolerance runs execute trials one by
    one and hold each trial's last price after it stops.  Returns the summary,
    or ``(summary, traces)`` when ``return_traces`` is set.
    """
    market = resolve_market(prosumers, market)
    n = run.n_trials if n_trials is None else int(n_trials)
    eq = gne_oracle(prosumers, market)
    if run.stop_mode == "fixed":
        traces = simulate_batch(prosumers, market, run, np.arange(n), H)
        lam, p, d = traces.lam, traces.p, traces.d
        overflow = int(traces.overflow_count.sum())
    else:
        traces = [run_trial(prosumers, market, run, RngStream(run.seed, t), H) for t in range(n)]
        length = max(tr.iterations for tr in traces)
        lam = _pad([tr.lam for tr in traces], length + 1)
        p = _pad([tr.p for tr in traces], length)
        d = _pad([tr.d for tr in traces], length)
        overflow = sum(len(tr.overflows) for tr in traces)
    summary = summarize(lam, p, d, eq.lambda_star, eq, run.alpha, overflow, market.L)
    return (summary, traces) if return_traces else summary
