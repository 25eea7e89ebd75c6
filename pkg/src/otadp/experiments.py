"""The five experiments behind the command-line tool.

Each function takes a :class:`ScenarioConfig` and returns an
:class:`ExperimentResult` holding tidy tables, JSON documents and the derived
quantities recorded in the manifest.  Writing files is the caller's job.

Random streams are indexed by trial (or channel draw), never by the swept
parameter, so sweeps over ``alpha``, ``a`` or ``Nr`` share common random
numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adversary import attack_trial
from .channel import RngStream, load_channel, sample_rayleigh, snr_to_sigma
from .config import ScenarioConfig
from .convergence import contraction_factor, empirical_mse, mse_bound
from .errors import ConfigError
from .link import design_combiner, noise_error_power, pre_equalize
from .market import MarketConfig, Prosumer, default_bid_bound, gne_oracle
from .privacy import (
    DpConfig,
    PrivacyCurve,
    privacy_constant,
    alpha_min,
    epsilon_of_alpha,
    epsilon_orthogonal,
)
from .runner import RunConfig, run_monte_carlo


@dataclass
class Table:
    header: list[str]
    rows: list[list]


@dataclass
class ExperimentResult:
    command: str
    tables: dict[str, Table] = field(default_factory=dict)
    documents: dict[str, dict] = field(default_factory=dict)
    texts: dict[str, str] = field(default_factory=dict)
    derived: dict = field(default_factory=dict)


def population(cfg: ScenarioConfig, I: int | None = None) -> list[Prosumer]:
    """Configured prosumers, cycled to ``I`` entries when more are requested."""
    rows = cfg.prosumers
    if I is None:
        I = cfg.market.I if cfg.market.I is not None else len(rows)
    return [
        Prosumer.from_coefficients(k + 1, r.c1, r.c2, r.v1, r.v2)
        for k, r in ((k, rows[k % len(rows)]) for k in range(I))
    ]


def market_for(cfg: ScenarioConfig, prosumers, a: float | None = None) -> MarketConfig:
    a = cfg.market.a if a is None else a
    L = cfg.market.L if cfg.market.L is not None else default_bid_bound(prosumers, a)
    return MarketConfig(a=a, I=len(prosumers), L=L)


def _file_channel(cfg: ScenarioConfig, I: int):
    ch = load_channel(cfg.channel.path)
    if ch.I != I:
        raise ConfigError(f"channel.path: file has {ch.I} prosumers, market has {I}")
    return ch


def _channel(cfg, Nr, I, stream):
    """A channel matrix and its noise variance for one draw."""
    if cfg.channel.source == "file":
        ch = _file_channel(cfg, I)
        return ch.H, ch.sigma_z2
    return sample_rayleigh(Nr, I, stream), snr_to_sigma(cfg.channel.snr_db, cfg.channel.P)


def _run_config(cfg: ScenarioConfig, alpha: float, **over) -> RunConfig:
    r = cfg.run
    kw = dict(
        max_iter=r.max_iter,
        tol_nu=r.tol,
        alpha=alpha,
        snr_db=cfg.channel.snr_db,
        Nr=cfg.channel.Nr,
        n_trials=r.n_trials,
        seed=r.seed,
        bid_overflow_policy=r.bid_overflow_policy,
        stop_mode=r.stop_mode,
        P=cfg.channel.P,
        combiner=cfg.channel.combiner,
    )
    kw.update(over)
    return RunConfig(**kw)


# -- attack -----------------------------------------------------------------


def run_attack(cfg: ScenarioConfig) -> ExperimentResult:
    """Attack every prosumer's equilibrium bid once per trial and ``alpha``."""
    prosumers = population(cfg)
    market = market_for(cfg, prosumers)
    eq = gne_oracle(prosumers, market)
    I, Nr, P = market.I, cfg.channel.Nr, cfg.channel.P
    samples, stats = [], []
    per_alpha = {}
    for alpha in cfg.dp.alphas:
        q_hat = np.empty((cfg.run.n_trials, I))
        for t in range(cfg.run.n_trials):
            stream = RngStream(cfg.run.seed, t)
            H, sigma_z2 = _channel(cfg, Nr, I, stream)
            design = pre_equalize(H, design_combiner(H, cfg.channel.combiner), market, P, alpha)
            res = attack_trial(
                H, design, eq.b_star, eq.lambda_star, stream, sigma_z2, market, q_true=eq.q_star
            )
            q_hat[t] = res.q_hat
            samples.extend([t, i + 1, alpha, eq.q_star[i], res.q_hat[i]] for i in range(I))
        err = q_hat - eq.q_star
        rel = np.abs(err) / np.maximum(1.0, np.abs(eq.q_star))
        std = q_hat.std(axis=0, ddof=1) if q_hat.shape[0] > 1 else np.zeros(I)
        for i in range(I):
            stats.append([
                alpha, i + 1, eq.q_star[i], q_hat[:, i].mean(), std[i],
                float(np.median(np.abs(err[:, i]))), float(np.median(rel[:, i])),
            ])
        per_alpha[repr(float(alpha))] = {"std_q_hat": std, "median_rel_error": np.median(rel, axis=0)}
    out = ExperimentResult("attack")
    out.tables["attack_samples"] = Table(["trial", "prosumer", "alpha", "q_true", "q_hat"], samples)
    out.tables["attack_stats"] = Table(
        ["alpha", "prosumer", "q_true", "mean_q_hat", "std_q_hat", "median_abs_error",
         "median_rel_error"],
        stats,
    )
    out.documents["attack_summary"] = {
        "lambda_star": eq.lambda_star,
        "q_true": eq.q_star,
        "b_star": eq.b_star,
        "per_alpha": per_alpha,
        "std_strictly_increasing": _strictly_increasing_columns(
            [per_alpha[k]["std_q_hat"] for k in per_alpha]
        ),
    }
    out.derived = {"lambda_star": eq.lambda_star, "L": market.L, "alphas": cfg.dp.alphas}
    return out


def _strictly_increasing_columns(rows) -> list[bool]:
    arr = np.asarray(rows)
    if arr.shape[0] < 2:
        return [True] * arr.shape[1]
    return [bool(v) for v in np.all(np.diff(arr, axis=0) > 0, axis=0)]


# -- calibrate --------------------------------------------------------------


def default_epsilon_grid(cfg: ScenarioConfig, market: MarketConfig) -> np.ndarray:
    """Geometric grid from where the noiseless requirement passes 1.2 up to the
    median over baseline channels of the loss with no artificial noise."""
    c = privacy_constant(cfg.dp.K, cfg.dp.delta)
    lo = math.sqrt(c / 1.2)
    top = []
    for k in range(cfg.calibrate.n_channels):
        H, sigma_z2 = _channel(cfg, cfg.channel.Nr, market.I, RngStream(cfg.run.seed, k))
        eps0 = epsilon_of_alpha(0.0, H, market, cfg.channel.P, cfg.dp.K, cfg.dp.delta, sigma_z2)
        top.append(float(np.max(eps0)))
    hi = float(np.median(top))
    if not hi > lo:
        hi = 4.0 * lo
    return np.geomspace(lo, hi, cfg.calibrate.n_grid)


def calibration_curves(cfg, market, grid, Nr, snr_db, sigma_z2=None):
    """Wireless and noiseless ``alpha_min`` for every channel draw and target.

    Returns ``(wireless, perfect)`` arrays of shape ``(n_channels, len(grid))``;
    unreachable targets are NaN.
    """
    P, tol, K, delta = cfg.channel.P, cfg.calibrate.tol, cfg.dp.K, cfg.dp.delta
    if sigma_z2 is None:
        sigma_z2 = snr_to_sigma(snr_db, P)
    n = cfg.calibrate.n_channels
    wireless = np.empty((n, len(grid)))
    perfect = np.empty((n, len(grid)))
    for k in range(n):
        if cfg.channel.source == "file":
            H = _file_channel(cfg, market.I).H
        else:
            H = sample_rayleigh(Nr, market.I, RngStream(cfg.run.seed, k))
        f0 = design_combiner(H, cfg.channel.combiner)
        wireless[k] = PrivacyCurve(H, market, P, K, delta, sigma_z2, f0).alpha_min(grid, tol)
        perfect[k] = PrivacyCurve(H, market, P, K, delta, 0.0, f0).alpha_min(grid, tol)
    return wireless, perfect


def run_calibrate(cfg: ScenarioConfig) -> ExperimentResult:
    if not cfg.dp.epsilon_targets:
        raise ConfigError("dp.epsilon_targets: calibrate needs privacy targets")
    prosumers = population(cfg)
    market = market_for(cfg, prosumers)
    P = cfg.channel.P
    dp = DpConfig(tuple(cfg.dp.epsilon_targets), cfg.dp.delta, cfg.dp.K)
    H0, sigma_z2 = _channel(cfg, cfg.channel.Nr, market.I, RngStream(cfg.run.seed, 0))
    base_w = alpha_min(dp, H0, market, P, sigma_z2, tol=cfg.calibrate.tol)
    base_p = alpha_min(dp, H0, market, P, 0.0, tol=cfg.calibrate.tol)

    grid = (
        np.asarray(cfg.calibrate.epsilon_grid, dtype=float)
        if cfg.calibrate.epsilon_grid is not None
        else default_epsilon_grid(cfg, market)
    )
    panels = [("snr", cfg.channel.Nr, s) for s in cfg.calibrate.snr_db_list]
    panels += [("nr", n, cfg.channel.snr_db) for n in cfg.calibrate.Nr_list]
    rows, panel_docs = [], []
    for name, Nr, snr in panels:
        w, p = calibration_curves(cfg, market, grid, Nr, snr)
        wm, pm = np.nanmean(w, axis=0), np.nanmean(p, axis=0)
        gap = pm - wm
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(pm > 0, wm / pm, np.nan)
        for j, eps in enumerate(grid):
            rows.append([name, Nr, snr, eps, wm[j], pm[j], gap[j], ratio[j]])
        panel_docs.append({
            "panel": name,
            "Nr": Nr,
            "snr_db": snr,
            "mean_saving": float(np.mean(gap)),
            "min_ratio": float(np.nanmin(ratio)),
            "wireless_le_perfect": bool(np.all(w <= p + cfg.calibrate.tol)),
        })
    out = ExperimentResult("calibrate")
    out.tables["calibrate_curves"] = Table(
        ["panel", "Nr", "snr_db", "epsilon_target", "alpha_min_wireless", "alpha_min_perfect",
         "saving", "ratio"],
        rows,
    )
    base = {
        "epsilon_targets": cfg.dp.epsilon_targets,
        "wireless": {
            "alpha_min": base_w.alpha_min,
            "epsilon_achieved": base_w.epsilon_achieved,
            "iterations_used": base_w.iterations_used,
            "link": base_w.link.to_manifest(),
        },
        "perfect": {
            "alpha_min": base_p.alpha_min,
            "epsilon_achieved": base_p.epsilon_achieved,
            "iterations_used": base_p.iterations_used,
        },
    }
    out.documents["calibrate"] = {"base": base, "epsilon_grid": grid, "panels": panel_docs}
    out.derived = {
        "alpha_min": base_w.alpha_min,
        "alpha_min_perfect": base_p.alpha_min,
        "eta": base_w.link.eta,
        "s1_mag2": base_w.link.s1_mag2,
        "epsilon_grid": grid,
    }
    return out


# -- run --------------------------------------------------------------------


def run_run(cfg: ScenarioConfig) -> ExperimentResult:
    """Monte Carlo trajectories for each configured ``alpha``."""
    prosumers = population(cfg)
    market = market_for(cfg, prosumers)
    eq = gne_oracle(prosumers, market)
    I = market.I
    H, sigma_override = None, None
    if cfg.channel.source == "file":
        ch = _file_channel(cfg, I)
        H, sigma_override = ch.H, ch.sigma_z2
    traj, trace_tables, summaries = [], {}, []
    derived_alpha = {}
    for alpha in cfg.dp.alphas:
        run = _run_config(cfg, alpha, sigma_z2=sigma_override)
        summary, traces = run_monte_carlo(prosumers, market, run, H=H, return_traces=True)
        designs = traces.designs if hasattr(traces, "designs") else [t.design for t in traces]
        sigma_z2 = run.noise_variance
        sig = np.array([noise_error_power(d, sigma_z2, market) for d in designs])
        report = contraction_factor(prosumers, market, float(sig.mean()))
        K = summary.iterations
        bound = (
            mse_bound(K, 0.0, eq.lambda_star, report.rho, report.sigma_e2)
            if report.converges else math.inf
        )
        for k in range(K + 1):
            row = [alpha, k, summary.mean_lambda[k], summary.std_lambda[k], summary.ci_low[k],
                   summary.ci_high[k], summary.mse[k], summary.mse_stderr[k]]
            if k == 0:
                row += [math.nan] * (2 * I)
            else:
                row += list(summary.mean_p[k - 1]) + list(summary.mean_d[k - 1])
            traj.append(row)
        trace_tables[f"traces_alpha{alpha:g}"] = _trace_table(traces, I)
        doc = summary.to_dict()
        doc["convergence"] = report.to_dict()
        doc["mse_bound"] = bound
        summaries.append(doc)
        derived_alpha[repr(float(alpha))] = {
            "link_trial0": designs[0].to_manifest(),
            "mean_eta": float(np.mean([d.eta for d in designs])),
        }
        last_report = report
    header = ["alpha", "iter", "mean_lambda", "std_lambda", "ci_low", "ci_high", "mse",
              "mse_stderr"]
    header += [f"mean_p_{i + 1}" for i in range(I)] + [f"mean_d_{i + 1}" for i in range(I)]
    out = ExperimentResult("run")
    out.tables["run_trajectories"] = Table(header, traj)
    for name, table in trace_tables.items():
        out.tables[name] = table
    out.documents["run_summary"] = {
        "lambda_star": eq.lambda_star,
        "p_star": eq.p_star,
        "d_star": eq.d_star,
        "b_star": eq.b_star,
        "per_alpha": summaries,
    }
    out.derived = {
        "lambda_star": eq.lambda_star,
        "L": market.L,
        "rho": last_report.rho,
        "kappa": last_report.kappa,
        "a_threshold": last_report.a_threshold,
        "per_alpha": derived_alpha,
    }
    return out


def _trace_table(traces, I) -> Table:
    header = ["trial", "iter", "lambda"]
    header += [f"p_{i + 1}" for i in range(I)] + [f"d_{i + 1}" for i in range(I)]
    header += [f"b_{i + 1}" for i in range(I)] + ["e_noise"]
    rows = []
    if hasattr(traces, "lam") and np.ndim(traces.lam) == 2:
        items = [
            (int(t), traces.lam[n], traces.p[n], traces.d[n], traces.b[n], traces.e_noise[n])
            for n, t in enumerate(traces.trials)
        ]
    else:
        items = [(tr.trial, tr.lam, tr.p, tr.d, tr.b, tr.e_noise) for tr in traces]
    for trial, lam, p, d, b, e in items:
        for k in range(len(p)):
            rows.append([trial, k + 1, lam[k + 1], *p[k], *d[k], *b[k], e[k]])
    return Table(header, rows)


# -- asweep -----------------------------------------------------------------


def run_asweep(cfg: ScenarioConfig) -> ExperimentResult:
    """Mean-square price error after ``K`` rounds across market sensitivities.

    Bids are always clamped here since divergence is expected for small
    ``a``.  A grid point counts as divergent when the final mean-square error
    is no smaller than the initial squared error, or reaches the ceiling.
    """
    s = cfg.asweep
    prosumers = population(cfg, s.I)
    rows, points = [], []
    for a in s.a_grid:
        market = market_for(cfg, prosumers, a)
        eq = gne_oracle(prosumers, market)
        run = _run_config(
            cfg, s.alpha, max_iter=s.K, Nr=cfg.channel.Nr, bid_overflow_policy="clamp",
            stop_mode="fixed",
        )
        summary, traces = run_monte_carlo(prosumers, market, run, return_traces=True)
        mse_raw, _ = empirical_mse(traces.lam[:, -1], eq.lambda_star)
        capped = not math.isfinite(mse_raw) or mse_raw >= s.mse_ceiling
        mse = s.mse_ceiling if capped else mse_raw
        sig = np.array([noise_error_power(d, run.noise_variance, market) for d in traces.designs])
        rep = contraction_factor(prosumers, market, float(sig.mean()))
        start = eq.lambda_star**2
        divergent = capped or mse >= start
        bound = mse_bound(s.K, 0.0, eq.lambda_star, rep.rho, rep.sigma_e2) if rep.converges else math.inf
        rows.append([
            a, math.log10(mse), rep.rho, rep.a_threshold, rep.kappa, rep.condition_holds,
            divergent, math.log10(bound) if math.isfinite(bound) else math.inf,
            math.log10(rep.noise_floor()) if rep.converges else math.inf,
            eq.lambda_star, summary.overflow_count,
        ])
        points.append((a, divergent))
    threshold = rows[0][3]
    div = [a for a, dv in points if dv]
    conv = [a for a, dv in points if not dv]
    monotone = not div or not conv or max(div) < min(conv)
    out = ExperimentResult("asweep")
    out.tables["asweep"] = Table(
        ["a", "empirical_log10_mse", "rho", "threshold", "kappa", "condition_holds",
         "empirical_divergent", "log10_mse_bound", "log10_noise_floor", "lambda_star",
         "overflow_count"],
        rows,
    )
    out.documents["asweep_summary"] = {
        "I": s.I,
        "K": s.K,
        "alpha": s.alpha,
        "threshold": threshold,
        "last_divergent_a": max(div) if div else None,
        "first_convergent_a": min(conv) if conv else None,
        "monotone_transition": monotone,
    }
    out.derived = {"a_threshold": threshold, "gamma_max": max(p.gamma for p in prosumers)}
    return out


# -- compare ----------------------------------------------------------------


def compare_scenario(cfg: ScenarioConfig, I: int, Nr: int, snr_db: float):
    """Per-draw, per-prosumer ``(eps_ortho, eps_ota)`` arrays of shape ``(n, I)``."""
    prosumers = population(cfg, I)
    market = market_for(cfg, prosumers)
    P, K, delta = cfg.channel.P, cfg.dp.K, cfg.dp.delta
    alpha = cfg.compare.alpha
    sigma_z2 = snr_to_sigma(snr_db, P)
    n = cfg.compare.n_channels
    ortho, ota = np.empty((n, I)), np.empty((n, I))
    for k in range(n):
        H = sample_rayleigh(Nr, I, RngStream(cfg.run.seed, k))
        f0 = design_combiner(H, cfg.channel.combiner)
        ota[k] = epsilon_of_alpha(alpha, H, market, P, K, delta, sigma_z2, f0)
        ortho[k] = epsilon_orthogonal(alpha, H, market, P, K, delta, sigma_z2, f0)
    return ortho, ota


def run_compare(cfg: ScenarioConfig) -> ExperimentResult:
    rows, lines = [], []
    header = ["scenario", "I", "Nr", "snr_db", "eps_ortho_mean", "eps_ota_mean", "gain",
              "gain_per_draw_mean"]
    for sc in cfg.compare.scenarios:
        ortho, ota = compare_scenario(cfg, sc.I, sc.Nr, sc.snr_db)
        e_o, e_a = float(ortho.mean()), float(ota.mean())
        rows.append([sc.name, sc.I, sc.Nr, sc.snr_db, e_o, e_a, e_o / e_a, float((ortho / ota).mean())])
    widths = [max(len(header[0]), *(len(r[0]) for r in rows)), 3, 4, 8, 12, 12, 7]
    fmt_h = "{:<%d}  {:>%d}  {:>%d}  {:>%d}  {:>%d}  {:>%d}  {:>%d}" % tuple(widths)
    lines.append(fmt_h.format("Scenario", "I", "Nr", "SNR (dB)", "eps ortho", "eps OTA", "Gain"))
    for r in rows:
        lines.append(fmt_h.format(r[0], r[1], r[2], f"{r[3]:g}", f"{r[4]:.2f}", f"{r[5]:.2f}",
                                  f"{r[6]:.3f}"))
    out = ExperimentResult("compare")
    out.tables["compare"] = Table(header, rows)
    out.texts["compare"] = "\n".join(lines) + "\n"
    out.documents["compare"] = {
        "alpha": cfg.compare.alpha,
        "delta": cfg.dp.delta,
        "K": cfg.dp.K,
        "n_channels": cfg.compare.n_channels,
        "scenarios": [dict(zip(header, r)) for r in rows],
    }
    out.derived = {"gains": {r[0]: r[6] for r in rows}}
    return out


COMMANDS = {
    "attack": run_attack,
    "calibrate": run_calibrate,
    "run": run_run,
    "asweep": run_asweep,
    "compare": run_compare,
}
