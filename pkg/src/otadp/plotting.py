"""Optional figures rendered next to the CSV/JSON outputs.

Only used when the command line asks for ``--figures``.  The non-interactive
Agg backend is selected so rendering works without a display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import ExperimentResult  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.frameon": False,
    "savefig.bbox": "tight",
    "savefig.dpi": 120,
}


def _save(fig, path: Path) -> Path:
    # dropping the version stamp keeps PNG bytes reproducible
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def _columns(table):
    cols = list(zip(*table.rows)) if table.rows else [[] for _ in table.header]
    return dict(zip(table.header, cols))


def plot_attack(result: ExperimentResult, out: Path) -> list[Path]:
    col = _columns(result.tables["attack_samples"])
    alpha = np.asarray(col["alpha"], dtype=float)
    pid = np.asarray(col["prosumer"], dtype=int)
    q_hat = np.asarray(col["q_hat"], dtype=float)
    q_true = np.asarray(col["q_true"], dtype=float)
    ids = np.unique(pid)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(ids), figsize=(3.2 * len(ids), 3.2), squeeze=False)
        for ax, i in zip(axes[0], ids):
            sel = pid == i
            for a in np.unique(alpha):
                ax.hist(q_hat[sel & (alpha == a)], bins=30, histtype="step", label=f"alpha={a:g}")
            ax.axvline(q_true[sel][0], color="k", lw=1)
            ax.set_title(f"prosumer {i}")
            ax.set_xlabel("inferred net demand")
        axes[0][0].set_ylabel("count")
        axes[0][-1].legend(fontsize=8)
        return [_save(fig, out / "attack_hist.png")]


def plot_calibrate(result: ExperimentResult, out: Path) -> list[Path]:
    col = _columns(result.tables["calibrate_curves"])
    panel = np.asarray(col["panel"])
    eps = np.asarray(col["epsilon_target"], dtype=float)
    w = np.asarray(col["alpha_min_wireless"], dtype=float)
    p = np.asarray(col["alpha_min_perfect"], dtype=float)
    nr = np.asarray(col["Nr"], dtype=int)
    snr = np.asarray(col["snr_db"], dtype=float)
    with plt.rc_context(STYLE):
        fig, (top, bottom) = plt.subplots(2, 1, figsize=(6.4, 6.4), sharex=True)
        for ax, name, key, unit in ((top, "snr", snr, "dB"), (bottom, "nr", nr, "antennas")):
            sel = panel == name
            for v in np.unique(key[sel]):
                s = sel & (key == v)
                ax.plot(eps[s], w[s], label=f"wireless, {v:g} {unit}")
            first = sel & (key == key[sel][0])
            ax.plot(eps[first], p[first], "k--", lw=0.8, label="noiseless channel")
            ax.set_ylabel("alpha_min")
            ax.legend(fontsize=8)
        bottom.set_xlabel("privacy target epsilon")
        return [_save(fig, out / "calibrate_curves.png")]


def plot_run(result: ExperimentResult, out: Path) -> list[Path]:
    col = _columns(result.tables["run_trajectories"])
    alpha = np.asarray(col["alpha"], dtype=float)
    it = np.asarray(col["iter"], dtype=int)
    mean = np.asarray(col["mean_lambda"], dtype=float)
    lo = np.asarray(col["ci_low"], dtype=float)
    hi = np.asarray(col["ci_high"], dtype=float)
    lam_star = result.documents["run_summary"]["lambda_star"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for a in np.unique(alpha):
            s = alpha == a
            (line,) = ax.plot(it[s], mean[s], label=f"alpha={a:g}")
            ax.fill_between(it[s], lo[s], hi[s], color=line.get_color(), alpha=0.2)
        ax.axhline(lam_star, color="k", ls=":", lw=1, label="equilibrium")
        ax.set_xlabel("iteration")
        ax.set_ylabel("clearing price")
        ax.legend(fontsize=8)
        return [_save(fig, out / "run_price.png")]


def plot_asweep(result: ExperimentResult, out: Path) -> list[Path]:
    col = _columns(result.tables["asweep"])
    a = np.asarray(col["a"], dtype=float)
    mse = np.asarray(col["empirical_log10_mse"], dtype=float)
    bound = np.asarray(col["log10_mse_bound"], dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(a, mse, "o-", label="empirical")
        ok = np.isfinite(bound)
        ax.plot(a[ok], bound[ok], "--", label="bound")
        ax.axvline(result.documents["asweep_summary"]["threshold"], color="k", ls=":",
                   label="threshold")
        ax.set_xlabel("market sensitivity a")
        ax.set_ylabel("log10 MSE")
        ax.legend(fontsize=8)
        return [_save(fig, out / "asweep_mse.png")]


def plot_compare(result: ExperimentResult, out: Path) -> list[Path]:
    col = _columns(result.tables["compare"])
    names = list(col["scenario"])
    gain = np.asarray(col["gain"], dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(range(len(names)), gain)
        ax.axhline(1.0, color="k", lw=0.8)
        ax.set_xticks(range(len(names)), names, rotation=30, ha="right")
        ax.set_ylabel("privacy gain")
        return [_save(fig, out / "compare_gain.png")]


PLOTTERS = {
    "attack": plot_attack,
    "calibrate": plot_calibrate,
    "run": plot_run,
    "asweep": plot_asweep,
    "compare": plot_compare,
}


def render(result: ExperimentResult, out) -> list[Path]:
    return PLOTTERS[result.command](result, Path(out))
