"""Static figures written next to the CLI's tables (Agg backend, never interactive)."""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import ExperimentResult  # noqa: E402

_SAVE = {"dpi": 120, "metadata": {"Software": None}}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def plot_plan(result: ExperimentResult, path) -> None:
    """Redesigned thresholds against R (left) and the objective trade-off curve (right)."""
    by_user = defaultdict(list)
    trade = {}
    for row in result.rows:
        by_user[(row["group"], row["user"])].append((row["r"], row["alpha"]))
        trade[row["r"]] = (row["deviation"], row["weighted_sum"])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for (g, n), pts in sorted(by_user.items()):
        r, a = zip(*sorted(pts))
        ax1.plot(r, a, marker="o", label=f"group {g} user {n}")
    ax1.set_xlabel("R")
    ax1.set_ylabel("coverage threshold")
    ax1.legend(fontsize=7)
    rs = sorted(trade)
    ax2.plot([trade[r][0] for r in rs], [trade[r][1] for r in rs], marker="s")
    for r in rs:
        ax2.annotate(f"{r:g}", trade[r], fontsize=7)
    ax2.set_xlabel("squared deviation from existing plan")
    ax2.set_ylabel("weighted sum of thresholds")
    _save(fig, path)


def plot_comparison(result: ExperimentResult, path) -> None:
    """Mean transmit power per arm with one standard error."""
    arms = result.summary.get("arms", {})
    names = list(arms)
    means = [arms[a]["mean_total_power_dbm"] for a in names]
    errs = [np.nan_to_num(arms[a]["se_total_power_dbm"]) for a in names]
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.bar(range(len(names)), means, yerr=errs, capsize=4, color="tab:blue")
    ax.set_xticks(range(len(names)), [n.replace("_", "\n") for n in names], fontsize=8)
    ax.set_ylabel("mean total power (dBm)")
    finite = [m for m in means if np.isfinite(m)]
    if finite:
        ax.set_ylim(min(finite) - 3.0, max(finite) + 3.0)
    _save(fig, path)


def plot_mobility(result: ExperimentResult, path) -> None:
    """Average SINR loss and coverage of each moving user against the correlation."""
    curves = result.summary.get("moving_users", {})
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for label, by_corr in curves.items():
        corr = sorted(by_corr, key=float)
        ax1.plot([float(c) for c in corr], [by_corr[c]["mean_sinr_loss_db"] for c in corr], marker="o", label=label)
        ax2.plot([float(c) for c in corr], [by_corr[c]["mean_coverage"] for c in corr], marker="o", label=label)
    ax1.set_xlabel("correlation")
    ax1.set_ylabel("average SINR loss (dB)")
    ax2.set_xlabel("correlation")
    ax2.set_ylabel("EH coverage")
    ax1.legend(fontsize=7)
    _save(fig, path)


def plot_allocation(result: ExperimentResult, path) -> None:
    """Per-user transmit power and split factor."""
    labels = [f"g{r['group']}u{r['user']}" for r in result.rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.bar(labels, [r["p_dbm"] for r in result.rows])
    ax1.set_ylabel("beam power (dBm)")
    ax2.bar(labels, [r["rho"] for r in result.rows], color="tab:orange")
    ax2.set_yscale("log")
    ax2.set_ylabel("power-splitting factor")
    _save(fig, path)


def plot_beams(result: ExperimentResult, path, points: int = 721) -> None:
    """Array response of every beam over azimuth for a half-wavelength ULA."""
    beams = defaultdict(dict)
    for r in result.rows:
        beams[(r["group"], r["user"])][r["antenna"]] = complex(r["re"], r["im"])
    az = np.linspace(-np.pi / 2, np.pi / 2, points)
    fig, ax = plt.subplots(figsize=(7, 3.6))
    for (g, n), entries in sorted(beams.items()):
        nu = np.array([entries[a] for a in sorted(entries)])
        steer = np.exp(1j * np.pi * np.outer(np.sin(az), np.arange(nu.shape[0])))
        ax.plot(np.degrees(az), 10 * np.log10(np.abs(steer @ np.conj(nu)) ** 2 + 1e-12), label=f"g{g}u{n}")
    ax.set_xlabel("azimuth (deg)")
    ax.set_ylabel("array gain (dB)")
    ax.set_ylim(-30, 10)
    ax.legend(fontsize=7)
    _save(fig, path)


FIGURES = {
    "plan": plot_plan,
    "beamform": plot_beams,
    "allocate": plot_allocation,
    "simulate": plot_comparison,
    "compare": plot_comparison,
    "mobility": plot_mobility,
}
