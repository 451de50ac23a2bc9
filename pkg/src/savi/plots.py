"""Figure rendering for the report paths.

Each experiment that writes delimited output can render a companion PNG
next to it.  Everything uses the Agg backend; nothing here opens windows.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .adjust import AdjusterSpec, adjuster_eval

__all__ = [
    "plot_stopped_samples",
    "plot_power",
    "plot_trajectory",
    "plot_finance",
    "plot_forecast",
    "plot_adjusters",
]


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_stopped_samples(samples, mean, title, path) -> None:
    """Histogram of stopped evidence values with the mean marked."""
    fig, ax = plt.subplots(figsize=(6.5, 4))
    finite = [s for s in samples if math.isfinite(s)]
    ax.hist(finite, bins=60, color="tab:blue", alpha=0.75)
    ax.axvline(1.0, color="black", lw=1, ls=":", label="1")
    ax.axvline(mean, color="tab:red", lw=1.5, ls="--", label=f"mean = {mean:.3f}")
    ax.set_xlabel("stopped evidence")
    ax.set_ylabel("runs")
    ax.set_title(title)
    ax.legend()
    _save(fig, path)


def plot_power(report, path) -> None:
    """Rejection rate and mean rejection time against the deviation size."""
    deltas = [r.delta for r in report.rows]
    rates = [r.rejection_rate for r in report.rows]
    ses = [r.rate_se for r in report.rows]
    times = [r.mean_rejection_time for r in report.rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.errorbar(deltas, rates, yerr=[3 * s for s in ses], marker="o", capsize=3)
    ax1.axhline(report.alpha, color="gray", lw=1, ls=":")
    ax1.set_xlabel("delta")
    ax1.set_ylabel("rejection rate")
    ax1.set_ylim(-0.02, 1.02)
    ax2.plot(deltas, times, marker="o")
    ax2.set_xlabel("delta")
    ax2.set_ylabel("mean rejection time")
    fig.suptitle(f"{report.pipeline}  ({report.family}, alpha={report.alpha:g})", fontsize=9)
    _save(fig, path)


def plot_trajectory(report, path) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.plot(report.checkpoints, report.mean_e, marker=".", label="mean evidence")
    ax.axhline(1.0, color="gray", lw=1, ls=":")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("mean evidence")
    ax.set_title(f"{report.pipeline} under {report.generator}", fontsize=9)
    ax.legend()
    _save(fig, path)


def plot_finance(table, path) -> None:
    fig, ax = plt.subplots(figsize=(8, 4))
    log10 = 1.0 / math.log(10.0)
    ts = table.dates
    ax.plot(ts, [v * log10 for v in table.log_e_ui], lw=1, label="UI")
    ax.plot(ts, [v * log10 for v in table.log_e_conf_lifted], lw=1, label="adjusted conformal")
    ax.plot(ts, [v * log10 for v in table.log_e_combined], lw=1.6, label="combined")
    ax.axhline(0.0, color="gray", lw=1, ls=":")
    ax.set_ylabel("log10 evidence")
    ax.set_title("randomness of high-volatility days", fontsize=10)
    ax.legend()
    fig.autofmt_xdate()
    _save(fig, path)


def plot_forecast(table, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    log10 = 1.0 / math.log(10.0)
    ts = table.steps
    ax.plot(ts, [v * log10 for v in table.e_bar], label="adjusted mean (e-process)")
    if table.h >= 2:
        ax.plot(ts, [v * log10 for v in table.e_tilde], label="calibrated harmonic (e-process)")
        ax.plot(ts, [math.log10(v) if v > 0 else math.nan for v in table.m_tilde],
                ls="--", label="scaled mean (not an e-process)")
    ax.plot(ts, [math.log10(v) if v > 0 else math.nan for v in table.m_bar],
            ls="--", label="lagged mean (not an e-process)")
    ax.axhline(0.0, color="gray", lw=1, ls=":")
    ax.set_xlabel("t")
    ax.set_ylabel("log10 value")
    ax.set_title(f"forecast comparison, h={table.h}", fontsize=10)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_adjusters(specs: list[AdjusterSpec], path) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 4))
    es = np.logspace(0, 3, 400)
    for spec in specs:
        ys = [adjuster_eval(spec, float(e)).value for e in es]
        ax.plot(es, ys, label=spec.spec_string())
    ax.plot(es, es, color="gray", lw=1, ls=":", label="identity")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("evidence")
    ax.set_ylabel("adjusted evidence")
    ax.legend(fontsize=8)
    _save(fig, path)
