"""Matplotlib figures for run reports; files are written with the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# PNG metadata carries the matplotlib version by default; dropping it keeps files reproducible
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def _positive(y):
    y = np.asarray(y, dtype=float)
    return np.where(y > 0, y, np.nan)


def plot_trajectory(record, path) -> Path:
    """Energy, recorded norms and the dissipation integral against time."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    t = np.asarray(record.times)
    ax = axes[0]
    ax.semilogy(t, _positive(record.energy), label="energy")
    for (s, a), vals in record.hs_norms.items():
        ax.semilogy(t, _positive(vals), label=f"H^{s:g}, a={a:g}")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax = axes[1]
    ax.plot(t, record.dissipation_accum, label=f"int ||u||^2 H^3/2, a={record.gevrey_a:g}")
    if record.analyticity_radius is not None:
        ax.plot(t, record.analyticity_radius, label="analyticity radius")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_sweep(reports, path) -> Path:
    """Histogram of per-sample ratios for each swept inequality and parameter set."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for rep in reports:
        label = rep.inequality_id + " " + ",".join(f"{k}={v:g}" for k, v in rep.params.items()
                                                   if not isinstance(v, bool))
        ax.hist(rep.ratios, bins=20, histtype="step", label=label)
    ax.set_xlabel("LHS / RHS (interpolation: relative violation)")
    ax.set_ylabel("samples")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_picard(report, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    h = _positive(report.residual_history)
    ax.semilogy(np.arange(1, len(h) + 1), h, "o-")
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative residual")
    return _save(fig, path)


def plot_decay(study, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    rec = study.record
    t = np.asarray(rec.times)
    sel = t > 0
    for fit in study.fits:
        y = rec.norm_series(fit.s, 0.0)
        ax.loglog(t[sel], _positive(y[sel]), label=f"s={fit.s:g} slope {fit.fitted_exponent:.2f}")
    for x in study.window:
        ax.axvline(x, color="grey", lw=0.5)
    ax.set_xlabel("t")
    ax.set_ylabel("||u(t)||_{H^s}")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_radius(study, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(study.times, study.radii, "o-", label="radius")
    t = np.asarray(study.times)
    ax.plot(t, study.radii[0] + 0.5 * np.sqrt(study.nu * t), "--", label="r(0) + 0.5 sqrt(nu t)")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_stability(ledger, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(ledger.times, _positive(ledger.lhs), label="||w||^2 + (nu/8) int ||grad w||^2")
    ax.semilogy(ledger.times, _positive(ledger.gronwall_rhs), "--", label="Gronwall bound")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_blowup(monitor, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(monitor.times, monitor.dissipation_series)
    ax.set_xlabel("t")
    ax.set_ylabel("int ||u||^2 H^3/2")
    ax.set_title(monitor.verdict)
    return _save(fig, path)
