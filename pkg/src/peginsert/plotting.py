"""Figures rendered to PNG next to the tidy CSVs they are drawn from."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_trace(trace: dict, path) -> Path:
    """Wrench and z positions against time for one attempt."""
    fig, (ax_f, ax_m, ax_z) = plt.subplots(3, 1, sharex=True, figsize=(7, 7))
    t = trace["t_s"]
    for ch in ("fx", "fy", "fz"):
        ax_f.plot(t, trace[ch], label=ch, lw=0.8)
    for ch in ("mx", "my", "mz"):
        ax_m.plot(t, trace[ch], label=ch, lw=0.8)
    ax_z.plot(t, trace["xr_z_mm"], label="reference", lw=0.8)
    ax_z.plot(t, trace["xc_z_mm"], label="commanded", lw=0.8)
    ax_z.plot(t, trace["x_z_mm"], label="actual", lw=0.8)
    ax_f.set_ylabel("force [N]")
    ax_m.set_ylabel("moment [N mm]")
    ax_z.set_ylabel("z [mm]")
    ax_z.set_xlabel("time [s]")
    for ax in (ax_f, ax_m, ax_z):
        ax.legend(loc="upper left", fontsize=8)
        ax.grid(alpha=0.3)
    ax_f.set_title("contact wrench convergence")
    return _save(fig, path)


def plot_wrench_vs_misalignment(d, wrench, path) -> Path:
    """Steady wrench channels against the misalignment components."""
    d = np.asarray(d)
    wrench = np.asarray(wrench)
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.8))
    axes[0].scatter(np.hypot(d[:, 0], d[:, 1]), wrench[:, 2], s=6)
    axes[0].set_xlabel("|d| [mm]")
    axes[0].set_ylabel("fz [N]")
    axes[1].scatter(d[:, 1], wrench[:, 3], s=6)
    axes[1].set_xlabel("dy [mm]")
    axes[1].set_ylabel("mx [N mm]")
    axes[2].scatter(d[:, 0], wrench[:, 4], s=6)
    axes[2].set_xlabel("dx [mm]")
    axes[2].set_ylabel("my [N mm]")
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.suptitle("steady contact wrench against misalignment")
    return _save(fig, path)


def plot_rmse_buckets(rows, path) -> Path:
    """Mean regression RMSE per |d| bucket with one-sigma bars over splits."""
    present = [r for r in rows if r["mean"] is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    centers = [0.5 * (r["lo_mm"] + r["hi_mm"]) for r in present]
    width = 0.8 * (rows[0]["hi_mm"] - rows[0]["lo_mm"]) if rows else 1.0
    ax.bar(centers, [r["mean"] for r in present], width=width,
           yerr=[r["std"] for r in present], capsize=4)
    ax.set_xlabel("|d| bucket centre [mm]")
    ax.set_ylabel("RMSE [mm]")
    ax.set_title("mean RMSE over train/test splits")
    ax.grid(alpha=0.3, axis="y")
    return _save(fig, path)


def plot_campaign(summary: dict, path) -> Path:
    """Outcome counts per controller and the attempts needed by successes."""
    fig, (ax_o, ax_h) = plt.subplots(1, 2, figsize=(11, 4))
    names = list(summary)
    outcomes = list(summary[names[0]]["outcomes"])
    x = np.arange(len(outcomes))
    w = 0.8 / len(names)
    for i, name in enumerate(names):
        ax_o.bar(x + i * w, [summary[name]["outcomes"][o] for o in outcomes], width=w, label=name)
    ax_o.set_xticks(x + w * (len(names) - 1) / 2, outcomes)
    ax_o.set_ylabel("episodes")
    ax_o.legend()
    hist = summary[names[0]]["attempt_histogram"]
    ax_h.bar([int(k) for k in hist], list(hist.values()))
    ax_h.set_xlabel(f"attempts to success ({names[0]})")
    ax_h.set_ylabel("episodes")
    for ax in (ax_o, ax_h):
        ax.grid(alpha=0.3, axis="y")
    return _save(fig, path)


def plot_sweep(rows, path) -> Path:
    """Measured against predicted steady force for each controller setting."""
    fig, (ax_f, ax_s) = plt.subplots(1, 2, figsize=(11, 4))
    pred = np.array([r["predicted_f_N"] for r in rows])
    meas = np.array([r["measured_f_N"] for r in rows])
    ax_f.scatter(pred, meas, s=14)
    lim = [0.0, float(np.nanmax(np.r_[pred, meas])) * 1.05 if len(rows) else 1.0]
    ax_f.plot(lim, lim, "k--", lw=0.8)
    ax_f.set_xlabel("predicted force [N]")
    ax_f.set_ylabel("measured force [N]")
    gammas = np.array([r["gamma"] for r in rows])
    ax_s.scatter(gammas, [r["steps_to_converge"] for r in rows], s=14)
    ax_s.set_xlabel("gamma")
    ax_s.set_ylabel("steps to steady state")
    for ax in (ax_f, ax_s):
        ax.grid(alpha=0.3)
    return _save(fig, path)
