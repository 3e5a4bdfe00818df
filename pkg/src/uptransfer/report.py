"""Figures and tables written next to training logs and evaluation reports."""
import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
}


def read_log(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def smoothed(values, window=10) -> np.ndarray:
    """Trailing moving average; the first entries average what is available."""
    v = np.asarray(values, dtype=float)
    c = np.cumsum(np.insert(v, 0, 0.0))
    out = np.empty_like(v)
    for i in range(len(v)):
        lo = max(0, i + 1 - window)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out


def plot_loss_curves(rows, path, keys=("total_g", "total_d", "l1"), window=10) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(keys), 1, figsize=(6, 1.8 * len(keys)), sharex=True)
        axes = np.atleast_1d(axes)
        it = [r["iteration"] for r in rows]
        for ax, key in zip(axes, keys):
            vals = [r.get(key, math.nan) for r in rows]
            ax.plot(it, vals, lw=0.6, alpha=0.4, color="C0")
            if rows:
                ax.plot(it, smoothed(vals, window), lw=1.2, color="C0", label=f"{key} (mean of {window})")
            ax.set_ylabel(key)
            ax.legend(loc="upper right")
        axes[-1].set_xlabel("iteration")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_metric_series(report, path) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, (a, b, c) = plt.subplots(3, 1, figsize=(6, 5.4), sharex=True)
        n = len(report.l1_series)
        a.plot(range(n), report.l1_series, marker="o", ms=3)
        a.set_ylabel("L1")
        psnr = [v if math.isfinite(v) else np.nan for v in report.psnr_series]
        b.plot(range(n), psnr, marker="o", ms=3, color="C1")
        b.set_ylabel("PSNR (dB)")
        c.plot(range(1, n), report.flicker_series, marker="o", ms=3, color="C2")
        c.axhline(1.0, color="k", lw=0.6, ls="--")
        c.set_ylabel("flicker")
        c.set_xlabel("frame")
        fig.suptitle(f"mean L1 {report.mean_l1:.4f}   PSNR {report.psnr:.2f} dB   "
                     f"flicker {report.flicker_ratio:.3f}")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_frame_strip(generated, ground_truth, path, max_frames=8) -> Path:
    """Top row generated, bottom row ground truth."""
    path = Path(path)
    n = min(len(generated), max_frames)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, n, figsize=(1.2 * n, 2.6), squeeze=False)
        for i in range(n):
            for row, seq in enumerate((generated, ground_truth)):
                ax = axes[row, i]
                ax.imshow(np.clip(np.transpose(seq[i], (1, 2, 0)), 0, 1), interpolation="nearest")
                ax.set_xticks([])
                ax.set_yticks([])
                ax.grid(False)
            axes[0, i].set_title(str(i))
        axes[0, 0].set_ylabel("generated")
        axes[1, 0].set_ylabel("truth")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def write_series_csv(report, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "l1", "psnr", "flicker"])
        for i, (l1, p) in enumerate(zip(report.l1_series, report.psnr_series)):
            w.writerow([i, l1, p, report.flicker_series[i - 1] if i > 0 else ""])
    return path


def write_eval_report(report, out_dir, generated=None, ground_truth=None) -> list:
    """Every evaluation artifact under ``out_dir``; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [write_series_csv(report, out_dir / "metrics_series.csv"),
             plot_metric_series(report, out_dir / "metrics_series.png")]
    if generated is not None and ground_truth is not None:
        paths.append(plot_frame_strip(generated, ground_truth, out_dir / "frames.png"))
    return paths


def write_training_report(log_path, out_dir=None) -> list:
    log_path = Path(log_path)
    out_dir = Path(out_dir) if out_dir else log_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = read_log(log_path)
    keys = [k for k in ("total_g", "total_d", "l1") if rows and k in rows[0]]
    return [plot_loss_curves(rows, out_dir / "loss_curves.png", keys or ("total_g",))]
