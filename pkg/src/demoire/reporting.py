"""Report rendering: line-delimited logs, summary tables, and figures.

Every evaluation or ablation run writes three kinds of artifacts side by
side: a JSONL file with one row per frame, a CSV summary (mean and standard
deviation per metric, plus sequence-level scores), and PNG figures rendered
with the non-interactive matplotlib backend. Reports produced with fallback
backbones carry their non-comparability label in both the CSV and the
figures.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricsReport


def _finite(values):
    return [v for v in values if isinstance(v, (int, float)) and math.isfinite(v)]


def write_report(report: MetricsReport, out_dir, prefix: str = "eval") -> dict:
    """Write JSONL + CSV + figures for one evaluation; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}

    jsonl_path = out_dir / f"{prefix}_frames.jsonl"
    with open(jsonl_path, "w") as fh:
        for row in report.per_frame:
            fh.write(json.dumps(row) + "\n")
    paths["frames"] = jsonl_path

    agg = report.aggregate()
    csv_path = out_dir / f"{prefix}_summary.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "mean", "std"])
        for k, (mean, std) in sorted(agg.items()):
            writer.writerow([k, f"{mean:.6g}", f"{std:.6g}"])
        for k, v in sorted(report.per_sequence.items()):
            writer.writerow([k, f"{v:.6g}", ""])
        writer.writerow(["label", report.comparability_label(), ""])
    paths["summary"] = csv_path

    metric_keys = sorted({
        k for row in report.per_frame for k in row
        if k not in MetricsReport.NON_METRIC_KEYS and isinstance(row[k], (int, float))
    })
    if metric_keys and report.per_frame:
        fig, axes = plt.subplots(
            len(metric_keys), 1, figsize=(8, 2.2 * len(metric_keys)), squeeze=False
        )
        for ax, key in zip(axes[:, 0], metric_keys):
            vals = [row.get(key, float("nan")) for row in report.per_frame]
            vals = [v if math.isfinite(v) else float("nan") for v in vals]
            ax.plot(vals, marker=".", linewidth=1)
            ax.set_ylabel(key)
            ax.grid(alpha=0.3)
        axes[-1, 0].set_xlabel("frame")
        fig.suptitle(report.comparability_label(), fontsize=8)
        fig.tight_layout()
        per_frame_path = out_dir / f"{prefix}_per_frame.png"
        fig.savefig(per_frame_path, dpi=110)
        plt.close(fig)
        paths["per_frame_figure"] = per_frame_path

        if "psnr" in metric_keys:
            vals = _finite([row.get("psnr") for row in report.per_frame])
            if vals:
                fig, ax = plt.subplots(figsize=(6, 3.5))
                ax.hist(vals, bins=min(30, max(5, len(vals) // 2)), color="#4878cf")
                ax.set_xlabel("restored PSNR (dB)")
                ax.set_ylabel("frames")
                ax.grid(alpha=0.3)
                fig.tight_layout()
                hist_path = out_dir / f"{prefix}_psnr_hist.png"
                fig.savefig(hist_path, dpi=110)
                plt.close(fig)
                paths["psnr_histogram"] = hist_path
    return paths


def write_training_curves(log_rows, out_dir, prefix: str = "train") -> Path | None:
    """Loss-term and learning-rate traces over iterations."""
    if not log_rows:
        return None
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    iters = [r["iteration"] for r in log_rows]
    fig, (ax_loss, ax_lr) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for key in ("total", "spatial", "perceptual", "frequency"):
        if any(key in r for r in log_rows):
            ax_loss.plot(iters, [r.get(key, float("nan")) for r in log_rows], label=key)
    ax_loss.set_yscale("log")
    ax_loss.set_ylabel("loss")
    ax_loss.legend(fontsize=8)
    ax_loss.grid(alpha=0.3)
    ax_lr.plot(iters, [r["lr"] for r in log_rows], color="#b54a4a")
    ax_lr.set_ylabel("learning rate")
    ax_lr.set_xlabel("iteration")
    ax_lr.grid(alpha=0.3)
    fig.tight_layout()
    path = out_dir / f"{prefix}_curves.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def write_ablation_table(rows, out_dir) -> dict:
    """CSV table plus a bar chart of mean restored PSNR per variant row."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    csv_path = out_dir / "ablation_summary.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["model_id", "use_amp_phase", "use_fsm", "use_csfm", "use_pam",
             "psnr_mean", "input_psnr_mean"]
        )
        for row in sorted(rows, key=lambda r: r["model_id"]):
            sw = row["switches"]
            writer.writerow(
                [row["model_id"], sw["use_amp_phase"], sw["use_fsm"], sw["use_csfm"],
                 sw["use_pam"], f"{row['psnr_mean']:.4f}", f"{row['input_psnr_mean']:.4f}"]
            )
    paths["table"] = csv_path

    fig, ax = plt.subplots(figsize=(7, 4))
    ordered = sorted(rows, key=lambda r: r["model_id"])
    ids = [r["model_id"] for r in ordered]
    psnrs = [r["psnr_mean"] for r in ordered]
    ax.bar([str(i) for i in ids], psnrs, color="#4878cf")
    baseline = np.mean([r["input_psnr_mean"] for r in ordered])
    ax.axhline(baseline, color="#b54a4a", linestyle="--", label="contaminated input")
    ax.set_xlabel("variant")
    ax.set_ylabel("mean restored PSNR (dB)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig_path = out_dir / "ablation_psnr.png"
    fig.savefig(fig_path, dpi=110)
    plt.close(fig)
    paths["figure"] = fig_path
    return paths
