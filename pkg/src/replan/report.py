"""Matplotlib figures rendered alongside the JSONL/JSON outputs."""

import json
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .rewards import SchemeReport

# strip volatile metadata so identical runs give identical image bytes
_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if len(v) < window or window <= 1:
        return v
    kernel = np.ones(window) / window
    return np.convolve(v, kernel, mode="valid")


def training_curve(records: Sequence[dict], out_path, window: int = 50) -> None:
    """Episode total reward with a moving average overlay."""
    episodes = [r["episode"] for r in records]
    totals = [r["total_reward"] for r in records]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(episodes, totals, color="#9ecae1", linewidth=0.8, label="episode reward")
    smooth = moving_average(totals, window)
    if len(smooth) > 1 and len(smooth) < len(totals):
        ax.plot(episodes[window - 1:], smooth, color="#08519c", linewidth=1.8,
                label=f"moving average ({window})")
    ax.set_xlabel("episode")
    ax.set_ylabel("total reward")
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)


def training_curve_from_log(log_path, out_path, window: int = 50) -> None:
    records = [
        json.loads(line)
        for line in Path(log_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    training_curve(records, out_path, window=window)


def metric_bars(report: SchemeReport, out_path) -> None:
    """Bar chart of the five score dimensions."""
    names = ["service", "ecology", "economy", "equity", "satisfaction"]
    values = [report.service, report.ecology, report.economy, report.equity, report.satisfaction]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(names, values, color="#4292c6")
    ax.set_ylim(0, 1)
    ax.set_ylabel("score")
    ax.set_title(f"objective {report.obj_score:.4f} / total {report.total:.4f}")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)


def baseline_box(results: Sequence[dict], out_path) -> None:
    """Total-score distribution per baseline method."""
    methods = sorted({r["method"] for r in results})
    data = [[r["total"] for r in results if r["method"] == m] for m in methods]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.boxplot(data, labels=methods)
    ax.set_ylabel("total score")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)
