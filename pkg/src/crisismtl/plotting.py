"""Matplotlib figures written next to the report tables."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import TABLE_HEADERS, TABLE_ORDER, MetricReport  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _normalised(rep: MetricReport, field: str) -> float:
    v = getattr(rep, field)
    return (v + 1.0) / 2.0 if field.startswith("aw") else v


def plot_metric_bars(reports: Mapping[str, MetricReport], path) -> Path:
    """Grouped bars, one group per metric; AW columns shown mapped to [0, 1]."""
    path = Path(path)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(7.0, 3.2))
        n = len(reports)
        width = 0.8 / max(n, 1)
        x = np.arange(len(TABLE_ORDER))
        for i, (name, rep) in enumerate(reports.items()):
            ax.bar(x + (i - (n - 1) / 2) * width, [_normalised(rep, f) for f in TABLE_ORDER], width, label=name)
        labels = [TABLE_HEADERS[f] + ("*" if f.startswith("aw") else "") for f in TABLE_ORDER]
        ax.set_xticks(x, labels, rotation=30, ha="right")
        ax.set_ylim(0, 1)
        ax.set_ylabel("score (* = (AW+1)/2)")
        ax.legend(frameon=False, ncol=min(n, 4))
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_history(history_csv, path) -> Path:
    """Training loss and, when present, dev HarM against step."""
    path = Path(path)
    with open(history_csv, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    steps = [int(r["step"]) for r in rows]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        for key in ("L_total", "L_it", "L_pri"):
            ax.plot(steps, [float(r[key]) for r in rows], marker="o", ms=3, label=key)
        ax.set_xlabel("step")
        ax.set_ylabel("training loss")
        ax.set_yscale("log")
        harm = [(s, float(r["harm"])) for s, r in zip(steps, rows) if r["harm"]]
        if harm:
            ax2 = ax.twinx()
            ax2.spines["right"].set_visible(True)
            ax2.plot(*zip(*harm), color="k", ls="--", label="dev HarM")
            ax2.set_ylabel("dev HarM")
            ax2.set_ylim(0, 1)
            ax2.legend(frameon=False, loc="upper center")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
