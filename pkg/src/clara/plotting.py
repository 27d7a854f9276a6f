"""Figure rendering for eval and sweep outputs. Headless backend, PNG files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

TEXT_METRICS = ("bleu1", "bleu2", "bleu3", "bleu4")


def render_sweep_figure(rows: Sequence[dict], path: str | Path) -> Path:
    """Line plot of consensus score against the number of anchor words."""
    counts = [int(r["anchor_count"]) for r in rows]
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.6))
    left.plot(counts, [r["cider"] for r in rows], marker="o", color="#1f6f8b")
    left.set_xlabel("anchor words")
    left.set_ylabel("consensus score")
    left.set_title("consensus vs anchors")
    left.set_xticks(counts)
    left.grid(alpha=0.3)
    for name in TEXT_METRICS:
        right.plot(counts, [r[name] for r in rows], marker=".", label=name)
    right.set_xlabel("anchor words")
    right.set_ylabel("n-gram precision score")
    right.set_title("overlap vs anchors")
    right.set_xticks(counts)
    right.legend(fontsize=8)
    right.grid(alpha=0.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def render_metrics_figure(metrics: dict, path: str | Path) -> Path:
    """Bar chart of the headline metrics for one evaluation run."""
    names = [k for k in ("bleu1", "bleu2", "bleu3", "bleu4", "phenotype_accuracy", "pr_auc")
             if k in metrics]
    values = [metrics[k] for k in names]
    fig, (left, right) = plt.subplots(
        1, 2, figsize=(8, 3.4), gridspec_kw={"width_ratios": [3, 1]}
    )
    left.bar(range(len(names)), values, color="#4c956c")
    left.set_xticks(range(len(names)), names, rotation=20, fontsize=8)
    left.set_ylim(0, 1.05)
    left.set_title("unit-range metrics")
    left.grid(axis="y", alpha=0.3)
    right.bar([0], [metrics.get("cider", 0.0)], color="#1f6f8b")
    right.set_xticks([0], ["cider"])
    right.set_ylim(0, 10.5)
    right.set_title("consensus")
    right.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def render_loss_figure(histories: dict[str, Sequence[float]], path: str | Path) -> Path:
    """Per-epoch training loss curves, one line per model."""
    fig, ax = plt.subplots(figsize=(6, 3.4))
    for name, series in histories.items():
        if series:
            ax.plot(range(1, len(series) + 1), series, marker=".", label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.set_title("training loss")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
