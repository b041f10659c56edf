"""Figures written next to the tabular reports."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_SAVE = {"dpi": 120, "metadata": {"Software": None}}


def _finish(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def loss_curve(losses: Sequence[float], path, title: str = "training loss") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(range(1, len(losses) + 1), losses, marker="o", ms=2, lw=1)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean token cross-entropy")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def slot_copy_by_count(rates: Mapping[str, Mapping[int, float | None]], path) -> Path:
    """Grouped bars: one group per source slot count, one bar per model."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    counts = sorted({int(k) for r in rates.values() for k in r})
    width = 0.8 / max(len(rates), 1)
    for j, (label, r) in enumerate(sorted(rates.items())):
        ys = [100 * (r.get(c, r.get(str(c))) or 0.0) for c in counts]
        ax.bar([c + (j - (len(rates) - 1) / 2) * width for c in counts], ys, width, label=label)
    ax.set_xticks(counts)
    ax.set_xlabel("slots in source")
    ax.set_ylabel("exact slot copy rate (%)")
    ax.set_ylim(0, 105)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def improvement_scatter(xs: Sequence[float], ys: Sequence[float], labels: Sequence[str], path,
                        xlabel: str = "unique delexicalized utterances") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.scatter(xs, ys, s=14)
    for x, y, lab in zip(xs, ys, labels):
        ax.annotate(lab, (x, y), fontsize=6, xytext=(2, 2), textcoords="offset points")
    ax.axhline(0, color="grey", lw=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("relative SEMER reduction")
    return _finish(fig, path)
