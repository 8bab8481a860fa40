"""Figures for the corpus scorecard and the throughput benchmark."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bench import BenchResult  # noqa: E402
from .corpus import CATEGORIES, Scorecard  # noqa: E402


def plot_scorecards(cards: dict[str, Scorecard], path: str | Path) -> Path:
    """Grouped bars of the classification counts, one group per config."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    n = max(len(cards), 1)
    width = 0.8 / n
    xs = range(len(CATEGORIES))
    for i, (label, card) in enumerate(cards.items()):
        acc = card.accuracy
        acc_text = "n/a" if acc is None else f"{float(acc):.2f}"
        ax.bar([x + i * width for x in xs], [card.counts[c] for c in CATEGORIES],
               width, label=f"{label} (A={acc_text})")
    ax.set_xticks([x + width * (n - 1) / 2 for x in xs])
    ax.set_xticklabels(CATEGORIES)
    ax.set_ylabel("cases")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_bench(results: Sequence[BenchResult], path: str | Path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4, 3.5))
    rates = [r.events_per_second or 0.0 for r in results]
    ax.bar([r.mode for r in results], [x / 1e6 for x in rates], color=["tab:gray", "tab:blue"][: len(results)])
    ax.set_ylabel("million events / s")
    if results:
        ax.set_title(f"{results[0].memory_events:,} memory events")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
