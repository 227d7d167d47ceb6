"""Figures for selection reports."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def source_histogram_figure(panels: Mapping[str, Mapping[str, float]], path: str | Path,
                            title: str = "Selected data by source") -> Path:
    """Grouped horizontal bars of per-source fractions, one bar group per source.

    ``panels`` maps a label (e.g. "raw", "selected") to source fractions.
    """
    sources = sorted({s for fr in panels.values() for s in fr})
    labels = list(panels)
    height = 0.8 / max(len(labels), 1)
    fig, ax = plt.subplots(figsize=(7, 0.45 * len(sources) + 1.5))
    y = np.arange(len(sources))
    for j, label in enumerate(labels):
        vals = [panels[label].get(s, 0.0) for s in sources]
        ax.barh(y + j * height, vals, height=height, label=label)
    ax.set_yticks(y + height * (len(labels) - 1) / 2)
    ax.set_yticklabels(sources)
    ax.invert_yaxis()
    ax.set_xlabel("fraction of examples")
    ax.set_xlim(0, 1)
    ax.set_title(title)
    if len(labels) > 1:
        ax.legend(loc="upper left", bbox_to_anchor=(1.01, 1.0), frameon=False)
    fig.tight_layout()
    path = Path(path)
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
