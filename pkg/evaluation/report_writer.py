import csv
import logging
import os
from typing import Dict, List, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from errors import DataError

logger = logging.getLogger(__name__)

GROUP_COLORS = {"train": "#1f77b4", "new": "#d62728"}


def write_csv(path: str, rows: List[Dict[str, object]], fieldnames: Sequence[str] = None) -> str:
    if not rows and fieldnames is None:
        raise DataError(f"Nothing to write to {path}")
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    fieldnames = list(fieldnames or rows[0].keys())
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _format(row.get(key, "")) for key in fieldnames})
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def _format(value: object) -> object:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    return value


def scatter_figure(coordinates: np.ndarray, groups: Sequence[str], title: str = "Speaker embeddings"):
    """Two-component scatter, one color per group ("train" / "new")."""
    coordinates = np.asarray(coordinates, dtype=np.float64)
    if coordinates.ndim != 2 or coordinates.shape[1] < 2 or coordinates.shape[0] != len(groups):
        raise DataError(f"Scatter needs (n, 2) coordinates for {len(groups)} points, got {coordinates.shape}")
    fig, ax = plt.subplots(figsize=(6, 6))
    for group in sorted(set(groups)):
        mask = np.array([g == group for g in groups])
        ax.scatter(coordinates[mask, 0], coordinates[mask, 1], s=18, alpha=0.8,
                   color=GROUP_COLORS.get(group), label=f"{group} ({int(mask.sum())})")
    ax.set_xlabel("PC 1")
    ax.set_ylabel("PC 2")
    ax.set_title(title)
    ax.legend(loc="best", frameon=False)
    fig.tight_layout()
    return fig


def write_scatter_svg(path: str, coordinates: np.ndarray, groups: Sequence[str], title: str = "Speaker embeddings") -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    fig = scatter_figure(coordinates, groups, title)
    fig.savefig(path, format="svg")
    plt.close(fig)
    logger.info(f"Wrote scatter plot of {len(groups)} embeddings to {path}")
    return path
