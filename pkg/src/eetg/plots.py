"""SVG plot emission: per-type return box plots and archive heatmaps.

SVG output is pinned deterministic (fixed hashsalt, no embedded date) so
identical inputs give identical bytes.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .qd import Archive
from .terrain import N_TYPES, N_VARIATIONS, EnvType

matplotlib.rcParams["svg.hashsalt"] = "eetg"

_TYPE_ORDER = [t.name for t in EnvType]


def _save_svg(fig, out_path) -> None:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def results_box_plot(rows: list[dict], out_path) -> list[str]:
    """Grouped box plot of per-cell mean returns, one group per env type.

    Returns warnings for variant/type groups that had no data.
    """
    # per (variant, type, cell): mean return over replications
    acc = defaultdict(list)
    for row in rows:
        key = (row["variant"], row["env_type"], row["variation_index"])
        val = row["return"]
        if np.isfinite(val):
            acc[key].append(val)
    cell_means = {k: float(np.mean(v)) for k, v in acc.items()}

    variants = sorted({k[0] for k in cell_means})
    warnings = []
    data = {}
    for variant in variants:
        per_type = []
        for tname in _TYPE_ORDER:
            vals = [cell_means[(variant, tname, i)] for i in range(N_VARIATIONS)
                    if (variant, tname, i) in cell_means]
            if not vals:
                warnings.append(f"no data for {variant} / {tname}; omitted")
            per_type.append(vals)
        data[variant] = per_type

    fig, ax = plt.subplots(figsize=(9, 4.5))
    n_var = max(len(variants), 1)
    width = 0.8 / n_var
    colors = plt.cm.tab10(np.linspace(0, 1, 10))
    for vi, variant in enumerate(variants):
        positions = [t + (vi - (n_var - 1) / 2) * width for t in range(N_TYPES)]
        series = data[variant]
        keep = [(p, s) for p, s in zip(positions, series) if s]
        if not keep:
            continue
        bp = ax.boxplot([s for _, s in keep], positions=[p for p, _ in keep],
                        widths=width * 0.85, patch_artist=True, showfliers=False)
        for box in bp["boxes"]:
            box.set_facecolor(colors[vi % 10])
            box.set_alpha(0.7)
        for med in bp["medians"]:
            med.set_color("black")
        ax.plot([], [], color=colors[vi % 10], label=variant, linewidth=6, alpha=0.7)
    ax.set_xticks(range(N_TYPES))
    ax.set_xticklabels(_TYPE_ORDER)
    ax.set_ylabel("total reward (per-cell mean)")
    ax.legend(fontsize=8)
    ax.set_title("returns by environment type")
    fig.tight_layout()
    _save_svg(fig, out_path)
    return warnings


def archive_heatmap(archive: Archive, out_path) -> None:
    """4 x 20 fitness grid; empty cells rendered as gaps."""
    grid = np.where(archive.filled, archive.fitness, np.nan)
    fig, ax = plt.subplots(figsize=(10, 2.8))
    masked = np.ma.masked_invalid(grid)
    cmap = plt.cm.viridis.copy()
    cmap.set_bad("lightgray")
    im = ax.imshow(masked, aspect="auto", cmap=cmap, interpolation="nearest")
    ax.set_yticks(range(N_TYPES))
    ax.set_yticklabels(_TYPE_ORDER)
    ax.set_xticks(range(0, N_VARIATIONS, 2))
    ax.set_xlabel("variation index")
    fig.colorbar(im, ax=ax, label="elite fitness")
    ax.set_title(f"archive (coverage {archive.coverage}/{N_TYPES * N_VARIATIONS})")
    fig.tight_layout()
    _save_svg(fig, out_path)
