"""Deterministic SVG figures: score boxplots, median heatmaps, trajectories.

Every renderer writes SVG with a fixed hash salt and, in deterministic
mode, no creation date, so re-running a report reproduces the files
byte for byte. The manifest hash rides along in the SVG description
metadata; the numbers behind each figure are emitted separately as CSV
by the report module.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # noqa: E402 - select the headless backend before pyplot
import matplotlib.pyplot as plt
import numpy as np

from .engine import ForecastRecord
from .lifetables import TimeSeries
from .stats import GroupedMedians

_HASH_SALT = "mortbench"

BOXPLOT_WHISKER = 1.5


def _save(fig, path: str | Path, manifest_hash: str | None, deterministic: bool) -> Path:
    path = Path(path)
    metadata: dict[str, object] = {}
    if manifest_hash is not None:
        metadata["Description"] = f"manifest={manifest_hash}"
    if deterministic:
        metadata["Date"] = None
    with plt.rc_context({"svg.hashsalt": _HASH_SALT}):
        fig.savefig(path, format="svg", metadata=metadata)
    plt.close(fig)
    return path


def boxplot_by_method(
    scores: Mapping[str, Sequence[float]],
    path: str | Path,
    manifest_hash: str | None = None,
    deterministic: bool = True,
) -> Path:
    """Render one box per method, best median leftmost, 1.5 IQR whiskers."""
    if not scores:
        raise ValueError("no scores to plot")
    methods = sorted(scores, key=lambda m: (float(np.median(scores[m])), m))
    fig, ax = plt.subplots(figsize=(1.4 + 1.1 * len(methods), 4.8))
    ax.boxplot(
        [np.asarray(scores[m], dtype=float) for m in methods],
        tick_labels=methods,
        whis=BOXPLOT_WHISKER,
    )
    ax.set_ylabel("SMAPE (%)")
    ax.tick_params(axis="x", rotation=45)
    for label in ax.get_xticklabels():
        label.set_horizontalalignment("right")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    return _save(fig, path, manifest_hash, deterministic)


def heatmap_grouped(
    grouped: GroupedMedians,
    path: str | Path,
    manifest_hash: str | None = None,
    deterministic: bool = True,
) -> Path:
    """Render the method x group median grid; darker cells are larger."""
    methods = sorted({m for m, _ in grouped.medians})
    if not methods:
        raise ValueError("no grouped medians to plot")
    groups = list(grouped.groups)
    grid = np.full((len(methods), len(groups)), np.nan)
    for i, method in enumerate(methods):
        for j, group in enumerate(groups):
            if (method, group) in grouped.medians:
                grid[i, j] = grouped.medians[(method, group)]
    fig, ax = plt.subplots(
        figsize=(1.8 + 1.1 * len(groups), 1.2 + 0.5 * len(methods))
    )
    masked = np.ma.masked_invalid(grid)
    cmap = plt.get_cmap("Greys").copy()
    cmap.set_bad("white")
    image = ax.imshow(masked, cmap=cmap, aspect="auto")
    ax.set_xticks(range(len(groups)), groups)
    ax.set_yticks(range(len(methods)), methods)
    ax.tick_params(axis="x", rotation=30)
    span = float(masked.max() - masked.min()) if masked.count() else 1.0
    threshold = float(masked.min()) + 0.6 * span
    for i in range(len(methods)):
        for j in range(len(groups)):
            if not np.isnan(grid[i, j]):
                dark = grid[i, j] > threshold
                ax.text(
                    j,
                    i,
                    f"{grid[i, j]:.1f}",
                    ha="center",
                    va="center",
                    color="white" if dark else "black",
                    fontsize=8,
                )
    fig.colorbar(image, ax=ax, label="median SMAPE")
    ax.set_title(f"median SMAPE by {grouped.grouping}")
    fig.tight_layout()
    return _save(fig, path, manifest_hash, deterministic)


def trajectory_figure(
    history: Mapping[int, TimeSeries],
    validation: Mapping[tuple[int, str], ForecastRecord],
    future: Mapping[tuple[int, str], ForecastRecord],
    country: str,
    path: str | Path,
    manifest_hash: str | None = None,
    deterministic: bool = True,
) -> Path:
    """One log-scale panel per age: observed series plus forecast overlays.

    Validation forecasts are drawn solid over the held-out years,
    future forecasts dashed past the end of the observed series.
    """
    ages = sorted(history)
    if not ages:
        raise ValueError("no ages to plot")
    methods = sorted({m for _, m in validation} | {m for _, m in future})
    cycle = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    colors = {m: cycle[i % len(cycle)] for i, m in enumerate(methods)}
    fig, axes = plt.subplots(
        1, len(ages), figsize=(4.2 * len(ages), 4.0), squeeze=False, sharex=False
    )
    for ax, age in zip(axes[0], ages):
        series = history[age]
        ax.plot(series.years, series.values, color="black", lw=1.4, label="observed")
        for (rec_age, method), rec in sorted(validation.items()):
            if rec_age != age:
                continue
            years = range(rec.start_year, rec.start_year + rec.horizon)
            ax.plot(years, rec.predicted, color=colors[method], lw=1.1, label=method)
        for (rec_age, method), rec in sorted(future.items()):
            if rec_age != age:
                continue
            years = range(rec.start_year, rec.start_year + rec.horizon)
            # join the dashed future line to the last observation
            ax.plot(
                [series.end_year, *years],
                [series.values[-1], *rec.predicted],
                color=colors[method],
                lw=1.1,
                ls="--",
            )
        ax.set_yscale("log")
        ax.set_title(f"{country} age {age}")
        ax.set_xlabel("year")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("m(x,t)")
    handles, labels = axes[0][0].get_legend_handles_labels()
    unique = dict(zip(labels, handles))
    fig.legend(unique.values(), unique.keys(), loc="upper center", ncol=min(6, len(unique)))
    fig.tight_layout(rect=(0, 0, 1, 0.9))
    return _save(fig, path, manifest_hash, deterministic)
