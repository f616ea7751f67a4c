"""Run manifests and report artifacts: tables, figure data, figures.

Every CSV leads with a ``# manifest=<hash>`` comment and every SVG
carries the hash in its metadata, so each results file references
exactly one manifest. The hash covers config, corpus fingerprint,
methods, seed, and tool version, but not timestamps: re-running with
identical inputs reproduces byte-identical CSVs.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .engine import ForecastRecord
from .figures import boxplot_by_method, heatmap_grouped, trajectory_figure
from .lifetables import MortalitySurface, extract_series
from .stats import (
    EvalRecord,
    evaluate_records,
    grouped_medians,
    significance_table,
    summary_table,
)

log = logging.getLogger(__name__)

GROUPINGS = ("method", "age", "income", "length")
PLOT_KINDS = ("boxplot", "heatmap", "trajectories")


class ReportError(ValueError):
    """Report inputs are missing or inconsistent."""


def corpus_fingerprint(surfaces: Sequence[MortalitySurface]) -> str:
    """Order-independent sha256 over country codes, years, and rates."""
    digest = hashlib.sha256()
    for surface in sorted(surfaces, key=lambda s: s.country_code):
        digest.update(surface.country_code.encode())
        digest.update(np.asarray(surface.years, dtype=np.int64).tobytes())
        rates = surface.rates.copy()
        # canonicalize missing cells so the payload bytes are stable
        rates[surface.missing_mask] = np.nan
        digest.update(rates.astype(np.float64).tobytes())
    return digest.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """Identity of one run: what ran, on what data, with what settings."""

    corpus_fingerprint: str
    methods: tuple[str, ...] = ()
    config: dict = field(default_factory=lambda: RunConfig().to_dict())
    version: str = __version__
    created: str = ""

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    @property
    def hash(self) -> str:
        # timestamps excluded: identical inputs hash identically
        payload = {
            "corpus_fingerprint": self.corpus_fingerprint,
            "methods": list(self.methods),
            "config": self.config,
            "version": self.version,
        }
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def to_json(self) -> str:
        payload = {
            "hash": self.hash,
            "corpus_fingerprint": self.corpus_fingerprint,
            "methods": list(self.methods),
            "config": self.config,
            "version": self.version,
            "created": self.created,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        raw = json.loads(text)
        manifest = cls(
            corpus_fingerprint=raw["corpus_fingerprint"],
            methods=tuple(raw["methods"]),
            config=raw["config"],
            version=raw["version"],
            created=raw.get("created", ""),
        )
        if "hash" in raw and raw["hash"] != manifest.hash:
            raise ValueError("manifest hash does not match its contents")
        return manifest


def make_manifest(
    surfaces: Sequence[MortalitySurface],
    methods: Sequence[str] = (),
    config: RunConfig | None = None,
) -> RunManifest:
    return RunManifest(
        corpus_fingerprint=corpus_fingerprint(surfaces),
        methods=tuple(methods),
        config=(config or RunConfig()).to_dict(),
        created=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )


def _csv(lines: Sequence[str], manifest_hash: str) -> str:
    return "\n".join([f"# manifest={manifest_hash}", *lines]) + "\n"


def summary_csv(records: Sequence[EvalRecord], manifest_hash: str) -> str:
    """Per-method SMAPE summary, best median first."""
    lines = ["method,n,median,mean,std"]
    for row in summary_table(records):
        lines.append(
            f"{row.method},{row.n},{row.median!r},{row.mean!r},{row.std!r}"
        )
    return _csv(lines, manifest_hash)


def grouped_csv(
    records: Sequence[EvalRecord],
    grouping: str,
    manifest_hash: str,
    income_map: Mapping[str, str] | None = None,
    series_lengths: Mapping[str, int] | None = None,
) -> str:
    """Median SMAPE per (method, group) for one grouping dimension."""
    grouped = grouped_medians(records, grouping, income_map, series_lengths)
    lines = []
    if grouped.boundaries:
        cuts = ",".join(repr(float(b)) for b in grouped.boundaries)
        lines.append(f"# length_boundaries={cuts}")
    lines.append("method,group,median,n")
    for method in sorted({m for m, _ in grouped.medians}):
        for group in grouped.groups:
            cell = (method, group)
            if cell in grouped.medians:
                lines.append(
                    f"{method},{group},{grouped.medians[cell]!r},{grouped.counts[cell]}"
                )
    return _csv(lines, manifest_hash)


def significance_csv(
    records: Sequence[EvalRecord],
    manifest_hash: str,
    alpha: float = 0.05,
    practical_threshold: float = 5.0,
) -> str:
    """Per-horizon Wilcoxon comparisons that clear both significance bars."""
    methods = {r.method for r in records}
    if len(methods) < 2:
        log.warning("significance table needs at least two methods, got %d", len(methods))
    lines = ["horizon,method_1,method_2,wilcoxon_p,median_diff,n_pairs"]
    for horizon in sorted({r.horizon for r in records}):
        subset = [r for r in records if r.horizon == horizon]
        for res in significance_table(subset, alpha, practical_threshold):
            lines.append(
                f"{horizon},{res.method_1},{res.method_2},{res.wilcoxon_p!r},"
                f"{res.median_diff!r},{res.n_pairs}"
            )
    return _csv(lines, manifest_hash)


def scores_csv(records: Sequence[EvalRecord], manifest_hash: str) -> str:
    """Per-cell SMAPE scores, the data behind the method boxplot."""
    lines = ["method,country,age,horizon,smape"]
    ordered = sorted(
        records, key=lambda r: (r.method, r.key.country_code, r.key.age, r.horizon)
    )
    for rec in ordered:
        lines.append(
            f"{rec.method},{rec.key.country_code},{rec.key.age},{rec.horizon},"
            f"{rec.smape!r}"
        )
    return _csv(lines, manifest_hash)


def trajectory_csv(
    history,
    validation: Mapping[tuple[int, str], ForecastRecord],
    future: Mapping[tuple[int, str], ForecastRecord],
    country: str,
    manifest_hash: str,
) -> str:
    """The lines behind a trajectory figure, one row per plotted point."""
    lines = ["country,age,series,method,year,value"]
    for age in sorted(history):
        series = history[age]
        for year, value in zip(series.years, series.values):
            lines.append(f"{country},{age},observed,,{year},{float(value)!r}")
    for kind, table in (("validation", validation), ("future", future)):
        for (age, method), rec in sorted(table.items()):
            for step in range(rec.horizon):
                lines.append(
                    f"{country},{age},{kind},{method},{rec.start_year + step},"
                    f"{rec.predicted[step]!r}"
                )
    return _csv(lines, manifest_hash)


def _series_lengths(corpus: Sequence[MortalitySurface]) -> dict[str, int]:
    return {s.country_code: len(s.years) for s in corpus}


def _pick_records(
    records: Sequence[ForecastRecord], country: str, ages: Sequence[int], horizon: int
) -> dict[tuple[int, str], ForecastRecord]:
    out = {}
    for rec in records:
        if (
            rec.key.country_code == country
            and rec.key.age in ages
            and rec.horizon == horizon
        ):
            out[(rec.key.age, rec.method)] = rec
    return out


def generate_report(
    records: Sequence[ForecastRecord],
    out_dir: str | Path,
    manifest: RunManifest,
    config: RunConfig | None = None,
    by: Sequence[str] = ("method",),
    significance: bool = False,
    plots: Sequence[str] = (),
    corpus: Sequence[MortalitySurface] | None = None,
    income_map: Mapping[str, str] | None = None,
    future_records: Sequence[ForecastRecord] | None = None,
    country: str | None = None,
    ages: Sequence[int] = (),
    horizon: int | None = None,
    deterministic: bool = True,
) -> list[Path]:
    """Write the requested tables and figures; returns the paths written.

    Grouping by income needs an income_map, grouping by length and any
    trajectory plot need the corpus; missing inputs raise ReportError.
    """
    config = config or RunConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for grouping in by:
        if grouping not in GROUPINGS:
            raise ReportError(
                f"unknown grouping {grouping!r}; choose from {', '.join(GROUPINGS)}"
            )
    for kind in plots:
        if kind not in PLOT_KINDS:
            raise ReportError(
                f"unknown plot {kind!r}; choose from {', '.join(PLOT_KINDS)}"
            )
    scored = evaluate_records(records, config.smape_factor)
    if not scored:
        raise ReportError("no scorable records (future-mode records have no actuals)")
    mhash = manifest.hash
    written: list[Path] = []

    def emit(name: str, text: str) -> None:
        path = out_dir / name
        path.write_text(text)
        written.append(path)

    emit("manifest.json", manifest.to_json())
    emit("summary.csv", summary_csv(scored, mhash))
    for grouping in by:
        if grouping == "method":
            continue  # summary.csv is the per-method table
        if grouping == "income" and income_map is None:
            raise ReportError("grouping by income needs an income map")
        if grouping == "length" and corpus is None:
            raise ReportError("grouping by length needs the corpus")
        lengths = _series_lengths(corpus) if grouping == "length" else None
        emit(
            f"grouped_{grouping}.csv",
            grouped_csv(scored, grouping, mhash, income_map, lengths),
        )
    if significance:
        emit(
            "significance.csv",
            significance_csv(scored, mhash, config.alpha, config.practical_threshold),
        )
    if "boxplot" in plots:
        emit("scores.csv", scores_csv(scored, mhash))
        by_method: dict[str, list[float]] = {}
        for rec in scored:
            by_method.setdefault(rec.method, []).append(rec.smape)
        written.append(
            boxplot_by_method(
                by_method, out_dir / "boxplot_method.svg", mhash, deterministic
            )
        )
    if "heatmap" in plots:
        heat_by = [g for g in by if g != "method"] or ["age"]
        for grouping in heat_by:
            lengths = _series_lengths(corpus) if grouping == "length" else None
            grouped = grouped_medians(scored, grouping, income_map, lengths)
            written.append(
                heatmap_grouped(
                    grouped, out_dir / f"heatmap_{grouping}.svg", mhash, deterministic
                )
            )
    if "trajectories" in plots:
        if corpus is None or country is None or not ages:
            raise ReportError("trajectory plots need --corpus, --country, and --ages")
        surfaces = {s.country_code: s for s in corpus}
        if country not in surfaces:
            raise ReportError(f"country {country!r} not in the corpus")
        if horizon is None:
            horizon = max(r.horizon for r in records)
        history = {}
        for age in ages:
            history[age] = extract_series(surfaces[country], age, config.clip_floor)
        validation = _pick_records(records, country, ages, horizon)
        future = _pick_records(future_records or [], country, ages, horizon)
        emit(
            f"trajectory_{country}.csv",
            trajectory_csv(history, validation, future, country, mhash),
        )
        written.append(
            trajectory_figure(
                history,
                validation,
                future,
                country,
                out_dir / f"trajectory_{country}.svg",
                mhash,
                deterministic,
            )
        )
    return written
