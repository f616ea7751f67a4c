"""Forecast scoring and significance analysis.

SMAPE per forecast cell, median tables grouped by age band, income
class, or history-length quartile, per-method summary statistics, and
pairwise Wilcoxon signed-rank comparisons with a practical-significance
filter on the difference of median SMAPEs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .lifetables import SeriesKey

__all__ = [
    "EvalRecord",
    "SignificanceResult",
    "GroupedMedians",
    "SummaryRow",
    "smape",
    "wilcoxon_signed_rank",
    "significance_table",
    "grouped_medians",
    "summary_table",
    "evaluate_records",
    "AGE_BINS",
    "INCOME_CLASSES",
    "EXACT_ENUMERATION_LIMIT",
]

log = logging.getLogger(__name__)

# Age bands: label, inclusive lower bound, inclusive upper bound.
AGE_BINS = (
    ("Child", 0, 11),
    ("Adolescent", 12, 17),
    ("Adult", 18, 34),
    ("Middle-aged", 35, 59),
    ("Senior", 60, 110),
)

INCOME_CLASSES = ("Low", "LowerMiddle", "HigherMiddle", "High")

LENGTH_LABELS = ("Q1", "Q2", "Q3", "Q4")

# largest effective sample for which the exact sign-enumeration p-value
# is computed; beyond this the normal approximation takes over
EXACT_ENUMERATION_LIMIT = 25


@dataclass(frozen=True)
class EvalRecord:
    """One scored forecast cell."""

    method: str
    key: SeriesKey
    horizon: int
    smape: float


@dataclass(frozen=True)
class SignificanceResult:
    method_1: str
    method_2: str
    wilcoxon_p: float
    median_diff: float
    n_pairs: int


@dataclass(frozen=True)
class GroupedMedians:
    """Median SMAPE per (method, group) with cell counts.

    ``boundaries`` carries the computed quartile cut points for the
    length grouping and is empty otherwise.
    """

    grouping: str
    groups: tuple[str, ...]
    medians: dict[tuple[str, str], float]
    counts: dict[tuple[str, str], int]
    boundaries: tuple[float, ...] = ()


@dataclass(frozen=True)
class SummaryRow:
    method: str
    mean: float
    median: float
    std: float
    n: int


def smape(actual, predicted, factor: float = 100.0) -> float:
    """Symmetric mean absolute percentage error.

    (factor/n) * sum |F-A| / ((|A|+|F|)/2), in [0, 2*factor] for
    nonnegative inputs; terms where both values are zero contribute 0.
    """
    a = np.asarray(actual, dtype=float)
    f = np.asarray(predicted, dtype=float)
    if a.shape != f.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: actual {a.shape}, predicted {f.shape}")
    if a.size == 0:
        raise ValueError("smape needs at least one observation")
    denom = (np.abs(a) + np.abs(f)) / 2.0
    terms = np.zeros(a.size)
    nonzero = denom > 0.0
    terms[nonzero] = np.abs(f[nonzero] - a[nonzero]) / denom[nonzero]
    return float(factor * terms.mean())


def _average_ranks_doubled(values: np.ndarray) -> np.ndarray:
    """Twice the average ranks of |values|, always integral.

    Ranks of a tie run spanning 1-based positions a..b average to
    (a+b)/2, so doubling keeps everything in exact integer arithmetic.
    """
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks2 = np.empty(values.size, dtype=np.int64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks2[order[i : j + 1]] = (i + 1) + (j + 1)  # a+b with a,b 1-based
        i = j + 1
    return ranks2


def _exact_two_sided_p(w_plus2: int, ranks2: np.ndarray) -> float:
    """Enumerate the null distribution of 2*W+ over all sign patterns.

    Counting via subset-sum DP is equivalent to walking all 2^n sign
    assignments; counts stay below 2^n <= 2^25 so float64 is exact.
    """
    total = int(ranks2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in ranks2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    n_patterns = 2.0 ** len(ranks2)
    w2 = min(w_plus2, total - w_plus2)
    lower = counts[: w2 + 1].sum()
    upper = counts[total - w2 :].sum()
    return min(1.0, float((lower + upper) / n_patterns))


def _normal_two_sided_p(w_plus2: int, ranks2: np.ndarray) -> float:
    """Large-sample approximation with tie and continuity corrections."""
    n = len(ranks2)
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    # tie correction: subtract sum(t^3 - t)/48 over tie-group sizes
    _, tie_counts = np.unique(ranks2, return_counts=True)
    var -= float(np.sum(tie_counts.astype(float) ** 3 - tie_counts)) / 48.0
    if var <= 0.0:
        return 1.0
    w = min(w_plus2, int(ranks2.sum()) - w_plus2) / 2.0
    z = (w - mu + 0.5) / math.sqrt(var)
    p = 2.0 * 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
    return min(1.0, p)


def wilcoxon_signed_rank(diffs) -> float:
    """Two-sided Wilcoxon signed-rank p-value for paired differences.

    Zero differences are dropped; ties receive average ranks. The
    p-value is exact (full sign enumeration) up to 25 effective pairs
    and a tie/continuity-corrected normal approximation beyond. All
    differences zero gives p = 1.
    """
    d = np.asarray(diffs, dtype=float)
    if d.size < 1:
        raise ValueError("wilcoxon_signed_rank needs at least one difference")
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return 1.0
    ranks2 = _average_ranks_doubled(np.abs(d))
    w_plus2 = int(ranks2[d > 0].sum())
    if n <= EXACT_ENUMERATION_LIMIT:
        return _exact_two_sided_p(w_plus2, ranks2)
    return _normal_two_sided_p(w_plus2, ranks2)


def evaluate_records(forecast_records: Iterable, factor: float = 100.0) -> list[EvalRecord]:
    """Score backtest forecast records that carry actuals.

    Accepts any records with method/key/horizon/predicted/actual
    attributes; records without actuals (future mode or failures) are
    skipped.
    """
    out = []
    for rec in forecast_records:
        if getattr(rec, "actual", None) is None or rec.predicted is None:
            continue
        out.append(
            EvalRecord(
                method=rec.method,
                key=rec.key,
                horizon=rec.horizon,
                smape=smape(rec.actual, rec.predicted, factor),
            )
        )
    return out


def _cells_by_method(records: Sequence[EvalRecord]) -> dict[str, dict[tuple, float]]:
    table: dict[str, dict[tuple, float]] = {}
    for rec in records:
        cell = (rec.key.country_code, rec.key.age, rec.horizon)
        table.setdefault(rec.method, {})[cell] = rec.smape
    return table


def significance_table(
    records: Sequence[EvalRecord],
    alpha: float = 0.05,
    practical_threshold: float = 5.0,
) -> list[SignificanceResult]:
    """Ordered method pairs that are statistically and practically better.

    For every ordered pair the Wilcoxon test runs on the intersection
    of their scored cells; a pair is retained when p < alpha and the
    difference of median SMAPEs is at most -practical_threshold
    (method_1 better). Sorted by median difference, most negative
    first. Pass records for one horizon to reproduce per-horizon
    comparison tables; cells are keyed by (country, age, horizon).
    """
    by_method = _cells_by_method(records)
    methods = sorted(by_method)
    results = []
    for m1 in methods:
        for m2 in methods:
            if m1 == m2:
                continue
            shared = sorted(set(by_method[m1]) & set(by_method[m2]))
            if not shared:
                log.warning("no shared cells for %s vs %s; pair skipped", m1, m2)
                continue
            s1 = np.array([by_method[m1][c] for c in shared])
            s2 = np.array([by_method[m2][c] for c in shared])
            p = wilcoxon_signed_rank(s1 - s2)
            median_diff = float(np.median(s1) - np.median(s2))
            if p < alpha and median_diff <= -practical_threshold:
                results.append(
                    SignificanceResult(m1, m2, p, median_diff, len(shared))
                )
    results.sort(key=lambda r: (r.median_diff, r.method_1, r.method_2))
    return results


def _age_group(age: int) -> str:
    for label, lo, hi in AGE_BINS:
        if lo <= age <= hi:
            return label
    raise ValueError(f"age {age} outside 0..110")


def length_quartile_boundaries(lengths: Mapping[str, int]) -> tuple[float, float, float]:
    values = np.array(sorted(lengths.values()), dtype=float)
    q1, q2, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    return float(q1), float(q2), float(q3)


def _length_group(length: int, boundaries: tuple[float, float, float]) -> str:
    # lower-inclusive: a country sitting exactly on a cut point joins
    # the higher quartile
    idx = sum(length >= b for b in boundaries)
    return LENGTH_LABELS[idx]


def grouped_medians(
    records: Sequence[EvalRecord],
    grouping: str,
    income_map: Mapping[str, str] | None = None,
    series_lengths: Mapping[str, int] | None = None,
) -> GroupedMedians:
    """Median SMAPE per (method, group).

    grouping is one of "age", "income", "length", or "method" (a single
    "All" group per method). Income grouping requires income_map with a
    class for every country present; length grouping requires per-
    country history lengths, from which quartile cut points are
    computed (lower-inclusive) and reported in the result.
    """
    boundaries: tuple[float, ...] = ()
    if grouping == "age":
        groups = tuple(label for label, _, _ in AGE_BINS)
        assign = lambda rec: _age_group(rec.key.age)
    elif grouping == "income":
        if income_map is None:
            raise ValueError("income grouping requires income_map")
        missing = {r.key.country_code for r in records} - set(income_map)
        if missing:
            raise ValueError(f"countries missing from income_map: {sorted(missing)}")
        bad = set(income_map.values()) - set(INCOME_CLASSES)
        if bad:
            raise ValueError(f"unknown income classes: {sorted(bad)}")
        groups = INCOME_CLASSES
        assign = lambda rec: income_map[rec.key.country_code]
    elif grouping == "length":
        if series_lengths is None:
            raise ValueError("length grouping requires series_lengths")
        missing = {r.key.country_code for r in records} - set(series_lengths)
        if missing:
            raise ValueError(f"countries missing lengths: {sorted(missing)}")
        cut = length_quartile_boundaries(series_lengths)
        boundaries = cut
        groups = LENGTH_LABELS
        assign = lambda rec: _length_group(series_lengths[rec.key.country_code], cut)
    elif grouping == "method":
        groups = ("All",)
        assign = lambda rec: "All"
    else:
        raise ValueError(f"unknown grouping: {grouping!r}")

    buckets: dict[tuple[str, str], list[float]] = {}
    for rec in records:
        buckets.setdefault((rec.method, assign(rec)), []).append(rec.smape)

    medians = {cell: float(np.median(vals)) for cell, vals in buckets.items()}
    counts = {cell: len(vals) for cell, vals in buckets.items()}
    return GroupedMedians(grouping, groups, medians, counts, boundaries)


def summary_table(records: Sequence[EvalRecord]) -> list[SummaryRow]:
    """Per-method mean/median/sample-std of SMAPE, best median first.

    A single-record method reports std 0 (degenerate but well-defined
    for display). Median ties break by mean.
    """
    if not records:
        raise ValueError("summary_table needs at least one record")
    by_method: dict[str, list[float]] = {}
    for rec in records:
        by_method.setdefault(rec.method, []).append(rec.smape)
    rows = []
    for method, vals in by_method.items():
        arr = np.array(vals)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        rows.append(
            SummaryRow(
                method=method,
                mean=float(arr.mean()),
                median=float(np.median(arr)),
                std=std,
                n=arr.size,
            )
        )
    rows.sort(key=lambda r: (r.median, r.mean, r.method))
    return rows
