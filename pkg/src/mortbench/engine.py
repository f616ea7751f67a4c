"""Benchmark orchestration: splits, method dispatch, and run records.

The engine turns a corpus plus a method list into one ForecastRecord
per (method, series, horizon) cell. Per-series models see only the
training segment of each split; globally-trained models are fitted once
per run on the tail-excluded pool and reused across horizons. Isolated
cell failures become failure markers; a method failing on more than
half of its cells is excluded from the run with a method-level error.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bridge import AdapterHandle, AdapterUnavailableError, BridgeError
from .classical import auto_arima, fit_holt, forecast_arima, forecast_holt
from .config import RunConfig
from .forest import ForestConfig, ForestModel, forecast_forest, train_forest
from .leecarter import (
    TREND_AUTO_ARIMA,
    TREND_RW,
    TREND_RW_DRIFT,
    fit_lee_carter,
    forecast_lee_carter,
)
from .lifetables import (
    N_AGES,
    EmptySeriesError,
    MortalitySurface,
    SeriesKey,
    TimeSeries,
    extract_series,
)
from .training import GlobalTrainingSet, TrainingWindow, assemble_global_training

log = logging.getLogger(__name__)

DEFAULT_MIN_TRAIN = 10

BUILTIN_METHODS = (
    "ARIMA",
    "ExponentialSmoothing",
    "LeeCarter",
    "LeeCarterAUTO",
    "LeeCarterMULTI",
    "LeeCarterZERO",
    "RandomForest",
)

# Lee-Carter variants: method name -> (svd rank, trend method or None
# for the configurable classic/plugin trends resolved at run time)
_LC_RANKS = {
    "LeeCarter": 1,
    "LeeCarterAUTO": 1,
    "LeeCarterMULTI": 3,
    "LeeCarterZERO": 1,
}

TRAINING_EXPORT_NAME = "training_pool.csv"


class EngineError(RuntimeError):
    """Run cannot proceed: unknown method, missing adapter, bad inputs."""


class SeriesSkip(Exception):
    """Skip signal for an ineligible (series, horizon) cell."""

    def __init__(self, key: SeriesKey, horizon: int, reason: str):
        super().__init__(f"{key.country_code}/{key.age} h={horizon}: {reason}")
        self.key = key
        self.horizon = horizon
        self.reason = reason


@dataclass(frozen=True)
class BacktestSplit:
    """A train segment plus the validation window that follows it."""

    train: TimeSeries
    validation: TimeSeries

    def __post_init__(self) -> None:
        if self.validation.start_year != self.train.end_year + 1:
            raise ValueError("validation must immediately follow train")

    @property
    def split_year(self) -> int:
        return self.train.end_year


@dataclass(frozen=True)
class ForecastRecord:
    """One forecast cell; failure markers carry error instead of values."""

    method: str
    key: SeriesKey
    horizon: int
    start_year: int
    predicted: tuple[float, ...] | None
    actual: tuple[float, ...] | None
    error: str | None = None

    def __post_init__(self) -> None:
        if (self.predicted is None) == (self.error is None):
            raise ValueError("exactly one of predicted/error must be set")
        if self.predicted is not None and len(self.predicted) != self.horizon:
            raise ValueError(
                f"predicted length {len(self.predicted)} != horizon {self.horizon}"
            )
        if self.actual is not None and len(self.actual) != self.horizon:
            raise ValueError(
                f"actual length {len(self.actual)} != horizon {self.horizon}"
            )

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RunResult:
    """Everything a run produced, in deterministic order."""

    records: list[ForecastRecord]
    failures: list[ForecastRecord]
    skips: list[tuple[SeriesKey, int, str]]
    method_errors: dict[str, str] = field(default_factory=dict)
    training_tags: dict[str, str] = field(default_factory=dict)


def make_split(
    series: TimeSeries, horizon: int, min_train: int = DEFAULT_MIN_TRAIN
) -> BacktestSplit:
    """Split off the last ``horizon`` observations as validation.

    Raises SeriesSkip (recorded, not fatal) when the series is too
    short to leave more than ``min_train`` training points.
    """
    n = len(series.values)
    if n <= horizon + min_train:
        raise SeriesSkip(
            series.key,
            horizon,
            f"length {n} <= horizon {horizon} + min_train {min_train}",
        )
    train = TimeSeries(series.key, series.start_year, series.values[:-horizon])
    validation = TimeSeries(
        series.key, series.start_year + n - horizon, series.values[-horizon:]
    )
    return BacktestSplit(train, validation)


def resolve_methods(
    methods: Sequence[str],
    adapters: Mapping[str, AdapterHandle] | None,
    config: RunConfig,
) -> list[str]:
    """Validate the requested method names against built-ins and adapters."""
    if not methods:
        raise EngineError("no methods requested")
    adapter_names = set(adapters or {})
    valid = sorted(set(BUILTIN_METHODS) | adapter_names)
    resolved = []
    for name in methods:
        if name not in valid:
            raise EngineError(
                f"unknown method {name!r}; valid methods: {', '.join(valid)}"
            )
        if name == "LeeCarterZERO" and config.lc_zero_adapter not in adapter_names:
            raise EngineError(
                f"LeeCarterZERO needs adapter {config.lc_zero_adapter!r} "
                "in the registry"
            )
        if name in resolved:
            raise EngineError(f"duplicate method {name!r}")
        resolved.append(name)
    return resolved


@dataclass(frozen=True)
class _Cell:
    """One eligible (series, horizon) forecasting task."""

    series: TimeSeries
    horizon: int

    @property
    def key(self) -> SeriesKey:
        return self.series.key

    def train_values(self, future: bool) -> np.ndarray:
        if future:
            return self.series.values
        return self.series.values[: -self.horizon]

    def train_start_year(self) -> int:
        return self.series.start_year

    def forecast_start_year(self, future: bool) -> int:
        if future:
            return self.series.end_year + 1
        return self.series.end_year - self.horizon + 1

    def actual(self, future: bool) -> tuple[float, ...] | None:
        if future:
            return None
        return tuple(float(v) for v in self.series.values[-self.horizon:])


def _plan_cells(
    corpus: Sequence[MortalitySurface], config: RunConfig
) -> tuple[list[_Cell], list[tuple[SeriesKey, int, str]]]:
    # Eligibility: the extracted series must reach the surface's last
    # year (so every validation window covers the same recent period)
    # and leave more than min_train training points.
    cells: list[_Cell] = []
    skips: list[tuple[SeriesKey, int, str]] = []
    for surface in corpus:
        last_year = surface.years[-1]
        for age in range(N_AGES):
            try:
                series = extract_series(surface, age, config.clip_floor)
            except EmptySeriesError:
                continue
            for horizon in config.horizons:
                if series.end_year != last_year:
                    skips.append(
                        (
                            series.key,
                            horizon,
                            f"series ends {series.end_year}, corpus ends {last_year}",
                        )
                    )
                    continue
                try:
                    make_split(series, horizon, config.min_train)
                except SeriesSkip as skip:
                    skips.append((skip.key, skip.horizon, skip.reason))
                    continue
                cells.append(_Cell(series, horizon))
    return cells, skips


def _success(
    method: str, cell: _Cell, values: np.ndarray, config: RunConfig, future: bool
) -> ForecastRecord:
    clipped = np.maximum(np.asarray(values, dtype=float), config.clip_floor)
    return ForecastRecord(
        method=method,
        key=cell.key,
        horizon=cell.horizon,
        start_year=cell.forecast_start_year(future),
        predicted=tuple(float(v) for v in clipped),
        actual=cell.actual(future),
    )


def _failure(method: str, cell: _Cell, future: bool, message: str) -> ForecastRecord:
    return ForecastRecord(
        method=method,
        key=cell.key,
        horizon=cell.horizon,
        start_year=cell.forecast_start_year(future),
        predicted=None,
        actual=None,
        error=message,
    )


def _run_per_series(
    method: str, forecast_fn, cells: Sequence[_Cell], config: RunConfig, future: bool
) -> tuple[list[ForecastRecord], list[ForecastRecord]]:
    records, failures = [], []
    for cell in cells:
        train = cell.train_values(future)
        try:
            values = forecast_fn(train, cell.horizon)
        except Exception as exc:
            failures.append(_failure(method, cell, future, str(exc)))
            continue
        records.append(_success(method, cell, values, config, future))
    return records, failures


def _surface_head(surface: MortalitySurface, n_years: int) -> MortalitySurface:
    return MortalitySurface(
        surface.country_code,
        list(surface.years[:n_years]),
        surface.rates[:n_years].copy(),
        surface.missing_mask[:n_years].copy(),
    )


def _adapter_trend(handle: AdapterHandle, request_id: str, start_year: int):
    # Trend extension via the adapter: the component's k series goes
    # over the wire like any other series.
    def extend(k: np.ndarray, horizon: int) -> np.ndarray:
        outcome = handle.request_forecast(
            [
                {
                    "id": request_id,
                    "start_year": start_year,
                    "values": [float(v) for v in k],
                    "horizon": horizon,
                }
            ]
        )[0]
        if not outcome.ok:
            raise EngineError(f"trend adapter failed: {outcome.error}")
        return np.asarray(outcome.values, dtype=float)

    return extend


def _run_lee_carter(
    method: str,
    cells: Sequence[_Cell],
    corpus: Sequence[MortalitySurface],
    config: RunConfig,
    future: bool,
    adapters: Mapping[str, AdapterHandle],
) -> tuple[list[ForecastRecord], list[ForecastRecord]]:
    rank = _LC_RANKS[method]
    if method == "LeeCarter":
        trend = TREND_RW_DRIFT if config.lc_drift else TREND_RW
    else:
        trend = TREND_AUTO_ARIMA
    surfaces = {s.country_code: s for s in corpus}
    records, failures = [], []
    by_group: dict[tuple[str, int], list[_Cell]] = {}
    for cell in cells:
        by_group.setdefault((cell.key.country_code, cell.horizon), []).append(cell)
    for (country, horizon), group in sorted(by_group.items()):
        surface = surfaces[country]
        n_train = len(surface.years) if future else len(surface.years) - horizon
        try:
            window = _surface_head(surface, n_train)
            fit = fit_lee_carter(window, rank, config.clip_floor)
            if method == "LeeCarterZERO":
                handle = adapters[config.lc_zero_adapter]
                trend_fn = _adapter_trend(
                    handle, f"lcz:{country}:{horizon}", window.years[0]
                )
                matrix = forecast_lee_carter(fit, horizon, trend_fn)
            else:
                matrix = forecast_lee_carter(fit, horizon, trend)
        except Exception as exc:
            for cell in group:
                failures.append(_failure(method, cell, future, str(exc)))
            continue
        for cell in group:
            records.append(
                _success(method, cell, matrix[:, cell.key.age], config, future)
            )
    return records, failures


def _log_training_set(data: GlobalTrainingSet) -> GlobalTrainingSet:
    windows = tuple(
        TrainingWindow(w.key, w.end_year, np.log(w.inputs), math.log(w.target))
        for w in data.windows
    )
    return GlobalTrainingSet(windows, data.window_length)


def _forest_config(config: RunConfig) -> ForestConfig:
    return ForestConfig(
        n_trees=config.rf_trees,
        window=config.window,
        max_features=config.rf_max_features,
        min_samples_leaf=config.rf_min_samples_leaf,
        bootstrap=config.rf_bootstrap,
        seed=config.seed,
    )


def _run_forest(
    model: ForestModel, cells: Sequence[_Cell], config: RunConfig, future: bool
) -> tuple[list[ForecastRecord], list[ForecastRecord]]:
    records, failures = [], []
    for cell in cells:
        context = cell.train_values(future)
        try:
            if len(context) < config.window:
                raise ValueError(
                    f"training segment of {len(context)} < window {config.window}"
                )
            if config.rf_log:
                values = np.exp(forecast_forest(model, np.log(context), cell.horizon))
            else:
                values = forecast_forest(model, context, cell.horizon)
        except Exception as exc:
            failures.append(_failure("RandomForest", cell, future, str(exc)))
            continue
        records.append(_success("RandomForest", cell, values, config, future))
    return records, failures


def _run_plugin(
    method: str,
    handle: AdapterHandle,
    cells: Sequence[_Cell],
    config: RunConfig,
    future: bool,
    tag: str | None,
) -> tuple[list[ForecastRecord], list[ForecastRecord]]:
    records, failures = [], []
    indexed = {
        f"{method}:{c.key.country_code}:{c.key.age}:{c.horizon}": c for c in cells
    }
    ids = list(indexed)
    size = handle.spec.batch_size
    for lo in range(0, len(ids), size):
        chunk = ids[lo : lo + size]
        batch = []
        for rid in chunk:
            cell = indexed[rid]
            train = cell.train_values(future)
            batch.append(
                {
                    "id": rid,
                    "start_year": cell.train_start_year(),
                    "values": [float(v) for v in train],
                    "horizon": cell.horizon,
                }
            )
        try:
            outcomes = handle.request_forecast(batch, tag=tag)
        except (AdapterUnavailableError, BridgeError, ValueError) as exc:
            for rid in ids[lo:]:
                failures.append(_failure(method, indexed[rid], future, str(exc)))
            break
        for outcome in outcomes:
            cell = indexed[outcome.id]
            if outcome.ok:
                records.append(
                    _success(
                        method,
                        cell,
                        np.asarray(outcome.values, dtype=float),
                        config,
                        future,
                    )
                )
            else:
                failures.append(_failure(method, cell, future, outcome.error))
    return records, failures


def _needs_pool(methods: Sequence[str], adapters: Mapping[str, AdapterHandle]) -> bool:
    if "RandomForest" in methods:
        return True
    return any(
        m in adapters and adapters[m].supports_training for m in methods
    )


def _run(
    corpus: Sequence[MortalitySurface],
    methods: Sequence[str],
    config: RunConfig,
    adapters: Mapping[str, AdapterHandle] | None,
    export_dir: str | Path | None,
    future: bool,
) -> RunResult:
    adapters = dict(adapters or {})
    methods = resolve_methods(methods, adapters, config)
    corpus = sorted(corpus, key=lambda s: s.country_code)
    cells, skips = _plan_cells(corpus, config)
    for key, horizon, reason in skips:
        log.info("skip %s/%s h=%d: %s", key.country_code, key.age, horizon, reason)
    result = RunResult([], [], skips)

    # Serial global-training phase: pool assembly, forest fit, adapter
    # fine-tuning. Failures here exclude the method, not the run.
    pool: GlobalTrainingSet | None = None
    if cells and _needs_pool(methods, adapters):
        pool = assemble_global_training(
            corpus, config.window, config.exclude_tail, config.clip_floor
        )
    forest: ForestModel | None = None
    if "RandomForest" in methods and cells:
        try:
            data = _log_training_set(pool) if config.rf_log else pool
            forest = train_forest(data, _forest_config(config))
        except Exception as exc:
            result.method_errors["RandomForest"] = f"global training failed: {exc}"
    export_path: Path | None = None
    for method in methods:
        handle = adapters.get(method)
        if handle is None or not handle.supports_training or not cells:
            continue
        if export_path is None:
            base = Path(export_dir) if export_dir is not None else Path(".")
            base.mkdir(parents=True, exist_ok=True)
            export_path = base / TRAINING_EXPORT_NAME
            export_path.write_text(pool.to_csv())
        try:
            tag = handle.request_training(export_path, {"seed": config.seed})
        except BridgeError as exc:
            result.method_errors[method] = f"training failed: {exc}"
            continue
        result.training_tags[method] = tag

    for method in methods:
        if method in result.method_errors:
            continue
        if method == "ARIMA":
            recs, fails = _run_per_series(
                method,
                lambda train, h: forecast_arima(auto_arima(train), train, h),
                cells,
                config,
                future,
            )
        elif method == "ExponentialSmoothing":
            recs, fails = _run_per_series(
                method,
                lambda train, h: forecast_holt(fit_holt(train), h),
                cells,
                config,
                future,
            )
        elif method in _LC_RANKS:
            recs, fails = _run_lee_carter(
                method, cells, corpus, config, future, adapters
            )
        elif method == "RandomForest":
            recs, fails = _run_forest(forest, cells, config, future)
        else:
            recs, fails = _run_plugin(
                method,
                adapters[method],
                cells,
                config,
                future,
                result.training_tags.get(method),
            )
        total = len(recs) + len(fails)
        if total and 2 * len(fails) > total:
            result.method_errors[method] = (
                f"failed on {len(fails)}/{total} cells, method excluded"
            )
            log.warning("%s: %s", method, result.method_errors[method])
            result.failures.extend(fails)
            continue
        if fails:
            log.warning("%s: %d of %d cells failed", method, len(fails), total)
        result.records.extend(recs)
        result.failures.extend(fails)

    order = lambda r: (r.method, r.key.country_code, r.key.age, r.horizon)
    result.records.sort(key=order)
    result.failures.sort(key=order)
    return result


def run_backtest(
    corpus: Sequence[MortalitySurface],
    methods: Sequence[str],
    config: RunConfig,
    adapters: Mapping[str, AdapterHandle] | None = None,
    export_dir: str | Path | None = None,
) -> RunResult:
    """Forecast the held-out tail of every eligible series.

    One record per (method, eligible series, horizon); per-series fits
    see only the training segment, globally-trained methods only the
    tail-excluded pool. Predictions are clipped at the configured
    floor. Deterministic for a fixed config seed.
    """
    return _run(corpus, methods, config, adapters, export_dir, future=False)


def run_future(
    corpus: Sequence[MortalitySurface],
    methods: Sequence[str],
    config: RunConfig,
    adapters: Mapping[str, AdapterHandle] | None = None,
    export_dir: str | Path | None = None,
) -> RunResult:
    """Forecast past the end of every eligible series (no actuals)."""
    return _run(corpus, methods, config, adapters, export_dir, future=True)


RECORDS_CSV_COLUMNS = (
    "method",
    "country",
    "age",
    "horizon",
    "step",
    "year",
    "predicted",
    "actual",
)


def records_to_csv(records: Iterable[ForecastRecord], comment: str | None = None) -> str:
    """Serialize successful records, one row per forecast step.

    The actual column is empty for future-mode records; floats use
    repr so parsing the CSV reproduces them bit-exactly.
    """
    lines = []
    if comment is not None:
        lines.append(f"# {comment}")
    lines.append(",".join(RECORDS_CSV_COLUMNS))
    for rec in records:
        if rec.predicted is None:
            raise ValueError("failure markers do not belong in the records CSV")
        for step in range(rec.horizon):
            actual = "" if rec.actual is None else repr(float(rec.actual[step]))
            lines.append(
                f"{rec.method},{rec.key.country_code},{rec.key.age},{rec.horizon},"
                f"{step + 1},{rec.start_year + step},"
                f"{float(rec.predicted[step])!r},{actual}"
            )
    return "\n".join(lines) + "\n"


def records_from_csv(text: str) -> list[ForecastRecord]:
    """Parse a records CSV back into ForecastRecord objects."""
    rows = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line != ",".join(RECORDS_CSV_COLUMNS):
                raise ValueError(f"line {lineno}: unexpected header {line!r}")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != len(RECORDS_CSV_COLUMNS):
            raise ValueError(f"line {lineno}: expected {len(RECORDS_CSV_COLUMNS)} fields")
        rows.append((lineno, parts))
    if not header_seen:
        raise ValueError("records CSV has no header")
    grouped: dict[tuple, dict[int, tuple[int, float, float | None]]] = {}
    for lineno, parts in rows:
        method, country, age, horizon, step, year, predicted, actual = parts
        cell = (method, country, int(age), int(horizon))
        steps = grouped.setdefault(cell, {})
        idx = int(step)
        if idx in steps:
            raise ValueError(f"line {lineno}: duplicate step {idx} for {cell}")
        steps[idx] = (
            int(year),
            float(predicted),
            None if actual == "" else float(actual),
        )
    records = []
    for (method, country, age, horizon), steps in grouped.items():
        if sorted(steps) != list(range(1, horizon + 1)):
            raise ValueError(
                f"{method} {country}/{age} h={horizon}: steps {sorted(steps)} "
                f"are not 1..{horizon}"
            )
        years = [steps[i][0] for i in range(1, horizon + 1)]
        if years != list(range(years[0], years[0] + horizon)):
            raise ValueError(f"{method} {country}/{age}: years not consecutive")
        actuals = [steps[i][2] for i in range(1, horizon + 1)]
        has_actual = [a is not None for a in actuals]
        if any(has_actual) and not all(has_actual):
            raise ValueError(f"{method} {country}/{age}: mixed actual/empty cells")
        records.append(
            ForecastRecord(
                method=method,
                key=SeriesKey(country, age),
                horizon=horizon,
                start_year=years[0],
                predicted=tuple(steps[i][1] for i in range(1, horizon + 1)),
                actual=tuple(actuals) if all(has_actual) else None,
            )
        )
    records.sort(key=lambda r: (r.method, r.key.country_code, r.key.age, r.horizon))
    return records


FAILURES_CSV_COLUMNS = ("method", "country", "age", "horizon", "error")


def failures_to_csv(
    failures: Iterable[ForecastRecord], comment: str | None = None
) -> str:
    """Serialize failure markers; error text is quoted CSV."""
    import csv
    import io

    buf = io.StringIO()
    if comment is not None:
        buf.write(f"# {comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FAILURES_CSV_COLUMNS)
    for rec in failures:
        writer.writerow(
            [rec.method, rec.key.country_code, rec.key.age, rec.horizon, rec.error]
        )
    return buf.getvalue()
