"""Pooled sliding-window training set for globally trained forecasters.

Every (country, age) series contributes each 16+1-length window whose
target observation lies at least ``exclude_tail`` years before that
series' own last year, so a model trained on the pool never sees any
value that a 20-year backtest could use as validation. Windows carry
raw clipped rates.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .lifetables import (
    DEFAULT_CLIP_FLOOR,
    N_AGES,
    EmptySeriesError,
    MortalitySurface,
    SeriesKey,
    extract_series,
)

__all__ = [
    "TrainingWindow",
    "GlobalTrainingSet",
    "assemble_global_training",
    "DEFAULT_WINDOW",
    "DEFAULT_EXCLUDE_TAIL",
]

DEFAULT_WINDOW = 16
DEFAULT_EXCLUDE_TAIL = 20


@dataclass(frozen=True)
class TrainingWindow:
    """One supervised example: 16 consecutive rates and the next one.

    ``end_year`` is the calendar year of the target observation.
    """

    key: SeriesKey
    end_year: int
    inputs: np.ndarray
    target: float

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=float)
        object.__setattr__(self, "inputs", inputs)
        if inputs.ndim != 1:
            raise ValueError("window inputs must be one-dimensional")


@dataclass(frozen=True)
class GlobalTrainingSet:
    windows: tuple[TrainingWindow, ...]
    window_length: int = DEFAULT_WINDOW

    def __post_init__(self) -> None:
        for w in self.windows:
            if w.inputs.shape != (self.window_length,):
                raise ValueError(
                    f"window for {w.key} has length {w.inputs.size}, "
                    f"expected {self.window_length}"
                )

    def __len__(self) -> int:
        return len(self.windows)

    def canonical_order(self) -> list[int]:
        """Indices sorted by (country, age, end_year).

        Bootstrap sampling is keyed to this order, which makes trained
        models invariant to the order windows were assembled in.
        """
        return sorted(
            range(len(self.windows)),
            key=lambda i: (
                self.windows[i].key.country_code,
                self.windows[i].key.age,
                self.windows[i].end_year,
            ),
        )

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, y) in canonical order; X is [n, window_length]."""
        order = self.canonical_order()
        if not order:
            return np.zeros((0, self.window_length)), np.zeros(0)
        X = np.stack([self.windows[i].inputs for i in order])
        y = np.array([self.windows[i].target for i in order])
        return X, y

    def fingerprint(self) -> str:
        """Content hash over windows in canonical order."""
        h = hashlib.sha256()
        for i in self.canonical_order():
            w = self.windows[i]
            h.update(f"{w.key.country_code},{w.key.age},{w.end_year};".encode())
            h.update(np.ascontiguousarray(w.inputs, dtype=np.float64).tobytes())
            h.update(np.float64(w.target).tobytes())
        return h.hexdigest()

    def to_csv(self) -> str:
        """Delimited export consumed by trainable adapters.

        Columns: country, age, end_year, v1..v16 (chronological inputs)
        and target. Floats use repr for exact round-trips.
        """
        out = io.StringIO()
        cols = ",".join(f"v{j + 1}" for j in range(self.window_length))
        out.write(f"country,age,end_year,{cols},target\n")
        for i in self.canonical_order():
            w = self.windows[i]
            vals = ",".join(repr(float(v)) for v in w.inputs)
            out.write(
                f"{w.key.country_code},{w.key.age},{w.end_year},{vals},"
                f"{float(w.target)!r}\n"
            )
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GlobalTrainingSet":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty training-set CSV")
        header = lines[0].split(",")
        window_length = len(header) - 4
        if window_length < 1 or header[-1] != "target":
            raise ValueError(f"unrecognized training-set header: {lines[0]!r}")
        windows = []
        for ln in lines[1:]:
            parts = ln.split(",")
            key = SeriesKey(parts[0], int(parts[1]))
            inputs = np.array([float(v) for v in parts[3:-1]])
            windows.append(
                TrainingWindow(key, int(parts[2]), inputs, float(parts[-1]))
            )
        return cls(tuple(windows), window_length)


def windows_from_series(
    values: np.ndarray,
    key: SeriesKey,
    start_year: int,
    window: int,
    exclude_tail: int,
) -> list[TrainingWindow]:
    """Sliding windows whose targets avoid the series' final tail.

    The target at index j (year start_year + j) is usable when the
    series extends at least ``exclude_tail`` years beyond it.
    """
    n = values.shape[0]
    out = []
    for j in range(window, n - exclude_tail):
        out.append(
            TrainingWindow(
                key=key,
                end_year=start_year + j,
                inputs=values[j - window : j].copy(),
                target=float(values[j]),
            )
        )
    return out


def assemble_global_training(
    corpus: Sequence[MortalitySurface] | Iterable[MortalitySurface],
    window: int = DEFAULT_WINDOW,
    exclude_tail: int = DEFAULT_EXCLUDE_TAIL,
    clip_floor: float = DEFAULT_CLIP_FLOOR,
) -> GlobalTrainingSet:
    """Pool training windows from every (country, age) series.

    Series shorter than window + exclude_tail + 1 contribute nothing;
    ages with no observed cells are skipped.
    """
    surfaces = list(corpus)
    if not surfaces:
        raise ValueError("cannot assemble training set from an empty corpus")
    windows: list[TrainingWindow] = []
    for surface in surfaces:
        for age in range(N_AGES):
            try:
                series = extract_series(surface, age, clip_floor)
            except EmptySeriesError:
                continue
            windows.extend(
                windows_from_series(
                    series.values, series.key, series.start_year, window, exclude_tail
                )
            )
    return GlobalTrainingSet(tuple(windows), window)
