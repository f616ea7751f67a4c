"""Run configuration with JSON file overrides.

One flat key/value namespace shared by the CLI and the engine; every
knob has the benchmark default so an empty config file is valid.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

__all__ = ["RunConfig"]


@dataclass(frozen=True)
class RunConfig:
    """Benchmark-wide settings.

    lc_drift selects random-walk-with-drift (on) or plain random-walk
    (off) for the Lee-Carter trend; rf_log trains the forest on log
    rates instead of raw rates; lc_zero_adapter names the adapter that
    forecasts the Lee-Carter trend for the plugin-trend variant.
    """

    horizons: tuple[int, ...] = (5, 10, 20)
    seed: int = 0
    clip_floor: float = 1e-6
    window: int = 16
    exclude_tail: int = 20
    min_train: int = 10
    lc_drift: bool = True
    rf_log: bool = False
    rf_trees: int = 100
    rf_max_features: float = 1.0
    rf_min_samples_leaf: int = 1
    rf_bootstrap: bool = True
    smape_factor: float = 100.0
    alpha: float = 0.05
    practical_threshold: float = 5.0
    lc_zero_adapter: str = "CHRONOSLarge"

    def __post_init__(self) -> None:
        if not self.horizons or any(h < 1 for h in self.horizons):
            raise ValueError("horizons must be positive")
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        if self.clip_floor <= 0:
            raise ValueError("clip_floor must be positive")
        if self.window < 1 or self.exclude_tail < 0 or self.min_train < 1:
            raise ValueError("window/exclude_tail/min_train out of range")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    def with_overrides(self, **overrides) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return dataclasses.replace(self, **overrides)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        raw = json.loads(Path(path).read_text())
        if not isinstance(raw, dict):
            raise ValueError("config file must hold a JSON object")
        return cls().with_overrides(**raw)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["horizons"] = list(self.horizons)
        return out
