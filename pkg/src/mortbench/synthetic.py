"""Seeded synthetic mortality corpus for tests and demos.

Three countries, 111 ages, 60 years each, generated from a Lee-Carter
surface: a smooth age profile with an infant-mortality spike and an
accident hump, positive loadings summing to one, and a declining
period index with country-specific drift, plus lognormal observation
noise. Deterministic for a given seed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .lifetables import MortalitySurface, N_AGES, format_life_table

__all__ = ["synthetic_corpus", "write_synthetic_hmd_dir", "SYNTHETIC_INCOME_MAP"]

SYNTHETIC_INCOME_MAP = {"SYA": "High", "SYB": "HigherMiddle", "SYC": "Low"}

_COUNTRIES = (
    # code, first year, k drift per year, noise scale
    ("SYA", 1950, -0.60, 0.03),
    ("SYB", 1955, -0.45, 0.05),
    ("SYC", 1960, -0.30, 0.08),
)


def _age_profile() -> np.ndarray:
    """Schematic log-mortality age profile (infant spike, hump, Gompertz)."""
    x = np.arange(N_AGES, dtype=float)
    base = -9.5 + 0.082 * x  # old-age exponential increase
    infant = 3.5 * np.exp(-x / 1.5)
    hump = 1.1 * np.exp(-0.5 * ((x - 20.0) / 6.0) ** 2)
    return base + infant + hump


def _loadings(rng: np.random.Generator) -> np.ndarray:
    x = np.arange(N_AGES, dtype=float)
    raw = 0.4 + np.exp(-0.5 * ((x - 10.0) / 25.0) ** 2) + 0.05 * rng.uniform(
        size=N_AGES
    )
    return raw / raw.sum()


def synthetic_corpus(seed: int = 0, n_years: int = 60) -> list[MortalitySurface]:
    rng = np.random.default_rng([seed, 1914])
    a = _age_profile()
    surfaces = []
    for code, first_year, drift, noise in _COUNTRIES:
        b = _loadings(rng)
        t = np.arange(n_years, dtype=float)
        k = drift * (t - (n_years - 1) / 2.0) + rng.normal(0.0, 0.4, n_years)
        k -= k.mean()
        log_rates = a + np.outer(k, b) + rng.normal(0.0, noise, (n_years, N_AGES))
        rates = np.exp(log_rates)
        years = list(range(first_year, first_year + n_years))
        surfaces.append(
            MortalitySurface(code, years, rates, np.zeros_like(rates, dtype=bool))
        )
    return surfaces


def write_synthetic_hmd_dir(directory: str | Path, seed: int = 0) -> list[Path]:
    """Write the corpus as one life-table file per country plus the
    income-class map the report stage needs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for surface in synthetic_corpus(seed):
        path = directory / f"{surface.country_code}.Mx_1x1.txt"
        title = f"{surface.country_code}, synthetic death rates (period 1x1)"
        path.write_text(format_life_table(surface, title=title))
        written.append(path)
    income_path = directory / "income_map.json"
    income_path.write_text(json.dumps(SYNTHETIC_INCOME_MAP, indent=2) + "\n")
    written.append(income_path)
    return written
