"""Synthetic corpus generator tests."""

import json

import numpy as np

from mortbench.lifetables import extract_series, load_corpus
from mortbench.synthetic import (
    SYNTHETIC_INCOME_MAP,
    synthetic_corpus,
    write_synthetic_hmd_dir,
)


def test_shape_and_coverage():
    corpus = synthetic_corpus(0)
    assert [s.country_code for s in corpus] == ["SYA", "SYB", "SYC"]
    for surface in corpus:
        assert surface.rates.shape == (60, 111)
        assert not surface.missing_mask.any()
        assert np.all(surface.rates > 0)


def test_staggered_calendars():
    corpus = synthetic_corpus(0)
    assert [s.years[0] for s in corpus] == [1950, 1955, 1960]
    assert [s.years[-1] for s in corpus] == [2009, 2014, 2019]


def test_deterministic_and_seed_sensitive():
    a, b, c = synthetic_corpus(0), synthetic_corpus(0), synthetic_corpus(1)
    for x, y in zip(a, b):
        assert np.array_equal(x.rates, y.rates)
    assert not np.array_equal(a[0].rates, c[0].rates)


def test_mortality_improves_over_time():
    # every country's age-standardized level should trend down
    for surface in synthetic_corpus(0):
        log_mean = np.log(surface.rates).mean(axis=1)
        first, last = log_mean[:10].mean(), log_mean[-10:].mean()
        assert last < first


def test_age_profile_shape():
    surface = synthetic_corpus(0)[0]
    rates = surface.rates.mean(axis=0)
    # infant hump above early childhood, old-age far above mid-life
    assert rates[0] > rates[8]
    assert rates[100] > 100 * rates[30]


def test_round_trips_through_life_table_format(tmp_path):
    corpus = synthetic_corpus(0)
    write_synthetic_hmd_dir(tmp_path, seed=0)
    loaded = load_corpus(tmp_path)
    assert [s.country_code for s in loaded] == [s.country_code for s in corpus]
    for a, b in zip(corpus, loaded):
        assert list(a.years) == list(b.years)
        assert np.array_equal(a.rates, b.rates)


def test_income_map_written(tmp_path):
    write_synthetic_hmd_dir(tmp_path, seed=0)
    raw = json.loads((tmp_path / "income_map.json").read_text())
    assert raw == SYNTHETIC_INCOME_MAP
    assert set(raw.values()) <= {"Low", "LowerMiddle", "HigherMiddle", "High"}


def test_series_extract_full_length():
    surface = synthetic_corpus(0)[0]
    ser = extract_series(surface, 40)
    assert len(ser.values) == 60
    assert ser.start_year == 1950
