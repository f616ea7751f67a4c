"""Parsing and shaping of HMD-style 1x1 life tables.

A life-table file is whitespace-delimited text: a title line, a blank
line, a header line ``Year Age mx qx ax lx dx Lx Tx ex`` and then one
row per (year, age) cell. Only the ``mx`` column (central death rate)
is retained; the remaining statistics are checked for column alignment
and discarded. The placeholder ``.`` marks an unobserved cell.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

N_AGES = 111
OPEN_AGE = 110
OPEN_AGE_LABEL = "110+"
DEFAULT_CLIP_FLOOR = 1e-6

HEADER_COLUMNS = ("Year", "Age", "mx", "qx", "ax", "lx", "dx", "Lx", "Tx", "ex")


class LifeTableFormatError(ValueError):
    """Layout problem: missing or malformed header / row shape."""


class LifeTableStructureError(ValueError):
    """Year gap, duplicate cell, or a year with != 111 age rows."""


class LifeTableValueError(ValueError):
    """Non-numeric mx entry other than the '.' placeholder."""


class EmptySeriesError(ValueError):
    """Every cell of the requested (country, age) series is missing."""


class EmptyCorpusError(ValueError):
    """The corpus directory contains no life-table files."""


class CorpusError(ValueError):
    """A corpus file could not be read or parsed; names the file."""


@dataclass(frozen=True)
class SeriesKey:
    """Identifies one (country, single-year age) mortality series."""

    country_code: str
    age: int

    def __post_init__(self) -> None:
        if not 0 <= self.age <= OPEN_AGE:
            raise ValueError(f"age {self.age} outside 0..{OPEN_AGE}")


@dataclass(frozen=True)
class TimeSeries:
    """An annual rate series with a calendar anchor.

    ``values[i]`` is the rate observed in year ``start_year + i``.
    """

    key: SeriesKey
    start_year: int
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("series needs at least one value")
        if not np.all(np.isfinite(values)):
            raise ValueError("series values must be finite")

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def end_year(self) -> int:
        return self.start_year + len(self) - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.start_year + len(self))


@dataclass
class MortalitySurface:
    """One country's year x age matrix of central death rates m(x,t).

    ``rates`` has shape (n_years, 111); ``missing_mask`` is True where
    the source file had no observation (rate value there is NaN).
    """

    country_code: str
    years: list[int]
    rates: np.ndarray
    missing_mask: np.ndarray

    def __post_init__(self) -> None:
        self.rates = np.asarray(self.rates, dtype=float)
        self.missing_mask = np.asarray(self.missing_mask, dtype=bool)
        n = len(self.years)
        if self.rates.shape != (n, N_AGES) or self.missing_mask.shape != (n, N_AGES):
            raise LifeTableStructureError(
                f"{self.country_code}: expected {n}x{N_AGES} rate grid, "
                f"got {self.rates.shape}"
            )
        if n == 0:
            raise LifeTableStructureError(f"{self.country_code}: no years")
        if list(self.years) != list(range(self.years[0], self.years[0] + n)):
            raise LifeTableStructureError(
                f"{self.country_code}: years are not consecutive"
            )
        observed = self.rates[~self.missing_mask]
        if not np.all(np.isfinite(observed)):
            raise LifeTableValueError(f"{self.country_code}: non-finite rate")
        if np.any(observed < 0):
            raise LifeTableValueError(f"{self.country_code}: negative rate")

    @property
    def n_years(self) -> int:
        return len(self.years)

    @property
    def first_year(self) -> int:
        return self.years[0]

    @property
    def last_year(self) -> int:
        return self.years[-1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MortalitySurface):
            return NotImplemented
        obs_equal = np.array_equal(
            np.where(self.missing_mask, 0.0, self.rates),
            np.where(other.missing_mask, 0.0, other.rates),
        )
        return (
            self.country_code == other.country_code
            and self.years == other.years
            and np.array_equal(self.missing_mask, other.missing_mask)
            and obs_equal
        )


def _parse_age(token: str, line_no: int, line: str) -> int:
    if token == OPEN_AGE_LABEL:
        return OPEN_AGE
    try:
        age = int(token)
    except ValueError:
        raise LifeTableFormatError(
            f"line {line_no}: bad age token {token!r}: {line.strip()!r}"
        ) from None
    if not 0 <= age < OPEN_AGE:
        raise LifeTableFormatError(
            f"line {line_no}: age {age} outside 0..109/'110+': {line.strip()!r}"
        )
    return age


def parse_life_table(text: str | Iterable[str], country_code: str = "UNK") -> MortalitySurface:
    """Parse one HMD 1x1 life-table file into a :class:`MortalitySurface`.

    Raises
    ------
    LifeTableFormatError
        Missing/malformed header or a row that does not have the ten
        expected columns; the message names the offending line.
    LifeTableStructureError
        Year gaps, duplicate cells, or years with != 111 age rows.
    LifeTableValueError
        A non-numeric mx entry other than the '.' placeholder.
    """
    lines = text.splitlines() if isinstance(text, str) else list(text)

    header_idx = None
    for i, line in enumerate(lines):
        tokens = line.split()
        if tokens and tokens[0] == "Year":
            if tuple(tokens) != HEADER_COLUMNS:
                raise LifeTableFormatError(
                    f"line {i + 1}: malformed header: {line.strip()!r}"
                )
            header_idx = i
            break
    if header_idx is None:
        shown = lines[2].strip() if len(lines) > 2 else "<missing>"
        raise LifeTableFormatError(f"line 3: expected 'Year Age mx ...' header, got {shown!r}")

    cells: dict[int, dict[int, float]] = {}
    for i in range(header_idx + 1, len(lines)):
        line = lines[i]
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != len(HEADER_COLUMNS):
            raise LifeTableFormatError(
                f"line {i + 1}: expected {len(HEADER_COLUMNS)} columns, "
                f"got {len(tokens)}: {line.strip()!r}"
            )
        try:
            year = int(tokens[0])
        except ValueError:
            raise LifeTableFormatError(
                f"line {i + 1}: bad year token {tokens[0]!r}"
            ) from None
        age = _parse_age(tokens[1], i + 1, line)
        mx_token = tokens[2]
        if mx_token == ".":
            mx = float("nan")
        else:
            try:
                mx = float(mx_token)
            except ValueError:
                raise LifeTableValueError(
                    f"line {i + 1}: non-numeric mx {mx_token!r}"
                ) from None
        year_cells = cells.setdefault(year, {})
        if age in year_cells:
            raise LifeTableStructureError(
                f"line {i + 1}: duplicate cell year={year} age={tokens[1]}"
            )
        year_cells[age] = mx

    if not cells:
        raise LifeTableStructureError("no data rows after header")

    years = sorted(cells)
    if years != list(range(years[0], years[-1] + 1)):
        missing = sorted(set(range(years[0], years[-1] + 1)) - set(years))
        raise LifeTableStructureError(f"year gap: missing {missing}")
    for year in years:
        if len(cells[year]) != N_AGES:
            raise LifeTableStructureError(
                f"year {year} has {len(cells[year])} age rows, expected {N_AGES}"
            )

    rates = np.full((len(years), N_AGES), np.nan)
    for t, year in enumerate(years):
        for age, mx in cells[year].items():
            rates[t, age] = mx
    missing_mask = np.isnan(rates)
    return MortalitySurface(country_code, years, rates, missing_mask)


def _format_age(age: int) -> str:
    return OPEN_AGE_LABEL if age == OPEN_AGE else str(age)


def format_life_table(surface: MortalitySurface, title: str | None = None) -> str:
    """Render a surface back to the HMD row layout.

    mx is written with full float precision so that parsing the output
    round-trips exactly; the discarded statistics become '.'.
    """
    if title is None:
        title = f"{surface.country_code}, Life tables (period 1x1), Total"
    out = [title, ""]
    out.append("  " + "  ".join(HEADER_COLUMNS))
    filler = "  ".join(["."] * (len(HEADER_COLUMNS) - 3))
    for t, year in enumerate(surface.years):
        for age in range(N_AGES):
            if surface.missing_mask[t, age]:
                mx = "."
            else:
                mx = repr(float(surface.rates[t, age]))
            out.append(f"  {year}  {_format_age(age)}  {mx}  {filler}")
    return "\n".join(out) + "\n"


def extract_series(
    surface: MortalitySurface,
    age: int,
    clip_floor: float = DEFAULT_CLIP_FLOOR,
) -> TimeSeries:
    """Pull one age's rate series, clipped and gap-filled.

    Values below ``clip_floor`` are raised to the floor. Leading and
    trailing missing cells are trimmed; interior missing cells are
    filled by linear interpolation between the nearest observed
    neighbours, keeping the years consecutive.
    """
    if not 0 <= age <= OPEN_AGE:
        raise ValueError(f"age {age} outside 0..{OPEN_AGE}")
    if clip_floor <= 0:
        raise ValueError("clip_floor must be positive")
    observed = ~surface.missing_mask[:, age]
    if not observed.any():
        raise EmptySeriesError(
            f"{surface.country_code} age {age}: all cells missing"
        )
    idx = np.flatnonzero(observed)
    first, last = idx[0], idx[-1]
    col = surface.rates[first : last + 1, age].copy()
    obs = observed[first : last + 1]
    col[obs] = np.maximum(col[obs], clip_floor)
    if not obs.all():
        pos = np.arange(col.size)
        col[~obs] = np.interp(pos[~obs], pos[obs], col[obs])
    key = SeriesKey(surface.country_code, age)
    return TimeSeries(key, surface.years[first], col)


def country_code_from_filename(path: Path) -> str:
    # "SWE.bltper_1x1.txt" and "SWE.txt" both map to "SWE"
    return path.name.split(".")[0]


def load_corpus(directory: str | Path) -> list[MortalitySurface]:
    """Parse every life-table file in ``directory``, one per country.

    Country codes come from filename stems; results are sorted
    alphabetically by code. Fails fast: any unreadable or malformed
    file aborts the load with an error naming that file.
    """
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.is_file() and p.suffix == ".txt")
    if not files:
        raise EmptyCorpusError(f"empty corpus: no life-table files in {directory}")
    surfaces = []
    for path in files:
        code = country_code_from_filename(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise CorpusError(f"cannot read {path}: {exc}") from exc
        try:
            surfaces.append(parse_life_table(text, country_code=code))
        except ValueError as exc:
            raise CorpusError(f"cannot parse {path}: {exc}") from exc
    surfaces.sort(key=lambda s: s.country_code)
    return surfaces


CORPUS_CSV_COLUMNS = ("country", "year", "age", "mx")


def write_corpus_csv(surfaces: Iterable[MortalitySurface], comment: str | None = None) -> str:
    """Serialize surfaces to the canonical corpus CSV.

    Columns country,year,age,mx with the open age group written as
    "110"; missing cells keep their row with an empty mx field.
    """
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CORPUS_CSV_COLUMNS)
    for surface in surfaces:
        for t, year in enumerate(surface.years):
            for age in range(N_AGES):
                if surface.missing_mask[t, age]:
                    mx = ""
                else:
                    mx = repr(float(surface.rates[t, age]))
                writer.writerow([surface.country_code, year, age, mx])
    return buf.getvalue()


def read_corpus_csv(text: str) -> list[MortalitySurface]:
    """Inverse of :func:`write_corpus_csv`; skips '#' comment lines."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(header) != CORPUS_CSV_COLUMNS:
        raise LifeTableFormatError(f"bad corpus CSV header: {header!r}")
    by_country: dict[str, dict[int, dict[int, float]]] = {}
    for row in reader:
        country, year_s, age_s, mx_s = row
        cells = by_country.setdefault(country, {}).setdefault(int(year_s), {})
        cells[int(age_s)] = float(mx_s) if mx_s else float("nan")
    surfaces = []
    for country in sorted(by_country):
        years = sorted(by_country[country])
        rates = np.full((len(years), N_AGES), np.nan)
        for t, year in enumerate(years):
            for age, mx in by_country[country][year].items():
                rates[t, age] = mx
        surfaces.append(
            MortalitySurface(country, years, rates, np.isnan(rates))
        )
    return surfaces
