"""Loading, weighting, resampling, and perturbation of the long-run series.

Bundled datasets (annual values after 1950, sparse before):

* ``gwp`` — gross world product, billions of 1990 dollars
* ``population`` — world population, millions
* ``gwp_per_capita`` — dollars of 1990
* ``france_gdp_per_capita`` — dollars of 2011, frontier-economy proxy

Years use astronomical numbering (1 BCE is 0, so 10,000 BCE is -9999).
Each observation carries an uncertainty indicator ``h`` interpolated from
the historical-database anchors and a precision weight ``1/(1 + 2 h^2)``.
"""

from __future__ import annotations

import csv
import hashlib
import importlib.resources
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Observation",
    "SeriesTable",
    "SeriesError",
    "BUNDLED",
    "load_series",
    "hyde_h",
    "weights",
    "resample_decennial",
    "perturb",
    "restrict",
]

BUNDLED = {
    "gwp": "gwp.csv",
    "population": "population.csv",
    "gwp_per_capita": "gwp_per_capita.csv",
    "france_gdp_per_capita": "france_gdp_per_capita.csv",
}

_UNITS = {
    "gwp": "billion 1990 $",
    "population": "million people",
    "gwp_per_capita": "1990 $",
    "france_gdp_per_capita": "2011 $",
}


class SeriesError(ValueError):
    """Malformed series file or inconsistent rows."""


@dataclass(frozen=True)
class Observation:
    """A dated series value with its uncertainty indicator and weight."""

    time: float  # years, astronomical numbering
    value: float
    h: float
    weight: float


@dataclass(frozen=True)
class SeriesTable:
    """An immutable time series: strictly increasing years, positive values."""

    name: str
    unit: str
    years: tuple[float, ...]
    values: tuple[float, ...]
    h: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.years)
        if len(self.values) != n or len(self.h) != n:
            raise SeriesError("years, values, h must have equal length")
        for i in range(1, n):
            if not self.years[i] > self.years[i - 1]:
                raise SeriesError(
                    f"years must strictly increase; row {i} has "
                    f"{self.years[i]} after {self.years[i - 1]}"
                )
        for i, v in enumerate(self.values):
            if not v > 0:
                raise SeriesError(f"value must be positive; row {i} has {v}")

    def __len__(self) -> int:
        return len(self.years)

    def checksum(self) -> str:
        payload = ";".join(
            f"{y!r},{v!r},{h!r}" for y, v, h in zip(self.years, self.values, self.h)
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


# piecewise-linear anchors for the uncertainty indicator: (year, h)
_H_ANCHORS = [(-10000.0, 1.00), (1.0, 0.75), (1700.0, 0.25), (1900.0, 0.05), (2000.0, 0.01)]


def hyde_h(year: float) -> float:
    """Uncertainty indicator h in [0.01, 1]: 1 at and before 10,000 BCE,
    0.01 from 2000 on, linearly interpolated between the anchors."""
    if year <= _H_ANCHORS[0][0]:
        return 1.0
    if year >= _H_ANCHORS[-1][0]:
        return 0.01
    for (y0, h0), (y1, h1) in zip(_H_ANCHORS, _H_ANCHORS[1:]):
        if y0 <= year <= y1:
            return h0 + (h1 - h0) * (year - y0) / (y1 - y0)
    raise AssertionError("unreachable")


def _weight(h: float) -> float:
    return 1.0 / (1.0 + 2.0 * h * h)


def load_series(path_or_name: str | Path, name: str | None = None) -> SeriesTable:
    """Read a `year,value[,h]` CSV, or one of the bundled datasets by name.

    Missing h columns are filled from :func:`hyde_h`.  Errors carry the
    offending row number.
    """
    key = str(path_or_name)
    if key in BUNDLED:
        ref = importlib.resources.files("superexp").joinpath("data").joinpath(BUNDLED[key])
        text = ref.read_text()
        return _parse(text, name or key, _UNITS[key])
    p = Path(path_or_name)
    if not p.exists():
        raise SeriesError(f"no such dataset or file: {path_or_name}")
    return _parse(p.read_text(), name or p.stem, "unspecified")


def _parse(text: str, name: str, unit: str) -> SeriesTable:
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise SeriesError("empty series file") from None
    cols = [c.strip().lower() for c in header]
    if cols[:2] != ["year", "value"]:
        raise SeriesError(f"header must start with year,value; got {header}")
    has_h = len(cols) > 2 and cols[2] == "h"
    years: list[float] = []
    values: list[float] = []
    hs: list[float] = []
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            year = float(row[0])
            value = float(row[1])
        except (ValueError, IndexError) as exc:
            raise SeriesError(f"row {rowno}: cannot parse {row!r}") from exc
        h = None
        if has_h and len(row) > 2 and row[2].strip():
            h = float(row[2])
        years.append(year)
        values.append(value)
        hs.append(hyde_h(year) if h is None else h)
    for i in range(1, len(years)):
        if years[i] <= years[i - 1]:
            raise SeriesError(
                f"row {i + 2}: year {years[i]} does not increase past {years[i - 1]}"
            )
    return SeriesTable(name, unit, tuple(years), tuple(values), tuple(hs))


def weights(table: SeriesTable) -> list[Observation]:
    """Attach precision weights 1/(1 + 2 h^2) to every row."""
    return [
        Observation(time=y, value=v, h=h, weight=_weight(h))
        for y, v, h in zip(table.years, table.values, table.h)
    ]


def resample_decennial(table: SeriesTable, start_year: float = 1950.0) -> SeriesTable:
    """Keep all rows before ``start_year``, then only decennial years
    (start, start+10, ...) — except that the final row is always retained."""
    last = table.years[-1]
    keep = []
    for i, y in enumerate(table.years):
        if y < start_year or y == last:
            keep.append(i)
        elif (y - start_year) % 10 == 0:
            keep.append(i)
    return SeriesTable(
        table.name,
        table.unit,
        tuple(table.years[i] for i in keep),
        tuple(table.values[i] for i in keep),
        tuple(table.h[i] for i in keep),
    )


def perturb(table: SeriesTable, direction: int) -> SeriesTable:
    """Multiply every value by exp(direction * h) — a one-sided sweep of the
    stated historical uncertainty through the whole series."""
    if direction not in (-1, 1):
        raise SeriesError(f"direction must be +1 or -1, got {direction}")
    factors = np.exp(direction * np.asarray(table.h))
    return SeriesTable(
        table.name + ("_plus" if direction > 0 else "_minus"),
        table.unit,
        table.years,
        tuple(float(v * f) for v, f in zip(table.values, factors)),
        table.h,
    )


def restrict(table: SeriesTable, from_year: float | None = None) -> SeriesTable:
    """Drop rows before ``from_year`` (inclusive filter)."""
    if from_year is None:
        return table
    keep = [i for i, y in enumerate(table.years) if y >= from_year]
    if not keep:
        raise SeriesError(f"no rows at or after {from_year}")
    return SeriesTable(
        table.name,
        table.unit,
        tuple(table.years[i] for i in keep),
        tuple(table.values[i] for i in keep),
        tuple(table.h[i] for i in keep),
    )
