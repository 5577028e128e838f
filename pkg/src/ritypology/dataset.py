"""Institutions, indicators and rating matrices.

Holds the data model shared by every other module, CSV ingestion and
serialization for attribute and rating files, and access to the bundled
resources (the 49-institution corpus, the indicator list and the
rating-count table).
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import IO, Iterable, Sequence, Union

import numpy as np

CsvSource = Union[str, os.PathLike, IO[str]]

RATING_LEVELS: tuple[float, ...] = (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)

ATTRIBUTE_HEADER = (
    "id", "name", "esfri_area", "pan_european", "in_operation",
    "resource_ri", "facility_ri", "distributed_ri", "e_ri",
)
FLAG_FIELDS = ATTRIBUTE_HEADER[3:]

AREA_COLUMNS = (
    "area_energy", "area_environment", "area_health_food",
    "area_pse", "area_social_cultural", "area_eri",
)
ATTRIBUTE_COLUMNS = AREA_COLUMNS + FLAG_FIELDS


class DatasetError(ValueError):
    """Raised for malformed or inconsistent input data."""


class EsfriArea(enum.IntEnum):
    ENERGY = 1
    ENVIRONMENT = 2
    HEALTH_FOOD = 3
    PSE = 4
    SOCIAL_CULTURAL = 5
    ERI = 6


@dataclass(frozen=True)
class InstitutionRecord:
    id: str
    name: str
    esfri_area: EsfriArea
    pan_european: int
    in_operation: int
    resource_ri: int
    facility_ri: int
    distributed_ri: int
    e_ri: int

    def flags(self) -> tuple[int, ...]:
        return tuple(getattr(self, f) for f in FLAG_FIELDS)


@dataclass(frozen=True)
class IndicatorRegistry:
    """Ordered (number, label) pairs of the rated indicators."""

    entries: tuple[tuple[int, str], ...]

    def __post_init__(self):
        numbers = [n for n, _ in self.entries]
        if len(set(numbers)) != len(numbers):
            raise DatasetError("duplicate indicator numbers in registry")

    @property
    def numbers(self) -> tuple[int, ...]:
        return tuple(n for n, _ in self.entries)

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(f"ind_{n}" for n, _ in self.entries)

    def label(self, number: int) -> str:
        for n, lab in self.entries:
            if n == number:
                return lab
        raise KeyError(number)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class FeatureMatrix:
    """An n x p numeric matrix with row identifiers and column labels.

    ``imputed`` lists (row_id, column_label) cells that were filled by
    column-mean imputation; it is empty for complete inputs.
    """

    row_ids: tuple[str, ...]
    col_labels: tuple[str, ...]
    values: np.ndarray
    imputed: tuple[tuple[str, str], ...] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise DatasetError("feature matrix must be two-dimensional")
        if values.shape != (len(self.row_ids), len(self.col_labels)):
            raise DatasetError(
                f"shape {values.shape} does not match "
                f"{len(self.row_ids)} ids x {len(self.col_labels)} labels")
        if len(set(self.row_ids)) != len(self.row_ids):
            raise DatasetError("row ids must be unique")
        if np.isnan(values).any():
            raise DatasetError("feature matrix contains missing values")
        values.setflags(write=False)
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        object.__setattr__(self, "col_labels", tuple(self.col_labels))
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def rows(self, ids: Sequence[str]) -> FeatureMatrix:
        """Return the submatrix for ``ids`` in the given order."""
        index = {rid: i for i, rid in enumerate(self.row_ids)}
        missing = [i for i in ids if i not in index]
        if missing:
            raise DatasetError(f"unknown row ids: {', '.join(missing)}")
        sel = [index[i] for i in ids]
        return FeatureMatrix(tuple(ids), self.col_labels, self.values[sel])


@dataclass(frozen=True)
class RatingCountTable:
    """Per-indicator counts over the seven rating levels."""

    indicators: tuple[int, ...]
    counts: np.ndarray  # shape (len(indicators), 7), integer

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if counts.shape != (len(self.indicators), len(RATING_LEVELS)):
            raise DatasetError(f"count table has shape {counts.shape}")
        if (counts < 0).any():
            raise DatasetError("rating counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "indicators", tuple(self.indicators))
        object.__setattr__(self, "counts", counts)

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def proportions(self) -> np.ndarray:
        return self.counts / self.totals[:, None]


# --------------------------------------------------------------------------
# CSV helpers

def _read_rows(source: CsvSource) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Read a CSV source; return the header and (line number, row) pairs."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read()
    if text.startswith("﻿"):
        text = text[1:]
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("line 1: missing header row") from None
    rows = []
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        rows.append((reader.line_num, row))
    return [h.strip() for h in header], rows


def _write_rows(dest: CsvSource, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    else:
        dest.write(buf.getvalue())


def format_rating(value: float) -> str:
    """Canonical text for a rating: ``4`` or ``3.5``."""
    return f"{value:g}"


# --------------------------------------------------------------------------
# institutions

def load_institutions(source: CsvSource) -> list[InstitutionRecord]:
    header, rows = _read_rows(source)
    if tuple(header) != ATTRIBUTE_HEADER:
        raise DatasetError(
            "line 1: attribute header must be " + ",".join(ATTRIBUTE_HEADER))
    records: list[InstitutionRecord] = []
    seen: set[str] = set()
    for line, row in rows:
        if len(row) != len(ATTRIBUTE_HEADER):
            raise DatasetError(
                f"line {line}: expected {len(ATTRIBUTE_HEADER)} columns, got {len(row)}")
        rid = row[0].strip()
        if not rid:
            raise DatasetError(f"line {line}, column id: empty identifier")
        if rid in seen:
            raise DatasetError(f"line {line}: duplicate id {rid!r}")
        seen.add(rid)
        try:
            area = EsfriArea(int(row[2]))
        except ValueError:
            raise DatasetError(
                f"line {line}, column esfri_area: {row[2]!r} is not in 1..6") from None
        flags = []
        for col, raw in zip(FLAG_FIELDS, row[3:]):
            if raw.strip() not in ("0", "1"):
                raise DatasetError(
                    f"line {line}, column {col}: flag {raw!r} is not 0 or 1")
            flags.append(int(raw))
        records.append(InstitutionRecord(rid, row[1], area, *flags))
    return records


def save_institutions(records: Sequence[InstitutionRecord], dest: CsvSource) -> None:
    _write_rows(dest, ATTRIBUTE_HEADER, (
        [r.id, r.name, int(r.esfri_area), *r.flags()] for r in records))


def encode_attributes(records: Sequence[InstitutionRecord]) -> FeatureMatrix:
    """One-hot area dummies followed by the six property flags."""
    if not records:
        raise DatasetError("cannot encode an empty record list")
    values = np.zeros((len(records), len(ATTRIBUTE_COLUMNS)))
    for i, rec in enumerate(records):
        values[i, int(rec.esfri_area) - 1] = 1.0
        values[i, 6:] = rec.flags()
    return FeatureMatrix(tuple(r.id for r in records), ATTRIBUTE_COLUMNS, values)


# --------------------------------------------------------------------------
# ratings

def _parse_rating(raw: str, line: int, col: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise DatasetError(f"line {line}, column {col}: {raw!r} is not a number") from None
    if not math.isfinite(value) or value not in RATING_LEVELS:
        raise DatasetError(
            f"line {line}, column {col}: rating not on half-point scale ({raw})")
    return value


def load_ratings(source: CsvSource, registry: IndicatorRegistry | None = None,
                 impute: bool = False) -> FeatureMatrix:
    """Read a rating CSV into an n x len(registry) matrix.

    Columns may appear in any order but must be exactly ``id`` plus one
    ``ind_<number>`` column per registry entry. Empty cells are rejected
    unless ``impute`` is set, in which case they receive the column mean
    of the observed ratings and are listed in ``FeatureMatrix.imputed``.
    """
    registry = registry or default_registry()
    header, rows = _read_rows(source)
    if not header or header[0] != "id":
        raise DatasetError("line 1: first column must be 'id'")
    wanted = registry.columns
    unknown = [h for h in header[1:] if h not in wanted]
    if unknown:
        raise DatasetError(f"line 1: unknown indicator column {unknown[0]!r}")
    absent = [c for c in wanted if c not in header]
    if absent:
        raise DatasetError(f"line 1: missing indicator column {absent[0]!r}")
    if len(set(header)) != len(header):
        raise DatasetError("line 1: duplicate column in header")
    pos = [header.index(c) for c in wanted]

    ids: list[str] = []
    values = np.full((len(rows), len(wanted)), np.nan)
    for r, (line, row) in enumerate(rows):
        if len(row) != len(header):
            raise DatasetError(
                f"line {line}: expected {len(header)} columns, got {len(row)}")
        rid = row[0].strip()
        if not rid:
            raise DatasetError(f"line {line}, column id: empty identifier")
        if rid in ids:
            raise DatasetError(f"line {line}: duplicate id {rid!r}")
        ids.append(rid)
        for c, p in enumerate(pos):
            raw = row[p].strip()
            if raw == "":
                if not impute:
                    raise DatasetError(f"line {line}, column {wanted[c]}: missing rating")
                continue
            values[r, c] = _parse_rating(raw, line, wanted[c])

    imputed = []
    if impute and np.isnan(values).any():
        for c in range(values.shape[1]):
            col = values[:, c]
            holes = np.isnan(col)
            if not holes.any():
                continue
            if holes.all():
                raise DatasetError(f"column {wanted[c]}: no observed ratings to impute from")
            col[holes] = col[~holes].mean()
            imputed.extend((ids[i], wanted[c]) for i in np.flatnonzero(holes))
        imputed.sort(key=lambda cell: (ids.index(cell[0]), wanted.index(cell[1])))
    return FeatureMatrix(tuple(ids), wanted, values, imputed=tuple(imputed))


def save_ratings(matrix: FeatureMatrix, dest: CsvSource) -> None:
    _write_rows(dest, ("id", *matrix.col_labels), (
        [rid, *(format_rating(v) for v in row)]
        for rid, row in zip(matrix.row_ids, matrix.values)))


# --------------------------------------------------------------------------
# rating counts

COUNT_HEADER = ("indicator", *(format_rating(v) for v in RATING_LEVELS))


def load_counts(source: CsvSource) -> RatingCountTable:
    header, rows = _read_rows(source)
    if tuple(header) != COUNT_HEADER:
        raise DatasetError("line 1: count header must be " + ",".join(COUNT_HEADER))
    numbers, counts = [], []
    for line, row in rows:
        if len(row) != len(COUNT_HEADER):
            raise DatasetError(
                f"line {line}: expected {len(COUNT_HEADER)} columns, got {len(row)}")
        try:
            numbers.append(int(row[0]))
        except ValueError:
            raise DatasetError(f"line {line}, column indicator: {row[0]!r}") from None
        parsed = []
        for col, raw in zip(COUNT_HEADER[1:], row[1:]):
            try:
                v = int(raw)
            except ValueError:
                v = -1
            if v < 0:
                raise DatasetError(
                    f"line {line}, column {col}: count {raw!r} is not a nonnegative integer")
            parsed.append(v)
        counts.append(parsed)
    return RatingCountTable(tuple(numbers), np.array(counts, dtype=np.int64).reshape(-1, 7))


def save_counts(table: RatingCountTable, dest: CsvSource) -> None:
    _write_rows(dest, COUNT_HEADER, (
        [n, *map(int, row)] for n, row in zip(table.indicators, table.counts)))


def counts_from_matrix(matrix: FeatureMatrix) -> RatingCountTable:
    """Histogram each rating column over the seven levels."""
    counts = np.zeros((matrix.shape[1], len(RATING_LEVELS)), dtype=np.int64)
    for j in range(matrix.shape[1]):
        for l, level in enumerate(RATING_LEVELS):
            counts[j, l] = int(np.sum(matrix.values[:, j] == level))
    numbers = tuple(int(c.removeprefix("ind_")) for c in matrix.col_labels)
    return RatingCountTable(numbers, counts)


def expand_counts(table: RatingCountTable) -> FeatureMatrix:
    """Turn each indicator's counts into a sorted column of ratings.

    Columns are expanded independently: row ``i`` is not a joint
    observation across indicators.
    """
    totals = set(table.totals.tolist())
    if len(totals) != 1:
        raise DatasetError(f"indicator totals differ: {sorted(totals)}")
    n = totals.pop()
    levels = np.array(RATING_LEVELS)
    values = np.column_stack([np.repeat(levels, row) for row in table.counts]) \
        if len(table.indicators) else np.zeros((n, 0))
    ids = tuple(f"row{i + 1:03d}" for i in range(n))
    return FeatureMatrix(ids, tuple(f"ind_{k}" for k in table.indicators), values)


# --------------------------------------------------------------------------
# bundled resources

def _resource(name: str):
    return resources.files("ritypology").joinpath("data").joinpath(name)


def bundled_institutions() -> list[InstitutionRecord]:
    with _resource("annex1.csv").open("r", encoding="utf-8", newline="") as fh:
        return load_institutions(fh)


def bundled_counts() -> RatingCountTable:
    with _resource("table3_counts.csv").open("r", encoding="utf-8", newline="") as fh:
        return load_counts(fh)


def default_registry() -> IndicatorRegistry:
    data = json.loads(_resource("indicators.json").read_text(encoding="utf-8"))
    return IndicatorRegistry(tuple((int(e["number"]), e["label"]) for e in data["indicators"]))


def bundled_path(name: str):
    """Filesystem path of a bundled resource (``annex1.csv`` etc.)."""
    return resources.as_file(_resource(name))
