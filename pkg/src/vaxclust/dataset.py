"""Ingestion, validation, join, and standardization of the per-year input tables.

Two UTF-8 comma-delimited tables per study year:

* vaccination table: ``district_id, district_name`` plus the 14 coverage
  columns listed in :data:`VACCINE_COLUMNS` (percent of eligible children).
* gdsc table: ``district_id`` plus the 9 columns in :data:`GDSC_COLUMNS`
  (eight numeric percentages/scores and the ordinal ``rurality`` category).

All parsing is strict: missing columns, out-of-range values, duplicate
districts, and locale-specific decimal separators are hard errors. Missing
cells are never imputed.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    DuplicateDistrict,
    EmptyTable,
    JoinMismatch,
    MissingColumn,
    OutOfRange,
    RuralityOutOfDomain,
    TooFewRows,
)

VACCINE_COLUMNS = (
    "DTaP_IPV_5y",
    "DTaP_IPV_Hib_5y",
    "DTaP_IPV_Hib_HepB_12m",
    "DTaP_IPV_Hib_HepB_24m",
    "Hib_MenC_24m",
    "Hib_MenC_5y",
    "MenB_12m",
    "MenB_booster_24m",
    "MMR_24m",
    "MMR1_5y",
    "MMR2_5y",
    "PCV_12m",
    "PCV_24m",
    "Rota_12m",
)

GDSC_COLUMNS = (
    "imd_avg_score",
    "imd_prop_deprived",
    "long_term_unemployed",
    "routine_occupations",
    "no_qualifications",
    "english_proficiency",
    "ethnic_minority",
    "born_outside_uk",
    "rurality",
)

# Percent-valued GDSC columns; imd_avg_score is a score (>= 0, unbounded above)
# and rurality is the ordinal category 1..6.
GDSC_PERCENT_COLUMNS = tuple(c for c in GDSC_COLUMNS if c not in ("imd_avg_score", "rurality"))

RURALITY_CATEGORIES = (1, 2, 3, 4, 5, 6)

_DECIMAL_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)$")
_INT_RE = re.compile(r"^[+-]?\d+$")


@dataclass(frozen=True, order=True)
class DistrictId:
    id: str
    name: str = ""


@dataclass(frozen=True)
class VaccinationProfile:
    rates: tuple[float, ...]  # 14 values, VACCINE_COLUMNS order

    def __post_init__(self):
        if len(self.rates) != len(VACCINE_COLUMNS):
            raise ValueError(f"expected {len(VACCINE_COLUMNS)} rates, got {len(self.rates)}")


@dataclass(frozen=True)
class GdscProfile:
    imd_avg_score: float
    imd_prop_deprived: float
    long_term_unemployed: float
    routine_occupations: float
    no_qualifications: float
    english_proficiency: float
    ethnic_minority: float
    born_outside_uk: float
    rurality: int

    def numeric_vector(self) -> tuple[float, ...]:
        """The 8 numeric features, GDSC_COLUMNS order (rurality excluded)."""
        return (
            self.imd_avg_score,
            self.imd_prop_deprived,
            self.long_term_unemployed,
            self.routine_occupations,
            self.no_qualifications,
            self.english_proficiency,
            self.ethnic_minority,
            self.born_outside_uk,
        )


@dataclass(frozen=True)
class YearDataset:
    year: int
    rows: tuple[tuple[DistrictId, VaccinationProfile, GdscProfile], ...]

    def __len__(self) -> int:
        return len(self.rows)

    def district_ids(self) -> list[str]:
        return [d.id for d, _, _ in self.rows]

    def district_names(self) -> list[str]:
        return [d.name for d, _, _ in self.rows]

    def vaccination_matrix(self) -> np.ndarray:
        """(n, 14) raw coverage rates in VACCINE_COLUMNS order."""
        return np.array([v.rates for _, v, _ in self.rows], dtype=np.float64)

    def gdsc_numeric_matrix(self) -> np.ndarray:
        """(n, 8) numeric GDSC features (rurality excluded)."""
        return np.array([g.numeric_vector() for _, _, g in self.rows], dtype=np.float64)

    def rurality_column(self) -> np.ndarray:
        """(n,) ordinal rurality categories as integers 1..6."""
        return np.array([g.rurality for _, _, g in self.rows], dtype=np.int64)


@dataclass(frozen=True)
class StandardizedMatrix:
    values: np.ndarray
    feature_means: np.ndarray
    feature_sds: np.ndarray
    feature_names: tuple[str, ...]


def _parse_decimal(raw, column: str, district_id: str) -> float:
    if raw is None:  # short row: csv.DictReader fills missing cells with None
        raise OutOfRange(column, raw, district_id)
    text = raw.strip()
    if not _DECIMAL_RE.match(text):
        raise OutOfRange(column, raw, district_id)
    return float(text)


def _parse_percent(raw: str, column: str, district_id: str) -> float:
    value = _parse_decimal(raw, column, district_id)
    if not 0.0 <= value <= 100.0:
        raise OutOfRange(column, value, district_id)
    return value


def _open_reader(stream, required: tuple[str, ...]) -> tuple[csv.DictReader, list[str]]:
    if isinstance(stream, (bytes, bytearray)):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.DictReader(stream)
    header = reader.fieldnames or []
    for column in required:
        if column not in header:
            raise MissingColumn(column)
    return reader, header


def parse_vaccination_table(stream, year: int) -> dict[DistrictId, VaccinationProfile]:
    """Parse one year's vaccination table; header order is irrelevant."""
    reader, _ = _open_reader(stream, ("district_id", "district_name") + VACCINE_COLUMNS)
    profiles: dict[DistrictId, VaccinationProfile] = {}
    seen: set[str] = set()
    for row in reader:
        district_id = (row["district_id"] or "").strip()
        if not district_id:
            raise OutOfRange("district_id", row["district_id"])
        if district_id in seen:
            raise DuplicateDistrict(district_id)
        seen.add(district_id)
        rates = tuple(_parse_percent(row[c], c, district_id) for c in VACCINE_COLUMNS)
        key = DistrictId(id=district_id, name=(row["district_name"] or "").strip())
        profiles[key] = VaccinationProfile(rates=rates)
    if not profiles:
        raise EmptyTable(f"vaccination table for year {year} has no data rows")
    return profiles


def parse_gdsc_table(stream, year: int) -> dict[str, GdscProfile]:
    """Parse one year's GDSC table, keyed by the opaque district id."""
    reader, _ = _open_reader(stream, ("district_id",) + GDSC_COLUMNS)
    profiles: dict[str, GdscProfile] = {}
    for row in reader:
        district_id = (row["district_id"] or "").strip()
        if not district_id:
            raise OutOfRange("district_id", row["district_id"])
        if district_id in profiles:
            raise DuplicateDistrict(district_id)
        imd_avg_score = _parse_decimal(row["imd_avg_score"], "imd_avg_score", district_id)
        if imd_avg_score < 0:
            raise OutOfRange("imd_avg_score", imd_avg_score, district_id)
        percents = {c: _parse_percent(row[c], c, district_id) for c in GDSC_PERCENT_COLUMNS}
        rurality_raw = (row["rurality"] or "").strip()
        if not _INT_RE.match(rurality_raw):
            raise RuralityOutOfDomain(row["rurality"], district_id)
        rurality = int(rurality_raw)
        if rurality not in RURALITY_CATEGORIES:
            raise RuralityOutOfDomain(rurality, district_id)
        profiles[district_id] = GdscProfile(
            imd_avg_score=imd_avg_score, rurality=rurality, **percents
        )
    if not profiles:
        raise EmptyTable(f"gdsc table for year {year} has no data rows")
    return profiles


def join_year(
    vacc: dict[DistrictId, VaccinationProfile],
    gdsc: dict[str, GdscProfile],
    year: int,
    allow_partial: bool = False,
) -> YearDataset:
    """Inner-join the two parsed tables on district id, sorted by id.

    A district present in exactly one table raises :class:`JoinMismatch`
    unless ``allow_partial`` is set, in which case unmatched rows are dropped.
    """
    vacc_by_id = {d.id: (d, profile) for d, profile in vacc.items()}
    left_only = sorted(set(vacc_by_id) - set(gdsc))
    right_only = sorted(set(gdsc) - set(vacc_by_id))
    if (left_only or right_only) and not allow_partial:
        raise JoinMismatch(left_only, right_only)
    matched = sorted(set(vacc_by_id) & set(gdsc))
    rows = tuple((vacc_by_id[i][0], vacc_by_id[i][1], gdsc[i]) for i in matched)
    return YearDataset(year=year, rows=rows)


def load_year(vacc_path, gdsc_path, year: int, allow_partial: bool = False) -> YearDataset:
    with open(vacc_path, encoding="utf-8", newline="") as f:
        vacc = parse_vaccination_table(f, year)
    with open(gdsc_path, encoding="utf-8", newline="") as f:
        gdsc = parse_gdsc_table(f, year)
    return join_year(vacc, gdsc, year, allow_partial=allow_partial)


def standardize(matrix: np.ndarray, feature_names) -> StandardizedMatrix:
    """Column-wise z-score with sample standard deviation (n-1 denominator).

    Constant columns map to all-zero columns with sd recorded as 0 so the
    transform stays invertible via :func:`destandardize`.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise TooFewRows("standardize requires at least 2 rows")
    means = matrix.mean(axis=0)
    sds = matrix.std(axis=0, ddof=1)
    constant = sds == 0.0
    safe = np.where(constant, 1.0, sds)
    values = (matrix - means) / safe
    values[:, constant] = 0.0
    return StandardizedMatrix(
        values=values,
        feature_means=means,
        feature_sds=np.where(constant, 0.0, sds),
        feature_names=tuple(feature_names),
    )


def destandardize(sm: StandardizedMatrix) -> np.ndarray:
    """Invert :func:`standardize`; constant columns come back as their mean."""
    sds = np.where(sm.feature_sds == 0.0, 0.0, sm.feature_sds)
    return sm.values * sds + sm.feature_means
