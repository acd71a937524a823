"""Embedded reference fixtures.

``TABLE2`` holds the published per-cluster average vaccination rates for
each study year and cluster count, rows in ascending coverage order, values
verbatim as printed (including the odd two-decimal 88.51 entry and the
2023 six-cluster block that repeats the 2021 block in the source table).

The ``data/`` CSVs encode the published district-cluster membership lists
for the two-cluster models plus a district rurality lookup. The full lists
are not reproduced here; the fixtures preserve the facts the analysis
depends on (which flagship districts sit in which cluster per year, and the
count of low-cluster districts with rurality above 1: 2, 2, 3) and pad the
remaining rows with synthetic districts.
"""

from __future__ import annotations

import csv
from importlib.resources import files

import numpy as np

STUDY_YEARS = (2021, 2022, 2023)

# {(start_year, k): [(cluster_name, 14 rates in VACCINE_COLUMNS order), ...]}
TABLE2: dict[tuple[int, int], list[tuple[str, tuple[float, ...]]]] = {
    (2021, 2): [
        ("L", (69.9, 89.2, 85.2, 86.3, 78.8, 84.6, 84.8, 76.8, 79.0, 87.1, 72.6, 87.6, 79.4, 82.9)),
        ("H", (87.3, 95.5, 93.4, 94.5, 91.3, 93.3, 93.1, 90.4, 91.5, 94.8, 88.51, 95.2, 91.7, 91.5)),
    ],
    (2021, 3): [
        ("L", (69.9, 89.3, 85.2, 86.3, 78.8, 84.6, 84.8, 76.8, 79.0, 87.1, 72.6, 87.7, 79.4, 82.9)),
        ("M", (81.8, 93.6, 90.8, 92.0, 87.1, 90.3, 90.3, 85.7, 87.3, 92.6, 83.2, 93.2, 87.8, 88.5)),
        ("H", (89.5, 96.3, 94.4, 95.5, 93.0, 94.5, 94.3, 92.4, 93.2, 95.7, 90.7, 96.0, 93.3, 92.8)),
    ],
    (2021, 6): [
        ("Ls", (56.1, 82.4, 64.0, 70.6, 61.6, 78.2, 64.5, 60.2, 65.4, 83.5, 58.9, 70.9, 64.3, 61.7)),
        ("VL", (66.6, 88.7, 84.4, 85.0, 76.3, 83.1, 83.8, 74.3, 76.6, 85.8, 68.5, 87.2, 77.0, 82.4)),
        ("L", (73.4, 90.2, 87.3, 88.5, 81.9, 86.2, 86.9, 79.8, 81.8, 88.3, 76.9, 89.1, 82.3, 84.8)),
        ("M", (81.8, 93.6, 90.8, 92.0, 87.1, 90.3, 90.3, 85.7, 87.3, 92.6, 83.2, 93.2, 87.8, 88.5)),
        ("H", (88.4, 95.9, 93.6, 94.9, 91.9, 93.8, 93.4, 91.2, 92.1, 95.2, 89.5, 95.4, 92.2, 91.8)),
        ("Hst", (91.5, 97.1, 95.9, 96.6, 94.9, 95.6, 95.7, 94.4, 95.0, 96.6, 92.6, 97.0, 95.2, 94.5)),
    ],
    (2022, 2): [
        ("L", (68.8, 87.4, 85.9, 86.2, 79.0, 82.4, 84.5, 77.4, 80.2, 85.4, 70.2, 87.9, 79.3, 82.1)),
        ("H", (85.6, 94.1, 92.9, 93.7, 90.4, 91.7, 92.2, 89.3, 90.9, 93.7, 86.8, 94.7, 90.1, 89.9)),
    ],
    (2022, 3): [
        ("L", (68.8, 87.4, 85.9, 86.2, 79.0, 82.4, 84.5, 77.4, 80.2, 85.4, 70.2, 87.9, 79.3, 82.1)),
        ("M", (81.3, 92.0, 90.9, 91.6, 87.3, 88.9, 89.8, 85.6, 88.0, 91.5, 82.7, 93.0, 86.5, 87.2)),
        ("H", (88.8, 95.6, 94.4, 95.3, 92.7, 93.7, 93.9, 92.1, 93.0, 95.2, 89.8, 95.9, 92.8, 91.8)),
    ],
    (2022, 6): [
        ("Ls", (62.2, 81.1, 67.8, 77.7, 66.7, 74.6, 68.5, 64.0, 69.5, 80.2, 62.7, 75.0, 68.3, 64.9)),
        ("VL", (66.4, 84.8, 84.1, 86.2, 77.8, 79.0, 83.3, 75.8, 78.2, 81.9, 66.2, 87.0, 77.3, 81.6)),
        ("L", (73.2, 87.6, 87.3, 88.2, 81.8, 83.1, 86.3, 80.1, 82.2, 86.4, 74.3, 88.9, 80.9, 83.6)),
        ("M", (78.9, 91.2, 88.9, 90.6, 85.5, 87.5, 88.1, 83.7, 86.1, 90.2, 80.5, 91.6, 84.7, 85.6)),
        ("H", (83.7, 93.0, 91.9, 92.9, 89.8, 89.5, 91.3, 88.2, 90.0, 92.5, 85.2, 94.0, 89.2, 89.1)),
        ("Hst", (88.7, 95.5, 94.6, 95.4, 93.0, 93.5, 94.2, 92.2, 93.2, 95.2, 89.7, 96.0, 92.8, 92.3)),
    ],
    (2023, 2): [
        ("L", (70.1, 86.2, 84.8, 86.8, 79.3, 81.1, 84.0, 77.5, 79.9, 84.4, 70.8, 87.2, 78.8, 81.5)),
        ("H", (85.2, 93.9, 92.6, 93.7, 90.5, 91.1, 92.1, 89.3, 90.8, 93.4, 86.5, 94.5, 90.1, 89.9)),
    ],
    (2023, 3): [
        ("L", (70.1, 86.2, 84.8, 86.8, 79.3, 81.1, 84.0, 77.5, 79.9, 84.4, 70.8, 87.3, 78.8, 81.5)),
        ("M", (81.4, 92.1, 90.5, 91.8, 87.7, 88.5, 89.7, 86.0, 88.1, 91.4, 82.9, 92.8, 87.0, 87.4)),
        ("H", (88.7, 95.5, 94.6, 95.4, 93.0, 93.5, 94.2, 92.2, 93.2, 95.2, 89.7, 96.0, 92.8, 92.3)),
    ],
    (2023, 6): [
        ("Ls", (56.1, 82.4, 64.0, 70.6, 61.6, 78.2, 64.5, 60.2, 65.4, 83.5, 58.9, 70.9, 64.3, 61.7)),
        ("VL", (66.6, 88.7, 84.4, 85.0, 76.3, 83.1, 83.8, 74.3, 76.6, 85.8, 68.5, 87.2, 77.0, 82.4)),
        ("L", (73.4, 90.2, 87.3, 88.5, 81.9, 86.2, 86.9, 79.8, 81.8, 88.3, 76.9, 89.1, 82.3, 84.8)),
        ("M", (81.8, 93.6, 90.8, 92.0, 87.1, 90.3, 90.3, 85.7, 87.3, 92.6, 83.2, 93.2, 87.8, 88.5)),
        ("H", (88.4, 95.9, 93.6, 94.9, 91.9, 93.8, 93.4, 91.2, 92.1, 95.2, 89.5, 95.4, 92.2, 91.8)),
        ("Hst", (91.5, 97.1, 95.9, 96.6, 94.9, 95.6, 95.7, 94.4, 95.0, 96.6, 92.6, 97.0, 95.2, 94.5)),
    ],
}


def table2_means(year: int, k: int) -> tuple[tuple[str, ...], np.ndarray]:
    """(cluster names ascending coverage, (k, 14) mean matrix) for a year/k."""
    rows = TABLE2[(year, k)]
    names = tuple(name for name, _ in rows)
    return names, np.array([rates for _, rates in rows], dtype=np.float64)


def _data_text(name: str) -> str:
    return files("vaxclust").joinpath("data", name).read_text(encoding="utf-8")


def load_wtable_assignment(year: int) -> list[dict]:
    """Encoded two-cluster membership fixture rows for a study year.

    Each row: district_id, district_name, cluster_index (0 = low coverage),
    cluster_name ("L"/"H").
    """
    reader = csv.DictReader(_data_text(f"wtable_clusters_{year}_k2.csv").splitlines())
    rows = []
    for r in reader:
        rows.append(
            {
                "district_id": r["district_id"],
                "district_name": r["district_name"],
                "cluster_index": int(r["cluster_index"]),
                "cluster_name": r["cluster_name"],
            }
        )
    return rows


def load_rurality_fixture() -> dict[str, int]:
    """District id -> rurality category 1..6, shared across study years."""
    reader = csv.DictReader(_data_text("wtable_rurality.csv").splitlines())
    return {r["district_id"]: int(r["rurality"]) for r in reader}
