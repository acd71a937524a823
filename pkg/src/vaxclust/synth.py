"""Deterministic synthetic district generator.

The raw district-level source tables are not redistributable, so desk-scale
ground truth comes from here: vaccination profiles are Gaussian noise around
the embedded per-cluster mean rates (:mod:`vaxclust.fixtures`), and GDSC
features carry a controllable signal in the direction of the published
findings — the lowest-coverage cluster is urban (rurality concentrated at
category 1) with higher shares of residents whose first language is not
English, who were born outside the UK, or who belong to ethnic minorities.
The five socioeconomic features are cluster-independent noise.

Generation is single-threaded and driven entirely by :class:`vaxclust.rng.Rng`,
so a (seed, spec) pair reproduces the same bytes anywhere. Draw order per
district: 14 rates, 8 numeric GDSC features (GDSC column order), rurality.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .dataset import (
    GDSC_COLUMNS,
    VACCINE_COLUMNS,
    DistrictId,
    GdscProfile,
    VaccinationProfile,
    YearDataset,
)
from .errors import SpecInvalid
from .fixtures import table2_means
from .rng import Rng

# Features that separate clusters; everything else is noise.
SIGNAL_PERCENT_FEATURES = ("english_proficiency", "ethnic_minority", "born_outside_uk")
SIGNAL_FEATURES = SIGNAL_PERCENT_FEATURES + ("rurality",)
NOISE_FEATURES = tuple(
    c for c in GDSC_COLUMNS if c not in SIGNAL_FEATURES
)

GDSC_BASE_MEANS = {
    "imd_avg_score": 22.0,
    "imd_prop_deprived": 10.0,
    "long_term_unemployed": 5.0,
    "routine_occupations": 12.0,
    "no_qualifications": 20.0,
    "english_proficiency": 10.0,
    "ethnic_minority": 18.0,
    "born_outside_uk": 15.0,
}

RURALITY_LOW_PROFILE = (0.92, 0.04, 0.02, 0.01, 0.005, 0.005)  # urban-heavy
RURALITY_HIGH_PROFILE = (0.30, 0.14, 0.14, 0.14, 0.14, 0.14)


@dataclass(frozen=True)
class SynthSpec:
    year: int
    k: int
    cluster_means: tuple[tuple[float, ...], ...]  # (k, 14), ascending coverage
    n_per_cluster: tuple[int, ...]
    vacc_noise_sd: float = 2.0
    gdsc_noise_sd: float = 5.0
    # half-distance between adjacent-extreme cluster means on the three
    # percent signal features; default puts the k=2 means 2 noise-sds apart
    signal_shift: float = 5.0
    # explicit per-feature per-cluster mean offsets; overrides signal_shift
    # for the named features, e.g. (("english_proficiency", (5.0, -5.0)),)
    signal_offsets: tuple[tuple[str, tuple[float, ...]], ...] | None = None
    # per-cluster rurality category distributions (6 probabilities each);
    # default interpolates urban-heavy -> spread along the coverage ranking
    rurality_profiles: tuple[tuple[float, ...], ...] | None = None
    zero_signal: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.k < 2 or len(self.cluster_means) != self.k or len(self.n_per_cluster) != self.k:
            raise SpecInvalid("cluster_means and n_per_cluster must both have k >= 2 entries")
        for means in self.cluster_means:
            if len(means) != len(VACCINE_COLUMNS):
                raise SpecInvalid("each cluster mean vector needs 14 rates")
            if any(not 0.0 <= m <= 100.0 for m in means):
                raise SpecInvalid("cluster mean rates must lie in [0, 100]")
        if any(n < 2 for n in self.n_per_cluster):
            raise SpecInvalid("each cluster needs at least 2 districts")
        if self.vacc_noise_sd < 0 or self.gdsc_noise_sd < 0:
            raise SpecInvalid("noise standard deviations must be non-negative")
        if self.signal_offsets is not None:
            numeric = tuple(c for c in GDSC_COLUMNS if c != "rurality")
            for name, offsets in self.signal_offsets:
                if name not in numeric:
                    raise SpecInvalid(f"unknown numeric GDSC feature {name!r}")
                if len(offsets) != self.k:
                    raise SpecInvalid(f"signal offsets for {name!r} need {self.k} entries")
        if self.rurality_profiles is not None:
            if len(self.rurality_profiles) != self.k:
                raise SpecInvalid(f"rurality_profiles needs {self.k} entries")
            for profile in self.rurality_profiles:
                if len(profile) != 6 or any(p < 0 for p in profile):
                    raise SpecInvalid("each rurality profile needs 6 non-negative weights")
                if abs(sum(profile) - 1.0) > 1e-9:
                    raise SpecInvalid("rurality profiles must sum to 1")


def default_spec(
    year: int = 2021,
    k: int = 2,
    n_per_cluster: tuple[int, ...] | None = None,
    seed: int = 0,
    zero_signal: bool = False,
    vacc_noise_sd: float = 2.0,
) -> SynthSpec:
    """Spec seeded from the embedded published cluster means."""
    _, means = table2_means(year, k)
    if n_per_cluster is None:
        n_per_cluster = tuple([75] * k) if k == 2 else tuple([150 // k] * k)
    return SynthSpec(
        year=year,
        k=k,
        cluster_means=tuple(tuple(float(x) for x in row) for row in means),
        n_per_cluster=tuple(n_per_cluster),
        vacc_noise_sd=vacc_noise_sd,
        zero_signal=zero_signal,
        seed=seed,
    )


def _clip(value: float, lo: float = 0.0, hi: float = 100.0) -> float:
    return min(hi, max(lo, value))


def _signal_multiplier(rank: int, k: int) -> float:
    """+1 for the lowest-coverage cluster, -1 for the highest, linear between."""
    return 1.0 - 2.0 * rank / (k - 1)


def _rurality_profile(rank: int, k: int, zero_signal: bool) -> tuple[float, ...]:
    if zero_signal:
        return RURALITY_HIGH_PROFILE
    w = rank / (k - 1)
    return tuple(
        (1.0 - w) * lo + w * hi for lo, hi in zip(RURALITY_LOW_PROFILE, RURALITY_HIGH_PROFILE)
    )


def generate(spec: SynthSpec) -> tuple[YearDataset, np.ndarray]:
    """Dataset plus true cluster labels (ascending-coverage cluster indices)."""
    spec.validate()
    rng = Rng(spec.seed)
    rows = []
    truth = []
    counter = 0
    numeric_names = [c for c in GDSC_COLUMNS if c != "rurality"]
    explicit = dict(spec.signal_offsets or ())
    for cluster, (means, n) in enumerate(zip(spec.cluster_means, spec.n_per_cluster)):
        mult = 0.0 if spec.zero_signal else _signal_multiplier(cluster, spec.k)
        if spec.rurality_profiles is not None:
            profile = spec.rurality_profiles[cluster]
        else:
            profile = _rurality_profile(cluster, spec.k, spec.zero_signal)
        for _ in range(n):
            district = DistrictId(id=f"S{counter:04d}", name=f"Synth District {counter:04d}")
            rates = tuple(
                _clip(m + rng.normal(sd=spec.vacc_noise_sd)) if spec.vacc_noise_sd > 0 else m
                for m in means
            )
            values = {}
            for name in numeric_names:
                if name in explicit:
                    shift = explicit[name][cluster]
                elif name in SIGNAL_PERCENT_FEATURES:
                    shift = spec.signal_shift * mult
                else:
                    shift = 0.0
                raw = GDSC_BASE_MEANS[name] + shift + rng.normal(sd=spec.gdsc_noise_sd)
                values[name] = _clip(raw) if name != "imd_avg_score" else max(0.0, raw)
            rurality = rng.categorical(profile) + 1
            rows.append(
                (district, VaccinationProfile(rates=rates), GdscProfile(rurality=rurality, **values))
            )
            truth.append(cluster)
            counter += 1
    # generation order is id order, so the sorted-dataset invariant holds
    return YearDataset(year=spec.year, rows=tuple(rows)), np.array(truth, dtype=np.int64)


def write_dataset_files(dataset: YearDataset, truth: np.ndarray, out_dir) -> dict[str, str]:
    """Write vaccination/gdsc tables in the ingestion format, plus truth labels."""
    os.makedirs(out_dir, exist_ok=True)
    year = dataset.year
    paths = {
        "vaccination": os.path.join(out_dir, f"vaccination_{year}.csv"),
        "gdsc": os.path.join(out_dir, f"gdsc_{year}.csv"),
        "truth": os.path.join(out_dir, "truth_labels.csv"),
    }
    # shortest positional decimal that round-trips; the ingestion grammar
    # rejects scientific notation
    fmt = lambda x: np.format_float_positional(x, unique=True, trim="0")
    with open(paths["vaccination"], "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["district_id", "district_name", *VACCINE_COLUMNS])
        for district, vacc, _ in dataset.rows:
            writer.writerow([district.id, district.name, *[fmt(r) for r in vacc.rates]])
    with open(paths["gdsc"], "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["district_id", *GDSC_COLUMNS])
        for district, _, gdsc in dataset.rows:
            numeric = dict(zip((c for c in GDSC_COLUMNS if c != "rurality"), gdsc.numeric_vector()))
            writer.writerow(
                [district.id]
                + [str(gdsc.rurality) if c == "rurality" else fmt(numeric[c]) for c in GDSC_COLUMNS]
            )
    with open(paths["truth"], "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["district_id", "cluster_index"])
        for (district, _, _), label in zip(dataset.rows, truth):
            writer.writerow([district.id, int(label)])
    return paths
