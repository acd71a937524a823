"""End-to-end orchestration: cluster -> classify -> attribute -> report.

For each study year the vaccination rates are (optionally) z-scored and
agglomerated once; each configured cluster count k then gets its own cell:
cut, coverage-ordered labeling, cluster-mean table, stratified
cross-validation of the GDSC classifier, per-fold held-out Shapley
importances, rank tests between the lowest- and highest-coverage clusters,
box-plot summaries, and the rurality cross-tabulation.

Cells are independent units of work: a failure is recorded and the
remaining cells still run. All artifact writes happen on the main thread in
a fixed cell order, and every stochastic step seeds from
(seed, year, k, fold), so a rerun with the same config and seed produces a
byte-identical artifact tree at any worker-thread count.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy

from . import __version__
from .dataset import VACCINE_COLUMNS, GDSC_COLUMNS, YearDataset, load_year, standardize
from .errors import ConfigError, DataError, GeometryKeyMismatch, KOutOfRange, VaxclustError
from .evaluation import cross_validate, dataset_design
from .gbdt import TrainConfig
from .hcluster import (
    LINKAGES,
    ClusterAssignment,
    agglomerate,
    cluster_mean_table,
    cut_at_k,
    dendrogram_table,
    label_by_coverage,
    pairwise_distances,
    suggest_k,
)
from .rng import derive_seed
from .shapley import fold_average, global_importance
from .stats import box_stats, mann_whitney_u, rurality_cross_tab, welch_t

METRIC_DISPLAY = (
    ("Accuracy", "accuracy"),
    ("Precision", "macro_precision"),
    ("Recall", "macro_recall"),
    ("F1 score", "macro_f1"),
)

_CONFIG_KEYS = {
    "years",
    "input_dir",
    "out_dir",
    "k_values",
    "linkage",
    "scale_rates",
    "k_folds",
    "seed",
    "geometry_path",
    "allow_partial",
    "threads",
    "n_trees",
    "depth",
    "learning_rate",
    "l2_leaf_reg",
    "ts_prior_weight",
    "n_permutations",
    "loss",
}


@dataclass(frozen=True)
class RunConfig:
    years: tuple[int, ...]
    input_dir: str
    out_dir: str
    k_values: tuple[int, ...] = (2, 3, 6)
    linkage: str = "ward"
    scale_rates: bool = True
    k_folds: int = 5
    seed: int = 0
    geometry_path: str | None = None
    allow_partial: bool = False
    threads: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        if not self.years:
            raise ConfigError("years must be non-empty")
        if not self.k_values or any(k < 2 for k in self.k_values):
            raise ConfigError("k_values must be >= 2")
        if self.linkage not in LINKAGES:
            raise ConfigError(f"linkage must be one of {LINKAGES}")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be >= 2")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        try:
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def echo(self) -> dict:
        """Every result-affecting setting, defaults included — provenance.

        Thread count is deliberately absent: artifacts are contractually
        independent of it, so echoing it would break byte-identity checks.
        """
        doc = {
            "years": list(self.years),
            "input_dir": self.input_dir,
            "out_dir": self.out_dir,
            "k_values": list(self.k_values),
            "linkage": self.linkage,
            "scale_rates": self.scale_rates,
            "k_folds": self.k_folds,
            "seed": self.seed,
            "geometry_path": self.geometry_path,
            "allow_partial": self.allow_partial,
        }
        doc.update(self.train.to_dict())
        return doc

    def vaccination_path(self, year: int) -> str:
        return os.path.join(self.input_dir, f"vaccination_{year}.csv")

    def gdsc_path(self, year: int) -> str:
        return os.path.join(self.input_dir, f"gdsc_{year}.csv")


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Flat JSON config file; unknown keys are errors, CLI overrides win."""
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a flat JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    raw.update(overrides or {})
    return config_from_mapping(raw)


def config_from_mapping(raw: dict) -> RunConfig:
    missing = {"years", "input_dir", "out_dir"} - set(raw)
    if missing:
        raise ConfigError(f"missing required config key(s): {sorted(missing)}")
    train_keys = set(TrainConfig().to_dict()) - {"seed"}
    train_kwargs = {k: raw[k] for k in train_keys if k in raw}
    try:
        config = RunConfig(
            years=tuple(int(y) for y in raw["years"]),
            input_dir=str(raw["input_dir"]),
            out_dir=str(raw["out_dir"]),
            k_values=tuple(int(k) for k in raw.get("k_values", (2, 3, 6))),
            linkage=str(raw.get("linkage", "ward")),
            scale_rates=bool(raw.get("scale_rates", True)),
            k_folds=int(raw.get("k_folds", 5)),
            seed=int(raw.get("seed", 0)),
            geometry_path=raw.get("geometry_path"),
            allow_partial=bool(raw.get("allow_partial", False)),
            threads=int(raw.get("threads", 1)),
            train=TrainConfig(seed=int(raw.get("seed", 0)), **train_kwargs),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    config.validate()
    return config


@dataclass
class RunReport:
    year: int
    k: int
    suggested_k: int
    district_ids: list[str]
    district_names: list[str]
    cluster_labels: list[int]
    cluster_names: list[str]
    cluster_mean_table: list[list[float]]
    metrics: dict
    importance: dict
    tests: list[dict]
    welch: list[dict]
    box_stats: dict
    crosstab: list[list[int]]
    config_echo: dict
    versions: dict
    seed: int
    notes: list[str]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls(**json.loads(text))


def _versions() -> dict:
    return {
        "vaxclust": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": sys.version.split()[0],
    }


def analyze_cell(
    dataset: YearDataset,
    assignment: ClusterAssignment,
    suggested: int,
    config: RunConfig,
) -> RunReport:
    """Everything downstream of the cut for one (year, k) cell."""
    year, k = dataset.year, assignment.k
    cell_seed = derive_seed(config.seed, year, k)
    means = cluster_mean_table(assignment, dataset)

    train_config = replace(config.train, seed=cell_seed)
    cv = cross_validate(dataset, assignment, train_config, k_folds=config.k_folds, seed=cell_seed)

    numeric, categorical, _, _ = dataset_design(dataset)
    fold_importances = []
    for model, test_idx in zip(cv.models, cv.test_indices):
        design = model.encode_features(numeric[test_idx], categorical[test_idx])
        fold_importances.append(global_importance(model, design))
    combined = fold_average(fold_importances)

    low = assignment.labels == 0
    high = assignment.labels == k - 1
    gdsc_matrix = np.column_stack([numeric, dataset.rurality_column().astype(np.float64)])
    gdsc_names = [c for c in GDSC_COLUMNS if c != "rurality"] + ["rurality"]
    tests = []
    welch_rows = []
    boxes: dict[str, dict] = {}
    for j, name in enumerate(gdsc_names):
        column = gdsc_matrix[:, j]
        result = mann_whitney_u(column[low], column[high], feature_name=name)
        tests.append(
            {
                "feature_name": name,
                "u_statistic": result.u_statistic,
                "z": result.z,
                "p_two_sided": result.p_two_sided,
                "n_low": result.n_low,
                "n_high": result.n_high,
                "significant_at_0_05": result.significant_at_0_05,
                "method": result.method,
            }
        )
        w = welch_t(column[low], column[high], feature_name=name)
        welch_rows.append(
            {
                "feature_name": name,
                "t_statistic": w.t_statistic,
                "dof": w.dof,
                "p_two_sided": w.p_two_sided,
            }
        )
        boxes[name] = {
            str(cluster): {
                "minimum": b.minimum,
                "q1": b.q1,
                "median": b.median,
                "q3": b.q3,
                "maximum": b.maximum,
                "whisker_low": b.whisker_low,
                "whisker_high": b.whisker_high,
                "outliers": list(b.outliers),
            }
            for cluster, b in box_stats(column, assignment.labels).items()
        }

    crosstab = rurality_cross_tab(assignment, dataset)
    notes = [
        "no class weighting applied",
        "shap computed on each fold's held-out rows, then fold-averaged",
        "rank tests compare the lowest- vs highest-coverage clusters",
    ] + list(cv.bundle.warnings)

    return RunReport(
        year=year,
        k=k,
        suggested_k=suggested,
        district_ids=dataset.district_ids(),
        district_names=dataset.district_names(),
        cluster_labels=[int(c) for c in assignment.labels],
        cluster_names=list(assignment.ordered_names),
        cluster_mean_table=[[float(v) for v in row] for row in means],
        metrics={
            "mean": cv.bundle.mean.to_dict(),
            "per_fold": [r.to_dict() for r in cv.bundle.per_fold],
            "pooled_confusion": [[int(v) for v in row] for row in cv.bundle.pooled_confusion],
            "warnings": list(cv.bundle.warnings),
        },
        importance={
            "feature_names": list(combined.feature_names),
            "values": [float(v) for v in combined.values],
            "per_fold": [[float(v) for v in imp.values] for imp in fold_importances],
        },
        tests=tests,
        welch=welch_rows,
        box_stats=boxes,
        crosstab=[[int(v) for v in row] for row in crosstab],
        config_echo=config.echo(),
        versions=_versions(),
        seed=cell_seed,
        notes=notes,
    )


def emit_choropleth(assignment: ClusterAssignment, dataset: YearDataset, geometry: dict | None = None):
    """Geo feature collection (with geometry) or flat property array (without).

    ``geometry`` is a parsed GeoJSON FeatureCollection whose features carry
    the district id in properties.district_id (or the feature ``id``).
    """
    rates = dataset.vaccination_matrix()
    properties = []
    for row, (district, _, _) in enumerate(dataset.rows):
        properties.append(
            {
                "district_id": district.id,
                "district_name": district.name,
                "cluster_index": int(assignment.labels[row]),
                "cluster_name": assignment.name_of(int(assignment.labels[row])),
                "mean_overall_coverage": float(rates[row].mean()),
            }
        )
    if geometry is None:
        return properties
    geometries = {}
    for feature in geometry.get("features", []):
        key = feature.get("properties", {}).get("district_id", feature.get("id"))
        if key is not None:
            geometries[str(key)] = feature.get("geometry")
    missing = [p["district_id"] for p in properties if p["district_id"] not in geometries]
    if missing:
        raise GeometryKeyMismatch(missing)
    return {
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature", "geometry": geometries[p["district_id"]], "properties": p}
            for p in properties
        ],
    }


def emit_table3(reports: dict, years, k_values) -> str:
    """Metrics table, one row per (year, metric), one column per k, percent
    with one decimal; failed cells show an em dash with a trailing footnote."""
    header = ["year", "metric"] + [f"{k} cluster" for k in k_values]
    lines = [",".join(header)]
    any_missing = False
    for year in years:
        for display, attr in METRIC_DISPLAY:
            cells = []
            for k in k_values:
                report = reports.get((year, k))
                if report is None:
                    cells.append("—")
                    any_missing = True
                else:
                    cells.append(f"{100.0 * report.metrics['mean'][attr]:.1f}")
            lines.append(",".join([f"{year}-{year + 1}", display] + cells))
    if any_missing:
        lines.append("# — = cell failed or was skipped; see run_summary.json")
    return "\n".join(lines) + "\n"


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def _csv_line(values) -> str:
    out = []
    for v in values:
        s = str(v)
        out.append(f'"{s}"' if ("," in s or '"' in s) else s)
    return ",".join(out)


def write_cell_artifacts(report: RunReport, assignment, dataset, config: RunConfig) -> None:
    year, k = report.year, report.k
    out = config.out_dir
    tag = f"{year}_k{k}"

    lines = ["district_id,district_name,cluster_index,cluster_name"]
    for i, district_id in enumerate(report.district_ids):
        lines.append(
            _csv_line(
                [
                    district_id,
                    report.district_names[i],
                    report.cluster_labels[i],
                    report.cluster_names[report.cluster_labels[i]],
                ]
            )
        )
    _write(os.path.join(out, f"clusters_{tag}.csv"), "\n".join(lines) + "\n")

    lines = ["cluster_name," + ",".join(VACCINE_COLUMNS)]
    for c, row in enumerate(report.cluster_mean_table):
        lines.append(",".join([report.cluster_names[c]] + [f"{v:.1f}" for v in row]))
    _write(os.path.join(out, f"cluster_means_{tag}.csv"), "\n".join(lines) + "\n")

    n_folds = len(report.importance["per_fold"])
    lines = ["feature_name,mean_abs_shap,rank," + ",".join(f"fold_{i}" for i in range(n_folds))]
    order = sorted(
        range(len(report.importance["feature_names"])),
        key=lambda j: (-report.importance["values"][j], j),
    )
    rank_of = {j: r + 1 for r, j in enumerate(order)}
    for j, name in enumerate(report.importance["feature_names"]):
        per_fold = [repr(fold[j]) for fold in report.importance["per_fold"]]
        lines.append(
            ",".join([name, repr(report.importance["values"][j]), str(rank_of[j])] + per_fold)
        )
    _write(os.path.join(out, f"shap_importance_{tag}.csv"), "\n".join(lines) + "\n")

    lines = ["feature,u,z,p,significant,method,welch_t,welch_dof,welch_p"]
    for t, w in zip(report.tests, report.welch):
        lines.append(
            ",".join(
                [
                    t["feature_name"],
                    repr(t["u_statistic"]),
                    repr(t["z"]),
                    repr(t["p_two_sided"]),
                    str(t["significant_at_0_05"]).lower(),
                    t["method"],
                    repr(w["t_statistic"]),
                    repr(w["dof"]),
                    repr(w["p_two_sided"]),
                ]
            )
        )
    _write(os.path.join(out, f"tests_{tag}.csv"), "\n".join(lines) + "\n")

    lines = ["feature,cluster_index,cluster_name,min,q1,median,q3,max,whisker_low,whisker_high,outlier_count"]
    for feature, clusters in report.box_stats.items():
        for cluster, b in sorted(clusters.items(), key=lambda kv: int(kv[0])):
            lines.append(
                ",".join(
                    [
                        feature,
                        cluster,
                        report.cluster_names[int(cluster)],
                        repr(b["minimum"]),
                        repr(b["q1"]),
                        repr(b["median"]),
                        repr(b["q3"]),
                        repr(b["maximum"]),
                        repr(b["whisker_low"]),
                        repr(b["whisker_high"]),
                        str(len(b["outliers"])),
                    ]
                )
            )
    _write(os.path.join(out, f"boxstats_{tag}.csv"), "\n".join(lines) + "\n")

    lines = ["rurality," + ",".join(report.cluster_names)]
    for r, row in enumerate(report.crosstab):
        lines.append(",".join([str(r + 1)] + [str(v) for v in row]))
    _write(os.path.join(out, f"crosstab_{tag}.csv"), "\n".join(lines) + "\n")

    geometry = None
    if config.geometry_path:
        with open(config.geometry_path, encoding="utf-8") as f:
            geometry = json.load(f)
    doc = emit_choropleth(assignment, dataset, geometry)
    suffix = "geojson" if geometry is not None else "json"
    _write(os.path.join(out, f"choropleth_{tag}.{suffix}"), json.dumps(doc, sort_keys=True, indent=2) + "\n")

    _write(os.path.join(out, f"report_{tag}.json"), report.to_json() + "\n")


@dataclass
class PipelineResult:
    reports: dict
    errors: dict
    exit_code: int


def run_pipeline(config: RunConfig) -> PipelineResult:
    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)

    datasets: dict[int, YearDataset] = {}
    year_setup: dict[int, tuple] = {}
    errors: dict = {}
    data_error = False
    for year in config.years:
        try:
            dataset = load_year(
                config.vaccination_path(year),
                config.gdsc_path(year),
                year,
                allow_partial=config.allow_partial,
            )
            rates = dataset.vaccination_matrix()
            matrix = standardize(rates, VACCINE_COLUMNS).values if config.scale_rates else rates
            dendro = agglomerate(pairwise_distances(matrix), linkage=config.linkage)
            suggested = suggest_k(dendro, 2, min(10, len(dataset) - 1))
            datasets[year] = dataset
            year_setup[year] = (dendro, suggested)
            _write(os.path.join(config.out_dir, f"dendrogram_{year}.csv"), dendrogram_table(dendro))
        except (DataError, OSError) as exc:
            data_error = True
            for k in config.k_values:
                errors[(year, k)] = {
                    "year": year,
                    "k": k,
                    "stage": "ingestion",
                    "error": type(exc).__name__,
                    "message": str(exc),
                }

    cells = [(year, k) for year in config.years for k in config.k_values if year in datasets]

    def run_cell(cell):
        year, k = cell
        dataset = datasets[year]
        dendro, suggested = year_setup[year]
        if k > len(dataset) - 1:
            raise KOutOfRange(f"k={k} needs at most n-1={len(dataset) - 1} clusters")
        raw = cut_at_k(dendro, k)
        assignment = label_by_coverage(raw, dataset, k)
        report = analyze_cell(dataset, assignment, suggested, config)
        return cell, report, assignment

    results: dict = {}
    assignments: dict = {}
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            futures = {pool.submit(run_cell, cell): cell for cell in cells}
            for future, cell in futures.items():
                try:
                    _, report, assignment = future.result()
                    results[cell] = report
                    assignments[cell] = assignment
                except VaxclustError as exc:
                    errors[cell] = {
                        "year": cell[0],
                        "k": cell[1],
                        "stage": "analysis",
                        "error": type(exc).__name__,
                        "message": str(exc),
                    }
    else:
        for cell in cells:
            try:
                _, report, assignment = run_cell(cell)
                results[cell] = report
                assignments[cell] = assignment
            except VaxclustError as exc:
                errors[cell] = {
                    "year": cell[0],
                    "k": cell[1],
                    "stage": "analysis",
                    "error": type(exc).__name__,
                    "message": str(exc),
                }

    # artifact writes in fixed order, independent of executor scheduling
    for cell in sorted(results):
        write_cell_artifacts(results[cell], assignments[cell], datasets[cell[0]], config)

    _write(
        os.path.join(config.out_dir, "metrics.csv"),
        emit_table3(results, config.years, config.k_values),
    )
    full = {
        f"{year}_k{k}": results[(year, k)].metrics
        for (year, k) in sorted(results)
    }
    _write(
        os.path.join(config.out_dir, "metrics_full.json"),
        json.dumps(full, sort_keys=True, indent=2) + "\n",
    )

    summary = {
        "config": config.echo(),
        "versions": _versions(),
        "suggested_k": {str(year): year_setup[year][1] for year in year_setup},
        "cells_ok": [f"{y}_k{k}" for (y, k) in sorted(results)],
        "cells_failed": [errors[c] for c in sorted(errors)],
    }
    _write(
        os.path.join(config.out_dir, "run_summary.json"),
        json.dumps(summary, sort_keys=True, indent=2) + "\n",
    )

    if data_error:
        exit_code = 2
    elif errors:
        exit_code = 3
    else:
        exit_code = 0
    return PipelineResult(reports=results, errors=errors, exit_code=exit_code)
