from __future__ import annotations

import json
import os
import shutil

import numpy as np
import pytest

from conftest import tree_digest
from test_hcluster import quick_dataset
from vaxclust import pipeline as pl
from vaxclust import synth
from vaxclust.errors import ConfigError, GeometryKeyMismatch
from vaxclust.fixtures import load_wtable_assignment, table2_means
from vaxclust.hcluster import ClusterAssignment


def small_inputs(tmp_path, years=(2021,), n=24, seed=3):
    indir = tmp_path / "in"
    for year in years:
        spec = synth.default_spec(year=year, k=2, n_per_cluster=(n // 2, n // 2), seed=seed + year)
        dataset, truth = synth.generate(spec)
        synth.write_dataset_files(dataset, truth, indir)
    return str(indir)


def small_config(tmp_path, years=(2021,), out="out", **extra):
    mapping = {
        "years": list(years),
        "input_dir": small_inputs(tmp_path, years),
        "out_dir": str(tmp_path / out),
        "k_values": [2],
        "n_trees": 12,
        "depth": 3,
        "k_folds": 4,
        "seed": 11,
    }
    mapping.update(extra)
    return pl.config_from_mapping(mapping)


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"years": [2021], "input_dir": "x", "out_dir": "y", "bogus": 1}))
    with pytest.raises(ConfigError):
        pl.load_config(path)


def test_config_requires_core_keys(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"years": [2021]}))
    with pytest.raises(ConfigError):
        pl.load_config(path)
    path.write_text("not json")
    with pytest.raises(ConfigError):
        pl.load_config(path)


def test_config_overrides_win(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"years": [2021], "input_dir": "x", "out_dir": "y", "seed": 1}))
    config = pl.load_config(path, {"seed": 99, "out_dir": "z"})
    assert config.seed == 99
    assert config.out_dir == "z"
    assert config.train.seed == 99


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        pl.config_from_mapping({"years": [], "input_dir": "a", "out_dir": "b"})
    with pytest.raises(ConfigError):
        pl.config_from_mapping(
            {"years": [2021], "input_dir": "a", "out_dir": "b", "linkage": "single"}
        )
    with pytest.raises(ConfigError):
        pl.config_from_mapping(
            {"years": [2021], "input_dir": "a", "out_dir": "b", "n_trees": 0}
        )


def test_run_pipeline_happy_path(tmp_path):
    config = small_config(tmp_path, k_values=[2, 3])
    result = pl.run_pipeline(config)
    assert result.exit_code == 0
    assert sorted(result.reports) == [(2021, 2), (2021, 3)]
    out = config.out_dir
    for tag in ("2021_k2", "2021_k3"):
        for stem in ("clusters", "cluster_means", "shap_importance", "tests", "boxstats", "crosstab", "report"):
            assert os.path.exists(os.path.join(out, f"{stem}_{tag}.csv")) or os.path.exists(
                os.path.join(out, f"{stem}_{tag}.json")
            ), (stem, tag)
    assert os.path.exists(os.path.join(out, "dendrogram_2021.csv"))
    assert os.path.exists(os.path.join(out, "metrics.csv"))
    assert os.path.exists(os.path.join(out, "metrics_full.json"))
    assert os.path.exists(os.path.join(out, "run_summary.json"))


def test_emitted_ids_subset_of_dataset(tmp_path):
    config = small_config(tmp_path)
    result = pl.run_pipeline(config)
    report = result.reports[(2021, 2)]
    with open(os.path.join(config.out_dir, "clusters_2021_k2.csv")) as f:
        emitted = {line.split(",")[0] for line in f.read().splitlines()[1:]}
    assert emitted == set(report.district_ids)


def test_report_round_trips(tmp_path):
    config = small_config(tmp_path)
    result = pl.run_pipeline(config)
    report = result.reports[(2021, 2)]
    assert pl.RunReport.from_json(report.to_json()) == report


def test_report_echoes_every_default(tmp_path):
    config = small_config(tmp_path)
    result = pl.run_pipeline(config)
    echo = result.reports[(2021, 2)].config_echo
    for key in ("linkage", "scale_rates", "k_folds", "n_trees", "depth", "learning_rate",
                "l2_leaf_reg", "ts_prior_weight", "n_permutations", "loss", "seed"):
        assert key in echo, key


def test_cell_isolation_k_out_of_range(tmp_path):
    config = small_config(tmp_path, k_values=[2, 99])
    result = pl.run_pipeline(config)
    assert result.exit_code == 3
    assert (2021, 2) in result.reports
    assert (2021, 99) in result.errors
    assert result.errors[(2021, 99)]["error"] == "KOutOfRange"
    # healthy cell artifacts still written
    assert os.path.exists(os.path.join(config.out_dir, "report_2021_k2.json"))
    table = open(os.path.join(config.out_dir, "metrics.csv")).read()
    assert "—" in table and table.rstrip().endswith("see run_summary.json")


def test_missing_input_file_is_data_error(tmp_path):
    config = pl.config_from_mapping({
        "years": [2021], "input_dir": str(tmp_path / "nowhere"),
        "out_dir": str(tmp_path / "out"),
    })
    result = pl.run_pipeline(config)
    assert result.exit_code == 2
    assert not result.reports


def test_determinism_across_runs_and_threads(tmp_path):
    indir = small_inputs(tmp_path, n=20)
    digests = []
    out = tmp_path / "out"
    for threads in (1, 1, 4):
        if out.exists():
            shutil.rmtree(out)
        config = pl.config_from_mapping({
            "years": [2021], "input_dir": indir, "out_dir": str(out),
            "k_values": [2, 3], "n_trees": 8, "depth": 3, "k_folds": 4,
            "seed": 2, "threads": threads,
        })
        assert pl.run_pipeline(config).exit_code == 0
        digests.append(tree_digest(out))
    assert digests[0] == digests[1] == digests[2]


def _assignment_for(dataset, labels, names=("L", "H")):
    return ClusterAssignment(k=len(names), labels=np.asarray(labels), ordered_names=tuple(names))


def test_choropleth_without_geometry_is_property_array():
    dataset = quick_dataset([[60.0] * 14, [90.0] * 14])
    doc = pl.emit_choropleth(_assignment_for(dataset, [0, 1]), dataset)
    assert isinstance(doc, list) and len(doc) == 2
    assert doc[0]["district_id"] == "E000"
    assert doc[0]["cluster_name"] == "L"
    assert doc[0]["mean_overall_coverage"] == 60.0


def test_choropleth_missing_geometry_names_district():
    dataset = quick_dataset([[60.0] * 14, [90.0] * 14])
    geometry = {
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature", "geometry": {"type": "Point", "coordinates": [0, 0]},
             "properties": {"district_id": "E000"}},
        ],
    }
    with pytest.raises(GeometryKeyMismatch) as err:
        pl.emit_choropleth(_assignment_for(dataset, [0, 1]), dataset, geometry)
    assert err.value.missing_ids == ["E001"]


def test_choropleth_with_full_geometry():
    dataset = quick_dataset([[60.0] * 14, [90.0] * 14])
    geometry = {
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature", "geometry": {"type": "Point", "coordinates": [i, 0]},
             "properties": {"district_id": f"E{i:03d}"}}
            for i in range(2)
        ],
    }
    doc = pl.emit_choropleth(_assignment_for(dataset, [0, 1]), dataset, geometry)
    assert doc["type"] == "FeatureCollection"
    assert [f["properties"]["cluster_index"] for f in doc["features"]] == [0, 1]


def test_choropleth_wtable_2023_transitions():
    rows = load_wtable_assignment(2023)
    _, means = table2_means(2023, 2)
    rates = [list(means[r["cluster_index"]]) for r in rows]
    dataset = quick_dataset(rates, ids=[r["district_id"] for r in rows])
    assignment = _assignment_for(dataset, [r["cluster_index"] for r in rows])
    by_id = {p["district_id"]: p for p in pl.emit_choropleth(assignment, dataset)}
    # the large urban districts moved to the high cluster in 2023-24
    assert by_id["E08000025"]["cluster_name"] == "H"  # Birmingham
    assert by_id["E08000003"]["cluster_name"] == "H"  # Manchester
    assert by_id["E08000012"]["cluster_name"] == "H"  # Liverpool
    # while these two shifted from high to low coverage
    assert by_id["E10000003"]["cluster_name"] == "L"  # Cambridgeshire
    assert by_id["E10000006"]["cluster_name"] == "L"  # Cumbria


class _StubReport:
    def __init__(self, accuracy):
        self.metrics = {"mean": {
            "accuracy": accuracy, "macro_precision": accuracy - 0.01,
            "macro_recall": accuracy - 0.02, "macro_f1": accuracy - 0.03,
        }}


def test_emit_table3_formatting():
    reports = {(2021, 2): _StubReport(0.921)}
    table = pl.emit_table3(reports, [2021], [2, 3, 6])
    lines = table.splitlines()
    assert lines[0] == "year,metric,2 cluster,3 cluster,6 cluster"
    assert lines[1].startswith("2021-2022,Accuracy,92.1,")
    assert lines[1].endswith("—,—")
    assert lines[-1].startswith("#")


def test_emit_table3_complete_grid_has_no_footnote():
    reports = {(2021, k): _StubReport(0.5) for k in (2, 3, 6)}
    table = pl.emit_table3(reports, [2021], [2, 3, 6])
    assert "#" not in table
    assert "50.0" in table
