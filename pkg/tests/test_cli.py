import json

import pandas as pd
import pytest
from typer.testing import CliRunner

from grople import __version__
from grople.cli import app

runner = CliRunner()

SMALL_FIT = ["--d", "6", "-k", "3", "--lam1", "0.01", "--lam2", "0.1"]


def _experiment(tmp_path, name="experiment.json", **overrides):
    document = {
        "datasets": [{"synthetic": 40}],
        "d": 6,
        "n_groups": 3,
        "lam1": 0.01,
        "lam2": 0.1,
        "alpha": 0.1,
        "beta": [0.1, 1.0],
        "ridge_lam": [0.1, 1.0],
        "folds": 2,
        "apg_max_iter": 100,
        "outer_max_iter": 10,
        **overrides,
    }
    path = tmp_path / name
    path.write_text(json.dumps(document))
    return path


def _invoke(*args):
    result = runner.invoke(app, [str(a) for a in args])
    assert result.exit_code == 0, result.output
    return result


def test_version():
    assert _invoke("version").output.strip() == __version__


def test_fit_predict_evaluate(tmp_path):
    _invoke("fit", "--synthetic", 50, *SMALL_FIT, "--out", tmp_path)
    assert (tmp_path / "model.json").exists()
    partition = pd.read_csv(tmp_path / "partition.csv")
    assert list(partition.columns) == ["label_name", "group_index"]
    assert sorted(partition["group_index"].unique()) == [0, 1, 2]

    _invoke("predict", "--model", tmp_path / "model.json", "--synthetic", 50, "--out", tmp_path)
    predictions = pd.read_csv(tmp_path / "predictions.csv")
    assert predictions.shape == (50, 40)
    assert set(predictions.to_numpy().ravel()) <= {-1, 1}

    result = _invoke("evaluate", "--model", tmp_path / "model.json", "--synthetic", 50, "--out", tmp_path)
    assert "micro_f1" in result.output
    assert set(json.loads((tmp_path / "evaluation.json").read_text())) == {
        "accuracy", "example_f1", "macro_f1", "micro_f1"
    }


def test_fit_ridge_baseline(tmp_path):
    _invoke("fit", "--synthetic", 30, "--method", "ridge-br", "--ridge-lam", 0.5, "--out", tmp_path)
    assert json.loads((tmp_path / "model.json").read_text())["method"] == "ridge-br"
    assert not (tmp_path / "partition.csv").exists()


def test_fit_unknown_method(tmp_path):
    result = runner.invoke(app, ["fit", "--synthetic", "30", "--method", "svm", "--out", str(tmp_path)])
    assert result.exit_code == 1
    assert "unknown method" in result.output


def test_conflicting_dataset_options(tmp_path):
    result = runner.invoke(app, ["group", "-k", "2", "--synthetic", "30", "--cache", str(tmp_path)])
    assert result.exit_code == 1
    assert "Error" in result.output


def test_group_on_mulan_pair(tmp_path, tiny_arff, tiny_xml):
    _invoke("group", "-k", 2, "--arff", tiny_arff, "--xml", tiny_xml, "--drop", "protein", "--out", tmp_path)
    partition = pd.read_csv(tmp_path / "partition.csv")
    assert partition["label_name"].tolist() == ["l1", "l2", "l3"]


def test_cache_then_fit_from_cache(tmp_path, tiny_arff, tiny_xml):
    cache_dir = tmp_path / "tiny"
    _invoke("cache", "--arff", tiny_arff, "--xml", tiny_xml, "--drop", "protein", "--out", cache_dir)
    assert (cache_dir / "features.csv").exists() and (cache_dir / "labels.csv").exists()
    _invoke("fit", "--cache", cache_dir, "--d", 2, "-k", 2, "--out", tmp_path / "model")
    assert (tmp_path / "model" / "model.json").exists()


def test_sparsity_export(tmp_path):
    _invoke("fit", "--synthetic", 50, *SMALL_FIT, "--out", tmp_path)
    _invoke("sparsity", "--model", tmp_path / "model.json", "--out", tmp_path)
    frame = pd.read_csv(tmp_path / "sparsity.csv")
    assert list(frame.columns) == ["group_index", "row_index", "is_nonzero"]
    assert len(frame) == 3 * 6


def test_sparsity_rejects_ridge_model(tmp_path):
    _invoke("fit", "--synthetic", 30, "--method", "ridge-br", "--out", tmp_path)
    result = runner.invoke(app, ["sparsity", "--model", str(tmp_path / "model.json"), "--out", str(tmp_path)])
    assert result.exit_code == 1


def test_cv_writes_reports(tmp_path):
    result = _invoke("cv", "--config", _experiment(tmp_path), "--seed", 3, "--out", tmp_path)
    document = json.loads((tmp_path / "report.json").read_text())
    assert document["seed"] == 3
    assert "synthetic40" in result.output
    frame = pd.read_csv(tmp_path / "report.csv")
    assert list(frame.columns) == ["dataset", "fold", "metric", "value"]
    assert len(frame) == 2 * 4


def test_cv_rejects_single_fold(tmp_path):
    result = runner.invoke(app, ["cv", "--config", str(_experiment(tmp_path, folds=1)), "--out", str(tmp_path)])
    assert result.exit_code == 1
    assert "folds" in result.output
    assert not (tmp_path / "report.json").exists()


def test_cv_rejects_unreadable_config(tmp_path):
    result = runner.invoke(app, ["cv", "--config", str(tmp_path / "absent.json")])
    assert result.exit_code == 1


def test_grid_writes_tables(tmp_path):
    _invoke("grid", "--config", _experiment(tmp_path, lam2=[0.1, 1.0]), "--out", tmp_path)
    document = json.loads((tmp_path / "grid.json").read_text())
    assert [c["cell"]["lam2"] for c in document["datasets"]["synthetic40"]] == [0.1, 1.0]
    frame = pd.read_csv(tmp_path / "grid.csv")
    assert set(frame["metric"]) == {"accuracy", "example_f1", "macro_f1", "micro_f1"}


@pytest.mark.parametrize("verbose", [[], ["-v"]])
def test_report_ranks_methods(tmp_path, verbose):
    datasets = [{"synthetic": 40, "name": "a"}, {"synthetic": 45, "name": "b"}]
    grople_cfg = _experiment(tmp_path, "grople.json", datasets=datasets)
    ridge_cfg = _experiment(tmp_path, "ridge.json", datasets=datasets, method="ridge-br")
    _invoke("cv", "--config", grople_cfg, "--out", tmp_path / "grople")
    _invoke("cv", "--config", ridge_cfg, "--out", tmp_path / "ridge")

    result = _invoke(
        "report", tmp_path / "grople" / "report.json", tmp_path / "ridge" / "report.json",
        "--metric", "micro_f1", "--out", tmp_path, *verbose,
    )
    ranks = pd.read_csv(tmp_path / "ranks.csv")
    assert ranks["method"].tolist() == ["grople", "ridge-br"]
    assert ranks["avg_rank"].sum() == pytest.approx(3.0)
    cd = json.loads((tmp_path / "cd.json").read_text())
    assert cd["q_alpha"] == 1.960
    assert "CD" in result.output


def test_report_rejects_invalid_document(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"method": "grople"}))
    result = runner.invoke(app, ["report", str(bad)])
    assert result.exit_code == 1
    assert "schema" in result.output
