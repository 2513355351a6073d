"""GroPLE command line.

    grople fit --arff data.arff --xml data.xml --out out/
    grople predict --model out/model.json --cache cache/ --out out/
    grople cv --config experiment.json --seed 1 --workers 4
    grople report out/a/report.json out/b/report.json

Every subcommand exits 1 on error with the message on stderr.
"""

import functools
import json
import logging
from pathlib import Path
from typing import Annotated, List, Optional

import numpy as np
import pandas as pd
import typer
from pydantic import ValidationError

from . import __version__
from .baseline import RidgeBRModel, fit_ridge_br, predict_ridge_br
from .config import (
    DatasetSource,
    ExperimentConfig,
    config,
    configure_logging,
    format_validation_error,
    load_experiment_config,
)
from .dataset import MultiLabelDataset, load_mulan, save_cache
from .errors import ConfigError, GropleError
from .grouping import group_labels
from .harness import (
    compare_reports,
    load_source,
    report_document,
    report_frame,
    reports_from_document,
    run_cv,
    run_grid,
    validate_report,
)
from .metrics import METRIC_NAMES, evaluate
from .persistence import (
    load_model,
    partition_frame,
    predictions_frame,
    save_model,
    sparsity_frame,
    sparsity_masks,
    write_csv,
    write_json,
)
from .predictor import GropleParams, calibrate_thresholds, fit, predict
from .solver import ApgSettings

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="grople",
    help="Group-preserving label embedding for multi-label classification.",
    no_args_is_help=True,
    add_completion=False,
)

ArffOpt = Annotated[Optional[Path], typer.Option("--arff", help="MULAN ARFF data file")]
XmlOpt = Annotated[Optional[Path], typer.Option("--xml", help="MULAN XML label header")]
CacheOpt = Annotated[Optional[Path], typer.Option("--cache", help="Dataset cache directory")]
SyntheticOpt = Annotated[Optional[int], typer.Option("--synthetic", help="Planted synthetic dataset of N instances")]
DropOpt = Annotated[Optional[List[str]], typer.Option("--drop", help="Attribute to exclude from X (repeatable)")]
NameOpt = Annotated[Optional[str], typer.Option("--name", help="Dataset name in reports")]
OutOpt = Annotated[Optional[Path], typer.Option("--out", help="Output directory")]
SeedOpt = Annotated[Optional[int], typer.Option("--seed", help="Random seed")]
WorkersOpt = Annotated[Optional[int], typer.Option("--workers", help="Parallel workers")]
VerboseOpt = Annotated[bool, typer.Option("--verbose", "-v", help="Log progress at INFO")]


def _handle_errors(command):
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except GropleError as e:
            typer.echo(f"Error: {e}", err=True)
            raise typer.Exit(code=1)
    return wrapper


def _setup(verbose: bool) -> None:
    configure_logging("INFO" if verbose else None)


def _out_dir(out: Optional[Path]) -> Path:
    path = Path(out or config.OUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_dataset(arff: Optional[Path], xml: Optional[Path], cache: Optional[Path],
                  synthetic: Optional[int], drop: Optional[List[str]], name: Optional[str],
                  seed: int) -> MultiLabelDataset:
    try:
        source = DatasetSource(name=name, arff=arff, xml=xml, cache=cache, synthetic=synthetic,
                               drop_attributes=drop or [])
    except ValidationError as e:
        raise ConfigError(f"dataset options: {format_validation_error(e)}")
    return load_source(source, seed=seed)


def _experiment(config_path: Path, seed: Optional[int], workers: Optional[int]) -> ExperimentConfig:
    experiment = load_experiment_config(config_path)
    return experiment.with_overrides(seed=seed, workers=workers)


@app.command("fit")
@_handle_errors
def fit_command(
    arff: ArffOpt = None,
    xml: XmlOpt = None,
    cache: CacheOpt = None,
    synthetic: SyntheticOpt = None,
    drop: DropOpt = None,
    name: NameOpt = None,
    method: Annotated[str, typer.Option(help="grople or ridge-br")] = "grople",
    d: Annotated[int, typer.Option("--d", help="Latent dimension")] = 100,
    groups: Annotated[int, typer.Option("--groups", "-k", help="Number of label groups K")] = 10,
    lam1: Annotated[float, typer.Option(help="Ridge weight on U")] = 0.001,
    lam2: Annotated[float, typer.Option(help="Group-sparsity weight on V")] = 1.0,
    alpha: Annotated[float, typer.Option(help="Correlation weight of the feature map")] = 0.1,
    beta: Annotated[float, typer.Option(help="l1 weight of the feature map")] = 0.1,
    ridge_lam: Annotated[float, typer.Option(help="Ridge weight (ridge-br)")] = 1.0,
    standardize: Annotated[bool, typer.Option(help="z-score features")] = False,
    bias: Annotated[bool, typer.Option(help="Append a bias column")] = False,
    keep_u: Annotated[bool, typer.Option(help="Store U in the model file")] = False,
    calibrate: Annotated[bool, typer.Option(help="Per-label threshold calibration")] = False,
    seed: SeedOpt = None,
    workers: WorkersOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
):
    """Fit a model on a dataset and write model.json."""
    _setup(verbose)
    seed = config.SEED if seed is None else seed
    dataset = _load_dataset(arff, xml, cache, synthetic, drop, name, seed)
    out_dir = _out_dir(out)

    if method == "ridge-br":
        model = fit_ridge_br(dataset.X, dataset.Y, ridge_lam, dataset.label_names,
                             standardize=standardize, bias=bias)
    elif method == "grople":
        params = GropleParams(d=d, n_groups=groups, lam1=lam1, lam2=lam2, alpha=alpha, beta=beta,
                              standardize=standardize, bias=bias, keep_u=keep_u,
                              settings=ApgSettings())
        model = fit(dataset, params, seed=seed, workers=workers or config.WORKERS)
        if calibrate:
            model = calibrate_thresholds(model, dataset.X, dataset.Y)
        write_csv(partition_frame(model.partition, model.label_names), out_dir / "partition.csv")
    else:
        raise ConfigError(f"unknown method {method!r}; choose grople or ridge-br")

    path = save_model(model, out_dir / "model.json")
    typer.echo(f"Wrote {path}")


def _predict_any(model, X: np.ndarray) -> np.ndarray:
    if isinstance(model, RidgeBRModel):
        return predict_ridge_br(model, X)
    return predict(model, X)


@app.command("predict")
@_handle_errors
def predict_command(
    model_path: Annotated[Path, typer.Option("--model", help="Model JSON file")],
    arff: ArffOpt = None,
    xml: XmlOpt = None,
    cache: CacheOpt = None,
    synthetic: SyntheticOpt = None,
    drop: DropOpt = None,
    name: NameOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
):
    """Write predictions.csv (one {-1,+1} column per label)."""
    _setup(verbose)
    model = load_model(model_path)
    dataset = _load_dataset(arff, xml, cache, synthetic, drop, name,
                            config.SEED if seed is None else seed)
    Y_hat = _predict_any(model, dataset.X)
    path = write_csv(predictions_frame(Y_hat, model.label_names), _out_dir(out) / "predictions.csv")
    typer.echo(f"Wrote {path}")


@app.command("evaluate")
@_handle_errors
def evaluate_command(
    model_path: Annotated[Path, typer.Option("--model", help="Model JSON file")],
    arff: ArffOpt = None,
    xml: XmlOpt = None,
    cache: CacheOpt = None,
    synthetic: SyntheticOpt = None,
    drop: DropOpt = None,
    name: NameOpt = None,
    degenerate: Annotated[str, typer.Option(help="default or skip")] = "default",
    seed: SeedOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
):
    """Score a fitted model on a labeled dataset (all four metrics)."""
    _setup(verbose)
    model = load_model(model_path)
    dataset = _load_dataset(arff, xml, cache, synthetic, drop, name,
                            config.SEED if seed is None else seed)
    metrics = evaluate(dataset.Y, _predict_any(model, dataset.X), degenerate).as_dict()
    write_json(metrics, _out_dir(out) / "evaluation.json")
    for metric in METRIC_NAMES:
        typer.echo(f"{metric}\t{metrics[metric]:.4f}")


@app.command("cv")
@_handle_errors
def cv_command(
    config_path: Annotated[Path, typer.Option("--config", help="Experiment JSON")],
    seed: SeedOpt = None,
    workers: WorkersOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
):
    """Cross-validate every configured dataset; write report.json and report.csv."""
    _setup(verbose)
    experiment = _experiment(config_path, seed, workers)
    reports = [run_cv(experiment, load_source(source, seed=experiment.seed))
               for source in experiment.datasets]
    document = report_document(experiment, reports)
    validate_report(document)

    out_dir = _out_dir(out)
    write_json(document, out_dir / "report.json")
    write_csv(report_frame(document), out_dir / "report.csv")
    for report in reports:
        summary = report.summary()
        line = "  ".join(f"{m}={summary[m]['mean']:.4f}±{summary[m]['std']:.4f}" for m in METRIC_NAMES)
        typer.echo(f"{report.dataset}: {line}")


@app.command("grid")
@_handle_errors
def grid_command(
    config_path: Annotated[Path, typer.Option("--config", help="Experiment JSON")],
    seed: SeedOpt = None,
    workers: WorkersOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
):
    """Per-cell mean and std over folds; write grid.json and grid.csv."""
    _setup(verbose)
    experiment = _experiment(config_path, seed, workers)
    results = {}
    rows = []
    for source in experiment.datasets:
        dataset = load_source(source, seed=experiment.seed)
        cells = run_grid(experiment, dataset)
        results[dataset.name] = cells
        for cell in cells:
            for metric, stat in cell["summary"].items():
                rows.append({"dataset": dataset.name, "index": cell["index"], **cell["cell"],
                             "metric": metric, "mean": stat["mean"], "std": stat["std"]})

    out_dir = _out_dir(out)
    write_json({"method": experiment.method, "seed": experiment.seed, "datasets": results},
               out_dir / "grid.json")
    write_csv(pd.DataFrame(rows), out_dir / "grid.csv")
    typer.echo(f"Wrote {out_dir / 'grid.json'}")


@app.command("group")
@_handle_errors
def group_command(
    groups: Annotated[int, typer.Option("--groups", "-k", help="Number of label groups K")],
    arff: ArffOpt = None,
    xml: XmlOpt = None,
    cache: CacheOpt = None,
    synthetic: SyntheticOpt = None,
    drop: DropOpt = None,
    name: NameOpt = None,
    nn: Annotated[int, typer.Option(help="Neighbor order of the kernel scale")] = 7,
    restarts: Annotated[int, typer.Option(help="k-means restarts")] = 10,
    seed: SeedOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
):
    """Group the labels of a dataset; write partition.csv."""
    _setup(verbose)
    seed = config.SEED if seed is None else seed
    dataset = _load_dataset(arff, xml, cache, synthetic, drop, name, seed)
    partition = group_labels(dataset.Y, groups, seed=seed, nn=nn, restarts=restarts)
    path = write_csv(partition_frame(partition, dataset.label_names), _out_dir(out) / "partition.csv")
    typer.echo(f"Wrote {path} (group sizes {partition.sizes()})")


@app.command("sparsity")
@_handle_errors
def sparsity_command(
    model_path: Annotated[Path, typer.Option("--model", help="GroPLE model JSON file")],
    out: OutOpt = None,
    verbose: VerboseOpt = False,
):
    """Export the nonzero-row mask of every V^k block as sparsity.csv."""
    _setup(verbose)
    masks = sparsity_masks(load_model(model_path))
    path = write_csv(sparsity_frame(masks), _out_dir(out) / "sparsity.csv")
    typer.echo(f"Wrote {path} ({len(masks)} groups)")


@app.command("report")
@_handle_errors
def report_command(
    reports: Annotated[List[Path], typer.Argument(help="report.json files, one per method")],
    metric: Annotated[str, typer.Option(help="Metric to rank on")] = "accuracy",
    alpha: Annotated[float, typer.Option(help="Significance level")] = 0.05,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
):
    """Rank methods across datasets; write ranks.csv and cd.json."""
    _setup(verbose)
    loaded = []
    for path in reports:
        try:
            document = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"{path}: cannot read report: {e}")
        loaded.extend(reports_from_document(document))

    comparison = compare_reports(loaded, metric=metric, alpha=alpha)
    out_dir = _out_dir(out)
    ranks = pd.DataFrame({"method": list(comparison["average_ranks"]),
                          "avg_rank": list(comparison["average_ranks"].values())})
    write_csv(ranks, out_dir / "ranks.csv")
    write_json({k: comparison[k] for k in ("metric", "alpha", "chi2", "ff", "critical_value", "q_alpha", "cd")},
               out_dir / "cd.json")
    for method, rank in comparison["average_ranks"].items():
        typer.echo(f"{method}\t{rank:.3f}")
    if comparison["cd"] is not None:
        typer.echo(f"CD\t{comparison['cd']:.4f}")


@app.command("cache")
@_handle_errors
def cache_command(
    arff: Annotated[Path, typer.Option("--arff", help="MULAN ARFF data file")],
    xml: Annotated[Path, typer.Option("--xml", help="MULAN XML label header")],
    out: Annotated[Path, typer.Option("--out", help="Cache directory to write")],
    drop: DropOpt = None,
    verbose: VerboseOpt = False,
):
    """Convert a MULAN pair into a features.csv / labels.csv cache."""
    _setup(verbose)
    dataset = load_mulan(arff, xml, drop or ())
    save_cache(dataset, out)
    typer.echo(f"Cached {dataset.n_instances} x {dataset.n_features} features, {dataset.n_labels} labels in {out}")


@app.command("version")
def version_command():
    """Print the package version."""
    typer.echo(__version__)


if __name__ == "__main__":
    app()
