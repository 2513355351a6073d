"""Cross-validation, grid search and method comparison.

Each outer fold fits on k-1 folds and evaluates on the held-out one. When
the config spans more than one hyperparameter cell, the cell is chosen by
accuracy on an inner holdout carved from the training folds. Label
embeddings are cached per (d, K, lam1, lam2) within a training set, so an
(alpha, beta) sweep refits only the feature map.

Reports carry no timestamps: identical config and seed give identical
report bodies.
"""

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .baseline import fit_ridge_br, predict_ridge_br
from .config import DatasetSource, ExperimentConfig
from .dataset import (
    MultiLabelDataset,
    Standardizer,
    design_matrix,
    k_fold_split,
    load_cache,
    load_mulan,
    synthetic_dataset,
)
from .errors import DegenerateStatisticError, PreconditionError, ReportSchemaError
from .feature_embed import FeatureGram
from .grouping import GroupPartition, group_labels
from .label_embed import LabelEmbeddingModel, fit_label_embedding
from .metrics import (
    METRIC_NAMES,
    average_ranks,
    evaluate,
    friedman_chi2,
    friedman_critical_value,
    friedman_statistic,
    nemenyi_cd,
    nemenyi_q,
)
from .predictor import GropleParams, calibrate_thresholds, fit, label_space_approximation, predict
from .solver import ApgSettings

logger = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1
SCHEMA_FILE = "report.schema.json"

Cell = Dict[str, float]


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    selected: Cell
    metrics: Dict[str, float]
    approximation: Optional[Dict[str, float]] = None
    # label embedding shrank to V = 0; every prediction is -1
    collapsed: bool = False

    def as_dict(self) -> Dict[str, Any]:
        out = {
            "fold": self.fold,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "selected": self.selected,
            "metrics": self.metrics,
            "collapsed": self.collapsed,
        }
        if self.approximation is not None:
            out["approximation"] = self.approximation
        return out


@dataclass
class EvaluationReport:
    """Cross-validated result of one method on one dataset."""

    dataset: str
    method: str
    seed: int
    n_instances: int
    n_features: int
    n_labels: int
    folds: List[FoldResult]
    cells: List[Dict[str, Any]] = field(default_factory=list)

    def summary(self) -> Dict[str, Dict[str, float]]:
        return summarize([f.metrics for f in self.folds])

    @property
    def collapsed_folds(self) -> List[int]:
        return [f.fold for f in self.folds if f.collapsed]

    def as_dict(self) -> Dict[str, Any]:
        out = {
            "method": self.method,
            "seed": self.seed,
            "n_instances": self.n_instances,
            "n_features": self.n_features,
            "n_labels": self.n_labels,
            "folds": [f.as_dict() for f in self.folds],
            "summary": self.summary(),
            "collapsed_folds": self.collapsed_folds,
        }
        if self.cells:
            out["cells"] = self.cells
        return out


def summarize(fold_metrics: Sequence[Dict[str, float]]) -> Dict[str, Dict[str, float]]:
    """Mean and sample std (ddof=1) of every metric over folds."""
    out = {}
    for name in METRIC_NAMES:
        values = np.array([m[name] for m in fold_metrics], dtype=float)
        std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        out[name] = {"mean": float(values.mean()), "std": std}
    return out


# Datasets ----------------------------------------------------------------------


def load_source(source: DatasetSource, seed: int = 0) -> MultiLabelDataset:
    """Load one configured dataset (MULAN pair, cache directory or synthetic)."""
    if source.arff is not None:
        return load_mulan(source.arff, source.xml, source.drop_attributes, name=source.display_name)
    if source.cache is not None:
        return load_cache(source.cache, name=source.display_name)
    return synthetic_dataset(n=source.synthetic, seed=seed, name=source.display_name)


# Model fitting -----------------------------------------------------------------


def _settings(config: ExperimentConfig) -> ApgSettings:
    return ApgSettings(max_iter=config.apg_max_iter, tol=config.apg_tol)


def candidate_cells(config: ExperimentConfig) -> List[Cell]:
    """Every hyperparameter cell in canonical order (label cell, then alpha, beta)."""
    if config.method == "ridge-br":
        return [{"ridge_lam": lam} for lam in config.ridge_lam]
    feature_cells = config.feature_cells()
    if not config.select_feature_params:
        feature_cells = feature_cells[:1]
    return [
        {"d": d, "n_groups": k, "lam1": lam1, "lam2": lam2, "alpha": alpha, "beta": beta}
        for (d, k, lam1, lam2) in config.label_cells()
        for (alpha, beta) in feature_cells
    ]


class EmbeddingCache:
    """Label embeddings (and their Gram matrices) of one training set."""

    def __init__(self, config: ExperimentConfig, train: MultiLabelDataset):
        self.config = config
        self.train = train
        self._partitions: Dict[int, GroupPartition] = {}
        self._entries: Dict[Tuple, Tuple[LabelEmbeddingModel, FeatureGram]] = {}

    def get(self, d: int, n_groups: int, lam1: float, lam2: float) -> LabelEmbeddingModel:
        return self._entry(d, n_groups, lam1, lam2)[0]

    def gram(self, d: int, n_groups: int, lam1: float, lam2: float) -> FeatureGram:
        return self._entry(d, n_groups, lam1, lam2)[1]

    def _entry(self, d, n_groups, lam1, lam2):
        key = (d, n_groups, lam1, lam2)
        if key not in self._entries:
            if n_groups > self.train.n_labels:
                raise PreconditionError(f"K={n_groups} exceeds the label count L={self.train.n_labels}")
            if n_groups not in self._partitions:
                self._partitions[n_groups] = group_labels(
                    self.train.Y, n_groups, seed=self.config.seed, nn=self.config.nn,
                    restarts=self.config.kmeans_restarts,
                )
            embedding = fit_label_embedding(
                self.train.Y, self._partitions[n_groups], d, lam1, lam2,
                settings=_settings(self.config), seed=self.config.seed,
                outer_tol=self.config.outer_tol, max_outer=self.config.outer_max_iter,
            )
            # same design matrix predictor.fit builds from this training set
            standardizer = Standardizer.fit(self.train.X) if self.config.standardize else None
            X = design_matrix(self.train.X, standardizer, self.config.bias)
            self._entries[key] = (embedding, FeatureGram.build(X, embedding.U))
        return self._entries[key]


def _params(config: ExperimentConfig, cell: Cell) -> GropleParams:
    return GropleParams(
        d=int(cell["d"]), n_groups=int(cell["n_groups"]), lam1=cell["lam1"], lam2=cell["lam2"],
        alpha=cell["alpha"], beta=cell["beta"], nn=config.nn,
        kmeans_restarts=config.kmeans_restarts, standardize=config.standardize,
        bias=config.bias, keep_u=config.keep_u, settings=_settings(config),
        outer_tol=config.outer_tol, outer_max_iter=config.outer_max_iter,
    )


def fit_cell(config: ExperimentConfig, train: MultiLabelDataset, cell: Cell,
             cache: Optional[EmbeddingCache] = None):
    """Fit the configured method for one hyperparameter cell."""
    if config.method == "ridge-br":
        return fit_ridge_br(train.X, train.Y, cell["ridge_lam"], train.label_names,
                            standardize=config.standardize, bias=config.bias)
    cache = cache or EmbeddingCache(config, train)
    key = (int(cell["d"]), int(cell["n_groups"]), cell["lam1"], cell["lam2"])
    model = fit(train, _params(config, cell), seed=config.seed,
                embedding=cache.get(*key), gram=cache.gram(*key))
    if config.calibrate:
        model = calibrate_thresholds(model, train.X, train.Y)
    return model


def predict_cell(config: ExperimentConfig, model, X: np.ndarray) -> np.ndarray:
    if config.method == "ridge-br":
        return predict_ridge_br(model, X)
    return predict(model, X)


def _inner_split(n: int, holdout: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng(seed).permutation(n)
    n_val = min(max(1, int(round(holdout * n))), n - 1)
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def select_cell(config: ExperimentConfig, train: MultiLabelDataset, cells: List[Cell],
                seed: int) -> Cell:
    """Best cell by inner-holdout accuracy; ties keep the earlier cell."""
    if len(cells) == 1:
        return cells[0]
    if train.n_instances < 2:
        raise PreconditionError("inner holdout needs at least 2 training instances")
    inner_idx, val_idx = _inner_split(train.n_instances, config.inner_holdout, seed)
    inner, val = train.subset(inner_idx), train.subset(val_idx)
    cache = EmbeddingCache(config, inner)

    best_cell, best_value = cells[0], -np.inf
    for cell in cells:
        model = fit_cell(config, inner, cell, cache)
        value = evaluate(val.Y, predict_cell(config, model, val.X), config.degenerate).accuracy
        logger.debug(f"inner cell {cell}: accuracy {value:.4f}")
        if value > best_value:
            best_cell, best_value = cell, value
    logger.info(f"Selected {best_cell} (inner accuracy {best_value:.4f})")
    return best_cell


# Cross-validation ---------------------------------------------------------------


def _run_fold(config: ExperimentConfig, dataset: MultiLabelDataset, plan, fold: int) -> FoldResult:
    train = dataset.subset(plan.train_indices(fold))
    test = dataset.subset(plan.test_indices(fold))
    cell = select_cell(config, train, candidate_cells(config), seed=config.seed + 1 + fold)

    cache = EmbeddingCache(config, train)
    model = fit_cell(config, train, cell, cache)
    report = evaluate(test.Y, predict_cell(config, model, test.X), config.degenerate)

    approximation = None
    if config.approximation and config.method != "ridge-br":
        embedding = cache.get(int(cell["d"]), int(cell["n_groups"]), cell["lam1"], cell["lam2"])
        approximation = label_space_approximation(
            train.Y, embedding.U, embedding.V, config.degenerate
        ).as_dict()

    collapsed = config.method != "ridge-br" and model.collapsed
    logger.info(f"{dataset.name} fold {fold}: accuracy {report.accuracy:.4f}")
    return FoldResult(fold, train.n_instances, test.n_instances, cell, report.as_dict(), approximation,
                      collapsed)


def run_cv(config: ExperimentConfig, dataset: MultiLabelDataset) -> EvaluationReport:
    """k-fold cross-validation of the configured method on one dataset."""
    plan = k_fold_split(dataset.n_instances, config.folds, config.seed)
    logger.info(f"CV {config.method} on {dataset.name}: {config.folds} folds, "
                f"{len(candidate_cells(config))} cells")
    folds = Parallel(n_jobs=config.workers, prefer="threads")(
        delayed(_run_fold)(config, dataset, plan, fold) for fold in range(config.folds)
    )
    report = EvaluationReport(
        dataset=dataset.name, method=config.method, seed=config.seed,
        n_instances=dataset.n_instances, n_features=dataset.n_features,
        n_labels=dataset.n_labels, folds=sorted(folds, key=lambda f: f.fold),
    )
    if report.collapsed_folds:
        logger.warning(
            f"{dataset.name}: label embedding collapsed to V = 0 in folds {report.collapsed_folds}; "
            f"those folds predict no labels (lower lam2 or use more training instances)"
        )
    if config.per_cell:
        report.cells = run_grid(config, dataset)
    return report


def _grid_fold(config: ExperimentConfig, dataset: MultiLabelDataset, plan, fold: int) -> List[Dict[str, float]]:
    """Test metrics of every grid cell on one fold, in cell order."""
    train = dataset.subset(plan.train_indices(fold))
    test = dataset.subset(plan.test_indices(fold))
    cache = EmbeddingCache(config, train)
    out = []
    for cell in grid_cells(config):
        if config.method != "ridge-br" and config.select_feature_params:
            inner_cells = [dict(cell, alpha=a, beta=b) for a, b in config.feature_cells()]
            chosen = select_cell(config, train, inner_cells, seed=config.seed + 1 + fold)
        else:
            chosen = cell
        model = fit_cell(config, train, chosen, cache)
        out.append(evaluate(test.Y, predict_cell(config, model, test.X), config.degenerate).as_dict())
    return out


def grid_cells(config: ExperimentConfig) -> List[Cell]:
    """Cells of the sensitivity grid; alpha and beta are left to selection when enabled."""
    if config.method == "ridge-br":
        return [{"ridge_lam": lam} for lam in config.ridge_lam]
    if config.select_feature_params:
        return [{"d": d, "n_groups": k, "lam1": lam1, "lam2": lam2}
                for (d, k, lam1, lam2) in config.label_cells()]
    return [
        {"d": d, "n_groups": k, "lam1": lam1, "lam2": lam2, "alpha": alpha, "beta": beta}
        for (d, k, lam1, lam2) in config.label_cells()
        for (alpha, beta) in config.feature_cells()
    ]


def run_grid(config: ExperimentConfig, dataset: MultiLabelDataset) -> List[Dict[str, Any]]:
    """Mean and std over folds of every metric, per grid cell."""
    plan = k_fold_split(dataset.n_instances, config.folds, config.seed)
    cells = grid_cells(config)
    logger.info(f"Grid {config.method} on {dataset.name}: {len(cells)} cells x {config.folds} folds")
    per_fold = Parallel(n_jobs=config.workers, prefer="threads")(
        delayed(_grid_fold)(config, dataset, plan, fold) for fold in range(config.folds)
    )
    return [
        {"index": i, "cell": cell, "summary": summarize([fold[i] for fold in per_fold])}
        for i, cell in enumerate(cells)
    ]


# Report documents ---------------------------------------------------------------


def report_document(config: ExperimentConfig, reports: Sequence[EvaluationReport]) -> Dict[str, Any]:
    """Report JSON body: dataset -> folds -> metrics (no timestamps)."""
    return {
        "format_version": REPORT_FORMAT_VERSION,
        "method": config.method,
        "seed": config.seed,
        "n_folds": config.folds,
        "degenerate": config.degenerate,
        "datasets": {r.dataset: r.as_dict() for r in reports},
    }


def reports_from_document(document: Dict[str, Any]) -> List[EvaluationReport]:
    validate_report(document)
    out = []
    for name, body in document["datasets"].items():
        folds = [
            FoldResult(f["fold"], f["n_train"], f["n_test"], f["selected"], f["metrics"],
                       f.get("approximation"), f["collapsed"])
            for f in body["folds"]
        ]
        out.append(EvaluationReport(
            dataset=name, method=body["method"], seed=body["seed"],
            n_instances=body["n_instances"], n_features=body["n_features"],
            n_labels=body["n_labels"], folds=folds, cells=body.get("cells", []),
        ))
    return out


def report_frame(document: Dict[str, Any]) -> pd.DataFrame:
    """Flat ``dataset,fold,metric,value`` rows."""
    rows = [
        (name, f["fold"], metric, value)
        for name, body in document["datasets"].items()
        for f in body["folds"]
        for metric, value in f["metrics"].items()
    ]
    return pd.DataFrame(rows, columns=["dataset", "fold", "metric", "value"])


def report_schema() -> Dict[str, Any]:
    text = resources.files("grople").joinpath("schemas").joinpath(SCHEMA_FILE).read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(document: Dict[str, Any]) -> None:
    try:
        jsonschema.validate(document, report_schema())
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ReportSchemaError(f"report fails schema at {where}: {e.message}")


# Comparison ---------------------------------------------------------------------


def compare_reports(reports: Sequence[EvaluationReport], metric: str = "accuracy",
                    alpha: float = 0.05) -> Dict[str, Any]:
    """
    Rank methods across datasets on a metric's CV mean and run the
    Friedman / Nemenyi machinery.

    Raises:
        IncompleteTableError: some (method, dataset) pair has no report
    """
    if metric not in METRIC_NAMES:
        raise PreconditionError(f"unknown metric {metric!r}; choose from {', '.join(METRIC_NAMES)}")
    methods = list(dict.fromkeys(r.method for r in reports))
    datasets = list(dict.fromkeys(r.dataset for r in reports))
    scores = np.full((len(methods), len(datasets)), np.nan)
    for r in reports:
        scores[methods.index(r.method), datasets.index(r.dataset)] = r.summary()[metric]["mean"]

    table = average_ranks(scores, higher_is_better=True, methods=methods, datasets=datasets)
    k, n = table.n_methods, table.n_datasets
    out: Dict[str, Any] = {
        "metric": metric,
        "methods": methods,
        "datasets": datasets,
        "scores": scores.tolist(),
        "average_ranks": table.average_by_method(),
        "chi2": friedman_chi2(table),
        "ff": None,
        "critical_value": None,
        "q_alpha": None,
        "cd": None,
        "alpha": alpha,
    }
    if n >= 2:
        try:
            out["ff"] = friedman_statistic(table)[1]
        except DegenerateStatisticError as e:
            logger.warning(f"F_F undefined: {e}")
        out["critical_value"] = friedman_critical_value(k, n, alpha)
    try:
        out["q_alpha"] = nemenyi_q(k, alpha)
        out["cd"] = nemenyi_cd(k, n, out["q_alpha"])
    except PreconditionError as e:
        logger.warning(f"No critical difference: {e}")
    return out
