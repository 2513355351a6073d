"""GroPLE MCP Server.

Dataset inspection, label grouping, model fitting/prediction and
cross-validation exposed as MCP tools.

Local:   python run.py              (stdio)
Remote:  python run.py --http       (SSE)
"""

import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from mcp.server.fastmcp import FastMCP
from pydantic import ValidationError

from .baseline import RidgeBRModel, fit_ridge_br, predict_ridge_br
from .config import (
    DatasetSource,
    config,
    configure_logging,
    format_validation_error,
    parse_experiment_config,
)
from .errors import ConfigError, GropleError
from .grouping import group_labels
from .harness import (
    compare_reports,
    load_source,
    report_document,
    reports_from_document,
    run_cv,
    validate_report,
)
from .metrics import evaluate
from .persistence import load_model, save_model, write_json
from .predictor import GropleParams, fit, label_sets, predict

load_dotenv()

# Determine transport mode early; host/port are set at init time
_use_sse = "--http" in sys.argv or os.environ.get("MCP_TRANSPORT") == "sse"


def _build_mcp() -> FastMCP:
    if not _use_sse:
        return FastMCP("GroPLE MCP Server")
    return FastMCP(
        "GroPLE MCP Server",
        host=os.environ.get("HOST", "0.0.0.0"),
        port=int(os.environ.get("PORT", config.MCP_PORT)),
    )


mcp = _build_mcp()


# ============================================================================
# Health Check Endpoint
# ============================================================================

@mcp.custom_route("/health", methods=["GET"])
async def health_check(request):
    """Health check endpoint."""
    from starlette.responses import JSONResponse
    return JSONResponse({
        "status": "healthy",
        "service": "grople-mcp",
        "transport": "sse" if _use_sse else "stdio"
    })


def _dataset(
    arff: Optional[str],
    xml: Optional[str],
    cache: Optional[str],
    synthetic: Optional[int],
    drop_attributes: Optional[List[str]] = None,
    seed: int = 0,
):
    try:
        source = DatasetSource(arff=arff, xml=xml, cache=cache, synthetic=synthetic,
                               drop_attributes=drop_attributes or [])
    except ValidationError as e:
        raise ConfigError(f"dataset options: {format_validation_error(e)}")
    return load_source(source, seed=seed)


# ============================================================================
# Dataset Tools
# ============================================================================

@mcp.tool()
async def dataset_describe(
    arff: str = None,
    xml: str = None,
    cache: str = None,
    synthetic: int = None,
    drop_attributes: list[str] = None
) -> dict:
    """
    Describe a multi-label dataset.

    Give exactly one source: arff + xml (MULAN pair), cache (directory with
    features.csv / labels.csv), or synthetic (instance count).

    Args:
        arff: ARFF data file path (optional)
        xml: MULAN XML label header path (optional)
        cache: Dataset cache directory (optional)
        synthetic: Instance count of a planted synthetic dataset (optional)
        drop_attributes: Attributes to exclude from the features (optional)
    """
    try:
        dataset = _dataset(arff, xml, cache, synthetic, drop_attributes)
        positives = (dataset.Y == 1)
        return {
            "name": dataset.name,
            "n_instances": dataset.n_instances,
            "n_features": dataset.n_features,
            "n_labels": dataset.n_labels,
            "label_names": list(dataset.label_names),
            "label_cardinality": float(positives.sum(axis=1).mean()),
            "label_density": float(positives.mean()),
        }
    except GropleError as e:
        return {"error": str(e), "status": 400}
    except Exception as e:
        return {"error": str(e), "status": 500}


@mcp.tool()
async def labels_group(
    n_groups: int,
    arff: str = None,
    xml: str = None,
    cache: str = None,
    synthetic: int = None,
    drop_attributes: list[str] = None,
    seed: int = 0,
    nn: int = 7
) -> dict:
    """
    Partition the labels of a dataset into groups by spectral clustering.

    Args:
        n_groups: Number of groups K (1 <= K <= number of labels)
        arff: ARFF data file path (optional)
        xml: MULAN XML label header path (optional)
        cache: Dataset cache directory (optional)
        synthetic: Instance count of a planted synthetic dataset (optional)
        drop_attributes: Attributes to exclude from the features (optional)
        seed: k-means seed (default: 0)
        nn: Neighbor order of the kernel scale (default: 7)
    """
    try:
        dataset = _dataset(arff, xml, cache, synthetic, drop_attributes, seed=seed)
        partition = group_labels(dataset.Y, n_groups, seed=seed, nn=nn)
        return {
            "groups": {
                str(k): [dataset.label_names[j] for j in partition.members(k)]
                for k in range(partition.n_groups)
            },
            "sizes": partition.sizes(),
        }
    except GropleError as e:
        return {"error": str(e), "status": 400}
    except Exception as e:
        return {"error": str(e), "status": 500}


# ============================================================================
# Model Tools
# ============================================================================

@mcp.tool()
async def model_fit(
    model_path: str,
    arff: str = None,
    xml: str = None,
    cache: str = None,
    synthetic: int = None,
    drop_attributes: list[str] = None,
    method: str = "grople",
    d: int = 100,
    n_groups: int = 10,
    lam1: float = 0.001,
    lam2: float = 1.0,
    alpha: float = 0.1,
    beta: float = 0.1,
    ridge_lam: float = 1.0,
    seed: int = 0
) -> dict:
    """
    Fit a model and write it as JSON.

    Args:
        model_path: Where to write the model file
        arff: ARFF data file path (optional)
        xml: MULAN XML label header path (optional)
        cache: Dataset cache directory (optional)
        synthetic: Instance count of a planted synthetic dataset (optional)
        drop_attributes: Attributes to exclude from the features (optional)
        method: "grople" or "ridge-br" (default: grople)
        d: Latent dimension (default: 100)
        n_groups: Number of label groups K (default: 10)
        lam1: Ridge weight on U (default: 0.001)
        lam2: Group-sparsity weight on V (default: 1)
        alpha: Correlation weight of the feature map (default: 0.1)
        beta: l1 weight of the feature map (default: 0.1)
        ridge_lam: Ridge weight for ridge-br (default: 1)
        seed: Random seed (default: 0)
    """
    try:
        dataset = _dataset(arff, xml, cache, synthetic, drop_attributes, seed=seed)
        if method == "ridge-br":
            model = fit_ridge_br(dataset.X, dataset.Y, ridge_lam, dataset.label_names)
        elif method == "grople":
            params = GropleParams(d=d, n_groups=n_groups, lam1=lam1, lam2=lam2, alpha=alpha, beta=beta)
            model = fit(dataset, params, seed=seed)
        else:
            raise ConfigError(f"unknown method {method!r}; choose grople or ridge-br")
        path = save_model(model, Path(model_path))
        train = evaluate(dataset.Y, _predict(model, dataset.X))
        result = {"model_path": str(path), "method": method, "train_metrics": train.as_dict()}
        if method == "grople":
            result["collapsed"] = model.collapsed
        return result
    except GropleError as e:
        return {"error": str(e), "status": 400}
    except Exception as e:
        return {"error": str(e), "status": 500}


def _predict(model, X):
    if isinstance(model, RidgeBRModel):
        return predict_ridge_br(model, X)
    return predict(model, X)


@mcp.tool()
async def model_predict(
    model_path: str,
    arff: str = None,
    xml: str = None,
    cache: str = None,
    synthetic: int = None,
    drop_attributes: list[str] = None,
    limit: int = 50
) -> dict:
    """
    Predict label sets with a saved model and score them against the
    dataset's labels.

    Args:
        model_path: Model JSON file
        arff: ARFF data file path (optional)
        xml: MULAN XML label header path (optional)
        cache: Dataset cache directory (optional)
        synthetic: Instance count of a planted synthetic dataset (optional)
        drop_attributes: Attributes to exclude from the features (optional)
        limit: Maximum number of per-instance label sets returned (default: 50)
    """
    try:
        model = load_model(Path(model_path))
        dataset = _dataset(arff, xml, cache, synthetic, drop_attributes)
        Y_hat = _predict(model, dataset.X)
        return {
            "predictions": label_sets(Y_hat[:limit], model.label_names),
            "metrics": evaluate(dataset.Y, Y_hat).as_dict(),
        }
    except GropleError as e:
        return {"error": str(e), "status": 400}
    except Exception as e:
        return {"error": str(e), "status": 500}


# ============================================================================
# Experiment Tools
# ============================================================================

@mcp.tool()
async def cv_run(
    experiment: dict,
    report_path: str = None
) -> dict:
    """
    Cross-validate an experiment and return the report.

    Args:
        experiment: Experiment document (same fields as the CLI's --config JSON)
        report_path: Also write the report JSON here (optional)
    """
    try:
        config_ = parse_experiment_config(experiment, source="<experiment>")
        reports = [run_cv(config_, load_source(s, seed=config_.seed)) for s in config_.datasets]
        document = report_document(config_, reports)
        validate_report(document)
        if report_path:
            write_json(document, Path(report_path))
        return document
    except GropleError as e:
        return {"error": str(e), "status": 400}
    except Exception as e:
        return {"error": str(e), "status": 500}


@mcp.tool()
async def reports_compare(
    report_paths: list[str],
    metric: str = "accuracy",
    alpha: float = 0.05
) -> dict:
    """
    Rank methods across datasets with Friedman / Nemenyi statistics.

    Args:
        report_paths: Report JSON files (one per method)
        metric: accuracy, example_f1, macro_f1 or micro_f1 (default: accuracy)
        alpha: Significance level, 0.05 or 0.10 (default: 0.05)
    """
    try:
        reports = []
        for path in report_paths:
            document: Dict[str, Any] = json.loads(Path(path).read_text(encoding="utf-8"))
            reports.extend(reports_from_document(document))
        return compare_reports(reports, metric=metric, alpha=alpha)
    except GropleError as e:
        return {"error": str(e), "status": 400}
    except Exception as e:
        return {"error": str(e), "status": 500}


# ============================================================================
# Server Entrypoint
# ============================================================================

def main():
    configure_logging()
    if _use_sse:
        mcp.run(transport="sse")
    else:
        mcp.run(transport="stdio")


if __name__ == "__main__":
    main()
