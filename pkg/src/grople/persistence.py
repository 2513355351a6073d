"""Model files and result exports.

Model file: one JSON document

    {"format_version": 1, "method": "grople" | "ridge-br", ...}

Real arrays are stored as {"shape": [...], "data": [...]} in row-major
order. Floats go through JSON's shortest round-trip repr, so a reloaded
model predicts bit-identically.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .baseline import RidgeBRModel
from .dataset import Standardizer
from .errors import DimensionError, InvalidModelError
from .grouping import GroupPartition
from .predictor import GropleClassifier, GropleParams

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

Model = Union[GropleClassifier, RidgeBRModel]


def encode_array(a: np.ndarray) -> Dict[str, list]:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel(order="C").tolist()}


def decode_array(obj: Any, name: str) -> np.ndarray:
    if not isinstance(obj, dict) or "shape" not in obj or "data" not in obj:
        raise InvalidModelError(f"'{name}' must be an object with 'shape' and 'data'")
    try:
        shape = tuple(int(s) for s in obj["shape"])
        data = np.asarray(obj["data"], dtype=float)
    except (TypeError, ValueError) as e:
        raise InvalidModelError(f"'{name}' is not a numeric array: {e}")
    if data.ndim != 1 or data.size != int(np.prod(shape)):
        raise InvalidModelError(f"'{name}' holds {data.size} values for shape {list(shape)}")
    return data.reshape(shape)


def _encode_standardizer(standardizer: Optional[Standardizer]) -> Optional[dict]:
    if standardizer is None:
        return None
    return {"mean": encode_array(standardizer.mean), "scale": encode_array(standardizer.scale)}


def _decode_standardizer(obj: Any) -> Optional[Standardizer]:
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise InvalidModelError("'standardization' must be an object or null")
    return Standardizer(decode_array(obj.get("mean"), "standardization.mean"),
                        decode_array(obj.get("scale"), "standardization.scale"))


def model_to_dict(model: Model) -> Dict[str, Any]:
    if isinstance(model, RidgeBRModel):
        return {
            "format_version": FORMAT_VERSION,
            "method": "ridge-br",
            "hyperparameters": {"lam": model.lam, "bias": model.bias},
            "label_names": list(model.label_names),
            "n_features": model.n_features,
            "W": encode_array(model.W),
            "standardization": _encode_standardizer(model.standardizer),
        }
    return {
        "format_version": FORMAT_VERSION,
        "method": "grople",
        "hyperparameters": model.params.as_dict(),
        "seed": model.seed,
        "label_names": list(model.label_names),
        "n_features": model.n_features,
        "partition": {"assignment": list(model.partition.assignment),
                      "n_groups": model.partition.n_groups},
        "Z": encode_array(model.Z),
        "V": encode_array(model.V),
        "U": None if model.U is None else encode_array(model.U),
        "thresholds": None if model.thresholds is None else encode_array(model.thresholds),
        "standardization": _encode_standardizer(model.standardizer),
        "history": list(model.history),
    }


def _require(doc: Dict[str, Any], key: str) -> Any:
    if key not in doc:
        raise InvalidModelError(f"model file lacks '{key}'")
    return doc[key]


def model_from_dict(doc: Any) -> Model:
    """
    Rebuild a model from its JSON document.

    Raises:
        InvalidModelError: wrong version, unknown method, or a missing or
            malformed part
    """
    if not isinstance(doc, dict):
        raise InvalidModelError("model file must hold a JSON object")
    version = _require(doc, "format_version")
    if version != FORMAT_VERSION:
        raise InvalidModelError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    method = _require(doc, "method")

    try:
        if method == "ridge-br":
            hyper = _require(doc, "hyperparameters")
            return RidgeBRModel(
                W=decode_array(_require(doc, "W"), "W"),
                lam=float(hyper["lam"]),
                label_names=tuple(_require(doc, "label_names")),
                n_features=int(_require(doc, "n_features")),
                standardizer=_decode_standardizer(doc.get("standardization")),
                bias=bool(hyper.get("bias", False)),
            )
        if method == "grople":
            part = _require(doc, "partition")
            U = doc.get("U")
            thresholds = doc.get("thresholds")
            return GropleClassifier(
                Z=decode_array(_require(doc, "Z"), "Z"),
                V=decode_array(_require(doc, "V"), "V"),
                partition=GroupPartition(tuple(part["assignment"]), int(part["n_groups"])),
                label_names=tuple(_require(doc, "label_names")),
                params=GropleParams.from_dict(_require(doc, "hyperparameters")),
                seed=int(doc.get("seed", 0)),
                n_features=int(_require(doc, "n_features")),
                standardizer=_decode_standardizer(doc.get("standardization")),
                thresholds=None if thresholds is None else decode_array(thresholds, "thresholds"),
                U=None if U is None else decode_array(U, "U"),
                history=tuple(float(h) for h in doc.get("history", ())),
            )
    except InvalidModelError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        # DimensionError / PreconditionError are ValueErrors
        raise InvalidModelError(f"malformed {method} model: {e}")
    raise InvalidModelError(f"unknown method {method!r}")


def save_model(model: Model, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model)), encoding="utf-8")
    logger.info(f"Wrote model to {path}")
    return path


def load_model(path: Path) -> Model:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise InvalidModelError(f"{path}: cannot read model: {e}")
    except json.JSONDecodeError as e:
        raise InvalidModelError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    try:
        return model_from_dict(doc)
    except InvalidModelError as e:
        raise InvalidModelError(f"{path}: {e}")


# CSV exports -------------------------------------------------------------------


def partition_frame(partition: GroupPartition, label_names: Sequence[str]) -> pd.DataFrame:
    if len(label_names) != partition.n_labels:
        raise DimensionError(f"{len(label_names)} names for {partition.n_labels} labels")
    return pd.DataFrame({"label_name": list(label_names), "group_index": list(partition.assignment)})


def sparsity_frame(masks: List[np.ndarray]) -> pd.DataFrame:
    """Rows ``group_index,row_index,is_nonzero`` (is_nonzero as 0/1)."""
    rows = [
        (g, r, int(flag))
        for g, mask in enumerate(masks)
        for r, flag in enumerate(np.asarray(mask, dtype=bool))
    ]
    return pd.DataFrame(rows, columns=["group_index", "row_index", "is_nonzero"])


def sparsity_masks(model: Model) -> List[np.ndarray]:
    if not isinstance(model, GropleClassifier):
        raise InvalidModelError("sparsity export needs a GroPLE model with V and its partition")
    return model.nonzero_row_masks()


def predictions_frame(Y_hat: np.ndarray, label_names: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame(np.asarray(Y_hat).astype(int), columns=list(label_names))


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def write_json(document: Any, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    return path
