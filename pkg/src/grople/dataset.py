"""MULAN-style multi-label datasets.

A MULAN dataset is an ARFF data file plus an XML header naming which
attributes are labels. Labels are mapped to the {-1, +1} convention used by
the solvers. Parsing and splitting are pure; every returned array is
read-only so values can be shared across threads.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Dict, List, Optional, Sequence, Tuple, Union
from xml.etree import ElementTree

import arff
import numpy as np
import pandas as pd

from .config import config
from .errors import (
    ArffParseError,
    DatasetError,
    DuplicateLabelError,
    EmptyLabelHeaderError,
    InvalidFoldCountError,
    LabelHeaderError,
    MissingLabelError,
    NonBinaryLabelError,
    PreconditionError,
)

logger = logging.getLogger(__name__)

NUMERIC_KINDS = ("NUMERIC", "REAL", "INTEGER")
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.csv"

# None for numeric attributes, the declared value tuple for nominal ones
AttributeKind = Optional[Tuple[str, ...]]


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float)
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class DataTable:
    """Decoded ARFF relation; nominal cells hold the index of their value."""

    relation: str
    attribute_names: Tuple[str, ...]
    attribute_kinds: Tuple[AttributeKind, ...]
    rows: np.ndarray

    def __post_init__(self):
        rows = _frozen(self.rows).reshape(-1, len(self.attribute_names))
        object.__setattr__(self, "rows", rows)
        if len(self.attribute_kinds) != len(self.attribute_names):
            raise PreconditionError("attribute names and kinds differ in length")
        for j, kind in enumerate(self.attribute_kinds):
            if kind is None:
                continue
            column = rows[:, j]
            if np.any((column < 0) | (column >= len(kind)) | (column != np.floor(column))):
                raise PreconditionError(
                    f"attribute '{self.attribute_names[j]}' holds a value outside its nominal set"
                )

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DataTable):
            return NotImplemented
        return (
            self.relation == other.relation
            and self.attribute_names == other.attribute_names
            and self.attribute_kinds == other.attribute_kinds
            and np.array_equal(self.rows, other.rows)
        )


@dataclass(frozen=True, eq=False)
class MultiLabelDataset:
    """Feature matrix X (N x D) with label matrix Y (N x L) in {-1, +1}."""

    X: np.ndarray
    Y: np.ndarray
    label_names: Tuple[str, ...]
    feature_names: Tuple[str, ...]
    name: str = "dataset"

    def __post_init__(self):
        X, Y = _frozen(self.X), _frozen(self.Y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "label_names", tuple(self.label_names))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

        if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise PreconditionError(f"X {X.shape} and Y {Y.shape} must be 2-D with equal rows")
        n, d = X.shape
        if n < 1 or d < 1 or Y.shape[1] < 1:
            raise PreconditionError(f"dataset needs N, D, L >= 1, got N={n} D={d} L={Y.shape[1]}")
        if not np.all((Y == 1) | (Y == -1)):
            raise PreconditionError("every label entry must be -1 or +1")
        if len(self.label_names) != Y.shape[1] or len(self.feature_names) != d:
            raise PreconditionError("name counts do not match matrix shapes")
        if len(set(self.label_names)) != len(self.label_names):
            raise PreconditionError("label names must be unique")
        if set(self.label_names) & set(self.feature_names):
            raise PreconditionError("label names overlap feature names")

    @property
    def n_instances(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_labels(self) -> int:
        return self.Y.shape[1]

    def subset(self, indices: Sequence[int]) -> "MultiLabelDataset":
        indices = np.asarray(indices, dtype=int)
        return MultiLabelDataset(
            self.X[indices], self.Y[indices], self.label_names, self.feature_names, self.name
        )


@dataclass(frozen=True)
class FoldPlan:
    """Seeded k-fold assignment: ``assignments[i]`` is the fold of instance i."""

    k: int
    assignments: Tuple[int, ...]
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.assignments) == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.assignments) != fold)

    def sizes(self) -> List[int]:
        return np.bincount(np.asarray(self.assignments, dtype=int), minlength=self.k).tolist()


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-column z-score with population std; constant columns are only centered."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        std = X.std(axis=0)
        return cls(_frozen(X.mean(axis=0)), _frozen(np.where(std > 0, std, 1.0)))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


def design_matrix(
    X: np.ndarray, standardizer: Optional[Standardizer] = None, bias: bool = False
) -> np.ndarray:
    """Apply stored standardization, then append a column of ones if ``bias``."""
    X = np.asarray(X, dtype=float)
    if standardizer is not None:
        X = standardizer.transform(X)
    if bias:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    return X


# ARFF ------------------------------------------------------------------------


def _data_line_numbers(lines: List[str]) -> List[int]:
    """1-based line numbers of the data rows, in row order."""
    numbers = []
    in_data = False
    for lineno, raw in enumerate(lines, start=1):
        row = raw.strip()
        if not in_data:
            in_data = row.upper().startswith("@DATA")
            continue
        if row and not row.startswith("%"):
            numbers.append(lineno)
    return numbers


def parse_arff(text: Union[str, IO[str]], source: Optional[str] = None) -> DataTable:
    """
    Parse dense or sparse ARFF text into a DataTable.

    Args:
        text: ARFF document or a readable text stream
        source: Name used in error messages (usually the file path)

    Returns:
        DataTable with attributes in declaration order; sparse rows expand with
        unspecified entries = 0 (nominal: index 0)

    Raises:
        ArffParseError: malformed declarations or rows, arity mismatches,
            sparse indices out of range, undeclared nominal values, missing
            values ('?') and string/date attributes
    """
    if not isinstance(text, str):
        text = text.read()

    try:
        decoded = arff.loads(text, encode_nominal=True, return_type=arff.DENSE)
    except arff.ArffException as e:
        raise ArffParseError(f"{type(e).__name__}: {e}", line=e.line, source=source)
    except (ValueError, IndexError) as e:
        raise ArffParseError(f"unparseable ARFF: {e}", source=source)

    names: List[str] = []
    kinds: List[AttributeKind] = []
    for name, kind in decoded["attributes"]:
        names.append(str(name))
        if isinstance(kind, (list, tuple)):
            kinds.append(tuple(str(v) for v in kind))
        elif str(kind).upper() in NUMERIC_KINDS:
            kinds.append(None)
        else:
            raise ArffParseError(f"attribute '{name}' has unsupported kind {kind}", source=source)

    data = decoded["data"]
    line_numbers = None
    for i, row in enumerate(data):
        if any(value is None for value in row):
            if line_numbers is None:
                line_numbers = _data_line_numbers(text.splitlines())
            line = line_numbers[i] if i < len(line_numbers) else None
            raise ArffParseError("missing values ('?') are not supported", line=line, source=source)

    rows = np.array(data, dtype=float) if data else np.empty((0, len(names)))
    return DataTable(str(decoded.get("relation", "")), tuple(names), tuple(kinds), rows)


def write_arff(table: DataTable) -> str:
    """Serialize a DataTable as dense ARFF (nominal indices back to values)."""
    attributes = [
        (name, list(kind) if kind is not None else "NUMERIC")
        for name, kind in zip(table.attribute_names, table.attribute_kinds)
    ]
    data = []
    for row in table.rows:
        data.append([
            kind[int(value)] if kind is not None else float(value)
            for value, kind in zip(row, table.attribute_kinds)
        ])
    return arff.dumps({
        "relation": table.relation or "grople",
        "description": "",
        "attributes": attributes,
        "data": data,
    })


# Label header ----------------------------------------------------------------


def _local_name(tag: str) -> str:
    """Strip an XML namespace (MULAN headers declare one)."""
    return tag.rsplit("}", 1)[-1]


def parse_label_header(text: Union[str, bytes, IO], source: Optional[str] = None) -> List[str]:
    """
    Read label names from a MULAN XML header, in document order.

    Raises:
        LabelHeaderError: ill-formed XML or a label without a name
        EmptyLabelHeaderError: no <label> elements
        DuplicateLabelError: a name appears twice
    """
    if hasattr(text, "read"):
        text = text.read()
    where = source or "<labels>"
    try:
        root = ElementTree.fromstring(text)
    except ElementTree.ParseError as e:
        raise LabelHeaderError(f"{where}: ill-formed XML: {e}")

    names: List[str] = []
    seen = set()
    for element in root.iter():
        if _local_name(element.tag) != "label":
            continue
        name = element.get("name")
        if not name:
            raise LabelHeaderError(f"{where}: <label> without a name attribute")
        if name in seen:
            raise DuplicateLabelError(f"{where}: duplicate label '{name}'")
        seen.add(name)
        names.append(name)

    if not names:
        raise EmptyLabelHeaderError(f"{where}: header declares no labels")
    return names


# Assembly --------------------------------------------------------------------


def _positive_index(name: str, kind: AttributeKind) -> int:
    """Index of the nominal value "1" for a binary label attribute."""
    if kind is None or len(kind) != 2 or "1" not in kind:
        raise NonBinaryLabelError(f"label '{name}' is not a {{0,1}} or {{-1,1}} nominal: {kind}")
    other = kind[1 - kind.index("1")]
    if other not in ("0", "-1"):
        raise NonBinaryLabelError(f"label '{name}' has unexpected value set {kind}")
    return kind.index("1")


def assemble_dataset(
    table: DataTable,
    labels: Sequence[str],
    drop_attributes: Sequence[str] = (),
    name: str = "dataset",
) -> MultiLabelDataset:
    """
    Split a table into features X and {-1, +1} labels Y.

    Args:
        table: Parsed ARFF relation
        labels: Label attribute names (from the XML header)
        drop_attributes: Non-label attributes to leave out of X (identifiers)
        name: Dataset name carried into reports

    Raises:
        MissingLabelError: a label (or dropped attribute) is not in the table
        NonBinaryLabelError: a label attribute is not binary nominal
    """
    index: Dict[str, int] = {n: j for j, n in enumerate(table.attribute_names)}
    for dropped in drop_attributes:
        if dropped not in index:
            raise MissingLabelError(f"attribute '{dropped}' to drop is not in the table")

    columns = []
    for label in labels:
        if label not in index:
            raise MissingLabelError(f"label '{label}' is not an attribute of the table")
        j = index[label]
        positive = _positive_index(label, table.attribute_kinds[j])
        columns.append(np.where(table.rows[:, j] == positive, 1.0, -1.0))

    excluded = set(labels) | set(drop_attributes)
    feature_idx = [j for j, n in enumerate(table.attribute_names) if n not in excluded]
    Y = np.column_stack(columns) if columns else np.empty((table.n_rows, 0))
    return MultiLabelDataset(
        X=table.rows[:, feature_idx],
        Y=Y,
        label_names=tuple(labels),
        feature_names=tuple(table.attribute_names[j] for j in feature_idx),
        name=name,
    )


def resolve_data_path(path: Path, data_dir: Optional[str] = None) -> Path:
    """
    Relative paths missing from the working directory are looked up under
    ``data_dir`` (default ``GROPLE_DATA_DIR``).
    """
    path = Path(path)
    data_dir = data_dir if data_dir is not None else config.DATA_DIR
    if path.is_absolute() or path.exists() or not data_dir:
        return path
    return Path(data_dir) / path


def load_mulan(
    arff_path: Path,
    xml_path: Path,
    drop_attributes: Sequence[str] = (),
    name: Optional[str] = None,
    data_dir: Optional[str] = None,
) -> MultiLabelDataset:
    """Load a MULAN (ARFF + XML) pair; errors name the offending file."""
    arff_path, xml_path = resolve_data_path(arff_path, data_dir), resolve_data_path(xml_path, data_dir)
    try:
        arff_text = arff_path.read_text(encoding="utf-8")
        xml_bytes = xml_path.read_bytes()
    except OSError as e:
        raise DatasetError(f"cannot read dataset: {e}")
    table = parse_arff(arff_text, source=str(arff_path))
    labels = parse_label_header(xml_bytes, source=str(xml_path))
    logger.info(f"Loaded {arff_path.name}: {table.n_rows} rows, {len(labels)} labels")
    return assemble_dataset(table, labels, drop_attributes, name=name or arff_path.stem)


# Cache -------------------------------------------------------------------------


def save_cache(dataset: MultiLabelDataset, directory: Path) -> None:
    """Write ``features.csv`` and ``labels.csv`` (headers = names)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(dataset.X, columns=list(dataset.feature_names)).to_csv(
        directory / FEATURES_FILE, index=False
    )
    pd.DataFrame(dataset.Y.astype(int), columns=list(dataset.label_names)).to_csv(
        directory / LABELS_FILE, index=False
    )


def load_cache(directory: Path, name: Optional[str] = None) -> MultiLabelDataset:
    """Reload a dataset written by ``save_cache``."""
    directory = resolve_data_path(directory)
    try:
        features = pd.read_csv(directory / FEATURES_FILE, float_precision="round_trip")
        labels = pd.read_csv(directory / LABELS_FILE)
    except (OSError, pd.errors.ParserError) as e:
        raise DatasetError(f"{directory}: cannot read dataset cache: {e}")
    return MultiLabelDataset(
        X=features.to_numpy(dtype=float),
        Y=labels.to_numpy(dtype=float),
        label_names=tuple(labels.columns),
        feature_names=tuple(features.columns),
        name=name or directory.name,
    )


# Folds -----------------------------------------------------------------------


def k_fold_split(n: int, k: int, seed: int) -> FoldPlan:
    """
    Deal a seeded permutation of 0..n-1 round-robin into k folds.

    Raises:
        InvalidFoldCountError: k < 2 or k > n
    """
    if k < 2 or k > n:
        raise InvalidFoldCountError(f"fold count must satisfy 2 <= k <= n, got k={k}, n={n}")
    order = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=int)
    assignments[order] = np.arange(n) % k
    return FoldPlan(k=k, assignments=tuple(int(a) for a in assignments), seed=seed)


# Synthetic data --------------------------------------------------------------


def synthetic_dataset(
    n: int = 500,
    n_features: int = 40,
    n_labels: int = 40,
    n_groups: int = 10,
    seed: int = 0,
    margin: float = 0.0,
    name: Optional[str] = None,
) -> MultiLabelDataset:
    """
    Planted linear multi-label data with grouped generating features.

    Features are split into ``n_groups`` disjoint blocks; every label of group
    g is ``sign(X w)`` with w supported on block g (sign(0) = -1). With
    ``margin > 0`` each instance is pushed away from every decision boundary
    along the label's weight vector (exact when each group holds one label).

    The defaults plant ten groups of four labels, so the default experiment
    (d=100, K=10, lam1=0.001, lam2=1) has enough signal per group to keep
    V away from zero once a training split holds a couple of hundred rows.
    """
    if n_groups < 1 or n_groups > min(n_features, n_labels):
        raise PreconditionError(f"n_groups must lie in [1, min(D, L)], got {n_groups}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n_features))

    block = n_features // n_groups
    group_of_label = np.arange(n_labels) * n_groups // n_labels
    W = np.zeros((n_features, n_labels))
    for label, g in enumerate(group_of_label):
        w = rng.standard_normal(block)
        W[g * block:(g + 1) * block, label] = w / np.linalg.norm(w)

    Y = np.where(X @ W > 0, 1.0, -1.0)
    if margin > 0:
        X = X + margin * (Y @ W.T)
    return MultiLabelDataset(
        X=X,
        Y=Y,
        label_names=tuple(f"label{j}" for j in range(n_labels)),
        feature_names=tuple(f"f{j}" for j in range(n_features)),
        name=name or f"synthetic{n}",
    )
