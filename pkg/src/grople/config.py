"""Configuration management for GroPLE.

Two layers: process settings read from the environment (``Config``), and the
experiment document (``ExperimentConfig``) that drives cv/grid runs.
"""

import itertools
import json
import logging
import os
import sys
from pathlib import Path
from typing import Annotated, Any, List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

# Load environment variables from .env file
load_dotenv()


class Config:
    """Process-level settings (stateless, loaded from environment)."""

    SEED: int = int(os.getenv("GROPLE_SEED", "0"))
    WORKERS: int = int(os.getenv("GROPLE_WORKERS", "1"))
    OUT_DIR: str = os.getenv("GROPLE_OUT_DIR", "out")
    LOG_LEVEL: str = os.getenv("GROPLE_LOG_LEVEL", "WARNING")

    # MULAN files for the reproduction test (optional)
    DATA_DIR: Optional[str] = os.getenv("GROPLE_DATA_DIR") or None

    MCP_PORT: int = int(os.getenv("GROPLE_MCP_PORT", "8000"))


config = Config()


# Decades 1e-4 .. 1e4, the tuning range for alpha, beta and the ridge weight
DECADE_GRID: Tuple[float, ...] = tuple(10.0 ** p for p in range(-4, 5))

NonNegative = Annotated[float, Field(ge=0)]
PositiveInt = Annotated[int, Field(ge=1)]
Method = Literal["grople", "grople-nocorr", "ridge-br"]


def _as_list(value: Any) -> Any:
    if value is None or isinstance(value, (list, tuple)):
        return value
    return [value]


class DatasetSource(BaseModel):
    """One dataset: MULAN pair, CSV cache directory, or planted synthetic data."""

    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = None
    arff: Optional[Path] = None
    xml: Optional[Path] = None
    cache: Optional[Path] = None
    synthetic: Optional[PositiveInt] = None
    drop_attributes: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _one_source(self) -> "DatasetSource":
        given = [self.arff is not None or self.xml is not None, self.cache is not None,
                 self.synthetic is not None]
        if sum(given) != 1:
            raise ValueError("exactly one of (arff + xml), cache or synthetic is required")
        if (self.arff is None) != (self.xml is None):
            raise ValueError("arff and xml must be given together")
        return self

    @property
    def display_name(self) -> str:
        if self.name:
            return self.name
        if self.arff is not None:
            return self.arff.stem
        if self.cache is not None:
            return self.cache.name
        return f"synthetic{self.synthetic}"


class ExperimentConfig(BaseModel):
    """Validated experiment document; every grid field is a non-empty list."""

    model_config = ConfigDict(extra="forbid")

    datasets: List[DatasetSource] = Field(min_length=1)
    method: Method = "grople"

    d: List[PositiveInt] = Field(default_factory=lambda: [100], min_length=1)
    n_groups: List[PositiveInt] = Field(default_factory=lambda: [10], min_length=1)
    lam1: List[NonNegative] = Field(default_factory=lambda: [0.001], min_length=1)
    lam2: List[NonNegative] = Field(default_factory=lambda: [1.0], min_length=1)
    alpha: List[NonNegative] = Field(default_factory=lambda: list(DECADE_GRID), min_length=1)
    beta: List[NonNegative] = Field(default_factory=lambda: list(DECADE_GRID), min_length=1)
    ridge_lam: List[Annotated[float, Field(gt=0)]] = Field(
        default_factory=lambda: list(DECADE_GRID), min_length=1
    )

    folds: int = Field(default=5, ge=2)
    seed: int = 0
    workers: PositiveInt = 1
    inner_holdout: float = Field(default=0.2, gt=0, lt=1)

    standardize: bool = False
    bias: bool = False
    keep_u: bool = False
    calibrate: bool = False
    degenerate: Literal["default", "skip"] = "default"
    approximation: bool = False
    per_cell: bool = False
    select_feature_params: bool = True

    nn: PositiveInt = 7
    kmeans_restarts: PositiveInt = 10
    apg_max_iter: PositiveInt = 500
    apg_tol: float = Field(default=1e-5, gt=0)
    outer_max_iter: PositiveInt = 50
    outer_tol: float = Field(default=1e-5, gt=0)

    @field_validator("d", "n_groups", "lam1", "lam2", "alpha", "beta", "ridge_lam", mode="before")
    @classmethod
    def _scalar_to_grid(cls, value: Any) -> Any:
        return _as_list(value)

    def label_cells(self) -> List[Tuple[int, int, float, float]]:
        """(d, K, lam1, lam2) cells; each needs its own label embedding."""
        return list(itertools.product(self.d, self.n_groups, self.lam1, self.lam2))

    def feature_cells(self) -> List[Tuple[float, float]]:
        """(alpha, beta) cells; alpha collapses to 0 for the correlation ablation."""
        alphas = [0.0] if self.method == "grople-nocorr" else self.alpha
        return list(itertools.product(alphas, self.beta))

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Apply CLI flag overrides (None values are ignored) and revalidate."""
        update = {k: v for k, v in overrides.items() if v is not None}
        return parse_experiment_config({**self.model_dump(), **update}, source="<flags>")


def format_validation_error(error: ValidationError) -> str:
    """One line per violated field, e.g. ``folds: Input should be >= 2``."""
    lines = []
    for item in error.errors():
        where = ".".join(str(part) for part in item["loc"]) or "<config>"
        lines.append(f"{where}: {item['msg']}")
    return "\n".join(lines)


def load_experiment_config(path: Path) -> ExperimentConfig:
    """Read and validate an experiment JSON document.

    Raises:
        ConfigError: unreadable file, invalid JSON, or any field violation
            (the message lists all of them)
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    return parse_experiment_config(raw, source=str(path))


def parse_experiment_config(raw: Any, source: str = "<config>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"{source}: invalid config\n{format_validation_error(e)}")


def configure_logging(level: Optional[str] = None) -> logging.Logger:
    """Attach one stderr handler to the package logger (idempotent)."""
    package_logger = logging.getLogger("grople")
    package_logger.setLevel((level or config.LOG_LEVEL).upper())
    if not any(getattr(h, "_grople", False) for h in package_logger.handlers):
        formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')
        stderr_handler = logging.StreamHandler(sys.stderr)
        stderr_handler.setFormatter(formatter)
        stderr_handler._grople = True
        package_logger.addHandler(stderr_handler)
    return package_logger
