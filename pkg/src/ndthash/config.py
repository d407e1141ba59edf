"""Run-configuration documents for the command line.

Every section rejects unknown keys, so a misspelt option fails loudly
before any work starts.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import InvalidArgument

MODEL_KINDS = ("hnn", "ndt", "autoencoder-unsup", "autoencoder-semisup", "mlp-baseline")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataSection(_Strict):
    """Either a generated toy set or a CSV file."""

    kind: Literal["two-moons", "two-circles", "blobs", "csv"] = "two-moons"
    n: int = Field(200, ge=1)
    noise: float = Field(0.1, ge=0)
    seed: int = 0
    centers: Optional[List[Tuple[float, float]]] = None
    path: Optional[str] = None
    labels: Union[Literal["class", "none"], int] = "class"
    continuous: bool = False

    @model_validator(mode="after")
    def _csv_needs_path(self):
        if self.kind == "csv" and not self.path:
            raise ValueError("data.kind 'csv' needs data.path")
        return self


class ModelSection(_Strict):
    dims: List[int] = Field(default_factory=lambda: [2, 3])
    hidden_activation: Literal["sigmoid", "tanh", "identity"] = "sigmoid"
    seed: int = 0
    # autoencoder topology
    encoder_dims: Optional[List[int]] = None
    decoder_dims: Optional[List[int]] = None
    identity_encoder: bool = False
    head_width: int = Field(2, ge=1, le=20)
    head_hidden: List[int] = Field(default_factory=list)


class LossSection(_Strict):
    kind: Optional[str] = None
    lambda_uniform: float = Field(0.1, ge=0)
    lambda_l2: float = Field(1e-4, ge=0)
    class_weights: Optional[List[float]] = None
    impurity: Literal["gini", "entropy"] = "gini"


class TrainSection(_Strict):
    learning_rate: float = Field(100.0, gt=0)
    momentum: float = Field(0.0, ge=0, lt=1)
    max_iters: int = Field(1000, ge=1)
    rel_tol: float = Field(1e-9, gt=0)
    batch_size: Optional[int] = Field(None, ge=1)
    seed: int = 0
    log_every: int = Field(10, ge=1)


class TreeSection(_Strict):
    max_depth: int = Field(2, ge=0)
    min_mass: float = Field(0.01, ge=0)
    criterion: Literal["gini", "info_gain", "variance"] = "gini"
    hidden: List[int] = Field(default_factory=list)
    learning_rate: float = Field(50.0, gt=0)
    momentum: float = Field(0.0, ge=0, lt=1)
    node_iters: int = Field(500, ge=1)
    routing: Literal["soft", "hard"] = "soft"
    restarts: int = Field(1, ge=1)
    seed: int = 0
    fine_tune_iters: int = Field(0, ge=0)


class RunConfig(_Strict):
    data: DataSection = Field(default_factory=DataSection)
    model: ModelSection = Field(default_factory=ModelSection)
    loss: LossSection = Field(default_factory=LossSection)
    train: TrainSection = Field(default_factory=TrainSection)
    tree: TreeSection = Field(default_factory=TreeSection)
    labeled_fraction: float = Field(1.0, gt=0, le=1)
    label_seed: int = 0


class GradcheckConfig(_Strict):
    instances: int = Field(50, ge=1)
    seed: int = 0
    h: float = Field(1e-5, ge=1e-7, le=1e-3)
    tolerance: float = Field(1e-5, gt=0)


def _read_json(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidArgument(f"no such config file: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise InvalidArgument(f"{path}: config must be a JSON object")
    return raw


def _validate(cls, raw, path):
    try:
        return cls.model_validate(raw)
    except ValidationError as exc:
        lines = [f"{'.'.join(map(str, e['loc'])) or '<root>'}: {e['msg']}"
                 for e in exc.errors()]
        raise InvalidArgument(f"{path}: invalid config\n  " + "\n  ".join(lines)) from None


def load_run_config(path) -> RunConfig:
    """Validated training config; a relative CSV path is resolved against
    the directory holding the config file."""
    cfg = _validate(RunConfig, _read_json(path), path)
    if cfg.data.path is not None and not Path(cfg.data.path).is_absolute():
        cfg.data.path = str(Path(path).resolve().parent / cfg.data.path)
    return cfg


def load_gradcheck_config(path=None) -> GradcheckConfig:
    if path is None:
        return GradcheckConfig()
    return _validate(GradcheckConfig, _read_json(path), path)
