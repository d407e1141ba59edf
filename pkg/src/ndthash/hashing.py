"""Region-table predictors on top of a hashing head, and random LSH heads."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .chains import (MASS_EPS, RegionTable, build_region_table, chain_index,
                     chain_string, hard_assign, hard_memberships, memberships)
from .data import CONTINUOUS, ONE_HOT, Dataset
from .errors import InvalidArgument, LabelKindMismatch
from .net import Autoencoder, DenseLayer, Network


def head_outputs(model, x) -> np.ndarray:
    """Hashing-head outputs of a network or of an autoencoder's latent head."""
    if isinstance(model, Autoencoder):
        return model.forward(x)[2]
    return model.forward(x)


def hash_codes(model, x) -> np.ndarray:
    """Hard chain bits (n x k) of every row of ``x``."""
    return hard_assign(head_outputs(model, x))


def codes_to_strings(codes) -> list:
    return [chain_string(row) for row in np.atleast_2d(codes)]


def write_codes_csv(codes, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "code"])
        for i, code in enumerate(codes_to_strings(codes)):
            w.writerow([i, code])


def random_lsh_head(d: int, k: int, seed: int = 0) -> Network:
    """One sigmoid layer with standard-normal hyperplanes and zero biases."""
    if d < 1 or k < 1:
        raise InvalidArgument("need d >= 1 and k >= 1")
    rng = np.random.default_rng(seed)
    return Network([DenseLayer(rng.standard_normal((k, d)), np.zeros(k), "sigmoid")])


def min_head_width(n_classes: int) -> int:
    return max(1, math.ceil(math.log2(n_classes))) if n_classes > 1 else 1


def fit_region_table(model, dataset: Dataset, assignment: str = "soft",
                     policy: Optional[str] = None, eps: float = MASS_EPS) -> RegionTable:
    """Per-chain statistics of a labeled dataset under ``model``'s head.

    ``assignment="soft"`` weights every sample by its chain memberships,
    ``"hard"`` counts samples in their thresholded chain.
    """
    if assignment not in ("soft", "hard"):
        raise InvalidArgument(f"unknown assignment {assignment!r}")
    if policy is None:
        policy = "mode" if dataset.label_kind == ONE_HOT else "mean"
    if policy == "mode" and dataset.label_kind != ONE_HOT:
        raise LabelKindMismatch("mode policy needs class labels")
    if policy == "mean" and dataset.label_kind != CONTINUOUS:
        raise LabelKindMismatch("mean policy needs continuous targets")
    out = head_outputs(model, dataset.features)
    k = out.shape[1]
    if policy == "mode" and k < min_head_width(dataset.n_classes):
        raise InvalidArgument(
            f"head width {k} cannot separate {dataset.n_classes} classes; "
            f"need at least {min_head_width(dataset.n_classes)} outputs")
    m = memberships(out) if assignment == "soft" else hard_memberships(out)
    return build_region_table(m, dataset.labels, policy, eps, k)


@dataclass
class Prediction:
    """Batch prediction: ``value`` is class ids (mode) or n x m means."""

    value: np.ndarray
    confidence: np.ndarray
    region: np.ndarray
    unseen: np.ndarray
    abstained: Optional[np.ndarray] = None


@dataclass
class Predictor:
    model: object
    table: RegionTable

    def __post_init__(self):
        k = head_outputs(self.model, np.zeros((1, self.in_dim))).shape[1]
        if k != self.table.k:
            raise InvalidArgument("region table chain length differs from head width")

    @property
    def in_dim(self) -> int:
        return self.model.in_dim

    @classmethod
    def fit(cls, model, dataset: Dataset, assignment: str = "hard") -> "Predictor":
        return cls(model, fit_region_table(model, dataset, assignment))


def predict_with_confidence(predictor: Predictor, x, abstain_below: Optional[float] = None
                            ) -> Prediction:
    """Thresholded chain -> region statistics -> policy output.

    Confidence is the region's largest class probability (mode policy) or
    its mass (mean policy); regions never seen in training fall back to
    the global mode/mean with confidence 0.  With ``abstain_below`` set,
    rows whose confidence is lower are flagged in ``abstained``.
    """
    table = predictor.table
    region = chain_index(hash_codes(predictor.model, x))
    unseen = table.zero_mass[region]
    if table.policy == "mode":
        dist = np.where(unseen[:, None], table.default[None, :], table.stats[region])
        value = np.argmax(dist, axis=1)
        conf = np.where(unseen, 0.0, np.max(table.stats[region], axis=1))
    else:
        value = np.where(unseen[:, None], table.default[None, :], table.stats[region])
        conf = np.where(unseen, 0.0, table.mass[region])
    abstained = None if abstain_below is None else conf < abstain_below
    return Prediction(value, conf, region, unseen, abstained)


def accuracy(predictor: Predictor, dataset: Dataset) -> float:
    pred = predict_with_confidence(predictor, dataset.features)
    return float(np.mean(pred.value == dataset.class_ids))


def mean_squared_error(predictor: Predictor, dataset: Dataset) -> float:
    pred = predict_with_confidence(predictor, dataset.features)
    return float(np.mean(np.sum((pred.value - dataset.labels) ** 2, axis=1)))
