"""Gradient-descent training loop and its history."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .data import ONE_HOT, Dataset
from .errors import Diverged, InvalidArgument
from .grad import evaluate, sgd_step
from .hashing import Predictor, accuracy
from .losses import LossSpec
from .net import Autoencoder

LOSS_EPS = 1e-12


@dataclass
class TrainConfig:
    loss: LossSpec = field(default_factory=LossSpec)
    learning_rate: float = 0.5
    momentum: float = 0.0
    max_iters: int = 1000
    rel_tol: float = 1e-9
    batch_size: Optional[int] = None   # None = full batch
    seed: int = 0
    log_every: int = 10

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossSpec(**self.loss)
        if not self.learning_rate > 0:
            raise InvalidArgument("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise InvalidArgument("momentum must lie in [0, 1)")
        if self.max_iters < 1 or self.log_every < 1:
            raise InvalidArgument("max_iters and log_every must be >= 1")
        if not self.rel_tol > 0:
            raise InvalidArgument("rel_tol must be > 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidArgument("batch_size must be >= 1")


@dataclass
class TrainHistory:
    records: List[dict] = field(default_factory=list)
    stopped: str = ""

    def append(self, record: dict) -> None:
        if self.records and record["iter"] <= self.records[-1]["iter"]:
            raise ValueError("history iterations must increase")
        self.records.append(record)

    @property
    def iterations(self) -> List[int]:
        return [r["iter"] for r in self.records]

    def column(self, name: str) -> list:
        return [r[name] for r in self.records]

    @property
    def final(self) -> dict:
        return self.records[-1]

    def to_jsonl(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(r) + "\n")


def predictor_accuracy(model, dataset: Dataset, spec: LossSpec, label_mask=None):
    """Training accuracy for models with class labels, else ``None``.

    Hashing heads use hard assignment with the majority class of each
    region; the MLP baseline thresholds its single output at 0.5.
    """
    if dataset.label_kind != ONE_HOT:
        return None
    if spec.kind == "cross_entropy":
        pred = (model.forward(dataset.features)[:, 0] >= 0.5).astype(int)
        return float(np.mean(pred == dataset.class_ids))
    if spec.kind in ("gini", "info_gain"):
        return accuracy(Predictor.fit(model, dataset, "hard"), dataset)
    if spec.kind == "reconstruction+semisup":
        mask = np.ones(dataset.n_samples, bool) if label_mask is None else label_mask
        if not mask.any():
            return None
        labeled = dataset.subset(np.flatnonzero(mask))
        return accuracy(Predictor.fit(model, labeled, "hard"), labeled)
    return None


def _record(it, ev, acc):
    return {"iter": it, "loss_total": ev.total, "loss_data": ev.data,
            "reg_uniform": ev.reg_uniform, "reg_l2": ev.reg_l2,
            "mass": ev.mass.tolist(), "train_acc": acc}


def _labels_for(dataset: Dataset, spec: LossSpec):
    want = spec.label_kind
    if want != "none" and dataset.label_kind != want:
        raise InvalidArgument(
            f"loss {spec.kind!r} needs {want} labels, dataset has {dataset.label_kind}")
    return dataset.labels if want != "none" else None


def train(model, dataset: Dataset, config: TrainConfig, label_mask=None):
    """Optimise ``model`` on ``dataset``; returns ``(trained_model, history)``.

    Each iteration is one update.  Training stops after ``max_iters``
    updates or once the relative change of the objective between
    consecutive iterations drops below ``rel_tol``.  Minibatches are drawn
    without replacement from a per-epoch permutation of a seeded generator.
    """
    spec = config.loss
    if spec.needs_autoencoder != isinstance(model, Autoencoder):
        raise InvalidArgument(f"loss {spec.kind!r} does not match the model type")
    labels = _labels_for(dataset, spec)
    x = dataset.features
    n = dataset.n_samples
    mask = None
    if spec.kind == "reconstruction+semisup":
        mask = np.ones(n, bool) if label_mask is None else np.asarray(label_mask, bool)

    rng = np.random.default_rng(config.seed)
    full = config.batch_size is None or config.batch_size >= n
    order, pos = np.arange(n), n

    def batch():
        nonlocal order, pos
        if full:
            return slice(None)
        if pos + config.batch_size > n:
            order, pos = rng.permutation(n), 0
        idx = np.sort(order[pos:pos + config.batch_size])
        pos += config.batch_size
        return idx

    def objective(mdl, idx):
        return evaluate(mdl, x[idx], spec,
                        None if labels is None else labels[idx],
                        None if mask is None else mask[idx])

    history = TrainHistory()
    idx = batch()
    ev = objective(model, idx)
    history.append(_record(0, evaluate(model, x, spec, labels, mask, need_grad=False),
                           predictor_accuracy(model, dataset, spec, mask)))
    theta = model.flatten()
    velocity = np.zeros_like(theta)
    history.stopped = "max_iters"
    for it in range(1, config.max_iters + 1):
        new_theta, velocity = sgd_step(theta, ev.grad, config.learning_rate,
                                       config.momentum, velocity)
        try:
            if not np.all(np.isfinite(new_theta)):
                raise Diverged("non-finite parameters")
            candidate = model.unflatten(new_theta)
            idx = batch()
            new_ev = objective(candidate, idx)
        except Diverged as exc:
            raise Diverged(f"training diverged at iteration {it}: {exc}",
                           iteration=it, state=model, last_loss=ev.total) from None
        model, theta = candidate, new_theta
        change = abs(new_ev.total - ev.total) / max(abs(ev.total), LOSS_EPS)
        ev = new_ev
        done = it == config.max_iters or (full and change < config.rel_tol)
        if it % config.log_every == 0 or done:
            full_ev = ev if full else evaluate(model, x, spec, labels, mask,
                                               need_grad=False)
            history.append(_record(it, full_ev,
                                   predictor_accuracy(model, dataset, spec, mask)))
        if full and change < config.rel_tol:
            history.stopped = "rel_tol"
            break
    return model, history
