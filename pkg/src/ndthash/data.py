"""Toy dataset generators, CSV ingestion and label encodings."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, InvalidArgument

ONE_HOT = "one_hot_class"
CONTINUOUS = "continuous"
NONE = "none"


@dataclass
class Dataset:
    """Feature matrix plus an optional label block.

    ``label_kind`` is one of ``"one_hot_class"`` (labels are an n x C one-hot
    matrix), ``"continuous"`` (n x m real targets) or ``"none"``.
    ``columns`` keeps the CSV header names when the data came from a file
    that had one.
    """

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    label_kind: str = NONE
    columns: Optional[list] = field(default=None, compare=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise InvalidArgument("features must be a 2-D matrix")
        if not np.all(np.isfinite(self.features)):
            raise InvalidArgument("features contain non-finite values")
        if self.label_kind not in (ONE_HOT, CONTINUOUS, NONE):
            raise InvalidArgument(f"unknown label kind {self.label_kind!r}")
        if self.label_kind == NONE:
            if self.labels is not None:
                raise InvalidArgument("label_kind 'none' but labels given")
            return
        if self.labels is None:
            raise InvalidArgument(f"label_kind {self.label_kind!r} requires labels")
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.labels.ndim == 1:
            self.labels = self.labels[:, None]
        if self.labels.shape[0] != self.features.shape[0]:
            raise InvalidArgument("features and labels have different row counts")
        if not np.all(np.isfinite(self.labels)):
            raise InvalidArgument("labels contain non-finite values")
        if self.label_kind == ONE_HOT:
            check_one_hot(self.labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_dims(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> Optional[int]:
        return self.labels.shape[1] if self.label_kind == ONE_HOT else None

    @property
    def class_ids(self) -> np.ndarray:
        if self.label_kind != ONE_HOT:
            raise InvalidArgument("dataset has no class labels")
        return np.argmax(self.labels, axis=1)

    def subset(self, idx) -> "Dataset":
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.features[idx], labels, self.label_kind, self.columns)


def check_one_hot(labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.shape[1] < 1:
        raise InvalidArgument("one-hot labels must be an n x C matrix")
    ok = (np.all((labels == 0) | (labels == 1), axis=1)
          & (labels.sum(axis=1) == 1))
    if not np.all(ok):
        bad = int(np.flatnonzero(~ok)[0])
        raise InvalidArgument(f"label row {bad} is not one-hot")


def one_hot(codes: Sequence[int], n_classes: Optional[int] = None) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.size and (codes.min() < 0 or not np.all(codes == np.round(codes))):
        raise InvalidArgument("class codes must be nonnegative integers")
    codes = codes.astype(np.int64)
    if n_classes is None:
        n_classes = int(codes.max()) + 1 if codes.size else 0
    out = np.zeros((codes.size, n_classes))
    out[np.arange(codes.size), codes] = 1.0
    return out


def _split_counts(n: int):
    # odd n: the extra point goes to class 0
    n0 = (n + 1) // 2
    return n0, n - n0


def gen_two_moons(n: int = 200, noise_sd: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaved unit half-circles.

    Class 0 lies on ``(cos t, sin t)``, class 1 on ``(1 - cos t, 0.5 - sin t)``
    for ``t`` evenly spaced in ``[0, pi]``; Gaussian noise is then added to
    every coordinate.
    """
    if n < 2:
        raise InvalidArgument("two moons needs n >= 2")
    if noise_sd < 0:
        raise InvalidArgument("noise_sd must be nonnegative")
    n0, n1 = _split_counts(n)
    t0 = np.linspace(0.0, math.pi, n0)
    t1 = np.linspace(0.0, math.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 1.0 - np.sin(t1) - 0.5])
    x = np.vstack([upper, lower])
    rng = np.random.default_rng(seed)
    if noise_sd > 0:
        x = x + rng.normal(0.0, noise_sd, size=x.shape)
    y = one_hot(np.repeat([0, 1], [n0, n1]), 2)
    return Dataset(x, y, ONE_HOT)


def gen_two_circles(n: int = 400, r_inner: float = 1.0, r_outer: float = 2.0,
                    noise_sd: float = 0.0, seed: int = 0) -> Dataset:
    """Two concentric circles, inner one is class 0.

    Angles are drawn uniformly on ``[0, 2 pi)``.
    """
    if n < 2:
        raise InvalidArgument("two circles needs n >= 2")
    if not r_inner > 0:
        raise InvalidArgument("r_inner must be positive")
    if not r_outer > r_inner:
        raise InvalidArgument("r_outer must exceed r_inner")
    if noise_sd < 0:
        raise InvalidArgument("noise_sd must be nonnegative")
    n0, n1 = _split_counts(n)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
    radius = np.repeat([r_inner, r_outer], [n0, n1])
    x = radius[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
    if noise_sd > 0:
        x = x + rng.normal(0.0, noise_sd, size=x.shape)
    y = one_hot(np.repeat([0, 1], [n0, n1]), 2)
    return Dataset(x, y, ONE_HOT)


def gen_blobs(centers, n_per: int = 50, sd: float = 1.0, seed: int = 0) -> Dataset:
    """Isotropic Gaussian blobs, one class per center."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if n_per < 1 or sd < 0:
        raise InvalidArgument("need n_per >= 1 and sd >= 0")
    rng = np.random.default_rng(seed)
    x = np.vstack([c + sd * rng.standard_normal((n_per, centers.shape[1]))
                   for c in centers])
    y = one_hot(np.repeat(np.arange(len(centers)), n_per), len(centers))
    return Dataset(x, y, ONE_HOT)


# ---------------------------------------------------------------------------
# CSV

def _parse_label_spec(label_spec):
    """Normalise ``label_spec`` into ``(kind, m)``.

    Accepts ``"class"`` / ``"last_column_class"``, ``"none"``, an int m
    (last m columns continuous) or ``("continuous", m)``.
    """
    if label_spec in (None, "none", NONE):
        return NONE, 0
    if label_spec in ("class", "last_column_class", ONE_HOT):
        return ONE_HOT, 1
    if isinstance(label_spec, (int, np.integer)) and not isinstance(label_spec, bool):
        m = int(label_spec)
    elif isinstance(label_spec, (tuple, list)) and len(label_spec) == 2 \
            and label_spec[0] in ("continuous", CONTINUOUS):
        m = int(label_spec[1])
    else:
        raise InvalidArgument(f"unknown label spec {label_spec!r}")
    if m < 1:
        raise InvalidArgument("continuous label spec needs m >= 1")
    return CONTINUOUS, m


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, label_spec="class", n_classes: Optional[int] = None) -> Dataset:
    """Read a numeric CSV file into a :class:`Dataset`.

    A first row containing any non-numeric cell is taken as a header.
    Class codes in the last column are one-hot encoded with
    ``C = max code + 1`` unless ``n_classes`` is given.
    """
    kind, m = _parse_label_spec(label_spec)
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh)]
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    # drop fully blank lines, keep 1-based file row numbers for messages
    numbered = [(i + 1, r) for i, r in enumerate(rows)
                if r and any(c.strip() for c in r)]
    if not numbered:
        raise DataError(f"{path}: empty file")
    header = None
    if not all(_is_number(c) for c in numbered[0][1]):
        header = [c.strip() for c in numbered[0][1]]
        numbered = numbered[1:]
    if not numbered:
        raise DataError(f"{path}: no data rows")
    width = len(header) if header is not None else len(numbered[0][1])
    values = np.empty((len(numbered), width))
    for k, (lineno, row) in enumerate(numbered):
        if len(row) != width:
            raise DataError(f"{path}: expected {width} cells, got {len(row)}",
                            row=lineno)
        for j, cell in enumerate(row):
            try:
                values[k, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r}",
                                row=lineno, column=j + 1) from None
            if not math.isfinite(values[k, j]):
                raise DataError(f"{path}: non-finite cell {cell!r}",
                                row=lineno, column=j + 1)
    if m >= width:
        raise DataError(f"{path}: {width} columns leave no features")
    features = values[:, :width - m] if m else values
    if kind == ONE_HOT:
        codes = values[:, -1]
        bad = np.flatnonzero((codes < 0) | (codes != np.round(codes)))
        if bad.size:
            raise DataError(f"{path}: class code must be an integer >= 0",
                            row=numbered[bad[0]][0], column=width)
        if n_classes is not None and codes.max() >= n_classes:
            raise DataError(f"{path}: class code exceeds {n_classes - 1}")
        labels = one_hot(codes, n_classes)
    elif kind == CONTINUOUS:
        labels = values[:, width - m:]
    else:
        labels = None
    return Dataset(features, labels, kind, header)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(dataset: Dataset, path) -> None:
    """Write a dataset in the format :func:`load_csv` reads back exactly."""
    d = dataset.n_dims
    header = [f"x{j}" for j in range(d)]
    if dataset.label_kind == ONE_HOT:
        header.append("label")
        tail = dataset.class_ids[:, None]
    elif dataset.label_kind == CONTINUOUS:
        header += [f"y{j}" for j in range(dataset.labels.shape[1])]
        tail = dataset.labels
    else:
        tail = np.zeros((dataset.n_samples, 0))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row, extra in zip(dataset.features, tail):
            cells = [_fmt(v) for v in row]
            if dataset.label_kind == ONE_HOT:
                cells.append(str(int(extra[0])))
            else:
                cells += [_fmt(v) for v in extra]
            w.writerow(cells)


def train_test_split(dataset: Dataset, test_fraction: float = 0.25, seed: int = 0):
    if not 0 < test_fraction < 1:
        raise InvalidArgument("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.n_samples)
    n_test = int(round(test_fraction * dataset.n_samples))
    return dataset.subset(np.sort(perm[n_test:])), dataset.subset(np.sort(perm[:n_test]))
