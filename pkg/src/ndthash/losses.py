"""Impurity functions and every scalar objective used for training.

Functions prefixed with an underscore return ``(loss, gradients)`` and are
the building blocks the gradient engine uses; the public functions return
plain floats.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .chains import MASS_EPS, chain_mass, memberships
from .errors import InvalidArgument, LabelKindMismatch

LN2 = math.log(2.0)
IMPURITIES = ("gini", "entropy")


class NoLabeledRowsWarning(UserWarning):
    """Semi-supervised loss evaluated on a batch without labeled rows."""


def _check_simplex(f, tol=1e-9):
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1 or f.size == 0:
        raise InvalidArgument("expected a non-empty probability vector")
    if np.any(f < -tol) or abs(f.sum() - 1.0) > tol:
        raise InvalidArgument("input is not on the probability simplex")
    return np.clip(f, 0.0, None)


def gini_impurity(f) -> float:
    f = _check_simplex(f)
    return float(1.0 - np.dot(f, f))


def entropy(f) -> float:
    """Base-2 entropy with 0 log 0 = 0."""
    f = _check_simplex(f)
    nz = f[f > 0]
    return float(-np.sum(nz * np.log2(nz)))


def _row_impurity(f, impurity):
    """Impurity of each row of ``f`` and the perspective-function gradient.

    For h(A) = T * E(A / T) with T = sum(A), the second value is dh/dA
    expressed through f = A / T.
    """
    if impurity == "gini":
        sq = np.sum(f * f, axis=1, keepdims=True)
        return 1.0 - sq[:, 0], 1.0 + sq - 2.0 * f
    if impurity == "entropy":
        safe = np.where(f > 0, f, 1.0)
        logf = np.log2(safe)
        return -np.sum(f * logf, axis=1), -np.log2(np.maximum(f, np.finfo(float).tiny))
    raise InvalidArgument(f"unknown impurity {impurity!r}")


def _weighted_impurity(m, yw, total, impurity="gini", eps=MASS_EPS):
    """Mass-weighted impurity over the columns of a membership matrix.

    ``m`` is n x R (regions), ``yw`` n x C nonnegative label weights and
    ``total`` the normaliser treated as a constant.  Returns the loss
    ``sum_r (T_r / total) E(f_r)`` and its gradient with respect to ``m``.
    Regions with ``T_r / total < eps`` are skipped.
    """
    counts = m.T @ yw
    t = counts.sum(axis=1)
    active = t / total >= eps
    f = counts[active] / t[active, None]
    e, dh = _row_impurity(f, impurity)
    loss = float(np.sum(t[active] * e) / total)
    grad = np.zeros_like(m)
    grad[:, active] = (yw @ dh.T) / total
    return loss, grad


def _label_weights(labels, class_weights):
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim != 2:
        raise LabelKindMismatch("class losses need an n x C one-hot label matrix")
    if class_weights is None:
        return labels
    cw = np.asarray(class_weights, dtype=np.float64).reshape(-1)
    if cw.shape != (labels.shape[1],) or np.any(cw <= 0) or not np.all(np.isfinite(cw)):
        raise InvalidArgument("class_weights must be a positive vector of length C")
    return labels * cw


def _classification(m, labels, impurity="gini", class_weights=None, eps=MASS_EPS):
    m = np.asarray(m, dtype=np.float64)
    yw = _label_weights(labels, class_weights)
    if yw.shape[1] < 2:
        raise InvalidArgument("classification losses need C >= 2")
    if yw.shape[0] != m.shape[0]:
        raise InvalidArgument("labels and memberships have different row counts")
    return _weighted_impurity(m, yw, yw.sum(), impurity, eps)


def hashing_classification_loss(m, labels, impurity="gini", class_weights=None,
                                eps=MASS_EPS) -> float:
    """Sum over chains of p(chain) times the impurity of its class distribution."""
    return _classification(m, labels, impurity, class_weights, eps)[0]


def _variance(m, values, eps=MASS_EPS):
    """Chain-mass-weighted intra-region variance (trace form).

    Returns ``(loss, d loss / d m, d loss / d values)``.
    """
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] != m.shape[0]:
        raise InvalidArgument("values and memberships have different row counts")
    n = m.shape[0]
    t = m.sum(axis=0)
    active = t / n >= eps
    ma = m[:, active]
    mu = (ma.T @ v) / t[active, None]
    diff = v[:, None, :] - mu[None, :, :]
    sq = np.sum(diff * diff, axis=2)
    loss = float(np.sum(ma * sq) / n)
    grad_m = np.zeros_like(m)
    grad_m[:, active] = sq / n
    # the mean's own dependence drops out: sum_i m_ic (v_i - mu_c) = 0
    grad_v = 2.0 * np.einsum("ic,icd->id", ma, diff) / n
    return loss, grad_m, grad_v


def hashing_regression_loss(m, targets, eps=MASS_EPS) -> float:
    if targets is None:
        raise LabelKindMismatch("regression loss needs targets")
    return _variance(m, targets, eps)[0]


def unsupervised_variance_loss(m, points, eps=MASS_EPS) -> float:
    return _variance(m, points, eps)[0]


# ---------------------------------------------------------------------------
# autoencoder composites

def _reconstruction(recon, x):
    diff = recon - x
    return float(np.sum(diff * diff) / x.shape[0]), 2.0 * diff / x.shape[0]


def composite_unsupervised_loss(ae, x) -> float:
    """Mean squared reconstruction error plus latent intra-region variance."""
    z, recon, out = ae.forward(x)
    return _reconstruction(recon, np.asarray(x, dtype=np.float64))[0] \
        + unsupervised_variance_loss(memberships(out), z)


def composite_semisup_loss(ae, x, labels, label_mask, impurity="gini",
                           class_weights=None) -> float:
    """Reconstruction error on all rows plus the classification loss on the
    labeled rows (mass and class distributions use labeled rows only)."""
    x = np.asarray(x, dtype=np.float64)
    z, recon, out = ae.forward(x)
    rec = _reconstruction(recon, x)[0]
    mask = np.asarray(label_mask, dtype=bool)
    if mask.shape != (x.shape[0],):
        raise InvalidArgument("label_mask must have one entry per row")
    if not mask.any():
        warnings.warn("no labeled rows; classification term is 0",
                      NoLabeledRowsWarning, stacklevel=2)
        return rec
    labels = np.asarray(labels, dtype=np.float64)
    return rec + hashing_classification_loss(memberships(out[mask]), labels[mask],
                                             impurity, class_weights)


# ---------------------------------------------------------------------------
# regularisers

def uniformity_regularizer(mass) -> float:
    mass = np.asarray(mass, dtype=np.float64)
    return float(np.sum((mass - 1.0 / mass.size) ** 2))


def _uniformity(m):
    """Uniformity penalty of the chain mass and its gradient w.r.t. ``m``."""
    mass = chain_mass(m)
    resid = mass - 1.0 / mass.size
    grad = np.broadcast_to(2.0 * resid / m.shape[0], m.shape).copy()
    return float(np.sum(resid ** 2)), grad


def l2_penalty(params) -> float:
    """Sum of squared weights, biases excluded.

    ``params`` is a model exposing ``flatten``/``weight_mask`` or a sequence
    of weight arrays.
    """
    if hasattr(params, "weight_mask"):
        return float(np.sum(params.flatten()[params.weight_mask()] ** 2))
    return float(sum(np.sum(np.asarray(w, dtype=np.float64) ** 2) for w in params))


# ---------------------------------------------------------------------------
# node-level quantities for a single soft split (binary labels)

@dataclass(frozen=True)
class NodeSplitStats:
    P: float
    N: float
    n_left: float
    n_right: float
    P_left: float
    N_left: float
    P_right: float
    N_right: float


def _binary_labels(y):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2:
        if y.shape[1] != 2:
            raise InvalidArgument("node statistics need binary labels")
        y = y[:, 1]
    if not np.all((y == 0) | (y == 1)):
        raise InvalidArgument("node statistics need labels in {0, 1}")
    return y


def node_split_stats(phi, y, weights=None) -> NodeSplitStats:
    """Soft split counts; ``phi`` is each sample's probability of going left.

    Optional ``weights`` scale every sample (e.g. arrival probabilities).
    """
    phi = np.asarray(phi, dtype=np.float64).reshape(-1)
    y = _binary_labels(y)
    if y.shape != phi.shape:
        raise InvalidArgument("phi and labels differ in length")
    w = np.ones_like(phi) if weights is None else np.asarray(weights, dtype=np.float64)
    P = float(np.sum(w * y))
    N = float(np.sum(w * (1.0 - y)))
    n_left = float(np.sum(w * phi))
    P_left = float(np.sum(w * phi * y))
    N_left = n_left - P_left
    return NodeSplitStats(P, N, n_left, P + N - n_left, P_left, N_left,
                          P - P_left, N - N_left)


def _pair_entropy(a, b):
    s = a + b
    if s <= 0:
        return 0.0
    f = np.array([a, b]) / s
    f = f[f > 0]
    return float(-np.sum(f * np.log2(f)))


def _pair_gini(a, b):
    s = a + b
    return 1.0 - (a / s) ** 2 - (b / s) ** 2


def node_gini_loss(stats: NodeSplitStats, eps=MASS_EPS) -> float:
    total = stats.P + stats.N
    loss = 0.0
    for n_c, p_c, q_c in ((stats.n_left, stats.P_left, stats.N_left),
                          (stats.n_right, stats.P_right, stats.N_right)):
        if n_c / total >= eps:
            loss += n_c / total * _pair_gini(p_c, q_c)
    return loss


def node_info_gain(stats: NodeSplitStats, eps=MASS_EPS) -> float:
    total = stats.P + stats.N
    gain = _pair_entropy(stats.P, stats.N)
    for n_c, p_c, q_c in ((stats.n_left, stats.P_left, stats.N_left),
                          (stats.n_right, stats.P_right, stats.N_right)):
        if n_c / total >= eps:
            gain -= n_c / total * _pair_entropy(p_c, q_c)
    return gain


def _split_memberships(phi, weights):
    phi = np.asarray(phi, dtype=np.float64).reshape(-1)
    w = np.ones_like(phi) if weights is None else np.asarray(weights, dtype=np.float64)
    return np.column_stack([w * phi, w * (1.0 - phi)]), w


def _split_impurity(phi, labels, weights=None, impurity="gini", eps=MASS_EPS):
    """Weighted child impurity of a soft split for one-hot labels (any C).

    Returns the loss and its gradient with respect to ``phi``.
    """
    m, w = _split_memberships(phi, weights)
    labels = np.asarray(labels, dtype=np.float64)
    total = float(np.sum(w[:, None] * labels))
    loss, g = _weighted_impurity(m, labels, total, impurity, eps)
    return loss, w * (g[:, 0] - g[:, 1])


def _split_variance(phi, targets, weights=None, eps=MASS_EPS):
    """Sum of the two children's intra-variances and its gradient w.r.t. phi."""
    m, w = _split_memberships(phi, weights)
    v = np.asarray(targets, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    total = w.sum()
    loss, grad = 0.0, np.zeros(m.shape[0])
    for col, sign in ((0, 1.0), (1, -1.0)):
        mc = m[:, col]
        s = mc.sum()
        if s / total < eps:
            continue
        mu = (mc @ v) / s
        sq = np.sum((v - mu) ** 2, axis=1)
        var = float(mc @ sq / s)
        loss += var
        grad += sign * w * (sq - var) / s
    return loss, grad


def node_variance_loss(phi, targets, weights=None, eps=MASS_EPS) -> float:
    return _split_variance(phi, targets, weights, eps)[0]


# ---------------------------------------------------------------------------
# whole-tree losses over leaf memberships

def _check_leaves(leaf_m, tol=1e-9):
    leaf_m = np.asarray(leaf_m, dtype=np.float64)
    if leaf_m.ndim != 2:
        raise InvalidArgument("leaf memberships must be an n x L matrix")
    if np.any(np.abs(leaf_m.sum(axis=1) - 1.0) > tol):
        raise InvalidArgument("leaf memberships do not sum to 1 per sample")
    return leaf_m


def root_entropy(labels) -> float:
    labels = np.asarray(labels, dtype=np.float64)
    return entropy(labels.sum(axis=0) / labels.sum())


def global_tree_gini(leaf_m, labels) -> float:
    leaf_m = _check_leaves(leaf_m)
    return hashing_classification_loss(leaf_m, labels, "gini")


def global_tree_ig(leaf_m, labels) -> float:
    leaf_m = _check_leaves(leaf_m)
    return root_entropy(labels) - hashing_classification_loss(leaf_m, labels, "entropy")


# ---------------------------------------------------------------------------

LOSS_KINDS = ("gini", "info_gain", "variance", "unsup_variance",
              "reconstruction+unsup", "reconstruction+semisup")


@dataclass
class LossSpec:
    """Which objective to optimise plus regulariser weights.

    ``gini`` / ``info_gain`` are the hashing classification loss with the
    Gini or entropy impurity; ``variance`` the regression loss;
    ``unsup_variance`` the intra-region variance of the inputs; the two
    ``reconstruction+`` kinds are the autoencoder composites (the
    semi-supervised one uses ``impurity``).  ``cross_entropy`` trains the
    single-output MLP baseline.
    """

    kind: str = "gini"
    lambda_uniform: float = 0.0
    lambda_l2: float = 0.0
    class_weights: Optional[Sequence[float]] = None
    impurity: str = "gini"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS + ("cross_entropy",):
            raise InvalidArgument(f"unknown loss kind {self.kind!r}")
        for name in ("lambda_uniform", "lambda_l2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidArgument(f"{name} must be finite and >= 0")
        if self.impurity not in IMPURITIES:
            raise InvalidArgument(f"unknown impurity {self.impurity!r}")
        if self.class_weights is not None:
            cw = np.asarray(self.class_weights, dtype=np.float64)
            if np.any(cw <= 0) or not np.all(np.isfinite(cw)):
                raise InvalidArgument("class_weights must be positive and finite")

    @property
    def needs_autoencoder(self) -> bool:
        return self.kind.startswith("reconstruction+")

    @property
    def label_kind(self) -> str:
        if self.kind in ("gini", "info_gain", "reconstruction+semisup", "cross_entropy"):
            return "one_hot_class"
        if self.kind == "variance":
            return "continuous"
        return "none"
