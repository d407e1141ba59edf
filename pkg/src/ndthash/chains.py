"""Sub-region ("chain") bookkeeping for a k-bit sigmoid hashing head.

Chains are indexed lexicographically with the first output unit as the
most significant bit, so chain index ``c`` has bit ``n`` equal to
``(c >> (k - 1 - n)) & 1``.  A membership matrix is always n x 2^k with
columns in that order.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import InvalidArgument, UnsupportedWidth
from .net import MAX_HEAD_WIDTH

MASS_EPS = 1e-12


def _check_k(k: int) -> int:
    if int(k) != k or k < 1:
        raise InvalidArgument(f"chain length must be a positive integer, got {k}")
    if k > MAX_HEAD_WIDTH:
        raise UnsupportedWidth(f"chain length {k} exceeds {MAX_HEAD_WIDTH}")
    return int(k)


def chain_bits(k: int) -> np.ndarray:
    """All 2^k chains as a (2^k, k) 0/1 array in lexicographic order."""
    k = _check_k(k)
    idx = np.arange(2 ** k)[:, None]
    shifts = np.arange(k - 1, -1, -1)[None, :]
    return ((idx >> shifts) & 1).astype(np.int8)


def chain_string(bits) -> str:
    return "".join(str(int(b)) for b in bits)


def enumerate_chains(k: int) -> List[str]:
    return [chain_string(b) for b in chain_bits(k)]


def chain_index(bits) -> np.ndarray:
    """Integer region ids of one chain or a batch of chains (rows)."""
    bits = np.asarray(bits, dtype=np.int64)
    k = bits.shape[-1]
    weights = 1 << np.arange(k - 1, -1, -1)
    return bits @ weights


def _as_out(out) -> np.ndarray:
    out = np.asarray(out, dtype=np.float64)
    if out.ndim == 1:
        out = out[None, :]
    if out.ndim != 2:
        raise InvalidArgument("head outputs must be a vector or an n x k matrix")
    _check_k(out.shape[1])
    return out


def membership(out, chain) -> float:
    """Probability that a sample with head outputs ``out`` lies in ``chain``."""
    out = np.asarray(out, dtype=np.float64).reshape(-1)
    if isinstance(chain, str):
        chain = [int(c) for c in chain]
    chain = np.asarray(chain).reshape(-1)
    if chain.size != out.size:
        raise InvalidArgument(
            f"chain has {chain.size} bits but the head has {out.size} outputs")
    return float(np.prod(np.where(chain == 1, out, 1.0 - out)))


def memberships(out) -> np.ndarray:
    """n x 2^k matrix of chain memberships for a batch of head outputs."""
    out = _as_out(out)
    m = np.ones((out.shape[0], 1))
    for j in range(out.shape[1]):
        o = out[:, j:j + 1]
        # new bit is the least significant one so far
        m = np.stack([m * (1.0 - o), m * o], axis=2).reshape(out.shape[0], -1)
    return m


def membership_backward(out, grad_m) -> np.ndarray:
    """Pull a gradient w.r.t. memberships back to the head outputs.

    For unit n the derivative of a chain's membership is the product of
    the other units' factors, with sign + when the chain's bit n is 1 and
    - when it is 0.  Computed without dividing by ``out``.
    """
    out = _as_out(out)
    n, k = out.shape
    g = np.asarray(grad_m, dtype=np.float64).reshape((n,) + (2,) * k)
    result = np.empty((n, k))
    for j in range(k):
        diff = (np.take(g, 1, axis=1 + j) - np.take(g, 0, axis=1 + j)).reshape(n, -1)
        others = np.delete(out, j, axis=1)
        rest = memberships(others) if k > 1 else np.ones((n, 1))
        result[:, j] = np.sum(diff * rest, axis=1)
    return result


def chain_mass(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0:
        raise InvalidArgument("chain_mass needs a non-empty n x 2^k matrix")
    return m.mean(axis=0)


def class_distribution(m, labels, eps: float = MASS_EPS):
    """Membership-weighted class frequencies per chain.

    Returns ``(f, zero_mass)`` where ``f`` is 2^k x C.  Chains whose mass
    is below ``eps`` get the uniform vector and are flagged in ``zero_mass``.
    """
    m = np.asarray(m, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim != 2 or labels.shape[0] != m.shape[0]:
        raise InvalidArgument("labels must be an n x C matrix matching memberships")
    if np.any(labels < 0):
        raise InvalidArgument("class labels must be nonnegative")
    counts = m.T @ labels
    totals = counts.sum(axis=1)
    zero = totals / max(labels.sum(), eps) < eps
    safe = np.where(zero, 1.0, totals)
    f = counts / safe[:, None]
    f[zero] = 1.0 / labels.shape[1]
    return f, zero


def region_mean(m, values, eps: float = MASS_EPS):
    """Membership-weighted mean of ``values`` (n x m) per chain.

    Returns ``(means, zero_mass)``; zero-mass chains get the zero vector.
    """
    m = np.asarray(m, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != m.shape[0]:
        raise InvalidArgument("values and memberships have different row counts")
    totals = m.sum(axis=0)
    zero = totals / m.shape[0] < eps
    safe = np.where(zero, 1.0, totals)
    means = (m.T @ values) / safe[:, None]
    means[zero] = 0.0
    return means, zero


def hard_assign(out) -> np.ndarray:
    """Threshold head outputs at 0.5 (ties go to 1); returns 0/1 bits."""
    out = np.asarray(out, dtype=np.float64)
    return (out >= 0.5).astype(np.int8)


def hard_memberships(out) -> np.ndarray:
    """One-hot n x 2^k membership matrix of the hard-assigned chains."""
    out = _as_out(out)
    idx = chain_index(hard_assign(out))
    m = np.zeros((out.shape[0], 2 ** out.shape[1]))
    m[np.arange(out.shape[0]), idx] = 1.0
    return m


@dataclass
class RegionTable:
    """Per-chain statistics and the prediction policy that reads them.

    ``stats`` is 2^k x C class distributions (policy ``"mode"``) or
    2^k x m mean targets (policy ``"mean"``).
    """

    k: int
    mass: np.ndarray
    stats: np.ndarray
    policy: str
    zero_mass: np.ndarray
    default: np.ndarray

    def __post_init__(self):
        if self.policy not in ("mode", "mean"):
            raise InvalidArgument(f"unknown policy {self.policy!r}")
        self.mass = np.asarray(self.mass, dtype=np.float64)
        self.stats = np.asarray(self.stats, dtype=np.float64)
        self.zero_mass = np.asarray(self.zero_mass, dtype=bool)
        self.default = np.asarray(self.default, dtype=np.float64)
        if self.mass.shape != (2 ** self.k,) or self.stats.shape[0] != 2 ** self.k:
            raise InvalidArgument("table size does not match 2^k chains")

    @property
    def chains(self) -> List[str]:
        return enumerate_chains(self.k)

    def to_dict(self) -> dict:
        return {"k": self.k, "policy": self.policy,
                "mass": self.mass.tolist(), "stats": self.stats.tolist(),
                "zero_mass": self.zero_mass.tolist(),
                "default": self.default.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RegionTable":
        return cls(int(d["k"]), np.array(d["mass"]),
                   np.array(d["stats"]).reshape(2 ** int(d["k"]), -1),
                   d["policy"], np.array(d["zero_mass"], dtype=bool),
                   np.array(d["default"]))

    def to_csv(self, path) -> None:
        prefix = "p_class" if self.policy == "mode" else "mean"
        cols = [f"{prefix}{j}" for j in range(self.stats.shape[1])]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["chain_bits", "mass", *cols])
            for bits, mass, row in zip(self.chains, self.mass, self.stats):
                w.writerow([bits, repr(float(mass)), *(repr(float(v)) for v in row)])


def build_region_table(m, labels, policy: str, eps: float = MASS_EPS,
                       k: Optional[int] = None) -> RegionTable:
    """Region table from a membership matrix and a label block."""
    m = np.asarray(m, dtype=np.float64)
    if k is None:
        k = int(round(np.log2(m.shape[1])))
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim == 1:
        labels = labels[:, None]
    mass = chain_mass(m)
    if policy == "mode":
        stats, zero = class_distribution(m, labels, eps)
        default = np.zeros(labels.shape[1])
        default[int(np.argmax(labels.sum(axis=0)))] = 1.0
    else:
        stats, zero = region_mean(m, labels, eps)
        default = labels.mean(axis=0)
    return RegionTable(k, mass, stats, policy, zero, default)
