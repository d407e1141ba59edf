"""Seeded random instances and the gradient verification suite."""
from __future__ import annotations

import numpy as np

from .data import Dataset, one_hot
from .grad import (analytic_hashing_gradient, backprop_gradient, gradcheck, gradcheck_fn,
                   loss_value)
from .losses import LOSS_KINDS, LossSpec
from .net import Autoencoder, DenseLayer, Network, Stack
from .tree import NDTNode, NDTree, global_loss_and_grad


def _random_layers(rng, dims, activations):
    return [DenseLayer(rng.normal(0.0, 1.0, (b, a)), rng.normal(0.0, 0.5, b), act)
            for a, b, act in zip(dims[:-1], dims[1:], activations)]


def random_network(rng, d, k, hidden=()):
    dims = [d, *hidden, k]
    acts = [str(rng.choice(["sigmoid", "tanh", "identity"])) for _ in hidden] + ["sigmoid"]
    return Network(_random_layers(rng, dims, acts))


def random_instance(kind: str, rng, n=None):
    """``(model, x, spec, labels, mask)`` for one loss kind.

    Sizes stay within n <= 10, d <= 3, k <= 3.
    """
    n = int(rng.integers(1, 11)) if n is None else n
    d = int(rng.integers(1, 4))
    k = int(rng.integers(1, 4))
    x = rng.normal(0.0, 1.0, (n, d))
    spec = LossSpec(kind, float(rng.uniform(0, 0.5)), float(rng.uniform(0, 0.01)))
    labels = mask = None
    if kind in ("gini", "info_gain", "reconstruction+semisup"):
        c = int(rng.integers(2, 4))
        labels = one_hot(rng.integers(0, c, n), c)
    elif kind == "variance":
        labels = rng.normal(0.0, 1.0, (n, int(rng.integers(1, 3))))
    if kind.startswith("reconstruction+"):
        latent = int(rng.integers(1, 3))
        enc = Stack(_random_layers(rng, [d, latent], ["tanh"]))
        dec = Stack(_random_layers(rng, [latent, d], ["identity"]))
        model = Autoencoder(enc, dec, random_network(rng, latent, k))
        mask = rng.random(n) < 0.6
    else:
        hidden = () if rng.random() < 0.5 else (int(rng.integers(1, 4)),)
        model = random_network(rng, d, k, hidden)
    return model, x, spec, labels, mask


def random_tree(rng, d, depth):
    def build(level, index):
        if level == depth:
            return NDTNode((level, index))
        net = Network(_random_layers(rng, [d, 1], ["sigmoid"]))
        return NDTNode((level, index), net, build(level + 1, 2 * index),
                       build(level + 1, 2 * index + 1))
    return NDTree(build(0, 0), "one_hot_class", 2, d)


def run_gradcheck_suite(instances: int = 50, seed: int = 0, h: float = 1e-5,
                        tolerance: float = 1e-5, corrupt: bool = False) -> dict:
    """Backprop vs central differences for every loss kind, plus
    cross-checks of the hand-derived single-layer gradient and the tree
    gradient.  ``corrupt`` injects an error into every analytic gradient."""
    report = {"h": h, "tolerance": tolerance, "instances": instances, "seed": seed,
              "kinds": {}, "cross_checks": {}}
    worst = ("", -1.0)
    for j, kind in enumerate(LOSS_KINDS):
        rng = np.random.default_rng([seed, j])
        errs = []
        for _ in range(instances):
            model, x, spec, labels, mask = random_instance(kind, rng)
            errs.append(gradcheck(model, x, spec, labels, mask, h, tolerance,
                                  corrupt).max_rel_err)
        errs = np.array(errs)
        report["kinds"][kind] = {"max_rel_err": float(errs.max()),
                                 "mean_rel_err": float(errs.mean()),
                                 "worst_instance": int(errs.argmax()),
                                 "passed": bool(errs.max() <= tolerance)}
        if errs.max() > worst[1]:
            worst = (kind, float(errs.max()))

    rng = np.random.default_rng([seed, 100])
    fd_errs, agree = [], []
    for _ in range(instances):
        d, k, n = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 11))
        net = random_network(rng, d, k)
        x = rng.normal(size=(n, d))
        labels = one_hot(rng.integers(0, int(rng.integers(2, 4)), n))
        if labels.shape[1] < 2:
            labels = np.column_stack([labels, np.zeros(n)])
        dw, db = analytic_hashing_gradient(net, x, labels)
        flat = np.concatenate([dw.ravel(), db])
        if corrupt:
            flat[0] += 1e-2
        spec = LossSpec("gini")
        agree.append(float(np.max(np.abs(flat - backprop_gradient(net, x, spec, labels)))))
        rep = gradcheck_fn(lambda v: loss_value(net.unflatten(v), x, spec, labels),
                           flat, net.flatten(), h, tolerance)
        fd_errs.append(rep.max_rel_err)
    report["cross_checks"]["analytic_gini_vs_fd"] = {
        "max_rel_err": max(fd_errs), "passed": max(fd_errs) <= tolerance}
    report["cross_checks"]["analytic_vs_backprop"] = {
        "max_abs_diff": max(agree), "passed": max(agree) <= 1e-9}

    rng = np.random.default_rng([seed, 200])
    tree_errs = []
    for _ in range(max(1, instances // 5)):
        d, n = int(rng.integers(1, 4)), int(rng.integers(2, 11))
        tree = random_tree(rng, d, int(rng.integers(1, 4)))
        ds = Dataset(rng.normal(size=(n, d)), one_hot(rng.integers(0, 2, n), 2),
                     "one_hot_class")
        objective = str(rng.choice(["gini", "info_gain"]))
        theta = tree.flatten()
        _, g = global_loss_and_grad(tree, ds, objective)
        if corrupt:
            g = g.copy()
            g[0] += 1e-2
        rep = gradcheck_fn(lambda v: global_loss_and_grad(tree.unflatten(v), ds, objective,
                                                          need_grad=False)[0],
                           g, theta, h, tolerance)
        tree_errs.append(rep.max_rel_err)
    report["cross_checks"]["tree_global_vs_fd"] = {
        "max_rel_err": max(tree_errs), "passed": max(tree_errs) <= tolerance}

    for name, entry in report["cross_checks"].items():
        score = entry.get("max_rel_err", entry.get("max_abs_diff"))
        if not entry["passed"] and score > worst[1]:
            worst = (name, score)
    report["passed"] = all(v["passed"] for v in report["kinds"].values()) and \
        all(v["passed"] for v in report["cross_checks"].values())
    report["worst"] = {"name": worst[0], "max_rel_err": worst[1]}
    return report
