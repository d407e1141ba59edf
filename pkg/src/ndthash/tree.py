"""Neural decision trees: soft binary trees whose split nodes are small
sigmoid-headed networks.

Every internal node outputs the probability of sending a sample to its
left child.  A leaf's membership is the product of those probabilities
(or their complements) along the root-to-leaf path.  Leaves are numbered
left to right.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import losses as L
from .data import CONTINUOUS, ONE_HOT, Dataset
from .errors import Diverged, InvalidArgument, LabelKindMismatch
from .grad import sgd_step
from .net import Network, init_network

IMPURITY_FLOOR = 1e-6


@dataclass
class NDTNode:
    node_id: Tuple[int, int]
    split_net: Optional[Network] = None
    left: Optional["NDTNode"] = None
    right: Optional["NDTNode"] = None
    value: Optional[np.ndarray] = None      # leaf class distribution or mean

    def __post_init__(self):
        if (self.left is None) != (self.right is None):
            raise InvalidArgument("an internal node needs both children")
        if self.left is not None:
            if self.split_net is None:
                raise InvalidArgument("an internal node needs a split network")
            if self.split_net.out_dim != 1:
                raise InvalidArgument("split networks must have a single output")

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class TreeConfig:
    max_depth: int = 2
    min_mass: float = 0.01
    criterion: str = "gini"            # gini | info_gain | variance
    hidden: Tuple[int, ...] = ()       # hidden widths of node networks
    learning_rate: float = 50.0
    momentum: float = 0.0
    node_iters: int = 500
    routing: str = "soft"              # soft | hard arrival weights
    restarts: int = 1                  # random inits per node, best kept
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 0:
            raise InvalidArgument("max_depth must be >= 0")
        if self.criterion not in ("gini", "info_gain", "variance"):
            raise InvalidArgument(f"unknown criterion {self.criterion!r}")
        if self.routing not in ("soft", "hard"):
            raise InvalidArgument(f"unknown routing {self.routing!r}")
        if not self.learning_rate > 0 or not 0 <= self.momentum < 1:
            raise InvalidArgument("invalid optimiser settings")
        if self.restarts < 1:
            raise InvalidArgument("restarts must be >= 1")
        self.hidden = tuple(self.hidden)


@dataclass
class NDTree:
    root: NDTNode
    label_kind: str
    n_outputs: int
    in_dim: int
    config: TreeConfig = field(default_factory=TreeConfig)

    def leaves(self) -> List[NDTNode]:
        out = []

        def walk(node):
            if node.is_leaf:
                out.append(node)
            else:
                walk(node.left)
                walk(node.right)
        walk(self.root)
        return out

    def internal_nodes(self) -> List[NDTNode]:
        """Internal nodes in pre-order (the parameter ordering)."""
        out = []

        def walk(node):
            if not node.is_leaf:
                out.append(node)
                walk(node.left)
                walk(node.right)
        walk(self.root)
        return out

    @property
    def depth(self) -> int:
        return max(n.node_id[0] for n in self.leaves())

    def param_count(self) -> int:
        return sum(n.split_net.param_count() for n in self.internal_nodes())

    def flatten(self) -> np.ndarray:
        nodes = self.internal_nodes()
        if not nodes:
            return np.zeros(0)
        return np.concatenate([n.split_net.flatten() for n in nodes])

    def unflatten(self, vec) -> "NDTree":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.param_count(),):
            raise InvalidArgument("parameter vector length does not match the tree")
        pos = 0

        def rebuild(node):
            nonlocal pos
            if node.is_leaf:
                return NDTNode(node.node_id, value=None if node.value is None
                               else node.value.copy())
            size = node.split_net.param_count()
            net = node.split_net.unflatten(vec[pos:pos + size])
            pos += size
            left = rebuild(node.left)
            right = rebuild(node.right)
            return NDTNode(node.node_id, net, left, right)
        return NDTree(rebuild(self.root), self.label_kind, self.n_outputs,
                      self.in_dim, self.config)

    def copy(self) -> "NDTree":
        return self.unflatten(self.flatten())

    def leaf_values(self) -> np.ndarray:
        return np.vstack([leaf.value for leaf in self.leaves()])


def _forward_tree(tree: NDTree, x):
    """Reach probability of every node plus cached node activations."""
    x = np.asarray(x, dtype=np.float64)
    reach = {}
    cache = {}

    def walk(node, r):
        reach[id(node)] = r
        if node.is_leaf:
            return
        acts = node.split_net.activations(x)
        phi = acts[-1][:, 0]
        cache[id(node)] = (acts, phi)
        walk(node.left, r * phi)
        walk(node.right, r * (1.0 - phi))
    if x.ndim != 2 or x.shape[1] != tree.in_dim:
        raise InvalidArgument(f"input has shape {x.shape}, expected (n, {tree.in_dim})")
    walk(tree.root, np.ones(x.shape[0]))
    return reach, cache


def leaf_memberships(tree: NDTree, x) -> np.ndarray:
    """n x leaves matrix of path-product probabilities (rows sum to 1)."""
    reach, _ = _forward_tree(tree, x)
    return np.column_stack([reach[id(leaf)] for leaf in tree.leaves()])


def hard_leaf_index(tree: NDTree, x) -> np.ndarray:
    """Leaf reached by following phi >= 0.5 -> left at every node."""
    x = np.asarray(x, dtype=np.float64)
    leaves = tree.leaves()
    pos = {id(leaf): i for i, leaf in enumerate(leaves)}
    result = np.empty(x.shape[0], dtype=np.int64)

    def walk(node, rows):
        if rows.size == 0:
            return
        if node.is_leaf:
            result[rows] = pos[id(node)]
            return
        go_left = node.split_net.forward(x[rows])[:, 0] >= 0.5
        walk(node.left, rows[go_left])
        walk(node.right, rows[~go_left])
    walk(tree.root, np.arange(x.shape[0]))
    return result


def _leaf_statistics(leaf_m, labels, label_kind):
    mass = leaf_m.sum(axis=0)
    safe = np.where(mass > 0, mass, 1.0)
    stats = (leaf_m.T @ labels) / safe[:, None]
    if label_kind == ONE_HOT:
        fallback = labels.sum(axis=0) / labels.sum()
    else:
        fallback = labels.mean(axis=0)
    stats[mass / leaf_m.shape[0] < L.MASS_EPS] = fallback
    return stats


def refit_leaves(tree: NDTree, dataset: Dataset) -> NDTree:
    """Store membership-weighted class distributions / means in the leaves."""
    stats = _leaf_statistics(leaf_memberships(tree, dataset.features),
                             dataset.labels, tree.label_kind)
    for leaf, row in zip(tree.leaves(), stats):
        leaf.value = row
    return tree


# ---------------------------------------------------------------------------
# greedy growth

def _node_objective(net, x, labels, weights, criterion, label_kind):
    acts = net.activations(x)
    phi = acts[-1][:, 0]
    if criterion == "variance":
        loss, g_phi = L._split_variance(phi, labels, weights)
    else:
        imp = "gini" if criterion == "gini" else "entropy"
        loss, g_phi = L._split_impurity(phi, labels, weights, imp)
    return loss, acts, g_phi


def train_split(net: Network, x, labels, weights, config: TreeConfig):
    """Gradient descent on one node's local soft split loss.

    Returns the trained network and its final loss (for ``info_gain`` the
    loss is the weighted child entropy, i.e. root entropy minus the gain).
    """
    theta = net.flatten()
    velocity = np.zeros_like(theta)
    loss, acts, g_phi = _node_objective(net, x, labels, weights, config.criterion, None)
    for _ in range(config.node_iters):
        grads, _ = net.backward(acts, g_phi[:, None])
        theta, velocity = sgd_step(theta, net.flatten_grads(grads),
                                   config.learning_rate, config.momentum, velocity)
        if not np.all(np.isfinite(theta)):
            raise Diverged("node training diverged", state=net, last_loss=loss)
        net = net.unflatten(theta)
        loss, acts, g_phi = _node_objective(net, x, labels, weights,
                                            config.criterion, None)
    return net, loss


def _node_impurity(labels, weights, label_kind):
    total = weights.sum()
    if label_kind == ONE_HOT:
        f = (weights @ labels) / total
        return 1.0 - float(np.dot(f, f))
    mu = (weights @ labels) / total
    return float(weights @ np.sum((labels - mu) ** 2, axis=1) / total)


def grow_greedy(dataset: Dataset, config: TreeConfig = None) -> NDTree:
    """Grow a tree top-down, training each split on its local loss.

    Samples reach a node with the product of their ancestors' routing
    probabilities (``routing="soft"``) or 0/1 hard-path indicators
    (``routing="hard"``) and are weighted accordingly.  A node becomes a
    leaf at ``max_depth``, when its mass share falls below ``min_mass`` or
    its impurity below 1e-6.
    """
    config = config or TreeConfig()
    if dataset.label_kind == "none":
        raise LabelKindMismatch("greedy growth needs labels")
    want = CONTINUOUS if config.criterion == "variance" else ONE_HOT
    if dataset.label_kind != want:
        raise LabelKindMismatch(
            f"criterion {config.criterion!r} needs {want} labels")
    x, labels = dataset.features, dataset.labels
    n = dataset.n_samples
    dims = [dataset.n_dims, *config.hidden, 1]
    rng = np.random.default_rng(config.seed)

    def build(depth, index, weights):
        node_id = (depth, index)
        mass = weights.sum() / n
        if (depth >= config.max_depth or mass < config.min_mass
                or _node_impurity(labels, weights, dataset.label_kind) < IMPURITY_FLOOR):
            return NDTNode(node_id)
        best = None
        for _ in range(config.restarts):
            net = init_network(dims, int(rng.integers(0, 2**31 - 1)))
            net, loss = train_split(net, x, labels, weights, config)
            if best is None or loss < best[1]:
                best = (net, loss)
        net = best[0]
        phi = net.forward(x)[:, 0]
        if config.routing == "hard":
            phi = (phi >= 0.5).astype(np.float64)
        left = build(depth + 1, 2 * index, weights * phi)
        right = build(depth + 1, 2 * index + 1, weights * (1.0 - phi))
        return NDTNode(node_id, net, left, right)

    tree = NDTree(build(0, 0, np.ones(n)), dataset.label_kind,
                  labels.shape[1], dataset.n_dims, config)
    return refit_leaves(tree, dataset)


# ---------------------------------------------------------------------------
# global objective over all nodes

def global_loss(tree: NDTree, dataset: Dataset, objective: str = "gini") -> float:
    return global_loss_and_grad(tree, dataset, objective, need_grad=False)[0]


def global_loss_and_grad(tree: NDTree, dataset: Dataset, objective: str = "gini",
                         need_grad: bool = True, lambda_uniform: float = 0.0):
    """Leaf-mass-weighted loss of the whole tree and its flat gradient.

    ``gini`` is the tree Gini loss, ``info_gain`` minimises the weighted
    leaf entropy (root entropy minus the tree information gain) and
    ``variance`` the mass-weighted leaf variance of continuous targets.
    """
    x, labels = dataset.features, dataset.labels
    reach, cache = _forward_tree(tree, x)
    leaves = tree.leaves()
    leaf_m = np.column_stack([reach[id(l)] for l in leaves])
    if objective == "variance":
        loss, g_leaf, _ = L._variance(leaf_m, labels)
    elif objective in ("gini", "info_gain"):
        imp = "gini" if objective == "gini" else "entropy"
        loss, g_leaf = L._classification(leaf_m, labels, imp)
    else:
        raise InvalidArgument(f"unknown tree objective {objective!r}")
    if lambda_uniform:
        reg, g_reg = L._uniformity(leaf_m)
        loss += lambda_uniform * reg
        g_leaf = g_leaf + lambda_uniform * g_reg
    if not need_grad:
        return loss, None
    g_reach = {id(l): g_leaf[:, j] for j, l in enumerate(leaves)}
    grads = {}

    def back(node):
        # post-order: children first, then pull the gradient through phi
        if node.is_leaf:
            return g_reach[id(node)]
        g_left = back(node.left)
        g_right = back(node.right)
        acts, phi = cache[id(node)]
        r = reach[id(node)]
        g_phi = r * (g_left - g_right)
        layer_grads, _ = node.split_net.backward(acts, g_phi[:, None])
        grads[id(node)] = node.split_net.flatten_grads(layer_grads)
        return phi * g_left + (1.0 - phi) * g_right
    back(tree.root)
    nodes = tree.internal_nodes()
    flat = np.concatenate([grads[id(n)] for n in nodes]) if nodes else np.zeros(0)
    return loss, flat


def tree_objective_for(tree: NDTree) -> str:
    if tree.label_kind == CONTINUOUS:
        return "variance"
    return "info_gain" if tree.config.criterion == "info_gain" else "gini"


def global_fine_tune(tree: NDTree, dataset: Dataset, objective: Optional[str] = None,
                     learning_rate: Optional[float] = None, max_iters: int = 500,
                     momentum: float = 0.0):
    """Jointly optimise every split network on the global tree loss.

    The best iterate seen is returned, so the final global loss never
    exceeds the starting one.  Returns ``(tree, initial_loss, final_loss)``.
    """
    objective = objective or tree_objective_for(tree)
    lr = tree.config.learning_rate if learning_rate is None else learning_rate
    theta = tree.flatten()
    loss, grad = global_loss_and_grad(tree, dataset, objective)
    initial = best_loss = loss
    best = theta.copy()
    velocity = np.zeros_like(theta)
    current = tree
    for _ in range(max_iters):
        if theta.size == 0:
            break
        theta, velocity = sgd_step(theta, grad, lr, momentum, velocity)
        if not np.all(np.isfinite(theta)):
            raise Diverged("fine-tuning diverged", state=tree.unflatten(best),
                           last_loss=best_loss)
        current = tree.unflatten(theta)
        loss, grad = global_loss_and_grad(current, dataset, objective)
        if not np.isfinite(loss):
            raise Diverged("fine-tuning diverged", state=tree.unflatten(best),
                           last_loss=best_loss)
        if loss < best_loss:
            best_loss, best = loss, theta.copy()
    tuned = refit_leaves(tree.unflatten(best), dataset)
    return tuned, initial, best_loss


# ---------------------------------------------------------------------------

def predict(tree: NDTree, x, mode: str = "hard_path") -> np.ndarray:
    """Class ids (ties -> lowest index) or mean targets.

    ``hard_path`` follows the thresholded decisions to a single leaf;
    ``soft_mixture`` mixes every leaf's value by its membership.
    """
    values = tree.leaf_values()
    if mode == "hard_path":
        mixed = values[hard_leaf_index(tree, x)]
    elif mode == "soft_mixture":
        mixed = leaf_memberships(tree, x) @ values
    else:
        raise InvalidArgument(f"unknown prediction mode {mode!r}")
    if tree.label_kind == ONE_HOT:
        return np.argmax(mixed, axis=1)
    return mixed


def tree_accuracy(tree: NDTree, dataset: Dataset, mode: str = "hard_path") -> float:
    return float(np.mean(predict(tree, dataset.features, mode) == dataset.class_ids))
