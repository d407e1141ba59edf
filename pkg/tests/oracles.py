"""Straight-line reference evaluators used as test oracles.

Everything here is written with explicit Python loops over samples,
chains and classes, deliberately sharing no code with the package.
"""
import itertools
import math

import numpy as np


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def dense_forward(weights, biases, activations, x):
    """Row-by-row evaluation of a dense stack."""
    out = []
    for row in x:
        a = list(row)
        for w, b, act in zip(weights, biases, activations):
            nxt = []
            for j in range(len(b)):
                z = b[j] + sum(w[j][i] * a[i] for i in range(len(a)))
                if act == "sigmoid":
                    nxt.append(sigmoid(z))
                elif act == "tanh":
                    nxt.append(math.tanh(z))
                else:
                    nxt.append(z)
            a = nxt
        out.append(a)
    return np.array(out)


def chains(k):
    return list(itertools.product((0, 1), repeat=k))


def membership(out_row, chain):
    p = 1.0
    for o, bit in zip(out_row, chain):
        p *= o if bit == 1 else 1.0 - o
    return p


def membership_matrix(out):
    k = len(out[0])
    return np.array([[membership(row, c) for c in chains(k)] for row in out])


def gini(f):
    return 1.0 - sum(v * v for v in f)


def entropy(f):
    return -sum(v * math.log2(v) for v in f if v > 0)


def classification_loss(m, class_ids, n_classes, impurity="gini", weights=None):
    """sum_chain p(chain) E(y_chain) with y_chain the membership-weighted
    class frequencies; optional per-class sample weights."""
    n, r = len(m), len(m[0])
    w = [1.0 if weights is None else weights[class_ids[i]] for i in range(n)]
    total = sum(w)
    loss = 0.0
    for c in range(r):
        mass = sum(m[i][c] * w[i] for i in range(n))
        if mass / total < 1e-12:
            continue
        f = [sum(m[i][c] * w[i] for i in range(n) if class_ids[i] == k) / mass
             for k in range(n_classes)]
        e = gini(f) if impurity == "gini" else entropy(f)
        loss += mass / total * e
    return loss


def variance_loss(m, values):
    """(1/n) sum_chain sum_i m_ic ||v_i - mu_chain||^2."""
    n, r = len(m), len(m[0])
    values = [list(np.atleast_1d(v)) for v in values]
    loss = 0.0
    for c in range(r):
        mass = sum(m[i][c] for i in range(n))
        if mass / n < 1e-12:
            continue
        mu = [sum(m[i][c] * values[i][j] for i in range(n)) / mass
              for j in range(len(values[0]))]
        for i in range(n):
            loss += m[i][c] * sum((values[i][j] - mu[j]) ** 2
                                  for j in range(len(mu))) / n
    return loss


def class_distribution(m, class_ids, n_classes):
    r = len(m[0])
    out = []
    for c in range(r):
        mass = sum(row[c] for row in m)
        out.append([sum(m[i][c] for i in range(len(m)) if class_ids[i] == k) / mass
                    for k in range(n_classes)])
    return np.array(out)


def region_mean(m, values):
    r = len(m[0])
    out = []
    for c in range(r):
        mass = sum(row[c] for row in m)
        out.append([sum(m[i][c] * values[i][j] for i in range(len(m))) / mass
                    for j in range(len(values[0]))])
    return np.array(out)


def split_stats(phi, y):
    P = sum(1 for v in y if v == 1)
    N = len(y) - P
    n_left = sum(phi)
    P_left = sum(p for p, v in zip(phi, y) if v == 1)
    N_left = sum(p for p, v in zip(phi, y) if v == 0)
    return dict(P=P, N=N, n_left=n_left, n_right=len(y) - n_left, P_left=P_left,
                N_left=N_left, P_right=P - P_left, N_right=N - N_left)


def pair_entropy(a, b):
    return entropy([a / (a + b), b / (a + b)]) if a + b > 0 else 0.0


def node_gini(phi, y):
    s = split_stats(phi, y)
    total = s["P"] + s["N"]
    loss = 0.0
    for n_c, p_c, q_c in ((s["n_left"], s["P_left"], s["N_left"]),
                          (s["n_right"], s["P_right"], s["N_right"])):
        if n_c > 0:
            loss += n_c / total * gini([p_c / n_c, q_c / n_c])
    return loss


def node_ig(phi, y):
    s = split_stats(phi, y)
    total = s["P"] + s["N"]
    gain = pair_entropy(s["P"], s["N"])
    for n_c, p_c, q_c in ((s["n_left"], s["P_left"], s["N_left"]),
                          (s["n_right"], s["P_right"], s["N_right"])):
        if n_c > 0:
            gain -= n_c / total * pair_entropy(p_c, q_c)
    return gain


def node_variance(phi, targets):
    loss = 0.0
    for w in (list(phi), [1.0 - p for p in phi]):
        s = sum(w)
        if s == 0:
            continue
        mu = sum(wi * t for wi, t in zip(w, targets)) / s
        loss += sum(wi * (t - mu) ** 2 for wi, t in zip(w, targets)) / s
    return loss


def tree_leaf_paths(phis):
    """Leaf probabilities of a complete tree from per-node left
    probabilities given in breadth-first order, by enumerating every
    root-to-leaf path."""
    n_nodes = len(phis)
    depth = int(round(math.log2(n_nodes + 1)))
    leaves = []
    for path in itertools.product((0, 1), repeat=depth):   # 0 = left
        p, node = 1.0, 0
        for turn in path:
            p *= phis[node] if turn == 0 else 1.0 - phis[node]
            node = 2 * node + 1 + turn
        leaves.append(p)
    return leaves
