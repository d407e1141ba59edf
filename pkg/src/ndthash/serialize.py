"""JSON model documents for networks, autoencoders and trees."""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .chains import RegionTable
from .errors import InvalidArgument
from .net import Autoencoder, DenseLayer, Network, Stack
from .tree import NDTNode, NDTree, TreeConfig

MODEL_VERSION = "ndt-hash/1"
TREE_VERSION = "ndt-tree/1"


def stack_to_dict(stack: Stack) -> dict:
    return {"dims": stack.dims,
            "layers": [{"fan_in": l.fan_in, "fan_out": l.fan_out,
                        "activation": l.activation,
                        "weights": l.weights.tolist(),
                        "biases": l.biases.tolist()} for l in stack.layers]}


def stack_from_dict(d: dict, cls=Stack):
    layers = []
    for spec in d["layers"]:
        w = np.array(spec["weights"], dtype=np.float64).reshape(spec["fan_out"], spec["fan_in"])
        layers.append(DenseLayer(w, np.array(spec["biases"], dtype=np.float64),
                                 spec["activation"]))
    return cls(layers)


def model_to_dict(model, kind: str, **meta) -> dict:
    """Self-describing document; ``meta`` may carry label_kind, loss,
    region_table, columns and similar run information."""
    doc = {"version": MODEL_VERSION, "kind": kind}
    if isinstance(model, Autoencoder):
        doc["encoder"] = stack_to_dict(model.encoder)
        doc["decoder"] = stack_to_dict(model.decoder)
        doc["head"] = stack_to_dict(model.head)
    else:
        doc["network"] = stack_to_dict(model)
    for key, value in meta.items():
        if isinstance(value, RegionTable):
            value = value.to_dict()
        doc[key] = value
    return doc


def model_from_dict(doc: dict):
    if doc.get("version") != MODEL_VERSION:
        raise InvalidArgument(f"unsupported model document version {doc.get('version')!r}")
    if "encoder" in doc:
        return Autoencoder(stack_from_dict(doc["encoder"]),
                           stack_from_dict(doc["decoder"]),
                           stack_from_dict(doc["head"], Network))
    return stack_from_dict(doc["network"], Network)


def _node_to_dict(node: NDTNode) -> dict:
    d = {"node_id": list(node.node_id)}
    if node.is_leaf:
        d["value"] = None if node.value is None else np.asarray(node.value).tolist()
    else:
        d["split_net"] = model_to_dict(node.split_net, "split")
        d["left"] = _node_to_dict(node.left)
        d["right"] = _node_to_dict(node.right)
    return d


def _node_from_dict(d: dict) -> NDTNode:
    node_id = tuple(d["node_id"])
    if "split_net" not in d:
        value = d.get("value")
        return NDTNode(node_id, value=None if value is None else np.array(value))
    return NDTNode(node_id, model_from_dict(d["split_net"]),
                   _node_from_dict(d["left"]), _node_from_dict(d["right"]))


def tree_to_dict(tree: NDTree, **meta) -> dict:
    cfg = asdict(tree.config)
    cfg["hidden"] = list(cfg["hidden"])
    doc = {"version": TREE_VERSION, "kind": "ndt", "label_kind": tree.label_kind,
           "n_outputs": tree.n_outputs, "in_dim": tree.in_dim, "config": cfg,
           "root": _node_to_dict(tree.root)}
    doc.update(meta)
    return doc


def tree_from_dict(doc: dict) -> NDTree:
    if doc.get("version") != TREE_VERSION:
        raise InvalidArgument(f"unsupported tree document version {doc.get('version')!r}")
    return NDTree(_node_from_dict(doc["root"]), doc["label_kind"], int(doc["n_outputs"]),
                  int(doc["in_dim"]), TreeConfig(**doc["config"]))


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1) + "\n"


def save_document(doc: dict, path) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def load_document(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidArgument(f"no such model file: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{path}: not a JSON document ({exc})") from None


def load_any(path):
    """Return ``(model_or_tree, document)`` for either document version."""
    doc = load_document(path)
    if doc.get("version") == TREE_VERSION:
        return tree_from_dict(doc), doc
    return model_from_dict(doc), doc
