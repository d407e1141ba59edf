"""``ndt-hash`` command line: data generation, training, evaluation,
hashing, gradient checking and decision-surface export.

Exit codes: 0 ok, 1 check failure, 2 usage or validation error,
3 divergence during training.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import tree as T
from .chains import MASS_EPS, RegionTable, build_region_table, chain_index, chain_string, hard_assign, \
    hard_memberships, memberships
from .checks import run_gradcheck_suite
from .config import load_gradcheck_config, load_run_config
from .data import CONTINUOUS, NONE, ONE_HOT, Dataset, gen_blobs, gen_two_circles, \
    gen_two_moons, load_csv, write_csv
from .errors import DataError, Diverged, InvalidArgument, LabelKindMismatch, NDTHashError
from .grad import evaluate
from .hashing import Predictor, fit_region_table, head_outputs, mean_squared_error, \
    predict_with_confidence, write_codes_csv
from .losses import LossSpec
from .net import Autoencoder, identity_stack, init_autoencoder, init_network
from .serialize import dumps, load_any, model_to_dict, save_document, tree_to_dict
from .train import TrainConfig, train

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3
DEFAULT_BLOB_CENTERS = [(0.0, 0.0), (6.0, 0.0), (3.0, 6.0)]

DEFAULT_LOSS = {"hnn": "gini", "autoencoder-unsup": "reconstruction+unsup",
                "autoencoder-semisup": "reconstruction+semisup",
                "mlp-baseline": "cross_entropy"}
ALLOWED_LOSSES = {"hnn": ("gini", "info_gain", "variance", "unsup_variance"),
                  "autoencoder-unsup": ("reconstruction+unsup",),
                  "autoencoder-semisup": ("reconstruction+semisup",),
                  "mlp-baseline": ("cross_entropy",)}


def _write_json(doc, path) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def _class_counts(ds: Dataset) -> dict:
    if ds.label_kind != ONE_HOT:
        return {}
    return {str(c): int(v) for c, v in enumerate(ds.labels.sum(axis=0))}


# ---------------------------------------------------------------------------
# gen-data

def generate(kind, n, noise, seed, centers=None) -> Dataset:
    if kind == "two-moons":
        return gen_two_moons(n, noise, seed)
    if kind == "two-circles":
        return gen_two_circles(n, noise_sd=noise, seed=seed)
    centers = centers or DEFAULT_BLOB_CENTERS
    if n % len(centers):
        raise InvalidArgument(f"blobs: n={n} is not a multiple of {len(centers)} centers")
    return gen_blobs(centers, n // len(centers), noise, seed)


def cmd_gen_data(args) -> int:
    noise = args.noise
    if noise is None:
        noise = {"two-moons": 0.1, "two-circles": 0.0, "blobs": 1.0}[args.kind]
    if args.n < 1 or noise < 0:
        raise InvalidArgument("need --n >= 1 and --noise >= 0")
    ds = generate(args.kind, args.n, noise, args.seed)
    write_csv(ds, args.out)
    print(f"wrote {args.out}: n={ds.n_samples} dims={ds.n_dims} "
          f"class_counts={json.dumps(_class_counts(ds), sort_keys=True)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train

def _dataset_from(cfg) -> Dataset:
    d = cfg.data
    if d.kind == "csv":
        if d.labels == "none":
            spec = "none"
        elif d.continuous:
            spec = ("continuous", 1 if d.labels == "class" else int(d.labels))
        else:
            spec = d.labels
        return load_csv(d.path, spec)
    ds = generate(d.kind, d.n, d.noise, d.seed, d.centers)
    ds.columns = [f"x{j}" for j in range(ds.n_dims)] + ["label"]
    return ds


def _loss_spec(model_kind, cfg, ds) -> LossSpec:
    kind = cfg.loss.kind
    if kind is None:
        kind = DEFAULT_LOSS[model_kind]
        if model_kind == "hnn" and ds.label_kind == CONTINUOUS:
            kind = "variance"
        elif model_kind == "hnn" and ds.label_kind == NONE:
            kind = "unsup_variance"
    if kind not in ALLOWED_LOSSES[model_kind]:
        raise InvalidArgument(f"loss {kind!r} is not available for model {model_kind!r}; "
                              f"choose from {list(ALLOWED_LOSSES[model_kind])}")
    lam_u = cfg.loss.lambda_uniform if model_kind != "mlp-baseline" else 0.0
    return LossSpec(kind, lam_u, cfg.loss.lambda_l2, cfg.loss.class_weights,
                    cfg.loss.impurity)


def _build_model(model_kind, cfg, ds):
    m = cfg.model
    if model_kind in ("hnn", "mlp-baseline"):
        if m.dims[0] != ds.n_dims:
            raise InvalidArgument(f"model.dims starts with {m.dims[0]} but the data "
                                  f"has {ds.n_dims} features")
        if model_kind == "mlp-baseline" and m.dims[-1] != 1:
            raise InvalidArgument("mlp-baseline needs a single output unit")
        return init_network(m.dims, m.seed, m.hidden_activation)
    if m.identity_encoder:
        head = init_network([ds.n_dims, *m.head_hidden, m.head_width], m.seed)
        return Autoencoder(identity_stack(ds.n_dims), identity_stack(ds.n_dims), head)
    enc = m.encoder_dims or [ds.n_dims, 2]
    dec = m.decoder_dims or [enc[-1], ds.n_dims]
    if enc[0] != ds.n_dims:
        raise InvalidArgument("model.encoder_dims must start with the feature count")
    return init_autoencoder(enc, dec, m.head_width, m.seed, head_hidden=m.head_hidden)


def _label_mask(cfg, n) -> np.ndarray:
    rng = np.random.default_rng(cfg.label_seed)
    n_lab = int(round(cfg.labeled_fraction * n))
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[:n_lab]] = True
    return mask


def cluster_purity(regions, class_ids) -> float:
    """Share of samples carrying the majority class of their region."""
    total = 0
    for r in np.unique(regions):
        total += np.bincount(class_ids[regions == r]).max()
    return float(total / len(class_ids))


def _hash_table(model, ds, spec, mask):
    """Region table stored with a trained hashing model (hard counts)."""
    if spec.kind in ("gini", "info_gain", "variance", "cross_entropy"):
        return fit_region_table(model, ds, "hard")
    if spec.kind == "reconstruction+semisup" and mask.any():
        return fit_region_table(model, ds.subset(np.flatnonzero(mask)), "hard")
    return None


def _train_hashing(model_kind, cfg, ds, out_dir):
    spec = _loss_spec(model_kind, cfg, ds)
    t = cfg.train
    tc = TrainConfig(spec, t.learning_rate, t.momentum, t.max_iters, t.rel_tol,
                     t.batch_size, t.seed, t.log_every)
    model = _build_model(model_kind, cfg, ds)
    mask = _label_mask(cfg, ds.n_samples) if spec.kind == "reconstruction+semisup" else \
        np.ones(ds.n_samples, dtype=bool)
    try:
        model, history = train(model, ds, tc, mask)
    except Diverged as exc:
        last = exc.state
        labels = ds.labels if spec.label_kind != NONE else None
        metrics = {"model": model_kind, "diverged": True, "iteration": exc.iteration,
                   "last_loss": exc.last_loss, "param_count": last.param_count(),
                   "message": str(exc)}
        try:
            ev = evaluate(last, ds.features, spec, labels,
                          mask if spec.kind == "reconstruction+semisup" else None,
                          need_grad=False)
            metrics["mass"] = ev.mass.tolist()
        except Diverged:
            pass
        _write_json(metrics, out_dir / "metrics.json")
        print(f"error: {exc}; last finite loss {exc.last_loss!r}", file=sys.stderr)
        return EXIT_DIVERGED
    history.to_jsonl(out_dir / "history.jsonl")
    final = history.final
    table = _hash_table(model, ds, spec, mask)
    label_kind = ds.label_kind if spec.label_kind != NONE else NONE
    doc = model_to_dict(model, model_kind, loss=spec.kind, label_kind=label_kind,
                        n_outputs=None if ds.labels is None else ds.labels.shape[1],
                        columns=ds.columns, region_table=table)
    save_document(doc, out_dir / "model.json")
    metrics = {"model": model_kind, "loss_kind": spec.kind,
               "loss": final["loss_total"], "loss_data": final["loss_data"],
               "accuracy": final["train_acc"], "mass": final["mass"],
               "param_count": model.param_count(), "iterations": final["iter"],
               "stopped": history.stopped}
    if spec.kind == "variance":
        metrics["mse"] = mean_squared_error(Predictor(model, table), ds)
    if spec.kind == "reconstruction+semisup":
        metrics["labeled_rows"] = int(mask.sum())
    if spec.label_kind == NONE and ds.label_kind == ONE_HOT:
        regions = chain_index(hard_assign(head_outputs(model, ds.features)))
        metrics["cluster_purity"] = cluster_purity(regions, ds.class_ids)
    _write_json(metrics, out_dir / "metrics.json")
    print(f"trained {model_kind}: loss={final['loss_total']:.6g} "
          f"accuracy={final['train_acc']} params={model.param_count()} "
          f"({history.stopped} after {final['iter']} iterations)")
    return EXIT_OK


def _tree_record(tree, ds, it, objective):
    leaf_m = T.leaf_memberships(tree, ds.features)
    loss = T.global_loss(tree, ds, objective)
    acc = T.tree_accuracy(tree, ds) if ds.label_kind == ONE_HOT else None
    return {"iter": it, "loss_total": loss, "loss_data": loss, "reg_uniform": 0.0,
            "reg_l2": 0.0, "mass": leaf_m.mean(axis=0).tolist(), "train_acc": acc}


def _train_tree(cfg, ds, out_dir):
    t = cfg.tree
    want = CONTINUOUS if t.criterion == "variance" else ONE_HOT
    if ds.label_kind != want:
        raise LabelKindMismatch(f"tree criterion {t.criterion!r} needs {want} labels")
    if ds.label_kind == ONE_HOT and ds.n_classes < 2:
        raise InvalidArgument("a classification tree needs at least two classes")
    tc = T.TreeConfig(t.max_depth, t.min_mass, t.criterion, tuple(t.hidden),
                      t.learning_rate, t.momentum, t.node_iters, t.routing,
                      t.restarts, t.seed)
    tree = T.grow_greedy(ds, tc)
    objective = T.tree_objective_for(tree)
    records = [_tree_record(tree, ds, 0, objective)]
    if t.fine_tune_iters:
        try:
            tree, _, _ = T.global_fine_tune(tree, ds, objective, max_iters=t.fine_tune_iters,
                                            momentum=t.momentum)
        except Diverged as exc:
            _write_json({"model": "ndt", "diverged": True, "last_loss": exc.last_loss,
                         "message": str(exc)}, out_dir / "metrics.json")
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        records.append(_tree_record(tree, ds, t.fine_tune_iters, objective))
    with (out_dir / "history.jsonl").open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
    save_document(tree_to_dict(tree, columns=ds.columns), out_dir / "model.json")
    final = records[-1]
    metrics = {"model": "ndt", "loss_kind": objective, "loss": final["loss_total"],
               "accuracy": final["train_acc"], "mass": final["mass"],
               "param_count": tree.param_count(), "depth": tree.depth,
               "leaves": len(tree.leaves())}
    if ds.label_kind == CONTINUOUS:
        pred = T.predict(tree, ds.features)
        metrics["mse"] = float(np.mean(np.sum((pred - ds.labels) ** 2, axis=1)))
    _write_json(metrics, out_dir / "metrics.json")
    print(f"trained ndt: depth={tree.depth} leaves={len(tree.leaves())} "
          f"loss={final['loss_total']:.6g} accuracy={final['train_acc']}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    ds = _dataset_from(cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.model == "ndt":
        return _train_tree(cfg, ds, out_dir)
    return _train_hashing(args.model, cfg, ds, out_dir)


# ---------------------------------------------------------------------------
# eval / hash / grid

def _model_dims(obj):
    return obj.in_dim


def _load_for_model(doc, obj, path) -> Dataset:
    """Read ``path`` with the label layout the model was trained on."""
    kind = doc.get("label_kind", NONE)
    n_out = doc.get("n_outputs")
    if kind == ONE_HOT:
        spec = "class"
    elif kind == CONTINUOUS:
        spec = ("continuous", int(n_out))
    else:
        spec = "none"
    columns = doc.get("columns")
    ds = load_csv(path, spec, n_classes=n_out if kind == ONE_HOT else None)
    if ds.columns is not None and columns is not None:
        trained = columns[:_model_dims(obj)] if kind == NONE else columns
        got = ds.columns[:_model_dims(obj)] if kind == NONE else ds.columns
        if list(got) != list(trained):
            raise LabelKindMismatch(
                f"label kind mismatch: {path} has columns {ds.columns}, the model "
                f"was trained on {columns} (label kind {kind})")
    if kind == NONE and ds.n_dims > _model_dims(obj):
        ds = Dataset(ds.features[:, :_model_dims(obj)], None, NONE, ds.columns)
    if ds.n_dims != _model_dims(obj):
        raise InvalidArgument(f"{path}: data has {ds.n_dims} features, "
                              f"model expects {_model_dims(obj)}")
    return ds


def _write_leaf_csv(tree, ds, path):
    leaf_m = T.leaf_memberships(tree, ds.features)
    values = tree.leaf_values()
    prefix = "p_class" if tree.label_kind == ONE_HOT else "mean"
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["leaf", "node_id", "mass", *(f"{prefix}{j}" for j in range(values.shape[1]))])
        for i, (leaf, mass, row) in enumerate(zip(tree.leaves(), leaf_m.mean(axis=0), values)):
            w.writerow([i, f"{leaf.node_id[0]}.{leaf.node_id[1]}", repr(float(mass)),
                        *(repr(float(v)) for v in row)])


def cmd_eval(args) -> int:
    obj, doc = load_any(args.model)
    ds = _load_for_model(doc, obj, args.csv)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = {"model": doc["kind"], "n": ds.n_samples}
    if isinstance(obj, T.NDTree):
        leaf_m = T.leaf_memberships(obj, ds.features)
        metrics["mass"] = leaf_m.mean(axis=0).tolist()
        if ds.label_kind == ONE_HOT:
            metrics["accuracy"] = T.tree_accuracy(obj, ds)
        else:
            pred = T.predict(obj, ds.features)
            metrics["mse"] = float(np.mean(np.sum((pred - ds.labels) ** 2, axis=1)))
        _write_leaf_csv(obj, ds, out_dir / "regions.csv")
    else:
        out = head_outputs(obj, ds.features)
        hm = hard_memberships(out)
        metrics["mass"] = (hm.mean(axis=0)).tolist()
        if doc.get("loss") == "cross_entropy":
            pred = (out[:, 0] >= 0.5).astype(int)
            metrics["accuracy"] = float(np.mean(pred == ds.class_ids))
        elif doc.get("region_table") is not None and ds.label_kind != NONE:
            predictor = Predictor(obj, RegionTable.from_dict(doc["region_table"]))
            p = predict_with_confidence(predictor, ds.features)
            if ds.label_kind == ONE_HOT:
                metrics["accuracy"] = float(np.mean(p.value == ds.class_ids))
            else:
                metrics["mse"] = mean_squared_error(predictor, ds)
            metrics["unseen_region_rows"] = int(p.unseen.sum())
        if ds.label_kind == NONE:
            table = build_region_table(hm, np.zeros((ds.n_samples, 0)), "mean",
                                       MASS_EPS, out.shape[1])
        else:
            table = build_region_table(hm, ds.labels,
                                       "mode" if ds.label_kind == ONE_HOT else "mean",
                                       MASS_EPS, out.shape[1])
        table.to_csv(out_dir / "regions.csv")
    _write_json(metrics, out_dir / "metrics.json")
    summary = {k: metrics[k] for k in ("accuracy", "mse") if k in metrics}
    print(f"evaluated {doc['kind']} on {ds.n_samples} rows: {json.dumps(summary)}")
    return EXIT_OK


def cmd_hash(args) -> int:
    obj, doc = load_any(args.model)
    if isinstance(obj, T.NDTree):
        raise InvalidArgument("hash needs a hashing model, not a tree")
    raw = load_csv(args.csv, "none")
    d = obj.in_dim
    if raw.n_dims < d:
        raise InvalidArgument(f"{args.csv}: data has {raw.n_dims} columns, model expects {d}")
    if raw.n_dims > d and doc.get("label_kind", NONE) == NONE:
        raise InvalidArgument(f"{args.csv}: data has {raw.n_dims} columns, model expects {d}")
    codes = hard_assign(head_outputs(obj, raw.features[:, :d]))
    write_codes_csv(codes, args.out)
    print(f"wrote {len(codes)} codes of {codes.shape[1]} bits to {args.out}")
    return EXIT_OK


def cmd_grid(args) -> int:
    obj, doc = load_any(args.model)
    if obj.in_dim != 2:
        raise InvalidArgument(f"grid needs a 2-D model, this one takes {obj.in_dim} inputs")
    xmin, xmax, ymin, ymax = args.bounds
    nx, ny = args.resolution
    if nx < 1 or ny < 1 or not (xmin <= xmax and ymin <= ymax):
        raise InvalidArgument("need resolution >= 1 and ordered bounds")
    xs = np.linspace(xmin, xmax, nx)
    ys = np.linspace(ymin, ymax, ny)
    gx, gy = np.meshgrid(xs, ys)          # rows follow y, x varies fastest
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    if isinstance(obj, T.NDTree):
        nodes = obj.internal_nodes()
        out = np.column_stack([n.split_net.forward(pts)[:, 0] for n in nodes]) if nodes \
            else np.zeros((len(pts), 0))
        region = T.hard_leaf_index(obj, pts)
        m = T.leaf_memberships(obj, pts)
        pred = T.predict(obj, pts) if obj.label_kind == ONE_HOT else None
    else:
        out = head_outputs(obj, pts)
        region = chain_index(hard_assign(out))
        m = memberships(out)
        pred = None
        if doc.get("loss") == "cross_entropy":
            pred = (out[:, 0] >= 0.5).astype(int)
        elif doc.get("region_table") is not None and doc.get("label_kind") == ONE_HOT:
            table = RegionTable.from_dict(doc["region_table"])
            pred = predict_with_confidence(Predictor(obj, table), pts).value
    bits = hard_assign(out) if out.shape[1] else np.zeros((len(pts), 0), dtype=int)
    with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", *(f"out{j}" for j in range(out.shape[1])), "bits",
                    "region_id", "predicted_class", "membership_max"])
        for i in range(len(pts)):
            w.writerow([repr(float(pts[i, 0])), repr(float(pts[i, 1])),
                        *(repr(float(v)) for v in out[i]), chain_string(bits[i]),
                        int(region[i]), "" if pred is None else int(pred[i]),
                        repr(float(m[i].max()))])
    print(f"wrote {len(pts)} grid rows to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck

def cmd_gradcheck(args) -> int:
    cfg = load_gradcheck_config(args.config)
    report = run_gradcheck_suite(cfg.instances, cfg.seed, cfg.h, cfg.tolerance,
                                 corrupt=args.corrupt)
    text = dumps(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    worst = report["worst"]
    if not report["passed"]:
        print(f"gradcheck FAILED: worst offender {worst['name']} "
              f"(max relative error {worst['max_rel_err']:.3e} > {cfg.tolerance:g})",
              file=sys.stderr)
        return EXIT_CHECK
    print(f"gradcheck passed: worst {worst['name']} max relative error "
          f"{worst['max_rel_err']:.3e} <= {cfg.tolerance:g}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ndt-hash", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a toy dataset as CSV")
    g.add_argument("kind", choices=["two-moons", "two-circles", "blobs"])
    g.add_argument("--n", type=int, default=200)
    g.add_argument("--noise", type=float, default=None,
                   help="noise sd (moons 0.1, circles 0, blob sd 1 by default)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model from a JSON config")
    t.add_argument("model", choices=["hnn", "ndt", "autoencoder-unsup",
                                      "autoencoder-semisup", "mlp-baseline"])
    t.add_argument("config")
    t.add_argument("--out-dir", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a saved model on a CSV file")
    e.add_argument("model")
    e.add_argument("csv")
    e.add_argument("--out-dir", required=True)
    e.set_defaults(func=cmd_eval)

    h = sub.add_parser("hash", help="write the binary codes of every CSV row")
    h.add_argument("model")
    h.add_argument("csv")
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_hash)

    gr = sub.add_parser("grid", help="export a decision-surface grid of a 2-D model")
    gr.add_argument("model")
    gr.add_argument("--bounds", type=float, nargs=4, default=[-2.0, 3.0, -1.5, 2.0],
                    metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    gr.add_argument("--resolution", type=int, nargs=2, default=[100, 100],
                    metavar=("NX", "NY"))
    gr.add_argument("--out", required=True)
    gr.set_defaults(func=cmd_grid)

    c = sub.add_parser("gradcheck", help="verify gradients of every loss kind")
    c.add_argument("config", nargs="?", default=None)
    c.add_argument("--out", default=None, help="report JSON path")
    c.add_argument("--corrupt", action="store_true",
                   help="perturb every analytic gradient (negative control)")
    c.set_defaults(func=cmd_gradcheck)
    return p


def _thread_limit():
    raw = os.environ.get("NDT_HASH_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise InvalidArgument(f"NDT_HASH_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InvalidArgument("NDT_HASH_THREADS must be >= 1")
    return n


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        limit = _thread_limit()
        # divergence is detected explicitly; keep numpy's overflow chatter quiet
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if limit is None:
                return args.func(args)
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=limit):
                return args.func(args)
    except (InvalidArgument, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Diverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except NDTHashError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
