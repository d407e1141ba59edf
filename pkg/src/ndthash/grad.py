"""Gradients of every training objective and finite-difference checking.

Two independent routes exist for the single-layer Gini case:
:func:`analytic_hashing_gradient` assembles the derivative chain by chain
from d p(chain)/d out, d E(y_chain)/d out and d out/d W, while
:func:`backprop_gradient` runs the generic reverse pass through the
membership matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import losses as L
from .chains import MASS_EPS, chain_bits, chain_mass, membership_backward, memberships
from .errors import Diverged, InvalidArgument, LabelKindMismatch
from .net import Autoencoder, Network


@dataclass
class Evaluation:
    total: float
    data: float
    reg_uniform: float
    reg_l2: float
    mass: np.ndarray
    grad: Optional[np.ndarray] = None


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise Diverged(f"non-finite {what}")


def _head_loss(out, spec: L.LossSpec, x, labels, mask):
    """Data loss of a hashing head and its gradient w.r.t. the memberships.

    Also returns the gradient w.r.t. the points whose variance is measured
    (``None`` when those points are constants).
    """
    m = memberships(out)
    kind = spec.kind
    if kind in ("gini", "info_gain"):
        if labels is None:
            raise LabelKindMismatch(f"loss {kind!r} needs class labels")
        imp = "gini" if kind == "gini" else "entropy"
        loss, gm = L._classification(m, labels, imp, spec.class_weights)
        return m, loss, gm
    if kind == "variance":
        if labels is None:
            raise LabelKindMismatch("loss 'variance' needs continuous targets")
        loss, gm, _ = L._variance(m, labels)
        return m, loss, gm
    if kind == "unsup_variance":
        loss, gm, _ = L._variance(m, x)
        return m, loss, gm
    raise InvalidArgument(f"loss {kind!r} does not apply to a plain network")


def _cross_entropy(out, labels):
    if labels is None or out.shape[1] != 1 or labels.shape[1] != 2:
        raise LabelKindMismatch("cross_entropy needs one output unit and binary labels")
    t = labels[:, 1:2]
    n = out.shape[0]
    loss = -float(np.sum(t * np.log(out) + (1 - t) * np.log1p(-out)) / n)
    return loss, (out - t) / (out * (1.0 - out)) / n


def evaluate(model, x, spec: L.LossSpec, labels=None, mask=None,
             need_grad: bool = True) -> Evaluation:
    """Total objective (data loss + regularisers) and its flat gradient.

    ``model`` is a :class:`Network` (hashing losses or ``cross_entropy``)
    or an :class:`Autoencoder` (composite losses).  ``mask`` marks labeled
    rows for the semi-supervised composite.
    """
    x = np.asarray(x, dtype=np.float64)
    if labels is not None:
        labels = np.asarray(labels, dtype=np.float64)
        if labels.ndim == 1:
            labels = labels[:, None]
    if isinstance(model, Autoencoder):
        return _evaluate_autoencoder(model, x, spec, labels, mask, need_grad)
    if spec.needs_autoencoder:
        raise InvalidArgument(f"loss {spec.kind!r} needs an autoencoder")

    acts = model.activations(x)
    out = acts[-1]
    if spec.kind == "cross_entropy":
        data, g_out = _cross_entropy(out, labels)
        m = memberships(out)
        gm = np.zeros_like(m)
    else:
        m, data, gm = _head_loss(out, spec, x, labels, mask)
        g_out = None
    reg_u, gu = L._uniformity(m)
    w_mask = model.weight_mask()
    theta = model.flatten()
    reg_l2 = float(np.sum(theta[w_mask] ** 2))
    total = data + spec.lambda_uniform * reg_u + spec.lambda_l2 * reg_l2
    _check_finite(total, "loss")
    ev = Evaluation(total, data, reg_u, reg_l2, chain_mass(m))
    if not need_grad:
        return ev
    gm_total = gm + spec.lambda_uniform * gu
    g = membership_backward(out, gm_total)
    if g_out is not None:
        g = g + g_out
    grads, _ = model.backward(acts, g)
    flat = model.flatten_grads(grads) + 2.0 * spec.lambda_l2 * np.where(w_mask, theta, 0.0)
    _check_finite(flat, "gradient")
    ev.grad = flat
    return ev


def _evaluate_autoencoder(ae: Autoencoder, x, spec, labels, mask, need_grad):
    if not spec.needs_autoencoder:
        raise InvalidArgument(f"loss {spec.kind!r} does not apply to an autoencoder")
    enc_acts = ae.encoder.activations(x)
    z = enc_acts[-1]
    dec_acts = ae.decoder.activations(z)
    head_acts = ae.head.activations(z)
    out = head_acts[-1]
    m = memberships(out)
    rec, g_rec = L._reconstruction(dec_acts[-1], x)
    gz_direct = np.zeros_like(z)
    if spec.kind == "reconstruction+unsup":
        term, gm, gz_direct = L._variance(m, z)
    else:
        if labels is None:
            raise LabelKindMismatch("semi-supervised loss needs class labels")
        mask = np.ones(x.shape[0], bool) if mask is None else np.asarray(mask, bool)
        gm = np.zeros_like(m)
        term = 0.0
        if mask.any():
            term, gm_l = L._classification(m[mask], labels[mask], spec.impurity,
                                           spec.class_weights)
            gm[mask] = gm_l
    reg_u, gu = L._uniformity(m)
    theta = ae.flatten()
    w_mask = ae.weight_mask()
    reg_l2 = float(np.sum(theta[w_mask] ** 2))
    data = rec + term
    total = data + spec.lambda_uniform * reg_u + spec.lambda_l2 * reg_l2
    _check_finite(total, "loss")
    ev = Evaluation(total, data, reg_u, reg_l2, chain_mass(m))
    if not need_grad:
        return ev
    g_out = membership_backward(out, gm + spec.lambda_uniform * gu)
    head_g, gz_head = ae.head.backward(head_acts, g_out)
    dec_g, gz_dec = ae.decoder.backward(dec_acts, g_rec)
    enc_g, _ = ae.encoder.backward(enc_acts, gz_head + gz_dec + gz_direct)
    flat = np.concatenate([ae.encoder.flatten_grads(enc_g),
                           ae.decoder.flatten_grads(dec_g),
                           ae.head.flatten_grads(head_g)])
    flat = flat + 2.0 * spec.lambda_l2 * np.where(w_mask, theta, 0.0)
    _check_finite(flat, "gradient")
    ev.grad = flat
    return ev


def backprop_gradient(model, x, spec: L.LossSpec, labels=None, mask=None) -> np.ndarray:
    """Flat gradient of the full objective (regularisers included)."""
    return evaluate(model, x, spec, labels, mask).grad


def loss_value(model, x, spec: L.LossSpec, labels=None, mask=None) -> float:
    return evaluate(model, x, spec, labels, mask, need_grad=False).total


def analytic_hashing_gradient(net: Network, x, labels, impurity: str = "gini",
                              eps: float = MASS_EPS):
    """Hand-derived gradient of the Gini hashing loss for one sigmoid layer.

    For every chain the loss term p(chain) * E(f(chain)) is differentiated
    w.r.t. each output unit of each sample: d p(chain)/d out_n is the
    product of the other units' factors signed by the chain's bit n, and
    d E/d out_n follows from the quotient rule on f_k = S_k / T.  The
    per-output derivatives are then pushed through
    d out_n / d w_n = out_n (1 - out_n) x.  Returns ``(dW, db)``.
    """
    if len(net.layers) != 1:
        raise InvalidArgument("analytic gradient covers single-layer networks only; "
                              "use backprop_gradient")
    if impurity != "gini":
        raise InvalidArgument("analytic gradient is derived for the Gini impurity")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    out = net.forward(x)
    n, k = out.shape
    d_out = np.zeros((n, k))
    for bits in chain_bits(k):
        on = bits == 1
        sigma = np.where(on, out, 1.0 - out)
        sign = np.where(on, 1.0, -1.0)
        member = np.prod(sigma, axis=1)
        others = np.empty((n, k))
        for j in range(k):
            others[:, j] = np.prod(np.delete(sigma, j, axis=1), axis=1)
        d_member = sign * others                       # d p(x_i in chain) / d out_j(x_i)
        p_chain = member.sum() / n
        if p_chain < eps:
            continue
        s = y.T @ member                               # per-class soft counts
        t = s.sum()
        f = s / t
        e = 1.0 - np.sum(f * f)
        d_s = y[:, :, None] * d_member[:, None, :]     # (n, C, k)
        d_t = y.sum(axis=1)[:, None] * d_member        # (n, k)
        d_f = (d_s * t - s[None, :, None] * d_t[:, None, :]) / t ** 2
        d_e = -2.0 * np.einsum("c,ick->ik", f, d_f)
        d_out += (d_member / n) * e + p_chain * d_e
    delta = d_out * out * (1.0 - out)
    return delta.T @ x, delta.sum(axis=0)


# ---------------------------------------------------------------------------
# finite differences

def central_differences(fun: Callable[[np.ndarray], float], theta, h: float = 1e-5):
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for j in range(theta.size):
        up = theta.copy()
        up[j] += h
        down = theta.copy()
        down[j] -= h
        grad[j] = (fun(up) - fun(down)) / (2.0 * h)
    return grad


def relative_error(analytic, numeric):
    """Componentwise relative error between two gradients.

    Denominator is ``max(|a_i|, |n_i|, floor)`` with
    ``floor = max(1e-3 * max|n|, 1e-6)`` so that components that are
    numerically zero are judged on an absolute scale.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    floor = max(1e-3 * float(np.max(np.abs(n), initial=0.0)), 1e-6)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


@dataclass
class BlockReport:
    name: str
    size: int
    max_rel_err: float
    mean_rel_err: float


@dataclass
class GradcheckReport:
    blocks: List[BlockReport]
    max_rel_err: float
    mean_rel_err: float
    tolerance: float
    passed: bool
    analytic: np.ndarray = field(repr=False, default=None)
    numeric: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "tolerance": self.tolerance,
                "max_rel_err": self.max_rel_err, "mean_rel_err": self.mean_rel_err,
                "blocks": [vars(b) for b in self.blocks]}


def param_blocks(model) -> List[tuple]:
    """``(name, size)`` of each weight/bias block in flat-vector order."""
    if isinstance(model, Autoencoder):
        return [(f"{part}.{name}", size)
                for part, stack in zip(("encoder", "decoder", "head"), model.parts)
                for name, size in param_blocks(stack)]
    blocks = []
    for i, layer in enumerate(model.layers):
        blocks += [(f"layer{i}.W", layer.weights.size), (f"layer{i}.b", layer.fan_out)]
    return blocks


def gradcheck_fn(fun, grad, theta, h=1e-5, tolerance=1e-5, blocks=None,
                 corrupt: bool = False) -> GradcheckReport:
    """Compare ``grad`` at ``theta`` against central differences of ``fun``.

    ``corrupt`` perturbs the analytic gradient first; it exists so tests
    can confirm a wrong gradient is caught.
    """
    if not 1e-7 <= h <= 1e-3:
        raise InvalidArgument("h must lie in [1e-7, 1e-3]")
    analytic = np.array(grad, dtype=np.float64)
    if corrupt:
        analytic[0] += 1e-2 * max(1.0, np.max(np.abs(analytic)))
    numeric = central_differences(fun, theta, h)
    err = relative_error(analytic, numeric)
    if blocks is None:
        blocks = [("params", theta.size)]
    reports, pos = [], 0
    for name, size in blocks:
        e = err[pos:pos + size]
        pos += size
        reports.append(BlockReport(name, size, float(e.max(initial=0.0)),
                                   float(e.mean()) if e.size else 0.0))
    max_err = float(err.max(initial=0.0))
    return GradcheckReport(reports, max_err, float(err.mean()), tolerance,
                           bool(max_err <= tolerance), analytic, numeric)


def gradcheck(model, x, spec: L.LossSpec, labels=None, mask=None, h: float = 1e-5,
              tolerance: float = 1e-5, corrupt: bool = False) -> GradcheckReport:
    """Backprop gradient of ``spec`` at ``model`` versus central differences."""
    theta = model.flatten()

    def fun(vec):
        return loss_value(model.unflatten(vec), x, spec, labels, mask)

    grad = backprop_gradient(model, x, spec, labels, mask)
    return gradcheck_fn(fun, grad, theta, h, tolerance, param_blocks(model), corrupt)


def sgd_step(params, grad, learning_rate: float, momentum: float = 0.0, velocity=None):
    """Classic momentum update: ``v <- mu v - lr g``; ``params <- params + v``.

    Returns ``(new_params, new_velocity)``.
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise InvalidArgument("params and grad shapes differ")
    if velocity is None:
        velocity = np.zeros_like(params)
    velocity = momentum * velocity - learning_rate * grad
    return params + velocity, velocity
