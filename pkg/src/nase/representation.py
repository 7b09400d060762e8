"""Representation layers: candidate reconstructor operators plus gated fusion.

Each layer refines the (head, relation, tail) embedding triple.  Per
target, a reconstructor rebuilds the target's embedding from the other two
embeddings; a sigmoid-gated fusion then combines the reconstruction with
the incoming embedding.  All three targets read the same incoming
embeddings, so updates within a layer are simultaneous.

Operator candidates per hyperedge, in canonical (tie-break) order:
conv1d_k2, conv1d_k4, conv2d_k3, conv2d_k5, trans_ident, trans_full,
identity.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import tensor as T
from .tensor import ShapeError

TARGETS = ("h", "r", "t")

# highway-style carry bias: beta = sigmoid(4) ~ 0.98 starts every layer at
# the identity map, so reconstructions fade in only where they earn it
GATE_BIAS_INIT = 4.0


class OperatorKind(Enum):
    """Reconstructor candidates; enum order is the canonical order."""

    CONV1D_K2 = "conv1d_k2"
    CONV1D_K4 = "conv1d_k4"
    CONV2D_K3 = "conv2d_k3"
    CONV2D_K5 = "conv2d_k5"
    TRANS_IDENT = "trans_ident"
    TRANS_FULL = "trans_full"
    IDENTITY = "identity"

    @classmethod
    def from_name(cls, name):
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown operator kind {name!r}")


CONV1D_KERNEL = {OperatorKind.CONV1D_K2: 2, OperatorKind.CONV1D_K4: 4}
CONV2D_KERNEL = {OperatorKind.CONV2D_K3: 3, OperatorKind.CONV2D_K5: 5}


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class LayerParams:
    """Owned tensors for one representation layer.

    Holds, per target, the fusion gate (when the edge can reconstruct) and
    one parameter set per candidate operator.  trans_ident and identity own
    nothing.
    """

    def __init__(self, store, layer, candidates, geom, rng, gated=True):
        self.layer = layer
        self.candidates = candidates              # target -> [OperatorKind]
        self.gate = {}                            # target -> (W, b) tensors
        self.ops = {t: {} for t in TARGETS}       # target -> kind -> {name: tensor}
        d = geom.dim
        prefix = f"layer{layer}"
        for target in TARGETS:
            kinds = candidates[target]
            if gated and kinds != [OperatorKind.IDENTITY]:
                w = store.add(f"{prefix}.{target}.gate.w", np.zeros((1, 2 * d)))
                b = store.add(f"{prefix}.{target}.gate.b",
                              np.full(1, GATE_BIAS_INIT))
                self.gate[target] = (w, b)
            for kind in kinds:
                self.ops[target][kind] = _build_op_params(
                    store, f"{prefix}.{target}.{kind.value}", kind, geom, rng)


def _build_op_params(store, prefix, kind, geom, rng):
    d = geom.dim
    F = geom.conv_filters
    if kind in CONV1D_KERNEL:
        k = CONV1D_KERNEL[kind]
        return {
            "filters": store.add(f"{prefix}.filters", _uniform(rng, (F, 2, k), 2 * k)),
            "bias": store.add(f"{prefix}.bias", np.zeros(F)),
            "proj": store.add(f"{prefix}.proj", _uniform(rng, (F * d, d), F * d)),
        }
    if kind in CONV2D_KERNEL:
        d1, d2 = geom.require_reshape()
        k = CONV2D_KERNEL[kind]
        flat = F * 2 * d1 * d2
        return {
            "filters": store.add(f"{prefix}.filters", _uniform(rng, (F, 1, k, k), k * k)),
            "bias": store.add(f"{prefix}.bias", np.zeros(F)),
            "proj": store.add(f"{prefix}.proj", _uniform(rng, (flat, d), flat)),
        }
    if kind is OperatorKind.TRANS_FULL:
        if geom.per_relation_translation:
            eye = np.tile(np.eye(d).reshape(1, d * d), (geom.n_relations, 1))
            return {
                "a": store.add(f"{prefix}.a", eye),
                "b": store.add(f"{prefix}.b", eye.copy()),
            }
        return {
            "a": store.add(f"{prefix}.a", np.eye(d)),
            "b": store.add(f"{prefix}.b", np.eye(d)),
        }
    return {}


def _apply_trans_matrix(mat, e, geom, rel_idx):
    if geom.per_relation_translation:
        d = geom.dim
        rows = T.gather(mat, rel_idx)                      # (B, d*d)
        return T.matvec_rows(T.reshape(rows, (len(rel_idx), d, d)), e)
    return T.matmul(e, mat)


def reconstruct(target, kind, e_a, e_b, op_params, geom, e_self=None, rel_idx=None):
    """Rebuild a target embedding from the two non-target embeddings.

    ``(e_a, e_b)`` are batched (B, d) embeddings in canonical order:
    target h -> (e_r, e_t), target r -> (e_h, e_t), target t -> (e_h, e_r).
    The identity operator returns ``e_self`` (the target's own incoming
    embedding) untouched.
    """
    if kind is OperatorKind.IDENTITY:
        if e_self is None:
            raise ValueError("identity reconstruction needs the target's own embedding")
        return e_self
    if kind is OperatorKind.TRANS_IDENT:
        if target == "t":
            return T.add(e_a, e_b)
        return T.sub(e_b, e_a)
    if kind is OperatorKind.TRANS_FULL:
        ta = _apply_trans_matrix(op_params["a"], e_b if target != "t" else e_a, geom, rel_idx)
        tb = _apply_trans_matrix(op_params["b"], e_a if target != "t" else e_b, geom, rel_idx)
        if target == "t":
            return T.add(ta, tb)
        return T.sub(ta, tb)
    if kind in CONV1D_KERNEL:
        B, d = e_a.shape
        stacked = T.concat([T.reshape(e_a, (B, 1, d)), T.reshape(e_b, (B, 1, d))], axis=1)
        conv = T.relu(T.conv1d_same(stacked, op_params["filters"], op_params["bias"]))
        return T.matmul(T.reshape(conv, (B, geom.conv_filters * d)), op_params["proj"])
    if kind in CONV2D_KERNEL:
        B, d = e_a.shape
        d1, d2 = geom.require_reshape()
        stacked = T.concat([T.reshape(e_a, (B, 1, d1, d2)), T.reshape(e_b, (B, 1, d1, d2))], axis=2)
        conv = T.relu(T.conv2d(stacked, op_params["filters"], op_params["bias"]))
        flat = geom.conv_filters * 2 * d1 * d2
        return T.matmul(T.reshape(conv, (B, flat)), op_params["proj"])
    raise ValueError(f"unknown operator kind {kind!r}")


def fuse(e_orig, e_new, w, b):
    """Gated combination beta * e_orig + (1 - beta) * e_new.

    beta = sigmoid(W [e_orig; e_new] + b) is a per-row scalar; the output is
    an elementwise convex combination of the two embeddings.  ``w`` has
    shape (1, 2d) and ``b`` shape (1,).
    """
    B, d = e_orig.shape
    if e_new.shape != (B, d):
        raise ShapeError(f"fuse: embeddings disagree: {e_orig.shape} vs {e_new.shape}")
    if tuple(w.shape) != (1, 2 * d) or tuple(b.shape) != (1,):
        raise ShapeError(f"fuse: gate shapes {w.shape}, {b.shape} do not fit dim {d}")
    cat = T.concat([e_orig, e_new], axis=1)
    beta = T.sigmoid(T.add_bias(T.matmul(cat, T.reshape(w, (2 * d, 1))), b))
    kept = T.scale_rows(e_orig, beta)
    introduced = T.scale_rows(e_new, T.scalar_affine(beta, -1.0, 1.0))
    return T.add(kept, introduced)


def fuse_add(e_orig, e_new):
    """Ungated fusion: plain mean of the two embeddings."""
    return T.scalar_affine(T.add(e_orig, e_new), 0.5)


def _canonical_pair(target, e_h, e_r, e_t):
    if target == "h":
        return e_r, e_t
    if target == "r":
        return e_h, e_t
    return e_h, e_r


def layer_forward(embs, params, selection, geom, rel_idx=None, fusion_mode="gated"):
    """One representation layer over batched (B, d) embeddings.

    ``selection`` maps each target to either an :class:`OperatorKind`
    (discrete mode) or a softmax-weight tensor over that edge's candidates
    (mixture mode).  All targets read the incoming embeddings, so the
    per-target outputs are order-independent.  A discrete identity choice
    bypasses fusion and returns the incoming embedding exactly.
    """
    e_h, e_r, e_t = embs
    incoming = {"h": e_h, "r": e_r, "t": e_t}
    outputs = {}
    for target in TARGETS:
        own = incoming[target]
        e_a, e_b = _canonical_pair(target, e_h, e_r, e_t)
        choice = selection[target]
        if isinstance(choice, OperatorKind):
            if choice is OperatorKind.IDENTITY:
                outputs[target] = own
                continue
            new = reconstruct(target, choice, e_a, e_b, params.ops[target][choice],
                              geom, e_self=own, rel_idx=rel_idx)
        else:
            kinds = params.candidates[target]
            if tuple(choice.shape) != (len(kinds),):
                raise ShapeError(f"layer {params.layer} target {target}: mixture weights "
                                 f"{choice.shape} != {len(kinds)} candidates")
            B, d = own.shape
            cands = [
                T.reshape(reconstruct(target, kind, e_a, e_b, params.ops[target][kind],
                                      geom, e_self=own, rel_idx=rel_idx), (1, B * d))
                for kind in kinds
            ]
            mixed = T.matmul(T.reshape(choice, (1, len(kinds))), T.concat(cands, axis=0))
            new = T.reshape(mixed, (B, d))
        if fusion_mode == "add":
            outputs[target] = fuse_add(own, new)
        else:
            w, b = params.gate[target]
            outputs[target] = fuse(own, new, w, b)
    return outputs["h"], outputs["r"], outputs["t"]
