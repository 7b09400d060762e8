"""Score function candidates over refined (head, relation, tail) embeddings.

All scorers map batched (B, d) embedding triples to a (B,) score where
larger means more plausible.  Candidates in canonical (tie-break) order:
conv_score, transe, distmult, simple, mlp.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import tensor as T
from .tensor import ShapeError


class ScoreFnKind(Enum):
    """Score function candidates; enum order is the canonical order."""

    CONV = "conv_score"
    TRANSE = "transe"
    DISTMULT = "distmult"
    SIMPLE = "simple"
    MLP = "mlp"

    @classmethod
    def from_name(cls, name):
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown score function {name!r}")


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def build_score_params(store, kinds, geom, rng):
    """Allocate parameters for the given scorer kinds, in canonical order.

    Returns kind -> {name: tensor}.  transe and distmult are
    parameter-free.  simple owns an auxiliary per-relation embedding table
    initialised like the relation embeddings.
    """
    d = geom.dim
    M = geom.conv_score_filters
    H = geom.mlp_hidden
    params = {}
    for kind in ScoreFnKind:
        if kind not in kinds:
            continue
        if kind is ScoreFnKind.CONV:
            params[kind] = {
                "filters": store.add("score.conv.filters", _uniform(rng, (M, 1, 3, 3), 9)),
                "bias": store.add("score.conv.bias", np.zeros(M)),
                "w": store.add("score.conv.w", _uniform(rng, (M * d, 1), M * d)),
                "b": store.add("score.conv.b", np.zeros(1)),
            }
        elif kind is ScoreFnKind.SIMPLE:
            bound = 6.0 / np.sqrt(d)
            params[kind] = {
                "rel_aux": store.add("score.simple.rel_aux",
                                     rng.uniform(-bound, bound, size=(geom.n_relations, d))),
            }
        elif kind is ScoreFnKind.MLP:
            params[kind] = {
                "w1": store.add("score.mlp.w1", _uniform(rng, (3 * d, H), 3 * d)),
                "b1": store.add("score.mlp.b1", np.zeros(H)),
                "w2": store.add("score.mlp.w2", _uniform(rng, (H, 1), H)),
                "b2": store.add("score.mlp.b2", np.zeros(1)),
            }
        else:
            params[kind] = {}
    return params


def score_transe(e_h, e_r, e_t, p=1):
    """Negated p-norm of the translation residual e_h + e_r - e_t."""
    if p not in (1, 2):
        raise ValueError(f"transe norm order must be 1 or 2, got {p}")
    residual = T.sub(T.add(e_h, e_r), e_t)
    return T.scalar_affine(T.pnorm(residual, p), -1.0)


def score_distmult(e_h, e_r, e_t):
    return T.tsum(T.mul(T.mul(e_h, e_r), e_t), axis=1)


def score_simple(e_h, e_r, e_r2, e_t):
    """Mean of two trilinear terms, the second using the auxiliary relation."""
    both = T.add(score_distmult(e_h, e_r, e_t), score_distmult(e_h, e_r2, e_t))
    return T.scalar_affine(both, 0.5)


def score_conv(e_h, e_r, e_t, filters, bias, w, b):
    """Stack the triple as a 3 x d image, convolve, project to a scalar.

    3x3 filters run valid over the 3 stacked rows and same-padded over the
    d columns, so the flattened feature has M * d elements per example.
    """
    B, d = e_h.shape
    if d < 3:
        raise ShapeError(f"conv scorer needs dim >= 3, got {d}")
    M = filters.shape[0]
    rows = [T.reshape(e, (B, 1, 1, d)) for e in (e_h, e_r, e_t)]
    image = T.concat(rows, axis=2)                             # (B, 1, 3, d)
    conv = T.relu(T.conv2d(image, filters, bias, pad_h="valid", pad_w="same"))
    flat = T.reshape(conv, (B, M * d))
    return T.reshape(T.add_bias(T.matmul(flat, w), b), (B,))


def score_mlp(e_h, e_r, e_t, w1, b1, w2, b2):
    B = e_h.shape[0]
    cat = T.concat([e_h, e_r, e_t], axis=1)                    # (B, 3d)
    hidden = T.relu(T.add_bias(T.matmul(cat, w1), b1))
    return T.reshape(T.add_bias(T.matmul(hidden, w2), b2), (B,))


def score(kind, embs, params, rels, geom):
    """Dispatch one scorer over batched embeddings.

    ``rels`` carries the batch's relation indexes; only simple reads it,
    for its auxiliary relation table.
    """
    e_h, e_r, e_t = embs
    if e_h.shape != e_r.shape or e_h.shape != e_t.shape:
        raise ShapeError(f"scorer {kind.value}: embedding shapes disagree: "
                         f"{e_h.shape}, {e_r.shape}, {e_t.shape}")
    if kind is ScoreFnKind.TRANSE:
        return score_transe(e_h, e_r, e_t, p=geom.p_norm)
    if kind is ScoreFnKind.DISTMULT:
        return score_distmult(e_h, e_r, e_t)
    if kind is ScoreFnKind.SIMPLE:
        e_r2 = T.gather(params[kind]["rel_aux"], rels)
        return score_simple(e_h, e_r, e_r2, e_t)
    if kind is ScoreFnKind.CONV:
        p = params[kind]
        return score_conv(e_h, e_r, e_t, p["filters"], p["bias"], p["w"], p["b"])
    if kind is ScoreFnKind.MLP:
        p = params[kind]
        return score_mlp(e_h, e_r, e_t, p["w1"], p["b1"], p["w2"], p["b2"])
    raise ValueError(f"unknown score function {kind!r}")
