"""Knowledge graph embedding model assembled from searched components.

A model owns entity and relation embedding tables, a stack of
representation layers, and one or more score functions.  Which operator
and scorer candidates exist is described by a :class:`ModelPlan`: edges
with a single candidate run discretely, edges with several run as a
softmax mixture driven by externally owned architecture weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .params import ParameterStore
from .representation import TARGETS, LayerParams, OperatorKind, layer_forward
from .scorers import ScoreFnKind, build_score_params, score

CONV2D_KINDS = (OperatorKind.CONV2D_K3, OperatorKind.CONV2D_K5)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Geometry:
    """Shape bundle shared by layers and scorers."""

    dim: int
    n_relations: int
    reshape: tuple | None
    conv_filters: int
    conv_score_filters: int
    mlp_hidden: int
    p_norm: int
    per_relation_translation: bool

    def require_reshape(self):
        if self.reshape is None:
            raise ConfigError(
                f"conv2d operators need reshape (d1, d2) with d1 * d2 == {self.dim}; "
                "set the reshape config key")
        return self.reshape


@dataclass(frozen=True)
class ModelConfig:
    n_entities: int
    n_relations: int
    dim: int = 400
    n_layers: int = 1
    reshape: tuple | None = None
    conv_filters: int = 32
    conv_score_filters: int = 32
    mlp_hidden: int = 0          # 0 means "use dim"
    p_norm: int = 1
    precision: str = "float32"
    fusion_mode: str = "gated"
    per_relation_translation: bool = False

    def __post_init__(self):
        if self.n_entities < 1 or self.n_relations < 1:
            raise ConfigError("model needs at least one entity and one relation")
        if self.dim < 1:
            raise ConfigError(f"dim must be positive, got {self.dim}")
        if self.n_layers not in (1, 2, 3, 4):
            raise ConfigError(f"n_layers must be in 1..4, got {self.n_layers}")
        if self.p_norm not in (1, 2):
            raise ConfigError(f"p_norm must be 1 or 2, got {self.p_norm}")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.fusion_mode not in ("gated", "add"):
            raise ConfigError(f"fusion_mode must be gated or add, got {self.fusion_mode!r}")
        if self.reshape is not None:
            d1, d2 = self.reshape
            if d1 < 1 or d2 < 1 or d1 * d2 != self.dim:
                raise ConfigError(
                    f"reshape {self.reshape} does not factor dim {self.dim}")


@dataclass
class ModelPlan:
    """Candidate sets: one operator list per (layer, target), one scorer list.

    Singleton lists run discretely; longer lists become softmax mixtures.
    Lists follow the canonical candidate order.
    """

    rep_candidates: list      # per layer: {target: [OperatorKind]}
    score_candidates: list    # [ScoreFnKind]

    def __post_init__(self):
        if not self.score_candidates:
            raise ConfigError("plan needs at least one score function")
        for layer in self.rep_candidates:
            for target in TARGETS:
                if not layer.get(target):
                    raise ConfigError(f"plan is missing candidates for target {target!r}")

    @property
    def n_layers(self):
        return len(self.rep_candidates)

    def uses_conv2d(self):
        return any(kind in CONV2D_KINDS
                   for layer in self.rep_candidates
                   for kinds in layer.values() for kind in kinds)

    def needs_arch(self):
        multi_rep = any(len(kinds) > 1 for layer in self.rep_candidates
                        for kinds in layer.values())
        return multi_rep or len(self.score_candidates) > 1


def search_plan(n_layers, rep_search=True, score_search=True,
                fixed_scorer=ScoreFnKind.TRANSE):
    """Plan for architecture search, with optional search-space ablations.

    Disabling representation search pins every edge to identity; disabling
    score search pins the scorer to ``fixed_scorer``.
    """
    rep = list(OperatorKind) if rep_search else [OperatorKind.IDENTITY]
    layers = [{t: list(rep) for t in TARGETS} for _ in range(n_layers)]
    scorers = list(ScoreFnKind) if score_search else [fixed_scorer]
    return ModelPlan(layers, scorers)


def discrete_plan(rep_choices, score_choice):
    """Plan for a fixed architecture, given canonical operator names."""
    layers = [{t: [OperatorKind.from_name(name)] for t, name in zip(TARGETS, row)}
              for row in rep_choices]
    return ModelPlan(layers, [ScoreFnKind.from_name(score_choice)])


class KgeModel:
    """Embedding tables + representation layers + score function(s).

    Parameter initialisation draws from ``rng`` in a fixed order (entity
    table, relation table, scorer parameters in canonical order, then layer
    parameters), so two models that share a seed and allocate the same
    parameters start identical.
    """

    def __init__(self, config, plan, rng):
        if plan.n_layers != config.n_layers:
            raise ConfigError(
                f"plan has {plan.n_layers} layers but config says {config.n_layers}")
        if plan.uses_conv2d():
            if config.reshape is None:
                raise ConfigError(
                    f"conv2d operators need reshape (d1, d2) with d1 * d2 == {config.dim}; "
                    "set the reshape config key")
        self.config = config
        self.plan = plan
        self.geom = Geometry(
            dim=config.dim,
            n_relations=config.n_relations,
            reshape=tuple(config.reshape) if config.reshape is not None else None,
            conv_filters=config.conv_filters,
            conv_score_filters=config.conv_score_filters,
            mlp_hidden=config.mlp_hidden if config.mlp_hidden > 0 else config.dim,
            p_norm=config.p_norm,
            per_relation_translation=config.per_relation_translation,
        )
        dtype = np.float32 if config.precision == "float32" else np.float64
        self.store = ParameterStore(dtype=dtype)
        bound = 6.0 / np.sqrt(config.dim)
        self.entity_emb = self.store.add(
            "entity_emb", rng.uniform(-bound, bound, size=(config.n_entities, config.dim)))
        self.relation_emb = self.store.add(
            "relation_emb", rng.uniform(-bound, bound, size=(config.n_relations, config.dim)))
        self.score_params = build_score_params(
            self.store, plan.score_candidates, self.geom, rng)
        self.layers = [
            LayerParams(self.store, l, plan.rep_candidates[l], self.geom, rng,
                        gated=(config.fusion_mode == "gated"))
            for l in range(config.n_layers)
        ]

    def embed(self, heads, rels, tails):
        heads = np.asarray(heads, dtype=np.int64)
        rels = np.asarray(rels, dtype=np.int64)
        tails = np.asarray(tails, dtype=np.int64)
        return (T.gather(self.entity_emb, heads),
                T.gather(self.relation_emb, rels),
                T.gather(self.entity_emb, tails)), rels

    def forward(self, heads, rels, tails, arch=None):
        """Score a batch of triples; returns a (B,) tensor, higher is better.

        ``arch`` supplies architecture weights and is required whenever the
        plan has a multi-candidate edge.
        """
        if arch is None and self.plan.needs_arch():
            raise ConfigError("this model has searchable edges; forward needs arch weights")
        embs, rel_idx = self.embed(heads, rels, tails)
        for layer in self.layers:
            selection = {}
            for target in TARGETS:
                kinds = layer.candidates[target]
                if len(kinds) == 1:
                    selection[target] = kinds[0]
                else:
                    selection[target] = T.softmax(arch.rep[layer.layer][target])
            embs = layer_forward(embs, layer, selection, self.geom,
                                 rel_idx=rel_idx, fusion_mode=self.config.fusion_mode)
        outs = [score(kind, embs, self.score_params, rel_idx, self.geom)
                for kind in self.plan.score_candidates]
        if len(outs) == 1:
            return outs[0]
        B = outs[0].shape[0]
        stacked = T.concat([T.reshape(o, (1, B)) for o in outs], axis=0)
        weights = T.softmax(arch.score)
        return T.reshape(T.matmul(T.reshape(weights, (1, len(outs))), stacked), (B,))

    def score_triples(self, heads, rels, tails, arch=None):
        """Forward pass returning a plain ndarray, for ranking evaluation."""
        return self.forward(heads, rels, tails, arch=arch).data.copy()
