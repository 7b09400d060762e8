"""Differentiable architecture search over representation and score choices.

Every searchable hyperedge (one per layer and target, plus one for the
scorer) owns a vector of architecture weights alpha.  Forward passes mix
candidate outputs with softmax(alpha); search alternates model-weight
updates on training batches with alpha updates on held-out batches;
derivation picks the argmax candidate per hyperedge.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .data import BatchSampler, DatasetError
from .model import ConfigError, KgeModel, search_plan
from .optim import Adam, sgd_step
from .representation import TARGETS, OperatorKind
from .scorers import ScoreFnKind
from .training import NonFiniteLossError, bce_loss

logger = logging.getLogger(__name__)

GENOTYPE_FORMAT = "nase-genotype-v1"


class GenotypeError(ValueError):
    pass


@dataclass
class Genotype:
    """A derived discrete architecture plus the geometry it was searched at."""

    n_layers: int
    rep_choices: list          # n_layers rows of [h, r, t] operator names
    score_choice: str
    dim: int
    reshape: tuple | None
    conv_filters: int
    conv_score_filters: int
    mlp_hidden: int

    def __post_init__(self):
        if self.n_layers != len(self.rep_choices):
            raise GenotypeError(f"n_layers {self.n_layers} != {len(self.rep_choices)} choice rows")
        uses_conv2d = False
        for row in self.rep_choices:
            if len(row) != 3:
                raise GenotypeError(f"rep choice row {row!r} must name h, r and t operators")
            for name in row:
                kind = OperatorKind.from_name(name)
                uses_conv2d = uses_conv2d or name.startswith("conv2d")
        ScoreFnKind.from_name(self.score_choice)
        if self.dim < 1:
            raise GenotypeError(f"dim must be positive, got {self.dim}")
        if self.reshape is not None:
            self.reshape = tuple(int(v) for v in self.reshape)
            d1, d2 = self.reshape
            if d1 * d2 != self.dim:
                raise GenotypeError(f"reshape {self.reshape} does not factor dim {self.dim}")
        elif uses_conv2d:
            raise GenotypeError("genotype picks a conv2d operator but carries no reshape")

    def to_dict(self):
        return {
            "format": GENOTYPE_FORMAT,
            "n_layers": self.n_layers,
            "rep_choices": [list(row) for row in self.rep_choices],
            "score_choice": self.score_choice,
            "dim": self.dim,
            "reshape": list(self.reshape) if self.reshape is not None else None,
            "conv_filters": self.conv_filters,
            "conv_score_filters": self.conv_score_filters,
            "mlp_hidden": self.mlp_hidden,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, payload):
        if not isinstance(payload, dict):
            raise GenotypeError("genotype document must be a JSON object")
        fmt = payload.get("format")
        if fmt != GENOTYPE_FORMAT:
            raise GenotypeError(f"unsupported genotype format {fmt!r}, expected {GENOTYPE_FORMAT!r}")
        fields = ("n_layers", "rep_choices", "score_choice", "dim", "reshape",
                  "conv_filters", "conv_score_filters", "mlp_hidden")
        missing = [f for f in fields if f not in payload]
        if missing:
            raise GenotypeError(f"genotype is missing fields: {missing}")
        unknown = [k for k in payload if k not in fields and k != "format"]
        if unknown:
            raise GenotypeError(f"genotype has unknown fields: {unknown}")
        reshape = payload["reshape"]
        return cls(
            n_layers=int(payload["n_layers"]),
            rep_choices=[list(row) for row in payload["rep_choices"]],
            score_choice=payload["score_choice"],
            dim=int(payload["dim"]),
            reshape=tuple(reshape) if reshape is not None else None,
            conv_filters=int(payload["conv_filters"]),
            conv_score_filters=int(payload["conv_score_filters"]),
            mlp_hidden=int(payload["mlp_hidden"]),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        if not os.path.exists(path):
            raise GenotypeError(f"genotype file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise GenotypeError(f"genotype file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(payload)


class ArchWeights:
    """Architecture weight vectors, one per multi-candidate hyperedge.

    Vectors start at zero, so every candidate begins with equal softmax
    weight.  They register in the store under the "alpha" group, keeping
    them out of model-weight updates.
    """

    def __init__(self, store, plan):
        self.plan = plan
        self.rep = []
        for l, layer in enumerate(plan.rep_candidates):
            row = {}
            for target in TARGETS:
                kinds = layer[target]
                if len(kinds) > 1:
                    row[target] = store.add(f"arch.layer{l}.{target}",
                                            np.zeros(len(kinds)), group="alpha")
                else:
                    row[target] = None
            self.rep.append(row)
        if len(plan.score_candidates) > 1:
            self.score = store.add("arch.score", np.zeros(len(plan.score_candidates)),
                                   group="alpha")
        else:
            self.score = None

    def vectors(self):
        """Yield (hyperedge-name, tensor) for every searchable edge."""
        for l, row in enumerate(self.rep):
            for target in TARGETS:
                if row[target] is not None:
                    yield f"layer{l}.{target}", row[target]
        if self.score is not None:
            yield "score", self.score

    def softmax_snapshot(self):
        out = {}
        for name, vec in self.vectors():
            out[name] = [round(float(v), 10) for v in _softmax(vec.data)]
        return out

    def entropies(self):
        out = {}
        for name, vec in self.vectors():
            probs = _softmax(vec.data)
            out[name] = float(-np.sum(probs * np.log(probs + 1e-300)))
        return out

    def mean_entropy(self):
        values = list(self.entropies().values())
        return float(np.mean(values)) if values else 0.0


def _softmax(vec):
    shifted = np.asarray(vec, dtype=np.float64) - np.max(vec)
    e = np.exp(shifted)
    return e / np.sum(e)


def _check_finite(loss, phase, batch, arch):
    value = float(loss.data)
    if not np.isfinite(value):
        raise NonFiniteLossError(phase, value, batch=batch,
                                 alphas=arch.softmax_snapshot())
    return value


def mixed_forward(model, arch, heads, rels, tails):
    """Forward pass with every hyperedge relaxed to its softmax mixture."""
    return model.forward(heads, rels, tails, arch=arch)


class Searcher:
    """Alternating bilevel updates: theta on train data, alpha on held-out data."""

    def __init__(self, model, arch, lr_theta, lr_alpha, alpha_optimizer="adam"):
        if alpha_optimizer not in ("adam", "sgd"):
            raise ConfigError(f"alpha_optimizer must be adam or sgd, got {alpha_optimizer!r}")
        self.model = model
        self.arch = arch
        self.lr_theta = lr_theta
        self.lr_alpha = lr_alpha
        self.theta = model.store.group("theta")
        self.alpha = model.store.group("alpha")
        self.alpha_opt = Adam(self.alpha, lr=lr_alpha) if (
            alpha_optimizer == "adam" and self.alpha) else None

    def search_step(self, train_batch, alpha_batch):
        """One theta update then one alpha update; returns both loss values.

        Each phase backpropagates only into its own parameter group, so a
        zero learning rate leaves that group untouched and neither phase
        perturbs the other's gradients.
        """
        model, arch = self.model, self.arch
        scores = model.forward(train_batch.heads, train_batch.rels, train_batch.tails,
                               arch=arch)
        loss_theta = bce_loss(scores, T.Tensor(train_batch.labels))
        value_theta = _check_finite(loss_theta, "theta", train_batch, arch)
        T.backward(loss_theta, groups={"theta"})
        sgd_step(self.theta, self.lr_theta)

        scores = model.forward(alpha_batch.heads, alpha_batch.rels, alpha_batch.tails,
                               arch=arch)
        loss_alpha = bce_loss(scores, T.Tensor(alpha_batch.labels))
        value_alpha = _check_finite(loss_alpha, "alpha", alpha_batch, arch)
        if self.alpha:
            T.backward(loss_alpha, groups={"alpha"})
            if self.alpha_opt is not None:
                self.alpha_opt.step()
            else:
                sgd_step(self.alpha, self.lr_alpha)
        return value_theta, value_alpha


def _argmax_choice(values, names, edge):
    idx = int(np.argmax(values))
    n_tied = int(np.sum(values == values[idx]))
    if n_tied > 1:
        logger.info("hyperedge %s: %d candidates tied at the max; picking lowest "
                    "index %r", edge, n_tied, names[idx])
    return idx


def derive(arch, model):
    """Collapse architecture weights to the discrete argmax genotype.

    Single-candidate edges keep their only candidate.  Exact ties resolve
    to the lowest candidate index (canonical order) and are logged.
    """
    plan = model.plan
    cfg = model.config
    rep_choices = []
    for l, layer in enumerate(plan.rep_candidates):
        row = []
        for target in TARGETS:
            kinds = layer[target]
            if len(kinds) == 1:
                row.append(kinds[0].value)
                continue
            names = [k.value for k in kinds]
            vec = arch.rep[l][target].data
            row.append(names[_argmax_choice(vec, names, f"layer{l}.{target}")])
        rep_choices.append(row)
    score_names = [k.value for k in plan.score_candidates]
    if len(score_names) == 1:
        score_choice = score_names[0]
    else:
        score_choice = score_names[_argmax_choice(arch.score.data, score_names, "score")]
    return Genotype(
        n_layers=cfg.n_layers,
        rep_choices=rep_choices,
        score_choice=score_choice,
        dim=cfg.dim,
        reshape=model.geom.reshape,
        conv_filters=cfg.conv_filters,
        conv_score_filters=cfg.conv_score_filters,
        mlp_hidden=model.geom.mlp_hidden,
    )


def run_search(store, cfg, out_dir=None):
    """Full search: alternating updates for cfg.epochs_search epochs.

    Returns (model, arch, log records).  When ``out_dir`` is given, writes
    search.ckpt (all parameters including alpha, with the resolved config
    in the meta line) and search.log.jsonl (one record per epoch: losses,
    softmax snapshot, per-edge entropy).
    """
    plan = search_plan(
        cfg.n_layers,
        rep_search=not cfg.disable_rep_search,
        score_search=not cfg.disable_score_search,
        fixed_scorer=ScoreFnKind.from_name(cfg.fixed_scorer()),
    )
    seq = np.random.SeedSequence(cfg.seed)
    init_seq, theta_seq, alpha_seq = seq.spawn(3)
    model = KgeModel(cfg.model_config(store.n_entities, store.n_relations),
                     plan, np.random.default_rng(init_seq))
    arch = ArchWeights(model.store, plan)

    alpha_split = "valid" if cfg.alpha_source == "valid" else "train"
    if len(store.split(alpha_split)) == 0:
        raise DatasetError(f"alpha_source {cfg.alpha_source!r} needs a non-empty "
                           f"{alpha_split} split")
    theta_sampler = BatchSampler(store, "train", np.random.default_rng(theta_seq))
    alpha_sampler = BatchSampler(store, alpha_split, np.random.default_rng(alpha_seq))
    alpha_bs = min(cfg.batch_size, len(store.split(alpha_split)))

    searcher = Searcher(model, arch, lr_theta=cfg.lr, lr_alpha=cfg.lr_alpha,
                        alpha_optimizer=cfg.alpha_optimizer)
    records = []
    for epoch in range(1, cfg.epochs_search + 1):
        theta_total = 0.0
        alpha_total = 0.0
        n_batches = theta_sampler.batches_per_epoch(cfg.batch_size)
        for _ in range(n_batches):
            tb = theta_sampler.sample(cfg.batch_size, cfg.n_neg)
            ab = alpha_sampler.sample(alpha_bs, cfg.n_neg)
            lt, la = searcher.search_step(tb, ab)
            theta_total += lt
            alpha_total += la
        record = {
            "epoch": epoch,
            "loss_theta": round(theta_total / n_batches, 10),
            "loss_alpha": round(alpha_total / n_batches, 10),
            "alphas": arch.softmax_snapshot(),
            "entropy": {k: round(v, 10) for k, v in arch.entropies().items()},
            "mean_entropy": round(arch.mean_entropy(), 10),
        }
        records.append(record)
        logger.info("search epoch %d: loss_theta %.4f loss_alpha %.4f mean entropy %.4f",
                    epoch, record["loss_theta"], record["loss_alpha"],
                    record["mean_entropy"])

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(os.path.join(out_dir, "search.ckpt"), model.store.state_dict(),
                        precision=cfg.precision,
                        meta={"kind": "search", "config": cfg.to_dict()})
        with open(os.path.join(out_dir, "search.log.jsonl"), "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return model, arch, records


def derive_from_checkpoint(path, config_cls):
    """Re-derive a genotype from a persisted search checkpoint.

    ``config_cls`` is the run-config class used to decode the checkpoint's
    embedded config (passed in to keep this module free of config parsing).
    """
    arrays, _, meta = load_checkpoint(path)
    if meta.get("kind") != "search":
        raise GenotypeError(f"{path} is not a search checkpoint (kind={meta.get('kind')!r})")
    cfg = config_cls.from_dict(meta["config"])
    plan = search_plan(
        cfg.n_layers,
        rep_search=not cfg.disable_rep_search,
        score_search=not cfg.disable_score_search,
        fixed_scorer=ScoreFnKind.from_name(cfg.fixed_scorer()),
    )
    rep_choices = []
    for l, layer in enumerate(plan.rep_candidates):
        row = []
        for target in TARGETS:
            kinds = layer[target]
            if len(kinds) == 1:
                row.append(kinds[0].value)
                continue
            key = f"arch.layer{l}.{target}"
            if key not in arrays:
                raise GenotypeError(f"checkpoint {path} is missing alpha vector {key}")
            names = [k.value for k in kinds]
            row.append(names[_argmax_choice(arrays[key], names, f"layer{l}.{target}")])
        rep_choices.append(row)
    score_names = [k.value for k in plan.score_candidates]
    if len(score_names) == 1:
        score_choice = score_names[0]
    else:
        if "arch.score" not in arrays:
            raise GenotypeError(f"checkpoint {path} is missing alpha vector arch.score")
        score_choice = score_names[_argmax_choice(arrays["arch.score"], score_names, "score")]
    return Genotype(
        n_layers=cfg.n_layers,
        rep_choices=rep_choices,
        score_choice=score_choice,
        dim=cfg.dim,
        reshape=cfg.resolved_reshape(),
        conv_filters=cfg.conv_filters,
        conv_score_filters=cfg.conv_score_filters,
        mlp_hidden=cfg.mlp_hidden if cfg.mlp_hidden > 0 else cfg.dim,
    )
