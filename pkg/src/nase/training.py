"""From-scratch training of a derived discrete architecture.

``fit`` allocates only the genotype's chosen operators and scorer, trains
model weights with SGD on sampled batches under binary cross-entropy, and
keeps the best-validation-MRR parameters.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .data import BatchSampler
from .evaluation import PROTOCOLS, TIE_POLICIES, evaluate
from .model import ConfigError, KgeModel, ModelConfig, discrete_plan
from .optim import sgd_step

logger = logging.getLogger(__name__)


class NonFiniteLossError(RuntimeError):
    """Loss became NaN or infinite; message carries batch and alpha context."""

    def __init__(self, phase, value, batch=None, alphas=None):
        self.phase = phase
        self.value = value
        parts = [f"non-finite {phase} loss {value!r}"]
        if batch is not None:
            preview = np.stack([batch.heads[:8], batch.rels[:8], batch.tails[:8]], axis=1)
            parts.append(f"first triples {preview.tolist()}")
        if alphas:
            parts.append(f"alpha softmax {json.dumps(alphas, sort_keys=True)}")
        super().__init__("; ".join(parts))


@dataclass
class TrainConfig:
    dim: int = 400
    n_layers: int = 1
    lr: float = 1e-3
    batch_size: int = 128
    n_neg: int = 10
    epochs: int = 100
    seed: int = 0
    p_norm: int = 1
    precision: str = "float32"
    patience: int = 10
    eval_every: int = 1
    l2: float = 0.0
    fusion_mode: str = "gated"
    per_relation_translation: bool = False
    protocol: str = "filtered"
    tie_policy: str = "mean"

    def __post_init__(self):
        if self.dim <= 0:
            raise ConfigError(f"dim must be positive, got {self.dim}")
        if self.n_layers not in (1, 2, 3, 4):
            raise ConfigError(f"n_layers must be in 1..4, got {self.n_layers}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.n_neg < 1:
            raise ConfigError(f"n_neg must be at least 1, got {self.n_neg}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be at least 1, got {self.eval_every}")
        if self.patience < 0:
            raise ConfigError(f"patience must be non-negative, got {self.patience}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be non-negative, got {self.l2}")
        if self.fusion_mode not in ("gated", "add"):
            raise ConfigError(f"fusion_mode must be gated or add, got {self.fusion_mode!r}")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.tie_policy not in TIE_POLICIES:
            raise ConfigError(f"tie_policy must be one of {TIE_POLICIES}, "
                              f"got {self.tie_policy!r}")

    def to_dict(self):
        return asdict(self)


def bce_loss(scores, labels):
    """Binary cross-entropy on sigmoid(score), in stable logit form.

    mean(softplus(s) - s * y), which equals
    -(1/B) sum[y log sigma(s) + (1 - y) log(1 - sigma(s))] without ever
    forming sigma(s), so saturated scores cannot overflow.
    """
    if scores.shape != labels.shape:
        raise T.ShapeError(f"bce_loss: scores {scores.shape} vs labels {labels.shape}")
    bad = (labels.data != 0) & (labels.data != 1)
    if np.any(bad):
        raise ValueError("bce_loss: labels must be 0 or 1")
    if labels.data.dtype != scores.data.dtype and not labels.requires_grad:
        labels = T.Tensor(labels.data.astype(scores.data.dtype))
    return T.tmean(T.sub(T.softplus(scores), T.mul(scores, labels)))


def build_model(genotype, config, n_entities, n_relations, rng):
    """Instantiate the discrete model a genotype describes.

    The genotype carries geometry (dim, reshape, filter counts); the train
    config carries everything else and must agree on dim and n_layers.
    """
    if genotype.dim != config.dim:
        raise ConfigError(f"genotype dim {genotype.dim} != config dim {config.dim}")
    if genotype.n_layers != config.n_layers:
        raise ConfigError(f"genotype has {genotype.n_layers} layers but config "
                          f"says {config.n_layers}")
    plan = discrete_plan(genotype.rep_choices, genotype.score_choice)
    mc = ModelConfig(
        n_entities=n_entities,
        n_relations=n_relations,
        dim=genotype.dim,
        n_layers=genotype.n_layers,
        reshape=genotype.reshape,
        conv_filters=genotype.conv_filters,
        conv_score_filters=genotype.conv_score_filters,
        mlp_hidden=genotype.mlp_hidden,
        p_norm=config.p_norm,
        precision=config.precision,
        fusion_mode=config.fusion_mode,
        per_relation_translation=config.per_relation_translation,
    )
    return KgeModel(mc, plan, rng)


def fit(genotype, store, config, checkpoint_path=None, log_path=None):
    """Train a genotype from scratch; returns (model, log records).

    Validation MRR is computed every ``eval_every`` epochs (filtered, mean
    ties by default); training stops early once the count of consecutive
    non-improving evaluations exceeds ``patience``.  The model is restored
    to its best-validation parameters before returning, and persisted to
    ``checkpoint_path`` with the genotype embedded in the header.
    """
    seq = np.random.SeedSequence(config.seed)
    init_seq, sample_seq = seq.spawn(2)
    model = build_model(genotype, config, store.n_entities, store.n_relations,
                        np.random.default_rng(init_seq))
    theta = model.store.group("theta")
    sampler = BatchSampler(store, "train", np.random.default_rng(sample_seq))
    batch_size = min(config.batch_size, len(store.split("train")))

    best_mrr = -1.0
    best_state = None
    stale = 0
    records = []
    start = time.monotonic()
    for epoch in range(1, config.epochs + 1):
        total = 0.0
        n_batches = sampler.batches_per_epoch(batch_size)
        for _ in range(n_batches):
            batch = sampler.sample(batch_size, config.n_neg)
            scores = model.forward(batch.heads, batch.rels, batch.tails)
            loss = bce_loss(scores, T.Tensor(batch.labels))
            value = float(loss.data)
            if not np.isfinite(value):
                raise NonFiniteLossError("train", value, batch=batch)
            T.backward(loss)
            sgd_step(theta, config.lr, weight_decay=config.l2)
            total += value

        valid_mrr = None
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            metrics = evaluate(model.score_triples, store, protocol=config.protocol,
                               ks=(1, 3, 10), tie_policy=config.tie_policy, split="valid")
            valid_mrr = metrics.mrr
            if valid_mrr > best_mrr:
                best_mrr = valid_mrr
                best_state = model.store.state_dict()
                stale = 0
            else:
                stale += 1
        records.append({
            "epoch": epoch,
            "train_loss": round(total / n_batches, 10),
            "valid_mrr": round(valid_mrr, 10) if valid_mrr is not None else None,
            "wall_time": round(time.monotonic() - start, 3),
        })
        logger.info("fit epoch %d: loss %.4f valid MRR %s", epoch,
                    total / n_batches, "-" if valid_mrr is None else f"{valid_mrr:.4f}")
        if stale > config.patience:
            logger.info("early stop at epoch %d (best valid MRR %.4f)", epoch, best_mrr)
            break

    if best_state is not None:
        model.store.load_state(best_state)
    if checkpoint_path is not None:
        from .checkpoint import save_checkpoint
        save_checkpoint(checkpoint_path, model.store.state_dict(),
                        precision=config.precision,
                        meta={"kind": "model",
                              "genotype": genotype.to_dict(),
                              "config": config.to_dict(),
                              "n_entities": store.n_entities,
                              "n_relations": store.n_relations,
                              "best_valid_mrr": round(best_mrr, 10)})
    if log_path is not None:
        os.makedirs(os.path.dirname(os.path.abspath(log_path)), exist_ok=True)
        with open(log_path, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return model, records
