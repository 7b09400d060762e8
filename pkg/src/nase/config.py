"""Run configuration: one JSON document, CLI overrides, env seed override.

Exactly the documented keys are accepted; anything else is an error.
Defaults follow the best-performing full-scale combination (one layer,
dim 400, lr 1e-3, batch 128); desk-scale runs override dim and the filter
counts in their config files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields

from .model import ConfigError, ModelConfig
from .scorers import ScoreFnKind
from .training import TrainConfig

SEED_ENV_VAR = "NASE_SEED"

_SCORER_NAMES = tuple(kind.value for kind in ScoreFnKind)


@dataclass
class RunConfig:
    dataset_dir: str = ""
    out_dir: str = ""
    seed: int = 0
    # model geometry
    dim: int = 400
    n_layers: int = 1
    reshape: tuple | None = None          # defaults to (20, 20) when dim == 400
    conv_filters: int = 32
    conv_score_filters: int = 32
    mlp_hidden: int = 0                   # 0 means "use dim"
    p_norm: int = 1
    precision: str = "float32"
    per_relation_translation: bool = False
    # training
    lr: float = 1e-3
    batch_size: int = 128
    n_neg: int = 10
    epochs: int = 100
    patience: int = 10
    eval_every: int = 1
    l2: float = 0.0
    # search
    epochs_search: int = 50
    lr_alpha: float = 3e-4
    alpha_source: str = "valid"
    alpha_optimizer: str = "adam"
    # evaluation
    tie_policy: str = "mean"
    protocol: str = "filtered"
    # ablations
    disable_rep_search: bool = False
    disable_score_search: object = False  # False, True, or a scorer name
    fusion_mode: str = "gated"

    def __post_init__(self):
        self.train_config()               # reuses the training-side validation
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.epochs_search < 1:
            raise ConfigError(f"epochs_search must be at least 1, got {self.epochs_search}")
        if self.lr_alpha < 0:
            raise ConfigError(f"lr_alpha must be non-negative, got {self.lr_alpha}")
        if self.alpha_source not in ("valid", "train"):
            raise ConfigError(f"alpha_source must be valid or train, got {self.alpha_source!r}")
        if self.alpha_optimizer not in ("adam", "sgd"):
            raise ConfigError(f"alpha_optimizer must be adam or sgd, "
                              f"got {self.alpha_optimizer!r}")
        if self.conv_filters < 1 or self.conv_score_filters < 1:
            raise ConfigError("conv_filters and conv_score_filters must be at least 1")
        if self.mlp_hidden < 0:
            raise ConfigError(f"mlp_hidden must be non-negative, got {self.mlp_hidden}")
        if not isinstance(self.disable_rep_search, bool):
            raise ConfigError("disable_rep_search must be a boolean")
        if not (isinstance(self.disable_score_search, bool)
                or self.disable_score_search in _SCORER_NAMES):
            raise ConfigError(f"disable_score_search must be false, true, or one of "
                              f"{_SCORER_NAMES}, got {self.disable_score_search!r}")
        if self.reshape is not None:
            self.reshape = tuple(int(v) for v in self.reshape)
            if len(self.reshape) != 2 or min(self.reshape) < 1:
                raise ConfigError(f"reshape must be two positive extents, got {self.reshape}")
            d1, d2 = self.reshape
            if d1 * d2 != self.dim:
                raise ConfigError(f"reshape {self.reshape} does not factor dim {self.dim}")

    def fixed_scorer(self):
        """Scorer name the search pins to when score search is disabled."""
        if isinstance(self.disable_score_search, str):
            return self.disable_score_search
        return "transe"

    def resolved_reshape(self):
        if self.reshape is not None:
            return tuple(self.reshape)
        if self.dim == 400:
            return (20, 20)
        return None

    def train_config(self):
        return TrainConfig(
            dim=self.dim, n_layers=self.n_layers, lr=self.lr,
            batch_size=self.batch_size, n_neg=self.n_neg, epochs=self.epochs,
            seed=self.seed, p_norm=self.p_norm, precision=self.precision,
            patience=self.patience, eval_every=self.eval_every, l2=self.l2,
            fusion_mode=self.fusion_mode,
            per_relation_translation=self.per_relation_translation,
            protocol=self.protocol, tie_policy=self.tie_policy)

    def model_config(self, n_entities, n_relations):
        return ModelConfig(
            n_entities=n_entities, n_relations=n_relations, dim=self.dim,
            n_layers=self.n_layers, reshape=self.resolved_reshape(),
            conv_filters=self.conv_filters,
            conv_score_filters=self.conv_score_filters,
            mlp_hidden=self.mlp_hidden, p_norm=self.p_norm,
            precision=self.precision, fusion_mode=self.fusion_mode,
            per_relation_translation=self.per_relation_translation)

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "reshape" and value is not None:
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, payload):
        if not isinstance(payload, dict):
            raise ConfigError("config document must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in payload.items():
            kwargs[key] = _check_type(key, value)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad config value: {exc}") from exc


_INT_KEYS = ("seed", "dim", "n_layers", "conv_filters", "conv_score_filters",
             "mlp_hidden", "p_norm", "batch_size", "n_neg", "epochs", "patience",
             "eval_every", "epochs_search")
_FLOAT_KEYS = ("lr", "l2", "lr_alpha")
_STR_KEYS = ("dataset_dir", "out_dir", "precision", "alpha_source",
             "alpha_optimizer", "tie_policy", "protocol", "fusion_mode")
_BOOL_KEYS = ("per_relation_translation", "disable_rep_search")


def _check_type(key, value):
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {key} must be an integer, got {value!r}")
        return value
    if key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key} must be a number, got {value!r}")
        return float(value)
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"config key {key} must be a string, got {value!r}")
        return value
    if key in _BOOL_KEYS:
        if not isinstance(value, bool):
            raise ConfigError(f"config key {key} must be a boolean, got {value!r}")
        return value
    if key == "disable_score_search":
        if not isinstance(value, (bool, str)):
            raise ConfigError(f"config key {key} must be a boolean or scorer name, "
                              f"got {value!r}")
        return value
    if key == "reshape":
        if value is None:
            return None
        if (not isinstance(value, (list, tuple)) or len(value) != 2
                or any(isinstance(v, bool) or not isinstance(v, int) for v in value)):
            raise ConfigError(f"config key reshape must be two integers, got {value!r}")
        return tuple(value)
    return value


def load_config(path=None, overrides=None):
    """Resolve a RunConfig from file, explicit overrides, and the seed env var.

    Later sources win: defaults < config file < overrides < NASE_SEED.
    ``overrides`` entries whose value is None are ignored, matching unset
    CLI flags.
    """
    payload = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            try:
                document = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(document, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        payload.update(document)
    if overrides:
        for key, value in overrides.items():
            if value is not None:
                payload[key] = value
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            payload["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}") from exc
    return RunConfig.from_dict(payload)
