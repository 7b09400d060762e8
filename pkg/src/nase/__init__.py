"""Differentiable architecture search over knowledge graph embedding models.

Library layout: a small reverse-mode tensor engine (tensor, params, optim,
gradcheck, checkpoint), knowledge-graph data handling (data, synth), the
searchable model (representation, scorers, model), the search and training
loops (search, training), ranking evaluation (evaluation), and a CLI
(cli, config).
"""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .data import Batch, BatchSampler, DatasetError, TripleStore, load_dataset, sample_batch
from .evaluation import Metrics, evaluate, rank_of
from .gradcheck import grad_check
from .model import ConfigError, Geometry, KgeModel, ModelConfig, ModelPlan, discrete_plan, search_plan
from .optim import Adam, sgd_step
from .params import Parameter, ParameterStore
from .representation import OperatorKind, fuse, fuse_add, layer_forward, reconstruct
from .scorers import ScoreFnKind
from .search import ArchWeights, Genotype, GenotypeError, Searcher, derive, mixed_forward, run_search
from .synth import SynthError, generate_synthetic_kg, write_dataset
from .tensor import ShapeError, Tensor, UnknownPrimitiveError, apply_primitive, backward, primitive_ids
from .training import NonFiniteLossError, TrainConfig, bce_loss, build_model, fit

__all__ = [
    "Adam", "ArchWeights", "Batch", "BatchSampler", "CheckpointError",
    "ConfigError", "DatasetError", "Genotype", "GenotypeError", "Geometry",
    "KgeModel", "Metrics", "ModelConfig", "ModelPlan", "NonFiniteLossError",
    "OperatorKind", "Parameter", "ParameterStore", "RunConfig", "ScoreFnKind",
    "Searcher", "ShapeError", "SynthError", "Tensor", "TrainConfig",
    "TripleStore", "UnknownPrimitiveError", "apply_primitive", "backward",
    "bce_loss", "build_model", "derive", "discrete_plan", "evaluate", "fit",
    "fuse", "fuse_add", "generate_synthetic_kg", "grad_check", "layer_forward",
    "load_checkpoint", "load_config", "load_dataset", "mixed_forward",
    "primitive_ids", "rank_of", "reconstruct", "run_search", "sample_batch",
    "save_checkpoint", "search_plan", "sgd_step", "write_dataset",
]
