"""Command line entry point: search, train, eval, derive, synth, grid.

Every command prints a one-line JSON summary on success.  Failures print a
single-line machine-parseable JSON error to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .config import SEED_ENV_VAR, RunConfig, load_config
from .data import load_dataset
from .evaluation import evaluate
from .model import ConfigError
from .search import Genotype, derive, derive_from_checkpoint, run_search
from .synth import generate_synthetic_kg, write_dataset
from .training import TrainConfig, build_model, fit

logger = logging.getLogger(__name__)

_CONFIG_FLAGS = (
    ("--dataset_dir", {"type": str}),
    ("--out_dir", {"type": str}),
    ("--seed", {"type": int}),
    ("--dim", {"type": int}),
    ("--n_layers", {"type": int}),
    ("--reshape", {"type": int, "nargs": 2, "metavar": ("D1", "D2")}),
    ("--conv_filters", {"type": int}),
    ("--conv_score_filters", {"type": int}),
    ("--mlp_hidden", {"type": int}),
    ("--p_norm", {"type": int, "choices": (1, 2)}),
    ("--precision", {"type": str, "choices": ("float32", "float64")}),
    ("--lr", {"type": float}),
    ("--batch_size", {"type": int}),
    ("--n_neg", {"type": int}),
    ("--epochs", {"type": int}),
    ("--patience", {"type": int}),
    ("--eval_every", {"type": int}),
    ("--l2", {"type": float}),
    ("--epochs_search", {"type": int}),
    ("--lr_alpha", {"type": float}),
    ("--alpha_source", {"type": str, "choices": ("valid", "train")}),
    ("--alpha_optimizer", {"type": str, "choices": ("adam", "sgd")}),
    ("--tie_policy", {"type": str, "choices": ("mean", "optimistic", "pessimistic")}),
    ("--protocol", {"type": str, "choices": ("raw", "filtered")}),
    ("--fusion_mode", {"type": str, "choices": ("gated", "add")}),
)


def _add_config_flags(sub):
    sub.add_argument("--config", type=str, default=None,
                     help="JSON config file; flags override its keys")
    for flag, kwargs in _CONFIG_FLAGS:
        sub.add_argument(flag, default=None, **kwargs)
    sub.add_argument("--disable_rep_search", action="store_const", const=True,
                     default=None, help="pin every representation edge to identity")
    sub.add_argument("--disable_score_search", nargs="?", const=True, default=None,
                     metavar="SCORER", help="pin the scorer (default transe)")
    sub.add_argument("--per_relation_translation", action="store_const", const=True,
                     default=None)


def _overrides(args):
    names = {f[0].lstrip("-") for f in _CONFIG_FLAGS}
    names |= {"disable_rep_search", "disable_score_search", "per_relation_translation"}
    out = {}
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            out[name] = tuple(value) if name == "reshape" else value
    return out


def _resolve(args, need_dataset=True, need_out=True):
    cfg = load_config(args.config, _overrides(args))
    if need_dataset and not cfg.dataset_dir:
        raise ConfigError("dataset_dir is required (flag --dataset_dir or config key)")
    if need_out and not cfg.out_dir:
        raise ConfigError("out_dir is required (flag --out_dir or config key)")
    return cfg


def _echo_config(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "config.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n")
    return path


def _emit(payload):
    print(json.dumps(payload, sort_keys=True))


def run_cmd_search(args):
    cfg = _resolve(args)
    store = load_dataset(cfg.dataset_dir)
    _echo_config(cfg, cfg.out_dir)
    model, arch, records = run_search(store, cfg, out_dir=cfg.out_dir)
    genotype = derive(arch, model)
    genotype_path = os.path.join(cfg.out_dir, "genotype.json")
    genotype.save(genotype_path)
    _emit({
        "genotype": genotype_path,
        "search_log": os.path.join(cfg.out_dir, "search.log.jsonl"),
        "checkpoint": os.path.join(cfg.out_dir, "search.ckpt"),
        "rep_choices": genotype.rep_choices,
        "score_choice": genotype.score_choice,
        "mean_entropy": records[-1]["mean_entropy"],
    })
    return 0


def run_cmd_train(args):
    cfg = _resolve(args)
    store = load_dataset(cfg.dataset_dir)
    genotype = Genotype.load(args.genotype)
    _echo_config(cfg, cfg.out_dir)
    ckpt_path = os.path.join(cfg.out_dir, "model.ckpt")
    log_path = os.path.join(cfg.out_dir, "fit.log.jsonl")
    model, records = fit(genotype, store, cfg.train_config(),
                         checkpoint_path=ckpt_path, log_path=log_path)
    best = max((r["valid_mrr"] for r in records if r["valid_mrr"] is not None),
               default=None)
    _emit({"checkpoint": ckpt_path, "fit_log": log_path, "best_valid_mrr": best,
           "epochs_run": len(records)})
    return 0


def _model_from_checkpoint(path, store):
    arrays, precision, meta = load_checkpoint(path)
    if meta.get("kind") != "model":
        raise CheckpointError(f"{path} is not a model checkpoint "
                              f"(kind={meta.get('kind')!r})")
    genotype = Genotype.from_dict(meta["genotype"])
    config = TrainConfig(**meta["config"])
    n_entities = int(meta["n_entities"])
    n_relations = int(meta["n_relations"])
    if n_entities != store.n_entities or n_relations != store.n_relations:
        raise CheckpointError(
            f"checkpoint was trained on {n_entities} entities / {n_relations} "
            f"relations but the dataset has {store.n_entities} / {store.n_relations}")
    model = build_model(genotype, config, n_entities, n_relations,
                        np.random.default_rng(0))
    model.store.load_state(arrays)
    return model, genotype


def run_cmd_eval(args):
    store = load_dataset(args.dataset_dir)
    model, _ = _model_from_checkpoint(args.model, store)
    metrics = evaluate(model.score_triples, store, protocol=args.protocol,
                       ks=tuple(args.ks), tie_policy=args.tie_policy,
                       split=args.split)
    print(metrics.to_json())
    print(metrics.table())
    return 0


def run_cmd_derive(args):
    genotype = derive_from_checkpoint(args.checkpoint, RunConfig)
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)),
                                   "genotype.json")
    genotype.save(out)
    _emit({"genotype": out, "rep_choices": genotype.rep_choices,
           "score_choice": genotype.score_choice})
    return 0


def run_cmd_synth(args):
    seed = args.seed
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        seed = int(env_seed)
    splits = generate_synthetic_kg(args.n_entities, args.n_relations,
                                   pattern_mix=tuple(args.mix),
                                   n_triples=args.n_triples, seed=seed)
    paths = write_dataset(args.out_dir, splits)
    _emit({"out_dir": args.out_dir, "seed": seed,
           **{f"n_{k}": len(v) for k, v in splits.items()},
           **{f"{k}_file": p for k, p in paths.items()}})
    return 0


def run_cmd_grid(args):
    cfg = _resolve(args)
    store = load_dataset(cfg.dataset_dir)
    os.makedirs(cfg.out_dir, exist_ok=True)
    results_path = os.path.join(cfg.out_dir, "grid_results.jsonl")
    best = None
    with open(results_path, "w", encoding="utf-8") as results:
        for n_layers, dim, lr, batch in itertools.product(
                args.grid_n_layers, args.grid_dim, args.grid_lr, args.grid_batch_size):
            cell_name = f"N{n_layers}_d{dim}_lr{lr:g}_b{batch}"
            reshape = cfg.reshape
            if reshape is not None and reshape[0] * reshape[1] != dim:
                reshape = None
            cell_cfg = replace(cfg, n_layers=n_layers, dim=dim, lr=lr,
                               batch_size=batch, reshape=reshape,
                               out_dir=os.path.join(cfg.out_dir, "grid", cell_name))
            logger.info("grid cell %s", cell_name)
            _echo_config(cell_cfg, cell_cfg.out_dir)
            model, arch, _ = run_search(store, cell_cfg, out_dir=cell_cfg.out_dir)
            genotype = derive(arch, model)
            genotype.save(os.path.join(cell_cfg.out_dir, "genotype.json"))
            trained, _ = fit(genotype, store, cell_cfg.train_config(),
                             checkpoint_path=os.path.join(cell_cfg.out_dir, "model.ckpt"),
                             log_path=os.path.join(cell_cfg.out_dir, "fit.log.jsonl"))
            valid = evaluate(trained.score_triples, store, protocol=cfg.protocol,
                             ks=(1, 3, 10), tie_policy=cfg.tie_policy, split="valid")
            test = evaluate(trained.score_triples, store, protocol=cfg.protocol,
                            ks=(1, 3, 10), tie_policy=cfg.tie_policy, split="test")
            record = {
                "cell": {"n_layers": n_layers, "dim": dim, "lr": lr, "batch_size": batch},
                "out_dir": cell_cfg.out_dir,
                "rep_choices": genotype.rep_choices,
                "score_choice": genotype.score_choice,
                "valid_mrr": round(valid.mrr, 10),
                "test_mrr": round(test.mrr, 10),
            }
            results.write(json.dumps(record, sort_keys=True) + "\n")
            results.flush()
            if best is None or record["valid_mrr"] > best["valid_mrr"]:
                best = record
    _emit({"results": results_path, "best": best})
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nase",
        description="Architecture search over knowledge graph embedding models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run architecture search and derive a genotype")
    _add_config_flags(p)
    p.set_defaults(func=run_cmd_search)

    p = sub.add_parser("train", help="train a derived genotype from scratch")
    _add_config_flags(p)
    p.add_argument("--genotype", required=True, help="path to genotype.json")
    p.set_defaults(func=run_cmd_train)

    p = sub.add_parser("eval", help="rank test triples with a trained model")
    p.add_argument("--model", required=True, help="path to model.ckpt")
    p.add_argument("--dataset_dir", required=True)
    p.add_argument("--protocol", choices=("raw", "filtered"), default="filtered")
    p.add_argument("--tie_policy", choices=("mean", "optimistic", "pessimistic"),
                   default="mean")
    p.add_argument("--ks", type=int, nargs="+", default=[1, 3, 10])
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.set_defaults(func=run_cmd_eval)

    p = sub.add_parser("derive", help="re-derive a genotype from a search checkpoint")
    p.add_argument("--checkpoint", required=True, help="path to search.ckpt")
    p.add_argument("--out", default=None, help="output genotype path")
    p.set_defaults(func=run_cmd_derive)

    p = sub.add_parser("synth", help="generate a synthetic knowledge graph")
    p.add_argument("--out_dir", required=True)
    p.add_argument("--n_entities", type=int, default=200)
    p.add_argument("--n_relations", type=int, default=6)
    p.add_argument("--mix", type=float, nargs=3, default=[0.4, 0.4, 0.2],
                   metavar=("COMP", "SYM", "NOISE"))
    p.add_argument("--n_triples", type=int, default=1500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=run_cmd_synth)

    p = sub.add_parser("grid", help="sweep layers/dim/lr/batch sequentially")
    _add_config_flags(p)
    p.add_argument("--grid_n_layers", type=int, nargs="+", default=[1, 2, 3, 4])
    p.add_argument("--grid_dim", type=int, nargs="+", default=[100, 200, 400])
    p.add_argument("--grid_lr", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])
    p.add_argument("--grid_batch_size", type=int, nargs="+", default=[128, 256])
    p.set_defaults(func=run_cmd_grid)
    return parser


def main(argv=None):
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # single-line machine-parseable failure contract
        message = " ".join(str(exc).split())
        print(json.dumps({"error": type(exc).__name__, "message": message},
                         sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
