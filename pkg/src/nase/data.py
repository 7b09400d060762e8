"""Dataset ingestion, negative sampling, and filtered-candidate indexing.

Triple files are UTF-8 TSV, one ``head<TAB>relation<TAB>tail`` fact per
line, in ``train.txt`` / ``valid.txt`` / ``test.txt`` under one directory.
Vocabularies are built over the union of all three splits and sorted
lexicographically, so indexing is stable across runs for identical files.
"""

from __future__ import annotations

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class DatasetError(ValueError):
    """Missing file or malformed triple line."""


class TripleStore:
    """Immutable vocabularies, split triples, and membership indexes."""

    def __init__(self, entities, relations, splits):
        self.entities = entities                    # name -> index
        self.relations = relations
        self.entity_names = sorted(entities, key=entities.get)
        self.relation_names = sorted(relations, key=relations.get)
        self.splits = {name: np.asarray(triples, dtype=np.int64).reshape(-1, 3)
                       for name, triples in splits.items()}
        self.known = set()
        for triples in self.splits.values():
            self.known.update(map(tuple, triples.tolist()))
        self._tails_by_hr = None
        self._heads_by_rt = None

    @property
    def n_entities(self):
        return len(self.entities)

    @property
    def n_relations(self):
        return len(self.relations)

    def split(self, name):
        try:
            return self.splits[name]
        except KeyError:
            raise DatasetError(f"unknown split {name!r}") from None

    def stats(self):
        """Dataset statistics in the documented JSON shape."""
        return {
            "entities": self.n_entities,
            "relations": self.n_relations,
            "train": len(self.splits["train"]),
            "valid": len(self.splits["valid"]),
            "test": len(self.splits["test"]),
        }

    def _build_query_indexes(self):
        tails = {}
        heads = {}
        for h, r, t in self.known:
            tails.setdefault((h, r), []).append(t)
            heads.setdefault((r, t), []).append(h)
        self._tails_by_hr = {k: np.array(sorted(v)) for k, v in tails.items()}
        self._heads_by_rt = {k: np.array(sorted(v)) for k, v in heads.items()}

    def known_tails(self, h, r):
        if self._tails_by_hr is None:
            self._build_query_indexes()
        return self._tails_by_hr.get((h, r), np.empty(0, dtype=np.int64))

    def known_heads(self, r, t):
        if self._heads_by_rt is None:
            self._build_query_indexes()
        return self._heads_by_rt.get((r, t), np.empty(0, dtype=np.int64))


def _read_split(path, split_name):
    triples = []
    seen = set()
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DatasetError(f"{path}:{lineno}: expected 3 tab-separated fields, "
                                   f"got {len(fields)}")
            if any(f == "" for f in fields):
                raise DatasetError(f"{path}:{lineno}: empty entity or relation token")
            triple = tuple(fields)
            if triple in seen:
                dropped += 1
                continue
            seen.add(triple)
            triples.append(triple)
    if dropped:
        logger.warning("%s: dropped %d duplicate triple(s) in %s split", path, dropped, split_name)
    return triples


def load_dataset(directory):
    """Build a :class:`TripleStore` from ``train/valid/test.txt`` in ``directory``."""
    raw = {}
    for split in SPLITS:
        path = os.path.join(directory, f"{split}.txt")
        if not os.path.isfile(path):
            raise DatasetError(f"missing dataset file {path}")
        raw[split] = _read_split(path, split)

    entity_names = set()
    relation_names = set()
    for triples in raw.values():
        for h, r, t in triples:
            entity_names.add(h)
            entity_names.add(t)
            relation_names.add(r)
    entities = {name: i for i, name in enumerate(sorted(entity_names))}
    relations = {name: i for i, name in enumerate(sorted(relation_names))}

    splits = {
        split: [(entities[h], relations[r], entities[t]) for h, r, t in triples]
        for split, triples in raw.items()
    }
    store = TripleStore(entities, relations, splits)
    logger.info("loaded dataset %s: %s", directory, store.stats())
    return store


class BatchSampler:
    """Epoch-wise positive sampler with uniform-corruption negatives.

    Each epoch pass visits every positive of the split exactly once, in an
    order drawn from the sampler's own seeded generator.  Every positive
    spawns ``n_neg`` corruptions: a coin flip picks head or tail, the slot
    is replaced by a uniform random entity, and corruptions colliding with
    the known-triple set are redrawn up to 50 times before being accepted
    as-is.
    """

    MAX_RESAMPLE = 50

    def __init__(self, store, split, rng):
        self.store = store
        self.split_name = split
        self.triples = store.split(split)
        self.rng = rng
        self._order = None
        self._cursor = 0

    def batches_per_epoch(self, batch_size):
        return -(-len(self.triples) // batch_size)

    def _next_positives(self, batch_size):
        if batch_size > len(self.triples):
            raise DatasetError(f"batch size {batch_size} exceeds {self.split_name} "
                               f"split size {len(self.triples)}")
        if self._order is None or self._cursor >= len(self._order):
            self._order = self.rng.permutation(len(self.triples))
            self._cursor = 0
        take = self._order[self._cursor:self._cursor + batch_size]
        self._cursor += len(take)
        return self.triples[take]

    def _corrupt(self, h, r, t):
        n_ent = self.store.n_entities
        corrupt_head = bool(self.rng.integers(2))
        for _ in range(self.MAX_RESAMPLE):
            e = int(self.rng.integers(n_ent))
            cand = (e, r, t) if corrupt_head else (h, r, e)
            if cand not in self.store.known:
                return cand
        return cand

    def sample(self, batch_size, n_neg):
        """Draw one batch: ``batch_size`` positives plus their negatives."""
        if n_neg < 1:
            raise ValueError(f"n_neg must be >= 1, got {n_neg}")
        pos = self._next_positives(batch_size)
        rows = [tuple(p) for p in pos.tolist()]
        for h, r, t in pos.tolist():
            for _ in range(n_neg):
                rows.append(self._corrupt(h, r, t))
        arr = np.asarray(rows, dtype=np.int64)
        labels = np.zeros(len(rows), dtype=np.float64)
        labels[:len(pos)] = 1.0
        return Batch(arr[:, 0], arr[:, 1], arr[:, 2], labels)


class Batch:
    """Aligned index arrays plus 0/1 labels for one training step."""

    __slots__ = ("heads", "rels", "tails", "labels")

    def __init__(self, heads, rels, tails, labels):
        lengths = {len(heads), len(rels), len(tails), len(labels)}
        if len(lengths) != 1:
            raise ValueError(f"batch arrays disagree on length: {sorted(lengths)}")
        self.heads = np.asarray(heads, dtype=np.int64)
        self.rels = np.asarray(rels, dtype=np.int64)
        self.tails = np.asarray(tails, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.float64)

    def __len__(self):
        return len(self.heads)


def sample_batch(store, split, batch_size, n_neg, rng):
    """One-shot batch draw; reuse a :class:`BatchSampler` for epoch passes."""
    return BatchSampler(store, split, rng).sample(batch_size, n_neg)


def filtered_candidates(store, h, r, t, target):
    """Candidate entities for one query under the filtered protocol.

    For ``target="tail"`` the query is (h, r, ?): every entity whose
    substitution is NOT a known triple, plus the gold tail ``t`` itself.
    ``target="head"`` mirrors this for (?, r, t).  Returns a sorted index
    array.
    """
    mask = np.ones(store.n_entities, dtype=bool)
    if target == "tail":
        mask[store.known_tails(h, r)] = False
        mask[t] = True
    elif target == "head":
        mask[store.known_heads(r, t)] = False
        mask[h] = True
    else:
        raise ValueError(f"target must be 'head' or 'tail', got {target!r}")
    return np.nonzero(mask)[0]
