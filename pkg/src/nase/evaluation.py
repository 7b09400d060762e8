"""Link-prediction ranking: MR, MRR, Hits@K under raw or filtered protocols.

Each evaluated triple contributes two queries, head replacement (?, r, t)
and tail replacement (h, r, ?).  Under the filtered protocol the candidate
list drops every other entity known to complete the query (train, valid
and test answers), keeping the gold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetError, filtered_candidates

TIE_POLICIES = ("mean", "optimistic", "pessimistic")
PROTOCOLS = ("raw", "filtered")


def rank_of(scores, gold_index, tie_policy="mean"):
    """Rank of the gold candidate, 1 = best, higher score = better.

    rank = 1 + #{strictly greater} + tie adjustment, where the tie count
    includes the gold itself.  mean assigns the average rank across the tie
    block, optimistic the best, pessimistic the worst.
    """
    scores = np.asarray(scores)
    if not 0 <= gold_index < scores.shape[0]:
        raise IndexError(f"gold index {gold_index} out of bounds for {scores.shape[0]} candidates")
    if tie_policy not in TIE_POLICIES:
        raise ValueError(f"tie policy must be one of {TIE_POLICIES}, got {tie_policy!r}")
    gold = scores[gold_index]
    greater = int(np.sum(scores > gold))
    ties = int(np.sum(scores == gold))
    if tie_policy == "mean":
        return greater + 1 + (ties - 1) / 2.0
    if tie_policy == "optimistic":
        return greater + 1
    return greater + ties


@dataclass
class Metrics:
    mr: float
    mrr: float
    hits: dict = field(default_factory=dict)
    n_queries: int = 0
    protocol: str = "filtered"

    def to_json(self):
        payload = {
            "mr": self.mr,
            "mrr": self.mrr,
            "hits": {str(k): v for k, v in sorted(self.hits.items())},
            "n_queries": self.n_queries,
            "protocol": self.protocol,
        }
        return json.dumps(payload, sort_keys=True)

    def table(self):
        rows = [("MR", f"{self.mr:.2f}"), ("MRR", f"{self.mrr:.4f}")]
        rows += [(f"Hits@{k}", f"{self.hits[k]:.4f}") for k in sorted(self.hits)]
        rows.append(("queries", str(self.n_queries)))
        width = max(len(name) for name, _ in rows)
        lines = [f"{name.ljust(width)}  {value}" for name, value in rows]
        return "\n".join(lines)


def aggregate_ranks(ranks, ks, protocol):
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise DatasetError("no queries to aggregate")
    hits = {int(k): float(np.mean(ranks <= k)) for k in ks}
    return Metrics(
        mr=float(np.mean(ranks)),
        mrr=float(np.mean(1.0 / ranks)),
        hits=hits,
        n_queries=int(ranks.size),
        protocol=protocol,
    )


def _query_ranks(score_fn, store, triples, protocol, tie_policy):
    n_entities = len(store.entity_names)
    all_entities = np.arange(n_entities, dtype=np.int64)
    ranks = []
    for h, r, t in triples:
        h, r, t = int(h), int(r), int(t)
        # tail query (h, r, ?)
        if protocol == "filtered":
            cands = filtered_candidates(store, h, r, t, target="tail")
        else:
            cands = all_entities
        scores = score_fn(np.full(len(cands), h, dtype=np.int64),
                          np.full(len(cands), r, dtype=np.int64),
                          cands)
        gold_pos = int(np.searchsorted(cands, t))
        ranks.append(rank_of(scores, gold_pos, tie_policy))
        # head query (?, r, t)
        if protocol == "filtered":
            cands = filtered_candidates(store, h, r, t, target="head")
        else:
            cands = all_entities
        scores = score_fn(cands,
                          np.full(len(cands), r, dtype=np.int64),
                          np.full(len(cands), t, dtype=np.int64))
        gold_pos = int(np.searchsorted(cands, h))
        ranks.append(rank_of(scores, gold_pos, tie_policy))
    return ranks


def evaluate(score_fn, store, protocol="filtered", ks=(1, 3, 10),
             tie_policy="mean", split="test"):
    """Rank every triple of ``split`` under head and tail replacement.

    ``score_fn`` maps (heads, rels, tails) index arrays to a score array,
    higher meaning more plausible; a model's ``score_triples`` method fits.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"protocol must be one of {PROTOCOLS}, got {protocol!r}")
    triples = store.split(split)
    if len(triples) == 0:
        raise DatasetError(f"split {split!r} is empty, nothing to evaluate")
    ranks = _query_ranks(score_fn, store, triples, protocol, tie_policy)
    return aggregate_ranks(ranks, ks, protocol)
