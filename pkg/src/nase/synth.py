"""Synthetic knowledge graph generator with controllable relation patterns.

Three edge families: symmetric relations (every pair emitted in both
directions), compositional chains (r_c(a, c) holds because r_a(a, b) and
r_b(b, c) do), and uniform noise edges.  Triples are globally unique and
split 80/10/10; base edges supporting a composed triple are moved into
train so held-out compositions remain inferable.
"""

from __future__ import annotations

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

SPLIT_FILES = {"train": "train.txt", "valid": "valid.txt", "test": "test.txt"}


class SynthError(ValueError):
    pass


def _assign_roles(n_relations, mix):
    """Deterministic relation-role assignment.

    The first three relations form the compositional chain group (third =
    first composed with second) when compositions are requested; leftovers
    split between symmetric and noise roles, symmetric first.
    """
    comp, sym, noise = mix
    required = (3 if comp > 0 else 0) + (1 if sym > 0 else 0) + (1 if noise > 0 else 0)
    if required > n_relations:
        raise SynthError(f"pattern mix {mix} needs at least {required} relations, "
                         f"got {n_relations}")
    idx = list(range(n_relations))
    comp_group = idx[:3] if comp > 0 else []
    remaining = idx[len(comp_group):]
    sym_rels, noise_rels = [], []
    if sym > 0 and noise > 0:
        cut = max(1, -(-len(remaining) // 2))
        cut = min(cut, len(remaining) - 1)
        sym_rels, noise_rels = remaining[:cut], remaining[cut:]
    elif sym > 0:
        sym_rels = remaining
    elif noise > 0:
        noise_rels = remaining
    return comp_group, sym_rels, noise_rels


def _place(existing, triples):
    """Admit a group of new triples only if none collides with existing."""
    for triple in triples:
        if triple in existing:
            return False
    existing.update(triples)
    return True


def generate_synthetic_kg(n_entities, n_relations, pattern_mix=(0.4, 0.4, 0.2),
                          n_triples=1500, seed=0):
    """Generate named triples split into train/valid/test.

    ``pattern_mix`` gives (compositional, symmetric, noise) proportions and
    is normalised; a proportion of zero disables that family.  Returns
    {"train": [(h, r, t) names], "valid": [...], "test": [...]}.
    """
    if n_entities < 20:
        raise SynthError(f"need at least 20 entities, got {n_entities}")
    if n_relations < 1:
        raise SynthError("need at least one relation")
    if n_triples < 10:
        raise SynthError(f"need at least 10 triples, got {n_triples}")
    mix = np.asarray(pattern_mix, dtype=np.float64)
    if mix.shape != (3,) or np.any(mix < 0) or mix.sum() <= 0:
        raise SynthError(f"pattern mix must be 3 non-negative proportions, got {pattern_mix}")
    mix = mix / mix.sum()
    comp_group, sym_rels, noise_rels = _assign_roles(n_relations, mix)

    rng = np.random.default_rng(seed)
    n_chains = int(round(mix[0] * n_triples / 3.0))
    n_sym_pairs = int(round(mix[1] * n_triples / 2.0))
    n_noise = max(0, n_triples - 3 * n_chains - 2 * n_sym_pairs)

    existing = set()
    ordered = []          # insertion order, for reproducible splitting
    support = {}          # composed triple -> its two base triples

    def draw_entities(k):
        # distinct entities for one edge group
        return rng.choice(n_entities, size=k, replace=False)

    budget = 200 * n_triples + 1000
    placed_chains = placed_pairs = placed_noise = 0
    while placed_chains < n_chains:
        budget -= 1
        if budget <= 0:
            raise SynthError("could not place the requested triples; the entity/relation "
                             "space is too small for n_triples")
        a, b, c = map(int, draw_entities(3))
        group = [(a, comp_group[0], b), (b, comp_group[1], c), (a, comp_group[2], c)]
        if _place(existing, group):
            ordered.extend(group)
            support[group[2]] = (group[0], group[1])
            placed_chains += 1
    while placed_pairs < n_sym_pairs:
        budget -= 1
        if budget <= 0:
            raise SynthError("could not place the requested triples; the entity/relation "
                             "space is too small for n_triples")
        a, b = map(int, draw_entities(2))
        r = int(sym_rels[rng.integers(len(sym_rels))])
        group = [(a, r, b), (b, r, a)]
        if _place(existing, group):
            ordered.extend(group)
            placed_pairs += 1
    while placed_noise < n_noise:
        budget -= 1
        if budget <= 0:
            raise SynthError("could not place the requested triples; the entity/relation "
                             "space is too small for n_triples")
        a, b = map(int, draw_entities(2))
        if noise_rels:
            r = int(noise_rels[rng.integers(len(noise_rels))])
        elif sym_rels:
            r = int(sym_rels[rng.integers(len(sym_rels))])
        else:
            r = int(comp_group[rng.integers(3)])
        if _place(existing, [(a, r, b)]):
            ordered.append((a, r, b))
            placed_noise += 1

    total = len(ordered)
    order = rng.permutation(total)
    n_train = int(round(0.8 * total))
    n_valid = int(round(0.1 * total))
    split_of = {}
    for pos, idx in enumerate(order):
        triple = ordered[idx]
        if pos < n_train:
            split_of[triple] = "train"
        elif pos < n_train + n_valid:
            split_of[triple] = "valid"
        else:
            split_of[triple] = "test"
    # keep held-out compositions inferable: their base edges belong in train
    moved = 0
    for composed, bases in support.items():
        for base in bases:
            if split_of[base] != "train":
                split_of[base] = "train"
                moved += 1
    if moved:
        logger.info("moved %d supporting base edges into train", moved)

    ent_width = len(str(n_entities - 1))
    ent_name = [f"e{i:0{ent_width}d}" for i in range(n_entities)]
    rel_name = [f"r{i}" for i in range(n_relations)]
    splits = {"train": [], "valid": [], "test": []}
    for triple in ordered:
        h, r, t = triple
        splits[split_of[triple]].append((ent_name[h], rel_name[r], ent_name[t]))
    for name in ("train", "valid", "test"):
        if not splits[name]:
            raise SynthError(f"generated {name} split is empty; increase n_triples")
    return splits


def write_dataset(out_dir, splits):
    """Write the three TSV split files; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for split, filename in SPLIT_FILES.items():
        path = os.path.join(out_dir, filename)
        with open(path, "w", encoding="utf-8") as fh:
            for h, r, t in splits[split]:
                fh.write(f"{h}\t{r}\t{t}\n")
        paths[split] = path
    return paths
