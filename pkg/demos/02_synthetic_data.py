"""Synthetic knowledge graphs and the triple store.

Generates a small graph with known regularities, inspects the splits, and
draws a training batch to show how corruption-based negative sampling
works.  The generator plants two pattern families: symmetric relations
(every edge has its reverse) and two-hop compositions (r2 = r0 followed by
r1), plus optional uniform noise.
"""

import collections

import numpy as np

from nase.data import BatchSampler, load_dataset
from nase.synth import generate_synthetic_kg, write_dataset

# the generator emits name triples; the TSV writer + loader assign indexes
splits = generate_synthetic_kg(n_entities=60, n_relations=5,
                               pattern_mix=(0.4, 0.4, 0.2),
                               n_triples=600, seed=7)
for name, triples in splits.items():
    print(f"{name}: {len(triples)} triples, e.g. {triples[0]}")

out = "/tmp/nase_demo_dataset"
write_dataset(out, splits)
store = load_dataset(out)
print(f"store: {store.n_entities} entities, {store.n_relations} relations, "
      f"{len(store.known)} known triples")

# symmetric halves land in train while some reverses are held out, which is
# what makes the pattern learnable but not trivial
train_set = {tuple(t) for t in store.split("train").tolist()}
by_relation = collections.Counter(r for _, r, _ in store.known)
print("triples per relation:",
      {store.relation_names[r]: n for r, n in sorted(by_relation.items())})
paired = sum(1 for h, r, t in train_set if (t, r, h) in train_set)
print(f"train edges whose exact reverse is also in train: {paired}")

# a batch is positives followed by n_neg corruptions of each, labels 1/0
sampler = BatchSampler(store, "train", np.random.default_rng(0))
batch = sampler.sample(batch_size=4, n_neg=2)
print(f"batch of {len(batch)} rows ({int(batch.labels.sum())} positives):")
for h, r, t, y in zip(batch.heads, batch.rels, batch.tails, batch.labels):
    marker = "+" if y else "-"
    print(f"  {marker} ({store.entity_names[h]}, {store.relation_names[r]}, "
          f"{store.entity_names[t]})")

print(f"stats: {store.stats()}")
