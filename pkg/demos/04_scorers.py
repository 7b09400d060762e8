"""The five score function candidates.

Every scorer maps a (head, relation, tail) embedding triple to one number,
higher meaning more plausible.  This script scores a true pattern and its
corruption under each candidate, then shows the all-identity degeneration:
a full model whose layers do nothing reproduces the bare scorer exactly.
"""

import numpy as np

from nase import tensor as T
from nase.model import Geometry
from nase.params import ParameterStore
from nase.scorers import ScoreFnKind, build_score_params, score
from nase.search import Genotype
from nase.training import TrainConfig, build_model

geom = Geometry(dim=8, n_relations=2, reshape=(2, 4), conv_filters=2,
                conv_score_filters=2, mlp_hidden=8, p_norm=1,
                per_relation_translation=False)
store = ParameterStore(dtype=np.float64)
params = build_score_params(store, list(ScoreFnKind), geom,
                            np.random.default_rng(0))

# hand-built embeddings where (h, r, t) satisfies h + r = t, so the
# translation family should prefer the true triple by construction
rng = np.random.default_rng(5)
h = T.Tensor(rng.normal(size=(1, 8)))
r = T.Tensor(rng.normal(size=(1, 8)))
t_true = T.Tensor(h.data + r.data)
t_fake = T.Tensor(rng.normal(size=(1, 8)) * 3.0)
rels = np.zeros(1, dtype=np.int64)

print(f"{'scorer':<12} {'true':>9} {'corrupt':>9}")
for kind in ScoreFnKind:
    s_true = float(score(kind, (h, r, t_true), params, rels, geom).data[0])
    s_fake = float(score(kind, (h, r, t_fake), params, rels, geom).data[0])
    print(f"{kind.value:<12} {s_true:9.3f} {s_fake:9.3f}")
print("(transe scores the exact translation 0.0, its maximum)")

# degeneration: an all-identity genotype plus one scorer IS that scorer
genotype = Genotype(n_layers=1, rep_choices=[["identity"] * 3],
                    score_choice="distmult", dim=8, reshape=(2, 4),
                    conv_filters=2, conv_score_filters=2, mlp_hidden=8)
model = build_model(genotype, TrainConfig(dim=8, precision="float64"),
                    n_entities=30, n_relations=2, rng=np.random.default_rng(3))
hs = np.arange(10)
rs = np.zeros(10, dtype=np.int64)
ts = np.arange(10, 20)
got = model.score_triples(hs, rs, ts)
ent = model.store.state_dict()["entity_emb"]
rel = model.store.state_dict()["relation_emb"]
want = (ent[hs] * rel[rs] * ent[ts]).sum(axis=1)
print(f"pipeline vs raw trilinear product: max diff "
      f"{float(np.max(np.abs(got - want))):.3g}")
