import json
import logging

import numpy as np
import numpy.testing as npt
import pytest

from nase import tensor as T
from nase.config import RunConfig
from nase.data import sample_batch
from nase.model import ConfigError, KgeModel, discrete_plan, search_plan
from nase.scorers import ScoreFnKind, score
from nase.search import (ArchWeights, Genotype, GenotypeError, Searcher,
                         derive, derive_from_checkpoint, mixed_forward,
                         run_search)
from nase.training import NonFiniteLossError

LN7 = float(np.log(7.0))
LN5 = float(np.log(5.0))


def make_model(n_entities=12, n_relations=3, dim=4, seed=0, plan=None,
               precision="float64", fusion_mode="gated"):
    from nase.model import ModelConfig
    plan = plan or search_plan(1)
    cfg = ModelConfig(n_entities=n_entities, n_relations=n_relations, dim=dim,
                      n_layers=plan.n_layers, reshape=(2, dim // 2),
                      conv_filters=2, conv_score_filters=2, mlp_hidden=4,
                      precision=precision, fusion_mode=fusion_mode)
    model = KgeModel(cfg, plan, np.random.default_rng(seed))
    arch = ArchWeights(model.store, plan)
    return model, arch


def search_config(**overrides):
    base = dict(dim=8, reshape=(2, 4), conv_filters=2, conv_score_filters=2,
                mlp_hidden=4, batch_size=64, n_neg=2, lr=0.05, lr_alpha=0.01,
                epochs_search=2, epochs=3, eval_every=1, seed=0)
    base.update(overrides)
    return RunConfig(**base)


class TestArchWeights:
    def test_initial_weights_are_uniform(self):
        _, arch = make_model()
        for name, vec in arch.vectors():
            npt.assert_array_equal(vec.data, np.zeros(vec.shape))
        snap = arch.softmax_snapshot()
        for target in ("h", "r", "t"):
            npt.assert_allclose(snap[f"layer0.{target}"], [1 / 7] * 7, atol=1e-9)
        npt.assert_allclose(snap["score"], [1 / 5] * 5, atol=1e-9)

    def test_initial_entropies(self):
        _, arch = make_model()
        ent = arch.entropies()
        for target in ("h", "r", "t"):
            npt.assert_allclose(ent[f"layer0.{target}"], LN7, atol=1e-9)
        npt.assert_allclose(ent["score"], LN5, atol=1e-9)
        npt.assert_allclose(arch.mean_entropy(), (3 * LN7 + LN5) / 4, atol=1e-9)

    def test_registered_in_alpha_group(self):
        model, _ = make_model()
        assert model.store.n_elements("alpha") == 3 * 7 + 5
        names = {p.name for p in model.store.group("alpha")}
        assert names == {"arch.layer0.h", "arch.layer0.r", "arch.layer0.t",
                         "arch.score"}

    def test_single_candidate_edges_have_no_vector(self):
        plan = search_plan(1, rep_search=False)
        model, arch = make_model(plan=plan)
        assert all(arch.rep[0][t] is None for t in ("h", "r", "t"))
        assert arch.score is not None
        assert [name for name, _ in arch.vectors()] == ["score"]

    def test_fully_pinned_plan_has_no_vectors(self):
        plan = search_plan(1, rep_search=False, score_search=False)
        model, arch = make_model(plan=plan)
        assert list(arch.vectors()) == []
        assert arch.mean_entropy() == 0.0


class TestGenotype:
    def good_kwargs(self, **overrides):
        kwargs = dict(n_layers=1, rep_choices=[["trans_ident", "identity", "conv2d_k3"]],
                      score_choice="distmult", dim=8, reshape=(2, 4),
                      conv_filters=2, conv_score_filters=2, mlp_hidden=4)
        kwargs.update(overrides)
        return kwargs

    def test_roundtrip_dict(self):
        g = Genotype(**self.good_kwargs())
        back = Genotype.from_dict(g.to_dict())
        assert back == g

    def test_save_load_byte_stable(self, tmp_path):
        g = Genotype(**self.good_kwargs())
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        g.save(p1)
        Genotype.load(p1).save(p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert json.loads(p1.read_text())["format"] == "nase-genotype-v1"

    @pytest.mark.parametrize("bad,match", [
        (dict(n_layers=2), "choice rows"),
        (dict(rep_choices=[["trans_ident", "identity"]]), "must name"),
        (dict(rep_choices=[["warp", "identity", "identity"]]), "unknown operator"),
        (dict(score_choice="rescal"), "unknown score"),
        (dict(reshape=(3, 4)), "factor"),
        (dict(reshape=None), "conv2d"),
        (dict(dim=0), "dim"),
    ])
    def test_validation(self, bad, match):
        with pytest.raises((GenotypeError, ValueError), match=match):
            Genotype(**self.good_kwargs(**bad))

    def test_from_dict_rejects_bad_documents(self):
        g = Genotype(**self.good_kwargs())
        payload = g.to_dict()
        broken = dict(payload)
        broken["format"] = "nase-genotype-v2"
        with pytest.raises(GenotypeError, match="format"):
            Genotype.from_dict(broken)
        broken = dict(payload)
        del broken["dim"]
        with pytest.raises(GenotypeError, match="missing"):
            Genotype.from_dict(broken)
        broken = dict(payload)
        broken["extra"] = 1
        with pytest.raises(GenotypeError, match="unknown fields"):
            Genotype.from_dict(broken)

    def test_load_missing_file_names_path(self, tmp_path):
        missing = tmp_path / "nope.json"
        with pytest.raises(GenotypeError, match="nope.json"):
            Genotype.load(missing)

    def test_load_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(GenotypeError, match="valid JSON"):
            Genotype.load(path)


class TestSearcher:
    def batches(self, store, seed=0):
        tb = sample_batch(store, "train", 4, 2, np.random.default_rng(seed))
        ab = sample_batch(store, "valid", 1, 2, np.random.default_rng(seed + 1))
        return tb, ab

    def test_zero_learning_rates_change_nothing(self, toy_store):
        model, arch = make_model(n_entities=4, n_relations=2)
        before = model.store.state_dict()
        searcher = Searcher(model, arch, lr_theta=0.0, lr_alpha=0.0,
                            alpha_optimizer="sgd")
        searcher.search_step(*self.batches(toy_store))
        after = model.store.state_dict()
        for name in before:
            npt.assert_array_equal(before[name], after[name])

    def test_theta_step_leaves_alpha(self, toy_store):
        model, arch = make_model(n_entities=4, n_relations=2)
        searcher = Searcher(model, arch, lr_theta=0.1, lr_alpha=0.0,
                            alpha_optimizer="sgd")
        searcher.search_step(*self.batches(toy_store))
        assert np.array_equal(arch.rep[0]["h"].data, np.zeros(7))
        assert not np.array_equal(model.entity_emb.data,
                                  make_model(n_entities=4, n_relations=2)[0].entity_emb.data)

    def test_alpha_step_leaves_theta(self, toy_store):
        model, arch = make_model(n_entities=4, n_relations=2)
        before_theta = {p.name: p.data.copy() for p in model.store.group("theta")}
        searcher = Searcher(model, arch, lr_theta=0.0, lr_alpha=0.05)
        searcher.search_step(*self.batches(toy_store))
        for p in model.store.group("theta"):
            npt.assert_array_equal(p.data, before_theta[p.name])
        moved = any(not np.array_equal(v.data, np.zeros(v.shape))
                    for _, v in arch.vectors())
        assert moved

    def test_two_runs_are_bit_identical(self, toy_store):
        def run():
            model, arch = make_model(n_entities=4, n_relations=2, seed=7)
            searcher = Searcher(model, arch, lr_theta=0.1, lr_alpha=0.05)
            for step in range(2):
                searcher.search_step(*self.batches(toy_store, seed=step))
            return model.store.state_dict()

        s1, s2 = run(), run()
        for name in s1:
            npt.assert_array_equal(s1[name], s2[name])

    def test_bad_alpha_optimizer(self, toy_store):
        model, arch = make_model(n_entities=4, n_relations=2)
        with pytest.raises(ConfigError, match="alpha_optimizer"):
            Searcher(model, arch, 0.1, 0.1, alpha_optimizer="rmsprop")

    def test_non_finite_loss_reports_context(self, toy_store):
        model, arch = make_model(n_entities=4, n_relations=2)
        model.entity_emb.data[:] = np.nan
        searcher = Searcher(model, arch, lr_theta=0.1, lr_alpha=0.05)
        with pytest.raises(NonFiniteLossError) as exc_info, \
                np.errstate(invalid="ignore"):
            searcher.search_step(*self.batches(toy_store))
        message = str(exc_info.value)
        assert "theta" in message
        assert "first triples" in message
        assert "alpha softmax" in message


class TestMixtureConsistency:
    def test_saturated_score_alpha_matches_single_scorer(self, rng):
        # identity reps isolate the scorer mixture; +40 logits saturate softmax
        plan = search_plan(1, rep_search=False)
        model, arch = make_model(n_entities=10, n_relations=2, plan=plan)
        heads = rng.integers(10, size=20)
        rels = rng.integers(2, size=20)
        tails = rng.integers(10, size=20)
        embs, rel_idx = model.embed(heads, rels, tails)
        for i, kind in enumerate(ScoreFnKind):
            vec = np.zeros(5)
            vec[i] = 40.0
            arch.score.data = vec.copy()
            mixed = mixed_forward(model, arch, heads, rels, tails).data
            single = score(kind, embs, model.score_params, rel_idx, model.geom).data
            npt.assert_allclose(mixed, single, atol=1e-5)

    def test_argmax_of_softmax_equals_argmax_of_logits(self, rng):
        from nase.search import _softmax
        logits = rng.normal(size=(2000, 7)) * 5
        for row in logits:
            assert int(np.argmax(_softmax(row))) == int(np.argmax(row))


class TestDerive:
    def test_spec_score_alpha_example(self):
        model, arch = make_model()
        arch.score.data = np.array([0.1, 2.0, -1.0, 0.0, 0.0])
        genotype = derive(arch, model)
        assert genotype.score_choice == "transe"  # candidate index 1

    def test_argmax_per_edge(self):
        model, arch = make_model()
        arch.rep[0]["h"].data = np.array([0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0])
        arch.rep[0]["r"].data = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 9.0])
        arch.rep[0]["t"].data = np.array([1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0])
        arch.score.data = np.array([0.0, 0.0, 0.0, 5.0, 0.0])
        genotype = derive(arch, model)
        assert genotype.rep_choices == [["conv2d_k3", "identity", "conv1d_k2"]]
        assert genotype.score_choice == "simple"

    def test_tie_breaks_to_lowest_index_and_logs(self, caplog):
        model, arch = make_model()
        with caplog.at_level(logging.INFO, logger="nase.search"):
            genotype = derive(arch, model)
        # all-zero alphas tie everywhere; canonical order wins
        assert genotype.rep_choices == [["conv1d_k2"] * 3]
        assert genotype.score_choice == "conv_score"
        assert any("tied" in rec.message for rec in caplog.records)

    def test_single_candidate_edges_pass_through(self):
        plan = search_plan(1, rep_search=False, score_search=False)
        model, arch = make_model(plan=plan)
        genotype = derive(arch, model)
        assert genotype.rep_choices == [["identity"] * 3]
        assert genotype.score_choice == "transe"

    def test_geometry_echo(self):
        model, arch = make_model(dim=4)
        genotype = derive(arch, model)
        assert genotype.dim == 4
        assert genotype.reshape == (2, 2)
        assert genotype.conv_filters == 2
        assert genotype.conv_score_filters == 2
        assert genotype.mlp_hidden == 4
        # the genotype can rebuild a model directly
        from nase.training import TrainConfig, build_model
        rebuilt = build_model(genotype, TrainConfig(dim=4, precision="float64"),
                              12, 3, np.random.default_rng(0))
        assert rebuilt.score_triples([0], [0], [1]).shape == (1,)


class TestRunSearch:
    def test_records_and_artifacts(self, small_synth_store, tmp_path):
        cfg = search_config()
        model, arch, records = run_search(small_synth_store, cfg, out_dir=tmp_path)
        assert len(records) == cfg.epochs_search
        first = records[0]
        assert set(first) == {"epoch", "loss_theta", "loss_alpha", "alphas",
                              "entropy", "mean_entropy"}
        assert np.isfinite(first["loss_theta"]) and np.isfinite(first["loss_alpha"])
        assert set(first["alphas"]) == {"layer0.h", "layer0.r", "layer0.t", "score"}
        assert (tmp_path / "search.ckpt").exists()
        log_lines = (tmp_path / "search.log.jsonl").read_text().splitlines()
        assert len(log_lines) == cfg.epochs_search
        assert json.loads(log_lines[0])["epoch"] == 1

    def test_determinism_same_seed(self, small_synth_store):
        cfg = search_config(epochs_search=2)
        m1, a1, r1 = run_search(small_synth_store, cfg)
        m2, a2, r2 = run_search(small_synth_store, cfg)
        assert r1 == r2
        s1, s2 = m1.store.state_dict(), m2.store.state_dict()
        for name in s1:
            npt.assert_array_equal(s1[name], s2[name])

    def test_different_seed_differs(self, small_synth_store):
        r1 = run_search(small_synth_store, search_config(seed=0, epochs_search=1))[2]
        r2 = run_search(small_synth_store, search_config(seed=1, epochs_search=1))[2]
        assert r1 != r2

    def test_derive_from_checkpoint_matches_in_memory(self, small_synth_store,
                                                      tmp_path):
        cfg = search_config(epochs_search=2)
        model, arch, _ = run_search(small_synth_store, cfg, out_dir=tmp_path)
        from_memory = derive(arch, model)
        from_disk = derive_from_checkpoint(tmp_path / "search.ckpt", RunConfig)
        assert from_disk == from_memory

    def test_derive_from_non_search_checkpoint(self, tmp_path):
        from nase.checkpoint import save_checkpoint
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, {"w": np.ones(1, dtype=np.float32)}, "float32",
                        meta={"kind": "model"})
        with pytest.raises(GenotypeError, match="search checkpoint"):
            derive_from_checkpoint(path, RunConfig)

    def test_ablation_flags_shrink_the_space(self, small_synth_store):
        cfg = search_config(disable_rep_search=True, epochs_search=1)
        model, arch, records = run_search(small_synth_store, cfg)
        assert [name for name, _ in arch.vectors()] == ["score"]
        genotype = derive(arch, model)
        assert genotype.rep_choices == [["identity"] * 3]

        cfg = search_config(disable_score_search="distmult", epochs_search=1)
        model, arch, _ = run_search(small_synth_store, cfg)
        genotype = derive(arch, model)
        assert genotype.score_choice == "distmult"
