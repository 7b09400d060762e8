import logging

import numpy as np
import numpy.testing as npt
import pytest

from nase.data import (Batch, BatchSampler, DatasetError, TripleStore,
                       filtered_candidates, load_dataset, sample_batch)


def write_splits(directory, train, valid=None, test=None):
    specs = {"train": train, "valid": valid or ["a\tr\tb"], "test": test or ["a\tr\tb"]}
    for split, lines in specs.items():
        (directory / f"{split}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return directory


class TestLoading:
    def test_three_entity_example(self, tmp_path):
        write_splits(tmp_path, ["a\tr\tb", "b\tr\tc"])
        store = load_dataset(tmp_path)
        assert store.n_entities == 3
        assert store.n_relations == 1
        assert store.entities == {"a": 0, "b": 1, "c": 2}
        npt.assert_array_equal(store.split("train"), [[0, 0, 1], [1, 0, 2]])

    def test_vocab_is_lexicographic_regardless_of_file_order(self, tmp_path):
        for sub in ("one", "two"):
            (tmp_path / sub).mkdir()
        held = ["alpha\tr\tbeta"]
        d1 = write_splits(tmp_path / "one", ["zeta\tr\tbeta", "alpha\tr\tzeta"],
                          valid=held, test=held)
        d2 = write_splits(tmp_path / "two", ["alpha\tr\tzeta", "zeta\tr\tbeta"],
                          valid=held, test=held)
        s1, s2 = load_dataset(d1), load_dataset(d2)
        assert s1.entities == s2.entities == {"alpha": 0, "beta": 1, "zeta": 2}
        assert set(map(tuple, s1.split("train").tolist())) \
            == set(map(tuple, s2.split("train").tolist()))

    def test_duplicates_dropped_with_warning(self, tmp_path, caplog):
        write_splits(tmp_path, ["a\tr\tb", "a\tr\tb", "b\tr\ta"])
        with caplog.at_level(logging.WARNING, logger="nase.data"):
            store = load_dataset(tmp_path)
        assert len(store.split("train")) == 2
        assert any("duplicate" in rec.message for rec in caplog.records)

    def test_malformed_line_reports_position(self, tmp_path):
        write_splits(tmp_path, ["a\tr\tb", "a\tb"])
        with pytest.raises(DatasetError, match=r"train\.txt:2"):
            load_dataset(tmp_path)

    def test_empty_token_rejected(self, tmp_path):
        write_splits(tmp_path, ["a\t\tb"])
        with pytest.raises(DatasetError, match="empty"):
            load_dataset(tmp_path)

    def test_missing_file(self, tmp_path):
        (tmp_path / "train.txt").write_text("a\tr\tb\n")
        with pytest.raises(DatasetError, match="valid.txt"):
            load_dataset(tmp_path)

    def test_blank_lines_skipped(self, tmp_path):
        write_splits(tmp_path, ["a\tr\tb", "", "b\tr\tc"])
        assert len(load_dataset(tmp_path).split("train")) == 2

    def test_stats_shape(self, toy_store):
        assert toy_store.stats() == {"entities": 4, "relations": 2,
                                     "train": 5, "valid": 1, "test": 1}

    def test_unknown_split(self, toy_store):
        with pytest.raises(DatasetError, match="dev"):
            toy_store.split("dev")


class TestMembershipIndexes:
    def test_known_tails_and_heads(self, toy_store):
        # train holds (a r b) and (a s c); valid holds (b s d); test (a r d)
        npt.assert_array_equal(toy_store.known_tails(0, 0), [1, 3])
        npt.assert_array_equal(toy_store.known_heads(0, 2), [1])
        assert len(toy_store.known_tails(3, 0)) == 0

    def test_known_set_spans_all_splits(self, toy_store):
        assert (0, 0, 3) in toy_store.known      # test triple
        assert (1, 1, 3) in toy_store.known      # valid triple
        assert (3, 3, 3) not in toy_store.known


class TestSampling:
    def test_batch_layout(self, toy_store, rng):
        batch = sample_batch(toy_store, "train", batch_size=4, n_neg=2, rng=rng)
        assert len(batch) == 12
        npt.assert_array_equal(batch.labels[:4], np.ones(4))
        npt.assert_array_equal(batch.labels[4:], np.zeros(8))
        assert batch.heads.dtype == np.int64
        assert batch.labels.dtype == np.float64

    def test_negatives_corrupt_exactly_one_entity_slot(self, toy_store, rng):
        batch = sample_batch(toy_store, "train", batch_size=2, n_neg=5, rng=rng)
        positives = list(zip(batch.heads[:2], batch.rels[:2], batch.tails[:2]))
        for i in range(2, len(batch)):
            pos = positives[(i - 2) // 5]
            neg = (batch.heads[i], batch.rels[i], batch.tails[i])
            assert neg[1] == pos[1]
            changed = (neg[0] != pos[0]) + (neg[2] != pos[2])
            assert changed <= 1  # a redraw can land on the original entity

    def test_negatives_avoid_known_triples(self, small_synth_store):
        # 50 entities vs <1k known triples: resampling should dodge them all
        rng = np.random.default_rng(5)
        sampler = BatchSampler(small_synth_store, "train", rng)
        batch = sampler.sample(batch_size=32, n_neg=4)
        n_pos = 32
        hits = sum((int(h), int(r), int(t)) in small_synth_store.known
                   for h, r, t in zip(batch.heads[n_pos:], batch.rels[n_pos:],
                                      batch.tails[n_pos:]))
        assert hits == 0

    def test_epoch_visits_each_positive_once(self, toy_store):
        sampler = BatchSampler(toy_store, "train", np.random.default_rng(3))
        seen = []
        for _ in range(sampler.batches_per_epoch(2)):
            batch = sampler.sample(2, n_neg=1)
            n_pos = len(batch) // 2
            seen.extend(zip(batch.heads[:n_pos].tolist(),
                            batch.rels[:n_pos].tolist(),
                            batch.tails[:n_pos].tolist()))
        expect = sorted(map(tuple, toy_store.split("train").tolist()))
        assert sorted(seen) == expect

    def test_batches_per_epoch_rounds_up(self, toy_store):
        sampler = BatchSampler(toy_store, "train", np.random.default_rng(0))
        assert sampler.batches_per_epoch(2) == 3
        assert sampler.batches_per_epoch(5) == 1

    def test_same_seed_same_batches(self, small_synth_store):
        def draw(seed):
            sampler = BatchSampler(small_synth_store, "train", np.random.default_rng(seed))
            b = sampler.sample(16, n_neg=3)
            return np.stack([b.heads, b.rels, b.tails])

        npt.assert_array_equal(draw(7), draw(7))
        assert not np.array_equal(draw(7), draw(8))

    def test_oversized_batch_rejected(self, toy_store):
        sampler = BatchSampler(toy_store, "train", np.random.default_rng(0))
        with pytest.raises(DatasetError, match="batch size"):
            sampler.sample(99, n_neg=1)

    def test_n_neg_validation(self, toy_store, rng):
        with pytest.raises(ValueError, match="n_neg"):
            sample_batch(toy_store, "train", 2, 0, rng)

    def test_batch_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            Batch([0, 1], [0], [1, 2], [1.0, 0.0])


class TestFilteredCandidates:
    def test_matches_brute_force(self, small_synth_store):
        store = small_synth_store
        rng = np.random.default_rng(9)
        test = store.split("test")
        for row in rng.choice(len(test), size=min(200, len(test)), replace=False):
            h, r, t = map(int, test[row])
            for target in ("tail", "head"):
                got = filtered_candidates(store, h, r, t, target)
                brute = []
                for e in range(store.n_entities):
                    cand = (h, r, e) if target == "tail" else (e, r, t)
                    gold = e == (t if target == "tail" else h)
                    if gold or cand not in store.known:
                        brute.append(e)
                npt.assert_array_equal(got, brute)

    def test_gold_always_included(self, toy_store):
        cands = filtered_candidates(toy_store, 0, 0, 1, "tail")
        assert 1 in cands
        cands = filtered_candidates(toy_store, 0, 0, 1, "head")
        assert 0 in cands

    def test_candidates_sorted_unique(self, small_synth_store):
        test = small_synth_store.split("test")
        h, r, t = map(int, test[0])
        cands = filtered_candidates(small_synth_store, h, r, t, "tail")
        assert np.all(np.diff(cands) > 0)

    def test_bad_target(self, toy_store):
        with pytest.raises(ValueError, match="target"):
            filtered_candidates(toy_store, 0, 0, 1, "t")
