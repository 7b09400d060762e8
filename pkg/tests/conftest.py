import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nase.data import TripleStore, load_dataset
from nase.synth import generate_synthetic_kg, write_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def toy_store():
    """Hand-built 4-entity, 2-relation store with all three splits."""
    entities = {"a": 0, "b": 1, "c": 2, "d": 3}
    relations = {"r": 0, "s": 1}
    splits = {
        "train": [(0, 0, 1), (1, 0, 2), (0, 1, 2), (2, 0, 3), (3, 1, 0)],
        "valid": [(1, 1, 3)],
        "test": [(0, 0, 3)],
    }
    return TripleStore(entities, relations, splits)


@pytest.fixture(scope="session")
def small_synth_dir(tmp_path_factory):
    """50-entity synthetic dataset on disk, reused across test modules."""
    out = tmp_path_factory.mktemp("synth50")
    splits = generate_synthetic_kg(n_entities=50, n_relations=5,
                                   pattern_mix=(0.3, 0.4, 0.3),
                                   n_triples=900, seed=11)
    write_dataset(out, splits)
    return out


@pytest.fixture(scope="session")
def small_synth_store(small_synth_dir):
    return load_dataset(small_synth_dir)
