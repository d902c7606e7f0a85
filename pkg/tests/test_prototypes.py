import numpy as np
import pytest

from protoalign.data import VisualFeatureStore
from protoalign.errors import DataError
from protoalign.prototypes import episode_prototypes, global_prototypes


def store_from(features, assignment):
    return VisualFeatureStore(
        features={k: np.asarray(v, dtype=np.float64) for k, v in features.items()},
        assignment=assignment,
    )


@pytest.fixture
def small_store():
    return store_from(
        {"a1": [1.0, 2.0], "a2": [3.0, 4.0], "b1": [0.0, 0.0], "b2": [2.0, 2.0]},
        {"a1": "cat", "a2": "cat", "b1": "dog", "b2": "dog"},
    )


class TestEpisodePrototypes:
    def test_single_shot_passthrough(self, small_store):
        protos = episode_prototypes([("a1", "cat")], small_store)
        assert np.array_equal(protos.matrix[0], [1.0, 2.0])

    def test_mean_of_two(self, small_store):
        protos = episode_prototypes([("a1", "cat"), ("a2", "cat")], small_store)
        assert np.array_equal(protos.matrix[0], [2.0, 3.0])

    def test_order_is_first_appearance(self, small_store):
        protos = episode_prototypes(
            [("b1", "dog"), ("a1", "cat"), ("b2", "dog"), ("a2", "cat")], small_store
        )
        assert protos.classes == ("dog", "cat")

    def test_permutation_within_class_invariant(self, small_store):
        fwd = episode_prototypes([("a1", "cat"), ("a2", "cat")], small_store)
        rev = episode_prototypes([("a2", "cat"), ("a1", "cat")], small_store)
        assert np.allclose(fwd.matrix, rev.matrix, atol=1e-15)

    def test_missing_feature(self, small_store):
        with pytest.raises(DataError):
            episode_prototypes([("ghost", "cat")], small_store)

    def test_empty_support(self, small_store):
        with pytest.raises(DataError):
            episode_prototypes([], small_store)


class TestGlobalPrototypes:
    def test_class_mean(self, small_store):
        protos = global_prototypes(small_store, ["dog"])
        assert np.array_equal(protos.matrix[0], [1.0, 1.0])

    def test_single_image_class(self):
        store = store_from({"x": [5.0, 6.0]}, {"x": "solo"})
        protos = global_prototypes(store, ["solo"])
        assert np.array_equal(protos.matrix[0], [5.0, 6.0])

    def test_row_order_matches_argument(self, small_store):
        protos = global_prototypes(small_store, ["dog", "cat"])
        assert protos.classes == ("dog", "cat")
        assert np.array_equal(protos.matrix[1], [2.0, 3.0])

    def test_unknown_class_named(self, small_store):
        with pytest.raises(DataError, match="bird"):
            global_prototypes(small_store, ["bird"])

    def test_episode_covering_all_images_matches_global(self, small_store):
        episode = episode_prototypes([("a1", "cat"), ("a2", "cat")], small_store)
        full = global_prototypes(small_store, ["cat"])
        assert np.array_equal(episode.matrix, full.matrix)

    def test_translation_equivariance(self):
        rng = np.random.default_rng(21)
        feats = {f"i{k}": rng.standard_normal(3) for k in range(6)}
        assignment = {f"i{k}": "c" if k < 3 else "d" for k in range(6)}
        shift = np.array([10.0, -5.0, 2.0])
        base = global_prototypes(store_from(feats, assignment), ["c", "d"])
        shifted = global_prototypes(
            store_from({k: v + shift for k, v in feats.items()}, assignment), ["c", "d"]
        )
        assert np.allclose(shifted.matrix, base.matrix + shift, atol=1e-12)
