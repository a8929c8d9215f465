import numpy as np
import pytest
from scipy import stats

from groundlex.datamodel import DataError, EmbeddingSpace, Session, SessionSet
from groundlex.prodvec import (
    TrainConfig,
    build_vocabulary,
    generate_pairs,
    nearest_neighbors,
    sample_negatives,
    train,
    train_text,
)
from groundlex.synth import planted_cluster_sessions


def sessions_of(*seqs):
    return SessionSet(tuple(Session(f"s{i}", tuple(s)) for i, s in enumerate(seqs)))


def cluster_gap(space, cluster):
    unit = space.matrix / np.linalg.norm(space.matrix, axis=1, keepdims=True)
    sims = unit @ unit.T
    labels = np.array([cluster[k] for k in space.keys])
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(len(labels), dtype=bool)
    return sims[same & off_diag].mean() - sims[~same].mean()


@pytest.fixture(scope="module")
def planted():
    return planted_cluster_sessions(n_products=20, n_clusters=2, n_sessions=1000, seed=3)


class TestVocabulary:
    def test_counts(self):
        vocab = build_vocabulary(sessions_of(["p1", "p2"], ["p1", "p3"]), 1)
        assert vocab.as_dict() == {"p1": 2, "p2": 1, "p3": 1}
        assert vocab.items == ("p1", "p2", "p3")

    def test_threshold(self):
        assert build_vocabulary(sessions_of(["p1", "p2"], ["p1", "p3"]), 2).as_dict() == {"p1": 2}

    def test_empty(self):
        with pytest.raises(DataError):
            build_vocabulary(SessionSet(), 1)

    def test_all_filtered(self):
        with pytest.raises(DataError):
            build_vocabulary(sessions_of(["a", "b"]), 5)


class TestPairs:
    def test_two_items(self):
        assert set(generate_pairs(["p1", "p2"], 1)) == {("p1", "p2"), ("p2", "p1")}

    def test_fixed_window_enumeration(self):
        # Every ordered (i, j) with i != j and |i - j| <= 2 over three positions.
        expected = {(a, b) for a in ("p1", "p2", "p3") for b in ("p1", "p2", "p3") if a != b}
        pairs = generate_pairs(["p1", "p2", "p3"], 2)
        assert len(pairs) == 6
        assert set(pairs) == expected

    def test_single(self):
        assert generate_pairs(["p1"], 5) == []

    def test_shrunk_window_is_subset(self):
        rng = np.random.default_rng(0)
        seq = [f"p{i}" for i in range(12)]
        full = set(generate_pairs(seq, 4))
        for _ in range(20):
            assert set(generate_pairs(seq, 4, rng)) <= full

    def test_oov_skipped_in_place(self):
        vocab = build_vocabulary(sessions_of(["a", "c"], ["a", "c"]), 2)
        pairs = generate_pairs(["a", "rare", "c"], 1, vocabulary=vocab)
        assert pairs == []
        assert set(generate_pairs(["a", "rare", "c"], 2, vocabulary=vocab)) == {("a", "c"), ("c", "a")}


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [{"epochs": 0}, {"dimension": 0}, {"window": 0}, {"ns_exponent": 1.5}, {"negatives_per_positive": 0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.dimension, cfg.window, cfg.epochs, cfg.ns_exponent) == (50, 10, 30, 0.75)


class TestTraining:
    def test_cluster_recovery(self, planted):
        sessions, cluster = planted
        space = train(sessions, TrainConfig(dimension=16, epochs=10, seed=1))
        assert space.kind == "product"
        assert space.dimension == 16
        assert set(space.keys) == set(cluster)
        assert cluster_gap(space, cluster) > 0.2

    def test_deterministic(self, planted):
        sessions, _ = planted
        cfg = TrainConfig(dimension=8, epochs=2, seed=7)
        a, b = train(sessions, cfg), train(sessions, cfg)
        assert a == b
        assert a.matrix.tobytes() == b.matrix.tobytes()

    def test_seed_matters(self, planted):
        sessions, _ = planted
        a = train(sessions, TrainConfig(dimension=8, epochs=1, seed=1))
        b = train(sessions, TrainConfig(dimension=8, epochs=1, seed=2))
        assert not np.array_equal(a.matrix, b.matrix)

    def test_loss_does_not_grow(self, planted):
        sessions, _ = planted
        losses = train(sessions, TrainConfig(dimension=16, epochs=10, seed=1)).meta["epoch_losses"]
        for earlier, later in zip(losses, losses[1:]):
            assert later <= earlier * 1.05

    def test_pair_count_matches_plan(self, planted):
        sessions, _ = planted
        space = train(sessions, TrainConfig(dimension=4, epochs=3, window=1, seed=1))
        # window=1 leaves no room for shrinkage: each session of length L yields 2(L-1) pairs.
        expected = sum(2 * (len(s) - 1) for s in sessions)
        assert space.meta["epoch_pairs"] == [expected] * 3

    def test_parallel_mode_runs(self, planted):
        sessions, cluster = planted
        space = train(sessions, TrainConfig(dimension=16, epochs=10, seed=1, workers=2))
        assert np.all(np.isfinite(space.matrix))
        assert cluster_gap(space, cluster) > 0.2

    def test_empty(self):
        with pytest.raises(DataError):
            train(SessionSet(), TrainConfig())


class TestNegativeSampler:
    def test_unigram_power_distribution(self):
        counts = [100, 60, 40, 25, 15, 9, 5, 3, 2, 1]
        draws = sample_negatives(counts, 0.75, 1_000_000, seed=11)
        observed = np.bincount(draws, minlength=10) / draws.size
        expected = np.array(counts, dtype=float) ** 0.75
        expected /= expected.sum()
        np.testing.assert_allclose(observed, expected, atol=0.01)
        chi2 = stats.chisquare(np.bincount(draws, minlength=10), expected * draws.size)
        assert chi2.pvalue > 1e-4

    def test_exponent_zero_is_uniform(self):
        draws = sample_negatives([1000, 1, 1, 1], 0.0, 200_000, seed=2)
        np.testing.assert_allclose(np.bincount(draws) / draws.size, 0.25, atol=0.01)


class TestText:
    def test_coverage(self):
        corpus = [["red", "shoes", "for", "running"], ["blue", "shoes"], ["red", "cap"]] * 5
        space = train_text(corpus, TrainConfig(dimension=8, epochs=2, min_count=5))
        assert space.kind == "text"
        assert set(space.keys) == {"red", "shoes", "for", "running", "blue", "cap"}

    def test_default_min_count_is_five(self):
        corpus = [["common", "word"]] * 5 + [["rare", "word"]]
        space = train_text(corpus, TrainConfig(dimension=4, epochs=1))
        assert "rare" not in space
        assert "common" in space

    def test_empty(self):
        with pytest.raises(DataError):
            train_text([], TrainConfig())

    def test_planted_synonyms(self):
        rng = np.random.default_rng(5)
        contexts = [[f"c{g}{i}" for i in range(6)] for g in range(4)]
        corpus = []
        for _ in range(3000):
            g = int(rng.integers(4))
            word = ["sneakers", "trainers"][int(rng.integers(2))] if g == 0 else f"w{g}{int(rng.integers(3))}"
            ctx = list(rng.choice(contexts[g], size=4, replace=False))
            corpus.append(ctx[:2] + [word] + ctx[2:])
        space = train_text(corpus, TrainConfig(dimension=16, epochs=5, window=2, seed=3))
        unit = space.matrix / np.linalg.norm(space.matrix, axis=1, keepdims=True)
        sims = unit @ unit.T
        mean_pairwise = sims[~np.eye(len(space), dtype=bool)].mean()
        synonym = float(unit[space.index("sneakers")] @ unit[space.index("trainers")])
        assert synonym > mean_pairwise


class TestNeighbors:
    space = EmbeddingSpace.from_dict({"a": [1, 0], "b": [1, 0], "c": [0, 1]}, kind="product")

    def test_exact(self):
        assert nearest_neighbors(self.space, "a", 2) == [("b", 1.0), ("c", 0.0)]

    def test_zero(self):
        assert nearest_neighbors(self.space, "a", 0) == []

    def test_unknown(self):
        with pytest.raises(KeyError):
            nearest_neighbors(self.space, "zz", 1)

    def test_ties_by_key(self):
        space = EmbeddingSpace.from_dict({"q": [1, 1], "z": [1, 0], "m": [0, 1]}, kind="product")
        assert [k for k, _ in nearest_neighbors(space, "q", 2)] == ["m", "z"]
