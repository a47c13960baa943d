"""Count-sketch tests: hashing invariants, additivity, collision fidelity,
selection probabilities, and cohort sampling."""

import numpy as np
import pytest

from hetbench.errors import InvalidInput, ShapeMismatch
from hetbench.seeds import rng_from
from hetbench.sketch import (
    LshFamily,
    RaceSketch,
    global_sketch,
    hash_points,
    make_lsh,
    sample_clients,
    selection_probabilities,
    sketch_dataset,
    sketch_distance,
    sketch_from_csv,
    sketch_to_csv,
)


def class_draw(rng, mean, label, n, dim):
    x = mean + rng.standard_normal((n, dim))
    y = np.full(n, label, dtype=np.int64)
    return x, y


class TestHashing:
    def test_bin_range_and_shape(self):
        lsh = make_lsh(num_tables=7, bits=3, dim=5, num_classes=4, label_scale=1.0, seed=0)
        rng = rng_from(0, "hash-range")
        bins = hash_points(lsh, rng.standard_normal((40, 5)), rng.integers(0, 4, 40))
        assert bins.shape == (40, 7)
        assert bins.min() >= 0 and bins.max() < 8

    def test_bit_packing_matches_scalar_recompute(self):
        # bin id must be sum(bit_k * 2^k) with bit_k = [projection_k > 0]
        lsh = make_lsh(num_tables=3, bits=4, dim=6, num_classes=2, label_scale=0.5, seed=3)
        rng = rng_from(1, "hash-pack")
        x = rng.standard_normal((9, 6))
        y = rng.integers(0, 2, 9)
        bins = hash_points(lsh, x, y)
        for i in range(9):
            z = np.concatenate([x[i], 0.5 * np.eye(2)[y[i]]])
            for r in range(3):
                expected = sum(
                    (1 << k) for k in range(4) if float(lsh.directions[r, k] @ z) > 0.0
                )
                assert bins[i, r] == expected

    def test_label_scale_zero_ignores_labels(self):
        lsh = make_lsh(num_tables=5, bits=4, dim=4, num_classes=3, label_scale=0.0, seed=2)
        rng = rng_from(2, "hash-gamma")
        x = rng.standard_normal((20, 4))
        a = hash_points(lsh, x, np.zeros(20, dtype=np.int64))
        b = hash_points(lsh, x, np.full(20, 2, dtype=np.int64))
        assert np.array_equal(a, b)

    def test_label_scale_separates_identical_features(self):
        lsh = make_lsh(num_tables=50, bits=4, dim=4, num_classes=3, label_scale=5.0, seed=2)
        x = np.ones((1, 4))
        a = hash_points(lsh, x, np.array([0]))
        b = hash_points(lsh, x, np.array([1]))
        assert not np.array_equal(a, b)

    def test_input_validation(self):
        lsh = make_lsh(num_tables=2, bits=2, dim=3, num_classes=2, label_scale=1.0, seed=0)
        with pytest.raises(ShapeMismatch):
            hash_points(lsh, np.zeros((4, 5)), np.zeros(4, dtype=np.int64))
        with pytest.raises(InvalidInput):
            hash_points(lsh, np.zeros((4, 3)), np.array([0, 1, 2, 0]))
        with pytest.raises(InvalidInput):
            make_lsh(num_tables=0, bits=2, dim=3, num_classes=2, label_scale=1.0, seed=0)
        with pytest.raises(InvalidInput):
            make_lsh(num_tables=2, bits=25, dim=3, num_classes=2, label_scale=1.0, seed=0)


class TestSketch:
    def test_single_sample_rows_are_one_hot(self):
        lsh = make_lsh(num_tables=6, bits=3, dim=4, num_classes=2, label_scale=1.0, seed=1)
        rng = rng_from(3, "single")
        sk = sketch_dataset(rng.standard_normal((1, 4)), np.array([1]), lsh)
        assert sk.total == 1.0
        assert np.array_equal(np.sort(sk.counts, axis=1)[:, :-1], np.zeros((6, 7)))
        assert np.all(sk.counts.max(axis=1) == 1.0)

    def test_additivity_is_exact(self):
        lsh = make_lsh(num_tables=10, bits=4, dim=5, num_classes=3, label_scale=1.0, seed=4)
        rng = rng_from(4, "additive")
        xa, ya = rng.standard_normal((37, 5)), rng.integers(0, 3, 37)
        xb, yb = rng.standard_normal((21, 5)), rng.integers(0, 3, 21)
        merged = sketch_dataset(np.vstack([xa, xb]), np.concatenate([ya, yb]), lsh)
        part_a = sketch_dataset(xa, ya, lsh)
        part_b = sketch_dataset(xb, yb, lsh)
        assert np.array_equal(merged.counts, part_a.counts + part_b.counts)
        assert merged.total == part_a.total + part_b.total

    def test_determinism_and_seed_sensitivity(self):
        rng = rng_from(5, "det")
        x, y = rng.standard_normal((30, 4)), rng.integers(0, 2, 30)
        one = sketch_dataset(x, y, make_lsh(8, 4, 4, 2, 1.0, seed=9))
        two = sketch_dataset(x, y, make_lsh(8, 4, 4, 2, 1.0, seed=9))
        other = sketch_dataset(x, y, make_lsh(8, 4, 4, 2, 1.0, seed=10))
        assert np.array_equal(one.counts, two.counts)
        assert not np.array_equal(one.counts, other.counts)

    def test_collision_fidelity_same_vs_cross_class(self):
        # Two draws from one Gaussian class must sketch closer together than
        # a draw from a different class in at least 95 of 100 trials.
        lsh = make_lsh(num_tables=50, bits=4, dim=8, num_classes=2, label_scale=1.0, seed=77)
        mean_a = np.zeros(8)
        mean_a[0] = 3.0
        mean_b = np.zeros(8)
        mean_b[1] = 3.0
        wins = 0
        for trial in range(100):
            rng = rng_from(trial, "fidelity")
            xa1, ya1 = class_draw(rng, mean_a, 0, 500, 8)
            xa2, ya2 = class_draw(rng, mean_a, 0, 500, 8)
            xb, yb = class_draw(rng, mean_b, 1, 500, 8)
            sa1 = sketch_dataset(xa1, ya1, lsh)
            sa2 = sketch_dataset(xa2, ya2, lsh)
            sb = sketch_dataset(xb, yb, lsh)
            if sketch_distance(sa1, sa2) < sketch_distance(sa1, sb):
                wins += 1
        assert wins >= 95

    def test_row_sum_validation(self):
        with pytest.raises(InvalidInput):
            RaceSketch(np.array([[1.0, 2.0], [1.0, 1.0]]), 3.0)
        with pytest.raises(ShapeMismatch):
            RaceSketch(np.zeros(4), 1.0)


class TestGlobalAndSelection:
    def test_global_sketch_is_mean_of_normalized(self):
        lsh = make_lsh(8, 3, 4, 2, 1.0, seed=6)
        rng = rng_from(6, "global")
        sketches = [
            sketch_dataset(rng.standard_normal((n, 4)), rng.integers(0, 2, n), lsh)
            for n in (10, 25, 40)
        ]
        gs = global_sketch(sketches)
        expected = sum(s.normalized() for s in sketches) / 3.0
        assert gs.total == 1.0
        assert np.allclose(gs.counts, expected, atol=1e-12)

    def test_identical_clients_get_uniform_probabilities(self):
        lsh = make_lsh(8, 3, 4, 2, 1.0, seed=7)
        rng = rng_from(7, "uniformsel")
        x, y = rng.standard_normal((30, 4)), rng.integers(0, 2, 30)
        sketches = [sketch_dataset(x, y, lsh) for _ in range(4)]
        probs = selection_probabilities(global_sketch(sketches), sketches)
        assert np.allclose(probs, 0.25, atol=1e-12)

    def test_pooled_distribution_client_wins(self):
        # Two clients hold opposite single classes; a third samples the pooled
        # mixture. The mixture client must get the largest selection weight.
        for seed in range(3):
            lsh = make_lsh(50, 4, 6, 2, 1.0, seed=seed)
            rng = rng_from(seed, "pooled")
            mean_a, mean_b = np.zeros(6), np.zeros(6)
            mean_a[0], mean_b[1] = 3.0, 3.0
            xa, ya = class_draw(rng, mean_a, 0, 400, 6)
            xb, yb = class_draw(rng, mean_b, 1, 400, 6)
            xm1, ym1 = class_draw(rng, mean_a, 0, 200, 6)
            xm2, ym2 = class_draw(rng, mean_b, 1, 200, 6)
            sketches = [
                sketch_dataset(xa, ya, lsh),
                sketch_dataset(xb, yb, lsh),
                sketch_dataset(np.vstack([xm1, xm2]), np.concatenate([ym1, ym2]), lsh),
            ]
            probs = selection_probabilities(global_sketch(sketches), sketches)
            assert probs.argmax() == 2
            assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        a = RaceSketch(np.ones((2, 4)) / 4.0, 1.0)
        b = RaceSketch(np.ones((3, 4)) / 4.0, 1.0)
        with pytest.raises(ShapeMismatch):
            sketch_distance(a, b)
        with pytest.raises(InvalidInput):
            global_sketch([])


class TestSampling:
    def test_deterministic_and_sorted(self):
        probs = np.array([0.4, 0.3, 0.2, 0.1])
        one = sample_clients(probs, 2, seed=11)
        two = sample_clients(probs, 2, seed=11)
        assert np.array_equal(one, two)
        assert np.array_equal(one, np.sort(one))

    def test_k_equals_n_returns_everyone(self):
        got = sample_clients(np.array([0.7, 0.2, 0.1]), 3, seed=0)
        assert np.array_equal(got, np.array([0, 1, 2]))

    def test_k_out_of_range(self):
        with pytest.raises(InvalidInput):
            sample_clients(np.array([0.5, 0.5]), 3, seed=0)
        with pytest.raises(InvalidInput):
            sample_clients(np.array([0.5, 0.5]), 0, seed=0)

    def test_no_repeats(self):
        probs = np.array([0.96, 0.02, 0.01, 0.01])
        for seed in range(50):
            got = sample_clients(probs, 3, seed=seed)
            assert np.unique(got).size == 3

    def test_marginal_inclusion_follows_weights(self):
        # Across many seeds the inclusion frequency must be ordered like the
        # underlying probabilities.
        probs = np.array([0.6, 0.3, 0.1])
        hits = np.zeros(3)
        for seed in range(10_000):
            for cid in sample_clients(probs, 2, seed=seed):
                hits[cid] += 1
        assert hits[0] > hits[1] > hits[2]
        assert hits[0] / 10_000 > 0.9  # id 0 is almost always in a 2-of-3 draw


class TestCsv:
    def test_round_trip(self):
        lsh = make_lsh(5, 3, 4, 2, 1.0, seed=8)
        rng = rng_from(8, "csv")
        sk = sketch_dataset(rng.standard_normal((23, 4)), rng.integers(0, 2, 23), lsh)
        text = sketch_to_csv(sk, seed=42)
        assert text.splitlines()[0] == "race,5,8,23,42"
        back, seed = sketch_from_csv(text)
        assert seed == 42
        assert back.total == sk.total
        assert np.array_equal(back.counts, sk.counts)

    def test_bad_header_rejected(self):
        with pytest.raises(InvalidInput):
            sketch_from_csv("bogus,1,2,3,4\n0,0\n")
        with pytest.raises(InvalidInput):
            sketch_from_csv("race,2,2,1,0\n1,0\n")
