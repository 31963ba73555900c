import io

import numpy as np
import pytest

from dsu.errors import FormatError, UnsupportedVersionError, ValidationError
from dsu.quantizer import (
    Codebook,
    KmeansConfig,
    assign,
    distortion,
    kmeans_train,
    load_codebook,
    save_codebook,
)


class TestKmeansTrain:
    def test_k_equals_distinct_points(self):
        points = np.array([[0.0], [10.0]])
        codebook, history = kmeans_train(points, KmeansConfig(num_units=2, seed=3))
        assert sorted(codebook.centroids.ravel().tolist()) == [0.0, 10.0]
        assert history[-1] == 0.0

    def test_two_cluster_exact_solution(self):
        # brute force over all 2-partitions confirms {0,1} | {9,10} is optimal
        points = np.array([[0.0], [1.0], [9.0], [10.0]])

        def sse(index_subset):
            subset = points[list(index_subset)]
            return float(((subset - subset.mean(axis=0)) ** 2).sum())

        splits = [(0,), (1,), (2,), (3,), (0, 1), (0, 2), (0, 3)]
        best = min(
            sse(side) + sse(tuple(i for i in range(4) if i not in side)) for side in splits
        )
        assert best == 1.0
        for seed in range(5):
            codebook, history = kmeans_train(points, KmeansConfig(num_units=2, seed=seed))
            assert sorted(codebook.centroids.ravel().tolist()) == [0.5, 9.5]
            assert history[-1] == 1.0
            assert distortion(points, codebook) == 1.0

    def test_k1_gives_mean_and_total_variance(self, rng):
        points = rng.standard_normal((40, 3))
        codebook, history = kmeans_train(points, KmeansConfig(num_units=1, seed=0))
        np.testing.assert_allclose(codebook.centroids[0], points.mean(axis=0), atol=1e-6)
        expected = ((points - points.mean(axis=0)) ** 2).sum()
        assert history[-1] == pytest.approx(expected, rel=1e-9)

    def test_distortion_history_non_increasing(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            points = rng.standard_normal((int(rng.integers(20, 80)), int(rng.integers(1, 5))))
            k = int(rng.integers(1, 9))
            _, history = kmeans_train(points, KmeansConfig(num_units=k, seed=seed))
            assert all(a >= b for a, b in zip(history, history[1:]))

    def test_separated_gaussian_recovery(self):
        rng = np.random.default_rng(5)
        sigma = 0.3
        true_means = np.array([[0.0, 0.0], [10.0 * sigma * 4, 0.0], [0.0, 10.0 * sigma * 4], [8.0, 8.0]])
        points = np.concatenate(
            [mean + sigma * rng.standard_normal((150, 2)) for mean in true_means]
        )
        codebook, _ = kmeans_train(points, KmeansConfig(num_units=4, seed=1))
        for mean in true_means:
            nearest = np.linalg.norm(codebook.centroids - mean, axis=1).min()
            assert nearest < 0.5 * sigma
        for centroid in codebook.centroids:
            nearest = np.linalg.norm(true_means - centroid, axis=1).min()
            assert nearest < 0.5 * sigma

    def test_no_duplicate_centroids_with_enough_distinct_points(self, rng):
        points = rng.standard_normal((60, 2))
        codebook, _ = kmeans_train(points, KmeansConfig(num_units=8, seed=9))
        unique = {row.tobytes() for row in codebook.centroids}
        assert len(unique) == 8

    def test_empty_cluster_repair(self):
        # ask for more clusters than natural groups; history must stay monotone
        points = np.concatenate([np.zeros((30, 2)), np.ones((30, 2)) * 100.0])
        codebook, history = kmeans_train(points, KmeansConfig(num_units=5, seed=2))
        assert all(a >= b for a, b in zip(history, history[1:]))
        assert codebook.num_units == 5

    def test_sample_cap(self, rng):
        points = rng.standard_normal((500, 2))
        codebook, _ = kmeans_train(
            points, KmeansConfig(num_units=4, seed=0, sample_cap=100)
        )
        assert codebook.num_units == 4

    def test_determinism(self, rng):
        points = rng.standard_normal((100, 3))
        a, hist_a = kmeans_train(points, KmeansConfig(num_units=6, seed=11))
        b, hist_b = kmeans_train(points, KmeansConfig(num_units=6, seed=11))
        np.testing.assert_array_equal(a.centroids, b.centroids)
        assert hist_a == hist_b

    def test_zero_frames_rejected(self):
        with pytest.raises(ValueError):
            kmeans_train(np.zeros((0, 2)), KmeansConfig(num_units=1))


class TestAssign:
    def codebook(self):
        return Codebook(np.arange(16, dtype=np.float32).reshape(8, 2))

    def test_frame_at_centroid(self):
        codebook = self.codebook()
        assert assign(codebook.centroids[7:8].astype(np.float64), codebook)[0] == 7

    def test_tie_goes_to_lowest_index(self):
        codebook = Codebook(np.array([[0.0], [2.0], [1.0]], dtype=np.float32))
        # 0.5 is equidistant between centroids 0 and 2 -> index 0
        assert assign(np.array([[0.5]]), codebook)[0] == 0
        # 1.5 is equidistant between centroids 1 and 2 -> index 1
        assert assign(np.array([[1.5]]), codebook)[0] == 1

    def test_permutation_equivariance(self, rng):
        codebook = self.codebook()
        frames = rng.standard_normal((30, 2)) * 8
        base = assign(frames, codebook)
        perm = rng.permutation(30)
        np.testing.assert_array_equal(assign(frames[perm], codebook), base[perm])

    def test_length_preserved(self, rng):
        codebook = self.codebook()
        frames = rng.standard_normal((17, 2))
        assert assign(frames, codebook).shape == (17,)

    def test_dim_mismatch_rejected(self, rng):
        with pytest.raises(ValueError):
            assign(rng.standard_normal((3, 5)), self.codebook())


class TestDistortion:
    def test_zero_at_centroids(self):
        codebook = Codebook(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32))
        assert distortion(codebook.centroids.astype(np.float64), codebook) == 0.0

    def test_single_frame_squared_distance(self):
        codebook = Codebook(np.array([[0.0]], dtype=np.float32))
        assert distortion(np.array([[3.0]]), codebook) == 9.0

    def test_hand_example(self):
        codebook = Codebook(np.array([[0.5], [9.5]], dtype=np.float32))
        assert distortion(np.array([[0.0], [1.0], [9.0], [10.0]]), codebook) == 1.0


class TestCodebookPersistence:
    def test_roundtrip_exact(self, rng):
        codebook = Codebook(rng.standard_normal((5, 3)).astype(np.float32))
        buf = io.BytesIO()
        save_codebook(codebook, buf)
        buf.seek(0)
        back = load_codebook(buf)
        np.testing.assert_array_equal(back.centroids, codebook.centroids)

    def test_roundtrip_path(self, rng, tmp_path):
        codebook = Codebook(rng.standard_normal((4, 2)).astype(np.float32))
        path = tmp_path / "codebook.dsuk"
        save_codebook(codebook, path)
        np.testing.assert_array_equal(load_codebook(path).centroids, codebook.centroids)

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            load_codebook(io.BytesIO(b"NOPE" + b"\x00" * 12))

    def test_bad_version(self):
        buf = io.BytesIO()
        save_codebook(Codebook(np.zeros((1, 1), np.float32)), buf)
        data = buf.getvalue()
        with pytest.raises(UnsupportedVersionError):
            load_codebook(io.BytesIO(data[:4] + b"\x09\x00\x00\x00" + data[8:]))

    def test_invalid_centroids_rejected(self):
        with pytest.raises(ValidationError):
            Codebook(np.array([[np.inf]], dtype=np.float32))
