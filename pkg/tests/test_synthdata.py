import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awgan.synthdata import (
    LabeledBatch,
    RingMixture,
    default_min_count,
    mode_coverage,
    nearest_mode,
    read_batch_csv,
    sample,
    sample_mode,
    write_batch_csv,
)


class TestRing:
    def test_centers_on_circle(self):
        mix = RingMixture(n_modes=8, radius=1.0)
        np.testing.assert_allclose(np.linalg.norm(mix.centers, axis=1), 1.0, rtol=1e-15)
        np.testing.assert_allclose(mix.centers[2], [0.0, 1.0], atol=1e-15)

    @pytest.mark.parametrize("kw", [dict(n_modes=0), dict(radius=0.0), dict(std=0.0), dict(std=-1.0)])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            RingMixture(**kw)


class TestSample:
    def test_tiny_std_lands_on_centers(self):
        mix = RingMixture(std=1e-12)
        batch = sample(mix, 200, 3)
        np.testing.assert_allclose(batch.points, mix.centers[batch.labels], atol=1e-10)

    def test_per_mode_means(self):
        mix = RingMixture()
        n = 80000
        batch = sample(mix, n, 0)
        bound = 4 * mix.std / math.sqrt(n / 8)
        for j in range(8):
            mean = batch.points[batch.labels == j].mean(axis=0)
            assert np.all(np.abs(mean - mix.centers[j]) < bound)

    def test_uniform_mode_frequencies(self):
        n, k = 80000, 8
        counts = np.bincount(sample(RingMixture(), n, 1).labels, minlength=k)
        sd = math.sqrt(n * (1 / k) * (1 - 1 / k))
        assert np.all(np.abs(counts - n / k) < 4 * sd)

    def test_deterministic(self):
        a, b = sample(RingMixture(), 50, 9), sample(RingMixture(), 50, 9)
        assert np.array_equal(a.points, b.points) and np.array_equal(a.labels, b.labels)

    def test_generator_advances(self):
        rng = np.random.default_rng(0)
        a, b = sample(RingMixture(), 10, rng), sample(RingMixture(), 10, rng)
        assert not np.array_equal(a.points, b.points)

    def test_bad_n(self):
        with pytest.raises(ValueError):
            sample(RingMixture(), 0)


class TestNearestMode:
    def test_center(self):
        mix = RingMixture()
        assert [nearest_mode(c, mix) for c in mix.centers] == list(range(8))

    @pytest.mark.parametrize("radius", [1.0, 2.0, 0.3, 7.5])
    def test_origin_tie_goes_to_zero(self, radius):
        assert nearest_mode(np.zeros(2), RingMixture(radius=radius)) == 0

    def test_scaled_center(self):
        mix = RingMixture()
        assert nearest_mode(1.1 * mix.centers, mix).tolist() == list(range(8))

    def test_samples_map_home(self):
        spacing = 2 * math.sin(math.pi / 8)
        mix = RingMixture(std=0.05 * spacing)
        batch = sample(mix, 20000, 4)
        assert np.mean(nearest_mode(batch.points, mix) == batch.labels) > 0.999


class TestCoverage:
    def test_centers(self):
        mix = RingMixture()
        assert mode_coverage(mix.centers, mix, min_count=1)[0] == 8

    def test_single_mode(self):
        mix = RingMixture()
        covered, counts = mode_coverage(sample_mode(mix, 0, 500, 1), mix)
        # P(|noise| > 3 std) = exp(-4.5) ~ 1.1% in two dimensions
        assert covered == 1 and 470 < counts[0] <= 500

    def test_full_mixture(self):
        mix = RingMixture()
        pts = sample(mix, 8000, 12345).points
        assert mode_coverage(pts, mix, capture_radius=3 * mix.std, min_count=10)[0] == 8

    def test_defaults(self):
        assert default_min_count(8000) == 10
        assert default_min_count(100) == 1

    def test_min_count_threshold(self):
        mix = RingMixture()
        pts = np.repeat(mix.centers[:2], [5, 4], axis=0)
        assert mode_coverage(pts, mix, min_count=5)[0] == 1

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            mode_coverage(np.zeros((1, 2)), RingMixture(), capture_radius=0.0)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 1000))
    def test_subset_of_modes(self, k, seed):
        mix = RingMixture()
        modes = np.random.default_rng(seed).choice(8, size=k, replace=False)
        pts = np.concatenate([sample_mode(mix, int(m), 100, seed) for m in modes])
        assert mode_coverage(pts, mix, min_count=10)[0] == k


class TestCsv:
    def test_round_trip(self, tmp_path):
        batch = sample(RingMixture(), 64, 2)
        path = write_batch_csv(batch, tmp_path / "b.csv")
        assert path.read_text().splitlines()[0] == "x,y,label"
        back = read_batch_csv(path)
        assert np.array_equal(back.points, batch.points)
        assert np.array_equal(back.labels, batch.labels)
        assert isinstance(back, LabeledBatch) and len(back) == 64
