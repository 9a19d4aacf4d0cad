import numpy as np
import pytest

from subalign.data import Dataset, gen_blobs, gen_two_moons, load_csv, save_csv
from subalign.errors import ParseError, ValidationError


class TestTwoMoons:
    def test_noiseless_points_on_canonical_arcs(self):
        ds = gen_two_moons(4, 0.0, 0.0, seed=0)
        t = np.linspace(0.0, np.pi, 2)
        upper = np.column_stack([np.cos(t), np.sin(t)])
        lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
        np.testing.assert_allclose(ds.features, np.vstack([upper, lower]),
                                   atol=1e-15)
        assert ds.labels.tolist() == [0, 0, 1, 1]

    def test_full_turn_equals_no_rotation(self):
        a = gen_two_moons(40, 0.05, 0.0, seed=3)
        b = gen_two_moons(40, 0.05, 360.0, seed=3)
        np.testing.assert_allclose(a.features, b.features, atol=1e-9)

    def test_rotation_displacement_is_chord_length(self):
        # displacement of each point = 2 sin(15 deg) * its radius
        a = gen_two_moons(60, 0.1, 0.0, seed=4)
        b = gen_two_moons(60, 0.1, 30.0, seed=4)
        moved = np.linalg.norm(b.features - a.features, axis=1)
        radii = np.linalg.norm(a.features, axis=1)
        np.testing.assert_allclose(moved, 2.0 * np.sin(np.deg2rad(15.0)) * radii,
                                   atol=1e-9)

    def test_balanced_labels(self):
        ds = gen_two_moons(100, 0.2, 45.0, seed=5)
        assert np.count_nonzero(ds.labels == 0) == 50
        assert np.count_nonzero(ds.labels == 1) == 50

    def test_deterministic_per_seed(self):
        a = gen_two_moons(20, 0.1, 10.0, seed=6)
        b = gen_two_moons(20, 0.1, 10.0, seed=6)
        np.testing.assert_array_equal(a.features, b.features)

    def test_invalid_n(self):
        with pytest.raises(ValidationError):
            gen_two_moons(5, 0.1, 0.0, seed=0)
        with pytest.raises(ValidationError):
            gen_two_moons(0, 0.1, 0.0, seed=0)


class TestBlobs:
    def test_zero_shift_shares_centers_across_seeds(self):
        a = gen_blobs(30, 3, 2, 0.0, 0.0, seed=1)
        b = gen_blobs(30, 3, 2, 0.0, 0.0, seed=2)
        # noiseless: points equal the shared centers regardless of seed
        np.testing.assert_array_equal(a.features, b.features)

    def test_noiseless_points_sit_on_centers(self):
        ds = gen_blobs(12, 4, 3, 0.0, 0.0, seed=7)
        for c in range(4):
            rows = ds.features[ds.labels == c]
            assert np.all(rows == rows[0])

    def test_shift_moves_every_center(self):
        base = gen_blobs(12, 3, 2, 0.0, 0.0, seed=1)
        moved = gen_blobs(12, 3, 2, [2.0, -1.0], 0.0, seed=1)
        np.testing.assert_allclose(moved.features - base.features,
                                   np.tile([2.0, -1.0], (12, 1)), atol=1e-12)

    def test_empirical_means_near_centers(self):
        n, C, sd = 3000, 3, 0.5
        centers = gen_blobs(C, C, 2, 0.0, 0.0, seed=0).features
        ds = gen_blobs(n, C, 2, 0.0, sd, seed=8)
        bound = 3.0 * sd / np.sqrt(n / C)
        for c in range(C):
            mean_c = ds.features[ds.labels == c].mean(axis=0)
            assert np.all(np.abs(mean_c - centers[c]) < bound)

    def test_balanced_with_remainder_to_last_class(self):
        ds = gen_blobs(11, 3, 2, 0.0, 1.0, seed=9)
        counts = [int(np.count_nonzero(ds.labels == c)) for c in range(3)]
        assert counts == [3, 3, 5]

    def test_invalid_shapes(self):
        with pytest.raises(ValidationError):
            gen_blobs(2, 3, 2, 0.0, 1.0, seed=0)
        with pytest.raises(ValidationError):
            gen_blobs(4, 2, 0, 0.0, 1.0, seed=0)


class TestCsvRoundTrip:
    def test_round_trip_exact(self, tmp_path):
        ds = gen_two_moons(30, 0.1, 15.0, seed=10)
        path = tmp_path / "moons.csv"
        save_csv(ds, path)
        loaded = load_csv(path)
        np.testing.assert_array_equal(loaded.features, ds.features)
        np.testing.assert_array_equal(loaded.labels, ds.labels)
        assert loaded.class_count == 2

    def test_round_trip_unlabeled_rows(self, tmp_path):
        ds = Dataset(np.array([[0.5, 1.0], [2.0, -3.0]]),
                     np.array([-1, -1]), class_count=0, name="u")
        path = tmp_path / "u.csv"
        save_csv(ds, path)
        loaded = load_csv(path)
        assert loaded.labels.tolist() == [-1, -1]
        assert not loaded.is_labeled

    def test_header_only_is_empty_dataset(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("label,f0,f1\n")
        loaded = load_csv(path)
        assert loaded.n == 0 and loaded.dim == 2

    def test_wrong_column_count_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,f0,f1\n0,1.0,2.0\n1,3.0\n")
        with pytest.raises(ParseError, match="line 3"):
            load_csv(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,x0,x1\n0,1.0,2.0\n")
        with pytest.raises(ParseError, match="line 1"):
            load_csv(path)

    def test_label_exceeding_class_count_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,f0\n0,1.0\n3,2.0\n")
        with pytest.raises(ParseError, match="line 3"):
            load_csv(path, class_count=2)

    def test_non_numeric_feature_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,f0\n0,abc\n")
        with pytest.raises(ParseError, match="line 2"):
            load_csv(path)
