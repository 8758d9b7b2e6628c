import numpy as np
import pytest

from classifier import LinearModel, make_dataset, train_linear_svm
from data import (
    ProtocolSpec,
    ShiftSpec,
    generate_shift,
    load_features,
    load_labeled,
    load_labels,
    load_model,
    make_shift_spec,
    save_features,
    save_labels,
    save_model,
    subsample,
)
from errors import DegenerateLabelsError, InvalidInputError, ParseError, ProtocolError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestFeatureFiles:
    def test_text_two_by_two(self, tmp_path):
        F = load_features(write(tmp_path / "f.txt", "2 2\n1 2\n3 4\n"))
        np.testing.assert_array_equal(F, [[1.0, 2.0], [3.0, 4.0]])

    def test_trailing_blank_lines(self, tmp_path):
        F = load_features(write(tmp_path / "f.txt", "1 3\n0.5 -1 2e3\n\n\n"))
        np.testing.assert_array_equal(F, [[0.5, -1.0, 2000.0]])

    def test_empty_file(self, tmp_path):
        with pytest.raises(ParseError, match="empty"):
            load_features(write(tmp_path / "f.txt", ""))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_features(tmp_path / "absent.txt")

    def test_ragged_row(self, tmp_path):
        with pytest.raises(ParseError, match="row 2"):
            load_features(write(tmp_path / "f.txt", "2 2\n1 2\n3\n"))

    def test_non_numeric_cell(self, tmp_path):
        with pytest.raises(ParseError, match="row 1, column 2"):
            load_features(write(tmp_path / "f.txt", "1 2\n1 abc\n"))

    def test_nan_cell(self, tmp_path):
        with pytest.raises(ParseError, match="row 2, column 1"):
            load_features(write(tmp_path / "f.txt", "2 2\n1 2\nnan 4\n"))

    def test_row_count_mismatch(self, tmp_path):
        with pytest.raises(ParseError, match="declares 3 rows"):
            load_features(write(tmp_path / "f.txt", "3 1\n1\n2\n"))

    def test_bad_header(self, tmp_path):
        with pytest.raises(ParseError, match="header"):
            load_features(write(tmp_path / "f.txt", "two 2\n1 2\n"))

    def test_text_round_trip_is_exact(self, tmp_path):
        F = np.random.default_rng(0).standard_normal((7, 3)) * 1e5
        save_features(tmp_path / "f.txt", F, "text")
        np.testing.assert_array_equal(load_features(tmp_path / "f.txt"), F)

    def test_binary_round_trip_is_bit_identical(self, tmp_path):
        F = np.random.default_rng(1).standard_normal((50, 10))
        save_features(tmp_path / "a.bin", F, "bin")
        loaded = load_features(tmp_path / "a.bin")
        assert loaded.tobytes() == F.tobytes()
        save_features(tmp_path / "b.bin", loaded, "bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    def test_truncated_binary(self, tmp_path):
        save_features(tmp_path / "a.bin", np.ones((3, 3)), "bin")
        raw = (tmp_path / "a.bin").read_bytes()
        (tmp_path / "a.bin").write_bytes(raw[:-8])
        with pytest.raises(ParseError, match="bytes"):
            load_features(tmp_path / "a.bin")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(InvalidInputError):
            save_features(tmp_path / "f", np.ones((1, 1)), "hdf5")


class TestLabels:
    def test_two_classes(self, tmp_path):
        write(tmp_path / "f.txt", "3 1\n0\n1\n2\n")
        write(tmp_path / "y.txt", "0\n1\n0\n")
        data = load_labeled(tmp_path / "f.txt", tmp_path / "y.txt")
        assert data.n_classes == 2
        np.testing.assert_array_equal(data.labels, [0, 1, 0])

    def test_count_mismatch(self, tmp_path):
        write(tmp_path / "f.txt", "2 1\n0\n1\n")
        write(tmp_path / "y.txt", "0\n1\n1\n")
        with pytest.raises(ParseError, match="3 labels for 2 rows"):
            load_labeled(tmp_path / "f.txt", tmp_path / "y.txt")

    def test_gap_in_labels(self, tmp_path):
        write(tmp_path / "f.txt", "2 1\n0\n1\n")
        write(tmp_path / "y.txt", "0\n2\n")
        data = load_labeled(tmp_path / "f.txt", tmp_path / "y.txt")
        assert data.n_classes == 3
        with pytest.raises(DegenerateLabelsError):
            train_linear_svm(data, 1.0)

    def test_negative_label(self, tmp_path):
        with pytest.raises(ParseError, match="negative"):
            load_labels(write(tmp_path / "y.txt", "0\n-1\n"))

    def test_non_integer_label(self, tmp_path):
        with pytest.raises(ParseError, match="line 2"):
            load_labels(write(tmp_path / "y.txt", "0\n1.5\n"))

    def test_round_trip(self, tmp_path):
        save_labels(tmp_path / "y.txt", [3, 0, 2])
        np.testing.assert_array_equal(load_labels(tmp_path / "y.txt"), [3, 0, 2])


class TestModelFiles:
    def test_round_trip(self, tmp_path):
        model = LinearModel(np.arange(6.0).reshape(3, 2), np.array([0.5, -1.0, 2.0]), 0.1, 3)
        save_model(tmp_path / "m.bin", model)
        loaded = load_model(tmp_path / "m.bin")
        np.testing.assert_array_equal(loaded.weights, model.weights)
        np.testing.assert_array_equal(loaded.biases, model.biases)
        assert loaded.C == 0.1
        assert loaded.n_classes == 3

    def test_single_direction_is_binary(self, tmp_path):
        save_model(tmp_path / "m.bin", LinearModel(np.ones((1, 4)), np.zeros(1), 1.0, 2))
        assert load_model(tmp_path / "m.bin").n_classes == 2

    def test_features_file_is_not_a_model(self, tmp_path):
        save_features(tmp_path / "f.bin", np.ones((2, 2)), "bin")
        with pytest.raises(ParseError, match="magic"):
            load_model(tmp_path / "f.bin")


def grouped(counts, dim=2, seed=0):
    labels = np.repeat(np.arange(len(counts)), counts)
    features = np.random.default_rng(seed).standard_normal((labels.size, dim))
    return make_dataset(features, labels)


class TestSubsample:
    def test_per_class_histogram(self):
        picked = subsample(grouped([30, 12, 50]), 10, seed=0)
        np.testing.assert_array_equal(picked.class_counts(), [10, 10, 10])

    def test_rows_come_from_the_pool(self):
        data = grouped([15, 15])
        picked = subsample(data, 5, seed=1)
        pool = {tuple(row) for row in data.features}
        assert all(tuple(row) in pool for row in picked.features)
        assert len({tuple(row) for row in picked.features}) == 10

    def test_whole_class_is_a_permutation(self):
        data = grouped([8, 8])
        picked = subsample(data, 8, seed=2)
        assert sorted(map(tuple, picked.features)) == sorted(map(tuple, data.features))

    def test_deterministic(self):
        data = grouped([40, 40, 40])
        a, b = subsample(data, 20, seed=3), subsample(data, 20, seed=3)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_seed_changes_draw(self):
        data = grouped([40, 40])
        assert not np.array_equal(subsample(data, 10, seed=4).features, subsample(data, 10, seed=5).features)

    def test_absent_class_is_skipped(self):
        data = make_dataset(np.eye(4), [0, 0, 2, 2], n_classes=3)
        np.testing.assert_array_equal(subsample(data, 2, seed=0).class_counts(), [2, 0, 2])

    def test_class_too_small(self):
        with pytest.raises(ProtocolError, match="class 1"):
            subsample(grouped([20, 5]), 8, seed=0)


class TestProtocolSpec:
    def test_defaults(self):
        protocol = ProtocolSpec()
        assert (protocol.per_class, protocol.trials, protocol.lam) == (20, 20, 1.0)

    def test_trial_seeds(self):
        protocol = ProtocolSpec(seed=10)
        assert [protocol.trial_seed(t) for t in range(3)] == [10, 11, 12]

    def test_per_domain_override(self):
        protocol = ProtocolSpec(per_domain={"D": 8})
        assert protocol.per_class_for("D") == 8
        assert protocol.per_class_for("A") == 20

    @pytest.mark.parametrize("kwargs", [
        {"trials": 0},
        {"mode": "bootstrap"},
        {"per_class": 0},
        {"lam": -1.0},
        {"c_grid": ()},
        {"folds": 1},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ProtocolError):
            ProtocolSpec(**kwargs)


class TestSyntheticShift:
    def test_shapes_and_labels(self):
        source, target = generate_shift(make_shift_spec(dim=5, n_classes=3, per_class=40, seed=1))
        assert source.features.shape == target.features.shape == (120, 5)
        np.testing.assert_array_equal(source.class_counts(), [40, 40, 40])
        np.testing.assert_array_equal(source.labels, target.labels)

    def test_deterministic(self):
        spec = make_shift_spec(seed=3, per_class=50)
        (s1, t1), (s2, t2) = generate_shift(spec), generate_shift(make_shift_spec(seed=3, per_class=50))
        np.testing.assert_array_equal(s1.features, s2.features)
        np.testing.assert_array_equal(t1.features, t2.features)
        np.testing.assert_array_equal(spec.target_map, make_shift_spec(seed=3).target_map)

    def test_random_map_condition(self):
        spec = make_shift_spec(dim=8, seed=4, stretch=25.0)
        assert spec.condition_number == pytest.approx(25.0)
        singular = np.linalg.svd(spec.target_map, compute_uv=False)
        np.testing.assert_allclose(singular[1:], np.ones(7), atol=1e-9)

    def test_rotation_is_bounded(self):
        spec = make_shift_spec(dim=10, seed=8, stretch=1.0, max_angle=0.05)
        R = spec.target_map
        np.testing.assert_allclose(R @ R.T, np.eye(10), atol=1e-10)
        assert np.linalg.norm(R - np.eye(10), 2) <= 0.05 + 1e-9

    def test_zero_angle_map_is_symmetric(self):
        M = make_shift_spec(dim=6, seed=9, max_angle=0.0).target_map
        np.testing.assert_allclose(M, M.T, atol=1e-12)
        assert np.linalg.eigvalsh(M).min() == pytest.approx(1.0)

    @pytest.mark.parametrize("kwargs", [{"stretch": 0.0}, {"max_angle": -0.1}, {"max_angle": 4.0}])
    def test_rejects_map_parameters(self, kwargs):
        with pytest.raises(InvalidInputError):
            make_shift_spec(**kwargs)

    def test_identity_map_keeps_class_means(self):
        source, target = generate_shift(make_shift_spec(dim=3, n_classes=2, per_class=3000, noise=0.0,
                                                        map_kind="identity", seed=5))
        for c in range(2):
            diff = source.features[source.labels == c].mean(0) - target.features[target.labels == c].mean(0)
            assert np.abs(diff).max() < 0.15

    def test_scaled_map_scales_covariance(self):
        source, target = generate_shift(make_shift_spec(dim=5, n_classes=4, per_class=500, noise=0.0,
                                                        map_kind="scaled", map_scale=2.0, seed=6))
        expected = 4 * np.cov(source.features, rowvar=False)
        cov_t = np.cov(target.features, rowvar=False)
        assert np.abs(cov_t - expected).max() <= 0.1 * np.abs(expected).max()

    def test_random_map_moves_covariance(self):
        spec = make_shift_spec(dim=10, n_classes=4, per_class=1250, seed=7)
        source, target = generate_shift(spec)
        assert target.n == 5000
        M = spec.target_map
        cov_s = np.cov(source.features, rowvar=False)
        cov_t = np.cov(target.features, rowvar=False)
        assert np.linalg.norm(cov_t - M @ cov_s @ M.T) <= 0.1 * np.linalg.norm(cov_t)

    def test_unknown_map_kind(self):
        with pytest.raises(InvalidInputError):
            make_shift_spec(map_kind="shear")

    def test_singular_map(self):
        with pytest.raises(InvalidInputError):
            ShiftSpec(dim=2, n_classes=2, per_class=5, separation=1.0, target_map=np.zeros((2, 2)),
                      noise=0.0, seed=0)
