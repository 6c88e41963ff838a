import numpy as np
import pandas as pd
import pytest

from openloop_fw import exceptions
from openloop_fw.datasets import (
    load_dense_csv,
    load_movielens,
    synth_regression,
    synthetic_bundle,
    write_movielens,
    zscore,
)
from openloop_fw.objectives import CompletionObjective, RegressionObjective


@pytest.fixture
def toy_csv(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("a,b,target\n1,2,0\n2,4,1\n3,9,5\n")
    return path


@pytest.fixture
def housing_csv(tmp_path):
    """Same shape as the classic housing data: 506 rows, 13 features and a target."""
    rng = np.random.default_rng(11)
    frame = pd.DataFrame(rng.normal(size=(506, 13)), columns=[f"x{i}" for i in range(13)])
    frame["medv"] = frame.to_numpy() @ rng.normal(size=13) + rng.normal(size=506)
    path = tmp_path / "housing.csv"
    frame.to_csv(path, index=False)
    return path


class TestDenseCsv:
    def test_toy_values(self, toy_csv):
        bundle = load_dense_csv(toy_csv, "target")
        assert bundle.shape == (3, 2)
        assert bundle.feature_names == ("a", "b")
        expected = np.array([-1.0, 0.0, 1.0]) / np.sqrt(2.0 / 3.0)
        np.testing.assert_allclose(bundle.A[:, 0], expected, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(bundle.A.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(bundle.A.std(axis=0), 1.0, rtol=1e-12)
        np.testing.assert_allclose(bundle.y.std(), 1.0, rtol=1e-12)
        assert bundle.means["b"] == 5.0

    def test_housing_shape(self, housing_csv):
        bundle = load_dense_csv(housing_csv, "medv")
        assert bundle.shape == (506, 13)
        assert bundle.n_observed == 506
        assert isinstance(bundle.objective(), RegressionObjective)

    def test_zscore_is_idempotent(self, housing_csv):
        frame = pd.read_csv(housing_csv)
        once, _, _ = zscore(frame)
        twice, _, _ = zscore(once)
        np.testing.assert_allclose(twice.to_numpy(), once.to_numpy(), rtol=1e-10, atol=1e-12)

    def test_constant_column(self, tmp_path):
        path = tmp_path / "flat.csv"
        path.write_text("a,b,target\n1,7,0\n2,7,1\n3,7,5\n")
        with pytest.raises(exceptions.ZScoreDegenerate) as excinfo:
            load_dense_csv(path, "target")
        assert excinfo.value.column == "b"
        assert excinfo.value.exit_code == exceptions.EXIT_DATA

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,target\n1,2,0\n2,oops,1\n3,9,5\n")
        with pytest.raises(exceptions.ParseError) as excinfo:
            load_dense_csv(path, "target")
        assert (excinfo.value.row, excinfo.value.line, excinfo.value.column) == (1, 3, "b")
        assert excinfo.value.value == "oops"

    def test_missing_cell(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text("a,b,target\n1,2,0\n2,,1\n3,9,5\n")
        with pytest.raises(exceptions.ParseError) as excinfo:
            load_dense_csv(path, "target")
        assert excinfo.value.line == 3

    def test_missing_target(self, toy_csv):
        with pytest.raises(exceptions.ParseError):
            load_dense_csv(toy_csv, "price")

    def test_only_target(self, tmp_path):
        path = tmp_path / "target_only.csv"
        path.write_text("target\n1\n2\n")
        with pytest.raises(exceptions.ParseError):
            load_dense_csv(path, "target")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(exceptions.ParseError):
            load_dense_csv(path, "target")

    def test_missing_file(self, tmp_path):
        with pytest.raises(exceptions.DatasetNotFound):
            load_dense_csv(tmp_path / "absent.csv", "target")


class TestMovieLens:
    def test_remaps_ids(self, tmp_path):
        path = write_movielens(tmp_path / "u.data", [4, 4, 9], [0, 6, 6], [5, 3, 1])
        bundle = load_movielens(path)
        assert bundle.shape == (2, 2)
        np.testing.assert_array_equal(bundle.row_index, [0, 0, 1])
        np.testing.assert_array_equal(bundle.col_index, [0, 1, 1])
        np.testing.assert_array_equal(bundle.values, [5.0, 3.0, 1.0])
        assert isinstance(bundle.objective(rho=1.0), CompletionObjective)

    def test_layout(self, tmp_path):
        path = write_movielens(tmp_path / "u.data", [0], [2], [4])
        assert path.read_text() == "1\t3\t4\t0\n"

    def test_subsample(self, ratings_file):
        full = load_movielens(ratings_file)
        assert full.shape == (30, 40)
        small = load_movielens(ratings_file, subsample=(10, 15, 7))
        assert small.rows <= 10
        assert small.cols <= 15
        assert small.n_observed < full.n_observed

    def test_subsample_is_deterministic(self, ratings_file):
        first = load_movielens(ratings_file, subsample=(10, 15, 7))
        second = load_movielens(ratings_file, subsample=(10, 15, 7))
        np.testing.assert_array_equal(first.row_index, second.row_index)
        np.testing.assert_array_equal(first.col_index, second.col_index)
        np.testing.assert_array_equal(first.values, second.values)

    def test_subsample_keeps_the_densest_users(self, tmp_path):
        rows = [0] * 5 + [1] * 1 + [2] * 3
        cols = list(range(5)) + [0] + [0, 1, 2]
        path = write_movielens(tmp_path / "u.data", rows, cols, [3] * 9)
        bundle = load_movielens(path, subsample=(2, 10, 0))
        assert bundle.n_observed == 8

    def test_malformed_row(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("1\t1\t5\t0\n1\t2\tabc\t0\n")
        with pytest.raises(exceptions.ParseError) as excinfo:
            load_movielens(path)
        assert excinfo.value.line == 2

    def test_missing_field(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("1\t1\t5\t0\n2\t2\t4\t0\n3\t1\n")
        with pytest.raises(exceptions.ParseError) as excinfo:
            load_movielens(path)
        assert excinfo.value.line == 3

    def test_empty_file(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("")
        with pytest.raises(exceptions.ParseError, match="no observations") as excinfo:
            load_movielens(path)
        assert excinfo.value.exit_code == exceptions.EXIT_DATA

    def test_blank_lines_only(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("\n\n")
        with pytest.raises(exceptions.ParseError, match="no observations"):
            load_movielens(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(exceptions.DatasetNotFound):
            load_movielens(tmp_path / "u.data")

    def test_invalid_caps(self, ratings_file):
        with pytest.raises(exceptions.InvalidParameter):
            load_movielens(ratings_file, subsample=(0, 5, 1))


class TestSynthetic:
    def test_identity(self):
        A, y, x_unc = synth_regression(1, 20, 20, "identity")
        np.testing.assert_array_equal(A, np.eye(20))
        np.testing.assert_array_equal(x_unc, y)

    def test_gaussian_is_stationary(self):
        A, y, x_unc = synth_regression(2, 60, 10, "gaussian")
        assert A.shape == (60, 10)
        assert np.max(np.abs(A.T @ (A @ x_unc - y))) <= 1e-8 * (1 + np.max(np.abs(A.T @ y)))

    def test_deterministic(self):
        first = synth_regression(5, 30, 4, "gaussian")
        second = synth_regression(5, 30, 4, "gaussian")
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("m, n, kind", [(5, 10, "gaussian"), (10, 5, "identity"), (10, 10, "uniform")])
    def test_invalid(self, m, n, kind):
        with pytest.raises(exceptions.InvalidParameter):
            synth_regression(0, m, n, kind)

    def test_bundle(self):
        bundle = synthetic_bundle(1, 20, 20)
        assert bundle.kind == "dense"
        assert bundle.source == "synthetic:identity:1"
        assert bundle.shape == (20, 20)
