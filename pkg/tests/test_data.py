"""CSV ingestion, whitening transform, and seeded splitting."""

import numpy as np
import pytest

from gpnn import data


@pytest.fixture
def csv_file(tmp_path):
    def write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text)
        return path

    return write


class TestLoadCsv:
    def test_target_last_column(self, csv_file):
        path = csv_file("a,b,t\n1,2,3\n4,5,6\n7,8,9\n")
        ds = data.load_csv(path, -1)
        np.testing.assert_array_equal(ds.X, [[1, 2], [4, 5], [7, 8]])
        np.testing.assert_array_equal(ds.y, [3, 6, 9])
        assert ds.columns == ["a", "b"]

    def test_target_by_name_with_drops(self, csv_file):
        path = csv_file("id,a,t,b\n0,1,2,3\n1,4,5,6\n")
        ds = data.load_csv(path, "t", drop_columns=["id"])
        np.testing.assert_array_equal(ds.X, [[1, 3], [4, 6]])
        np.testing.assert_array_equal(ds.y, [2, 5])

    def test_null_row_dropped_and_counted(self, csv_file):
        path = csv_file("a,t\n1,2\n,3\n4,5\n")
        ds = data.load_csv(path, "t")
        assert ds.n == 2
        assert ds.dropped_rows == 1
        assert "1 rows dropped" in ds.provenance

    def test_unparseable_cell_dropped(self, csv_file):
        path = csv_file("a,t\n1,2\nbogus,3\n4,5\n")
        ds = data.load_csv(path, "t")
        assert ds.n == 2
        assert ds.dropped_rows == 1

    def test_missing_target(self, csv_file):
        path = csv_file("a,b\n1,2\n")
        with pytest.raises(ValueError, match="missing column"):
            data.load_csv(path, "t")

    def test_all_rows_null(self, csv_file):
        path = csv_file("a,t\n,\n,\n")
        with pytest.raises(ValueError, match="zero usable rows"):
            data.load_csv(path, "t")

    def test_headerless(self, csv_file):
        path = csv_file("1,2\n3,4\n", name="plain.csv")
        ds = data.load_csv(path, 0, has_header=False)
        np.testing.assert_array_equal(ds.y, [1, 3])
        np.testing.assert_array_equal(ds.X, [[2], [4]])

    def test_recipes_asset_loads(self):
        recipes = data.load_recipes()
        assert "poletele" in recipes
        assert recipes["poletele"]["target"] == "total_UPDRS"
        assert "subject#" in recipes["poletele"]["drop"]


class TestFitWhitening:
    def test_binary_target_population_convention(self):
        ds = data.Dataset(X=np.array([[0.0], [1.0], [2.0], [3.0]]), y=np.array([0.0, 2.0, 0.0, 2.0]))
        t = data.fit_whitening(ds)
        assert t.mu_y == 1.0
        assert t.sigma_y == 1.0
        _, yw = data.apply_whitening(t, ds.X, ds.y)
        np.testing.assert_allclose(sorted(set(yw)), [-1.0, 1.0])

    def test_train_covariance_becomes_identity_over_d(self):
        rng = np.random.default_rng(0)
        d = 4
        A = rng.normal(size=(d, d))
        X = rng.normal(size=(500, d)) @ A.T + rng.normal(size=d)
        y = rng.normal(size=500) * 3.0 + 5.0
        ds = data.Dataset(X=X, y=y)
        t = data.fit_whitening(ds)
        Xw, yw = data.apply_whitening(t, X, y)
        cov = (Xw - Xw.mean(axis=0)).T @ (Xw - Xw.mean(axis=0)) / 500
        np.testing.assert_allclose(cov, np.eye(d) / d, atol=1e-6)
        assert abs(yw.mean()) < 1e-10
        assert abs(yw.var() - 1.0) < 1e-8

    def test_identity_on_already_white_data(self):
        # data already at sample mean 0, cov (1/d) I, unit target moments:
        # whitening again is the identity map
        rng = np.random.default_rng(1)
        d, n = 3, 2000
        raw = rng.normal(size=(n, d))
        centred = raw - raw.mean(axis=0)
        M = np.linalg.cholesky(centred.T @ centred / n)
        X = centred @ np.linalg.inv(M).T / np.sqrt(d)
        y = rng.normal(size=n)
        y = (y - y.mean()) / y.std()
        t = data.fit_whitening(data.Dataset(X=X, y=y))
        Xw, yw = data.apply_whitening(t, X, y)
        assert np.max(np.abs(Xw - X)) < 1e-6
        np.testing.assert_allclose(yw, y, atol=1e-8)

    def test_requires_enough_rows(self):
        ds = data.Dataset(X=np.zeros((3, 5)), y=np.zeros(3))
        with pytest.raises(ValueError, match="d\\+1"):
            data.fit_whitening(ds)

    def test_singular_covariance_names_directions(self):
        X = np.zeros((10, 2))
        X[:, 0] = np.arange(10.0)  # second column constant: zero variance
        ds = data.Dataset(X=X, y=np.arange(10.0), columns=["good", "flat"])
        with pytest.raises(data.SingularCovarianceError, match="flat"):
            data.fit_whitening(ds)

    def test_constant_target_rejected(self):
        ds = data.Dataset(X=np.random.default_rng(2).normal(size=(10, 1)), y=np.ones(10))
        with pytest.raises(ValueError, match="variance is zero"):
            data.fit_whitening(ds)


class TestApplyInvert:
    def fitted(self, seed=3, n=200, d=3):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, d)) * np.array([1.0, 5.0, 0.2]) + 7.0
        y = rng.normal(size=n) * 2.0 - 4.0
        ds = data.Dataset(X=X, y=y)
        return data.fit_whitening(ds), X, y

    def test_round_trip(self):
        t, X, y = self.fitted()
        Xw, yw = data.apply_whitening(t, X, y)
        X2, y2 = data.invert_whitening(t, Xw, yw)
        np.testing.assert_allclose(X2, X, atol=1e-10)
        np.testing.assert_allclose(y2, y, atol=1e-10)

    def test_x_only(self):
        t, X, _ = self.fitted()
        Xw = data.apply_whitening(t, X)
        assert Xw.shape == X.shape

    def test_transform_unchanged_by_test_application(self):
        t, X, y = self.fitted()
        before = (t.mu_y, t.sigma_y, t.mu_x.copy(), t.M_inv.copy())
        rng = np.random.default_rng(4)
        data.apply_whitening(t, rng.normal(size=(50, 3)), rng.normal(size=50))
        assert t.mu_y == before[0] and t.sigma_y == before[1]
        np.testing.assert_array_equal(t.mu_x, before[2])
        np.testing.assert_array_equal(t.M_inv, before[3])

    def test_whiten_point_matches_batch(self):
        t, X, _ = self.fitted()
        for row in X[:5]:
            np.testing.assert_allclose(data.whiten_point(t, row), data.apply_whitening(t, row[None, :])[0])

    def test_denormalize_prediction_consistency(self):
        t, X, y = self.fitted()
        _, yw = data.apply_whitening(t, X, y)
        mean, var = data.denormalize_prediction(t, float(yw[0]), 1.0)
        assert mean == pytest.approx(y[0], abs=1e-10)
        assert var == pytest.approx(t.sigma_y**2, rel=1e-12)

    def test_dimension_mismatch(self):
        t, _, _ = self.fitted()
        with pytest.raises(ValueError, match="dimension mismatch"):
            data.apply_whitening(t, np.zeros((5, 7)))


class TestSplit:
    def dataset(self, n=9):
        return data.Dataset(X=np.arange(n, dtype=float)[:, None], y=np.arange(n, dtype=float))

    def test_seven_ninths(self):
        train, test = data.split(self.dataset(9), 7.0 / 9.0, seed=0)
        assert train.n == 7
        assert test.n == 2

    def test_same_seed_same_split(self):
        a_train, a_test = data.split(self.dataset(100), 0.8, seed=42)
        b_train, b_test = data.split(self.dataset(100), 0.8, seed=42)
        np.testing.assert_array_equal(a_train.y, b_train.y)
        np.testing.assert_array_equal(a_test.y, b_test.y)

    def test_disjoint_exhaustive(self):
        train, test = data.split(self.dataset(50), 0.7, seed=1)
        seen = sorted(list(train.y) + list(test.y))
        np.testing.assert_array_equal(seen, np.arange(50.0))

    def test_invalid_fraction(self):
        with pytest.raises(ValueError):
            data.split(self.dataset(10), 1.0, seed=0)
