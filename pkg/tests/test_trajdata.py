import numpy as np
import pytest

from gpsindy.errors import (DegenerateColumn, DimensionError, InsufficientData, InvalidFactor,
                            InvalidFraction, InvalidInput, InvalidTimestamps, ParseError)
from gpsindy.trajdata import (NoiseSpec, TrajectoryDataset, add_noise, central_difference,
                              destandardize, downsample, load_csv, save_csv, standardize,
                              train_test_split)


def _dataset(r=10, n=2, m=1, with_xdot=False):
    t = np.linspace(0.0, 1.0, r)
    X = np.column_stack([np.sin(t * (j + 1)) for j in range(n)])
    U = np.column_stack([np.cos(t * (j + 2)) for j in range(m)]) if m else None
    Xdot = central_difference(X, t) if with_xdot else None
    return TrajectoryDataset(t=t, X=X, Xdot=Xdot, U=U)


class TestDataset:
    def test_shapes(self):
        d = _dataset(12, 3, 2)
        assert (d.r, d.n, d.m) == (12, 3, 2)

    def test_rejects_nonincreasing_time(self):
        with pytest.raises(InvalidTimestamps):
            TrajectoryDataset(t=[0.0, 1.0, 1.0], X=np.zeros((3, 1)))

    def test_rejects_row_mismatch(self):
        with pytest.raises(DimensionError):
            TrajectoryDataset(t=[0.0, 1.0], X=np.zeros((3, 1)))
        with pytest.raises(DimensionError):
            TrajectoryDataset(t=[0.0, 1.0, 2.0], X=np.zeros((3, 1)), U=np.zeros((2, 1)))

    def test_rejects_nan(self):
        with pytest.raises(InvalidInput):
            TrajectoryDataset(t=[0.0, 1.0], X=[[0.0], [np.nan]])

    def test_with_derivatives_fills_xdot(self):
        d = _dataset().with_derivatives()
        assert d.Xdot.shape == d.X.shape


class TestCentralDifference:
    def test_exact_on_quadratic(self):
        t = np.arange(11) * 0.1
        D = central_difference(t ** 2, t)
        assert np.allclose(D, 2 * t, atol=1e-10, rtol=0)

    def test_exact_on_quadratic_nonuniform(self):
        t = np.array([0.0, 0.1, 0.25, 0.3, 0.55, 0.6, 0.9])
        D = central_difference(3 * t ** 2 - t + 1, t)
        assert np.allclose(D, 6 * t - 1, atol=1e-10, rtol=0)

    def test_constant(self):
        t = np.sort(np.random.default_rng(0).uniform(0, 5, 9))
        assert np.allclose(central_difference(np.full(9, 5.0), t), 0, atol=1e-12)

    def test_sin_error_bound(self):
        t = np.arange(0, 10.0001, 0.1)
        err = np.abs(central_difference(np.sin(t), t) - np.cos(t))[1:-1]
        assert err.max() <= 0.1 ** 2 / 6 + 1e-12

    def test_errors(self):
        with pytest.raises(InsufficientData):
            central_difference(np.zeros(2), [0.0, 1.0])
        with pytest.raises(InvalidTimestamps):
            central_difference(np.zeros(3), [0.0, 2.0, 1.0])


class TestNoise:
    def test_zero_sigma_identity(self):
        M = np.arange(6.0).reshape(3, 2)
        assert np.array_equal(add_noise(M, NoiseSpec(0.0, 5)), M)

    def test_moments(self):
        eps = add_noise(np.zeros(10_000), NoiseSpec(0.1, 42))
        assert abs(eps.mean()) < 0.005
        assert abs(eps.std() - 0.1) < 0.01

    def test_reproducible(self):
        a = add_noise(np.ones((50, 3)), NoiseSpec(0.2, 7))
        b = add_noise(np.ones((50, 3)), NoiseSpec(0.2, 7))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, add_noise(np.ones((50, 3)), NoiseSpec(0.2, 8)))

    def test_pinned_generator(self):
        # PCG64 + ziggurat; guards against silent generator changes
        expected = np.random.Generator(np.random.PCG64(3)).standard_normal(4)
        assert np.array_equal(add_noise(np.zeros(4), NoiseSpec(1.0, 3)), expected)

    def test_negative_sigma(self):
        with pytest.raises(InvalidInput):
            NoiseSpec(-0.1)


class TestSplitDownsample:
    def test_split_80_20(self):
        d = _dataset(300)
        tr, va = train_test_split(d, 0.8)
        assert tr.r == 240 and va.r == 60
        assert tr.t[-1] < va.t[0]
        assert np.array_equal(np.concatenate([tr.t, va.t]), d.t)

    def test_split_half(self):
        tr, va = train_test_split(_dataset(10), 0.5)
        assert (tr.r, va.r) == (5, 5)

    @pytest.mark.parametrize("frac", [0.0, 1.0, 1.5, -0.2])
    def test_split_bad_fraction(self, frac):
        with pytest.raises(InvalidFraction):
            train_test_split(_dataset(), frac)

    def test_downsample_rows(self):
        d = _dataset(7, with_xdot=True)
        s = downsample(d, 3)
        assert np.array_equal(s.t, d.t[[0, 3, 6]])
        assert np.array_equal(s.U, d.U[[0, 3, 6]])
        assert np.array_equal(s.Xdot, d.Xdot[[0, 3, 6]])

    def test_downsample_50_to_5_hz(self):
        t = np.arange(0, 2.0001, 0.02)
        d = TrajectoryDataset(t=t, X=np.sin(t))
        assert np.allclose(np.diff(downsample(d, 10).t), 0.2)

    def test_downsample_identity(self):
        d = _dataset()
        assert np.array_equal(downsample(d, 1).X, d.X)

    @pytest.mark.parametrize("k", [0, -1, 1.5])
    def test_downsample_bad_factor(self, k):
        with pytest.raises(InvalidFactor):
            downsample(_dataset(), k)


class TestStandardize:
    def test_hand_example(self):
        Z, p = standardize(np.array([[1.0], [2.0], [3.0]]))
        assert np.allclose(Z[:, 0], [-np.sqrt(1.5), 0, np.sqrt(1.5)])
        assert p.mean[0] == 2.0 and np.isclose(p.std[0], np.sqrt(2 / 3))

    def test_population_convention(self):
        # population std of [-1, 0, 1] is sqrt(2/3); of [-1, 1] it is 1
        Z, p = standardize(np.array([[-1.0], [1.0]]))
        assert p.std[0] == 1.0 and np.array_equal(Z[:, 0], [-1.0, 1.0])

    def test_already_standard(self):
        x = np.array([-1.0, 1.0, -1.0, 1.0])[:, None]
        Z, p = standardize(x)
        assert p.mean[0] == 0 and p.std[0] == 1 and np.array_equal(Z, x)

    def test_round_trip(self):
        X = np.random.default_rng(1).normal(3, 2, (40, 3))
        Z, p = standardize(X)
        assert np.allclose(Z.mean(0), 0, atol=1e-12) and np.allclose(Z.std(0), 1, atol=1e-12)
        assert np.allclose(destandardize(Z, p), X, rtol=1e-12, atol=0)

    def test_constant_column(self):
        X = np.column_stack([np.arange(4.0), np.full(4, 2.0)])
        with pytest.raises(DegenerateColumn) as exc:
            standardize(X)
        assert exc.value.column == 1


class TestCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        t = np.cumsum(rng.uniform(0.01, 0.1, 100))
        d = TrajectoryDataset(t=t, X=rng.normal(size=(100, 3)), Xdot=rng.normal(size=(100, 3)),
                              U=rng.normal(size=(100, 2)))
        save_csv(d, tmp_path / "d.csv")
        e = load_csv(tmp_path / "d.csv")
        for a, b in ((d.t, e.t), (d.X, e.X), (d.Xdot, e.Xdot), (d.U, e.U)):
            assert np.array_equal(a, b)

    def test_schema(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("# comment\nt,x1,x2,u1\n0,1,2,3\n1,1,2,3\n2,1,2,3\n")
        d = load_csv(p)
        assert (d.r, d.n, d.m) == (3, 2, 1) and d.Xdot is None

    def test_missing_t(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("x1,x2\n0,1\n")
        with pytest.raises(ParseError):
            load_csv(p)

    def test_ragged_row_reports_line(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("t,x1\n0,1\n1\n")
        with pytest.raises(ParseError) as exc:
            load_csv(p)
        assert exc.value.line == 3

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("t,x1\n0,1\n1,abc\n")
        with pytest.raises(ParseError) as exc:
            load_csv(p)
        assert exc.value.line == 3
