"""Hypothesis checks of the structural invariants."""

import math
import pathlib
import tempfile

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gpsindy.evalbench import coeff_mse, quantile_summary
from gpsindy.funclib import LibrarySpec, build_library, term_names
from gpsindy.gpsmooth import fit_gp, posterior_mean
from gpsindy.kernels import Family, HyperParams, KernelSpec, gram
from gpsindy.sparsereg import AdmmConfig, SparseSolution, lasso_admm, soft_threshold
from gpsindy.trajdata import (NoiseSpec, TrajectoryDataset, add_noise, destandardize, load_csv,
                              save_csv, standardize)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
positive = st.floats(0.1, 5.0)


def matrices(rows=st.integers(3, 12), cols=st.integers(1, 4), elements=finite):
    return st.tuples(rows, cols).flatmap(lambda s: arrays(float, s, elements=elements))


@st.composite
def kernel_specs(draw):
    family = draw(st.sampled_from(list(Family)))
    extra = draw(positive) if family.has_extra else None
    return KernelSpec(family, HyperParams(draw(positive), draw(positive), extra, draw(positive)))


@given(arrays(float, st.integers(1, 30), elements=finite), st.floats(0, 100))
def test_soft_threshold_shrinks(a, kappa):
    s = soft_threshold(a, kappa)
    assert np.all(np.abs(s) <= np.abs(a))
    assert np.all(s * a >= 0)
    assert np.all((s == 0) == (np.abs(a) <= kappa))
    assert np.allclose(np.abs(a) - np.abs(s), np.minimum(np.abs(a), kappa))


@given(matrices(), st.data())
def test_coeff_mse_column_permutation(a, data):
    b = data.draw(arrays(float, a.shape, elements=finite))
    perm = data.draw(st.permutations(range(a.shape[1])))
    assert math.isclose(coeff_mse(a[:, perm], b[:, perm]), coeff_mse(a, b), rel_tol=1e-12,
                        abs_tol=1e-300)
    assert coeff_mse(a, b) == coeff_mse(b, a) >= 0


@given(matrices())
def test_standardize_round_trip(X):
    assume(np.all(X.std(axis=0) > 1e-3 * np.maximum(1.0, np.abs(X.mean(axis=0)))))
    Z, params = standardize(X)
    assert np.all(params.std > 0)
    assert np.allclose(Z.mean(axis=0), 0, atol=1e-9)
    back = destandardize(Z, params)
    assert np.allclose(back, X, rtol=1e-12, atol=1e-12 * np.abs(X).max())


@given(matrices(), st.integers(0, 2 ** 32), st.floats(0, 3))
def test_noise_is_bit_identical(X, seed, sigma):
    spec = NoiseSpec(sigma, seed)
    assert np.array_equal(add_noise(X, spec), add_noise(X, spec))


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 15), st.integers(1, 3), st.integers(0, 2), st.data())
def test_csv_round_trip(r, n, m, data):
    t = np.cumsum(data.draw(arrays(float, r, elements=st.floats(1e-3, 10))))
    X = data.draw(arrays(float, (r, n), elements=finite))
    Xdot = data.draw(st.one_of(st.none(), arrays(float, (r, n), elements=finite)))
    U = data.draw(arrays(float, (r, m), elements=finite)) if m else None
    ds = TrajectoryDataset(t=t, X=X, Xdot=Xdot, U=U)
    with tempfile.TemporaryDirectory() as d:
        path = pathlib.Path(d) / "d.csv"
        save_csv(ds, path)
        back = load_csv(path)
    assert np.array_equal(back.t, ds.t) and np.array_equal(back.X, ds.X)
    assert (back.Xdot is None) == (Xdot is None)
    if Xdot is not None:
        assert np.array_equal(back.Xdot, Xdot)
    assert back.m == m


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60))
def test_quantiles_are_ordered(values):
    q = quantile_summary(values)
    assert min(values) <= q["q25"] <= q["median"] <= q["q75"] <= max(values)


@settings(max_examples=50, deadline=None)
@given(kernel_specs(), st.integers(2, 12), st.integers(1, 3), st.data())
def test_gram_symmetric_psd(spec, r, d, data):
    Z = data.draw(arrays(float, (r, d), elements=st.floats(-5, 5)))
    K = gram(spec, Z)
    assert np.allclose(K, K.T, rtol=0, atol=1e-14 * spec.hyper.signal_sd ** 2)
    assert np.allclose(np.diag(K), spec.hyper.signal_sd ** 2)
    assert np.linalg.eigvalsh(K).min() > -1e-9 * spec.hyper.signal_sd ** 2 * r


@settings(max_examples=30, deadline=None)
@given(kernel_specs(), st.data())
def test_posterior_mean_linear(spec, data):
    t = np.linspace(0, 3, 9)
    a = data.draw(arrays(float, 9, elements=st.floats(-10, 10)))
    b = data.draw(arrays(float, 9, elements=st.floats(-10, 10)))
    alpha, beta = data.draw(st.floats(-3, 3)), data.draw(st.floats(-3, 3))
    ts = np.linspace(-1, 4, 7)
    lhs = posterior_mean(fit_gp(spec, t, alpha * a + beta * b), ts)
    rhs = (alpha * posterior_mean(fit_gp(spec, t, a), ts)
           + beta * posterior_mean(fit_gp(spec, t, b), ts))
    scale = 1 + np.abs(a).max() + np.abs(b).max()
    assert np.allclose(lhs, rhs, atol=1e-8 * scale * 6)


@settings(max_examples=30, deadline=None)
@given(kernel_specs(), st.data())
def test_gp_factor_reproduces_targets(spec, data):
    Z = np.linspace(0, 4, 10)[:, None]
    y = data.draw(arrays(float, 10, elements=st.floats(-5, 5)))
    fit = fit_gp(spec, Z, y)
    A = gram(spec, Z) + (spec.hyper.noise_sd ** 2 + fit.jitter) * np.eye(10)
    assert np.allclose(A @ fit.alpha, y, atol=1e-8 * (1 + np.abs(y).max()))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 3), st.booleans(), st.booleans(), st.booleans(), st.integers(1, 3),
       st.integers(0, 2), st.data())
def test_term_names_match_build(order, s, c, cross, n, m, data):
    spec = LibrarySpec(order, s, c, cross, include_control=m > 0)
    X = data.draw(arrays(float, (3, n), elements=st.floats(-2, 2)))
    U = data.draw(arrays(float, (3, m), elements=st.floats(-2, 2))) if m else None
    lib = build_library(spec, X, U)
    names = term_names(spec, n, m)
    assert lib.names == names and len(set(names)) == len(names) == lib.theta.shape[1]


@given(kernel_specs())
def test_hyper_log_round_trip(spec):
    h = spec.hyper
    back = HyperParams.from_log(spec.family, h.to_log(spec.family))
    assert math.isclose(back.signal_sd, h.signal_sd, rel_tol=1e-15)
    assert math.isclose(back.noise_sd, h.noise_sd, rel_tol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([0.01, 0.1, 1.0]))
def test_admm_solution_invariants(seed, lam):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=(30, 6))
    y = rng.normal(size=30)
    sol = lasso_admm(theta, y, lam, AdmmConfig())
    assert isinstance(sol, SparseSolution)
    assert sol.nnz == int(np.sum(np.abs(sol.xi) > sol.prune_eps))
    assert math.isfinite(sol.objective)
