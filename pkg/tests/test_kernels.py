import math

import numpy as np
import pytest
from scipy.linalg import cholesky

from gpsindy.errors import DimensionError
from gpsindy.kernels import FAMILY_ORDER, Family, HyperParams, KernelSpec, eval_kernel, gram, gram_log_grads


def _spec(family, sf=1.0, l=1.0, extra=None, sn=0.0):
    if extra is None and Family(family).has_extra:
        extra = 1.7
    return KernelSpec(Family(family), HyperParams(sf, l, extra, sn))


@pytest.mark.parametrize("family", FAMILY_ORDER)
def test_zero_distance_gives_signal_variance(family):
    a = np.array([0.3, -1.2])
    assert math.isclose(eval_kernel(_spec(family, sf=1.3), a, a), 1.69, rel_tol=1e-14)


def test_closed_forms():
    o = np.zeros(2)
    assert math.isclose(eval_kernel(_spec("SquaredExponential"), o, np.array([1.0, 1.0])),
                        math.exp(-1), rel_tol=1e-12)
    assert math.isclose(eval_kernel(_spec(Family.MATERN32), [0.0], [1.0]),
                        (1 + math.sqrt(3)) * math.exp(-math.sqrt(3)), rel_tol=1e-12)
    assert math.isclose(eval_kernel(_spec(Family.MATERN12, l=2.0), [0.0], [1.0]),
                        math.exp(-0.5), rel_tol=1e-12)
    assert math.isclose(eval_kernel(_spec(Family.RQ, extra=2.0), [0.0], [1.0]),
                        (1 + 1 / 4) ** -2, rel_tol=1e-12)
    val = eval_kernel(_spec(Family.PERIODIC, l=0.5, extra=4.0), [0.0], [1.0])
    assert math.isclose(val, math.exp(-2 * math.sin(math.pi / 4) ** 2 / 0.25), rel_tol=1e-12)


def test_periodic_repeats():
    s = _spec(Family.PERIODIC, sf=2.0, extra=1.5)
    assert math.isclose(eval_kernel(s, [0.0], [3.0]), 4.0, rel_tol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        eval_kernel(_spec(Family.SE), [0.0, 1.0], [0.0])
    with pytest.raises(DimensionError):
        gram(_spec(Family.SE), np.zeros((3, 2)), np.zeros((3, 1)))


@pytest.mark.parametrize("family", FAMILY_ORDER)
def test_gram_matches_pointwise(family):
    rng = np.random.default_rng(2)
    A, B = rng.normal(size=(5, 2)), rng.normal(size=(7, 2))
    s = _spec(family, sf=0.8, l=0.6)
    G = gram(s, A, B)
    ref = np.array([[eval_kernel(s, a, b) for b in B] for a in A])
    assert np.allclose(G, ref, rtol=1e-12, atol=1e-14)
    assert np.allclose(gram(s, B, A), G.T, rtol=0, atol=1e-15)


@pytest.mark.parametrize("family", FAMILY_ORDER)
def test_gram_psd(family):
    A = np.random.default_rng(3).uniform(-3, 3, size=(200, 2))
    s = _spec(family, sf=1.1, l=0.9)
    K = gram(s, A)
    assert np.array_equal(K, K.T)
    cholesky(K + 1e-10 * 1.1 ** 2 * np.eye(200), lower=True)
    sn = 0.05
    assert np.linalg.eigvalsh(K + sn ** 2 * np.eye(200)).min() >= sn ** 2 * (1 - 1e-6)


@pytest.mark.parametrize("family", FAMILY_ORDER)
def test_log_gradients_match_finite_differences(family):
    Z = np.random.default_rng(4).normal(size=(6, 2))
    s = _spec(family, sf=0.9, l=0.7, extra=1.3)
    K, grads = gram_log_grads(s, Z)
    assert np.allclose(K, gram(s, Z))
    theta = s.hyper.to_log(s.family)
    for i, dK in enumerate(grads):
        h = 1e-6
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        Kp = gram(KernelSpec(s.family, HyperParams.from_log(s.family, tp)), Z)
        Km = gram(KernelSpec(s.family, HyperParams.from_log(s.family, tm)), Z)
        assert np.allclose(dK, (Kp - Km) / (2 * h), atol=1e-7)


def test_log_round_trip():
    h = HyperParams(0.7, 2.5, 3.25, 0.01)
    for fam in FAMILY_ORDER:
        back = HyperParams.from_log(fam, h.to_log(fam))
        assert math.isclose(back.signal_sd, 0.7, rel_tol=1e-15)
        assert math.isclose(back.lengthscale, 2.5, rel_tol=1e-15)


def test_spec_serialization():
    s = _spec(Family.RQ, sf=1.2, l=0.3, extra=2.0, sn=0.1)
    assert KernelSpec.from_dict(s.to_dict()) == s


@pytest.mark.parametrize("bad", [dict(signal_sd=0.0, lengthscale=1.0), dict(signal_sd=1.0, lengthscale=-1.0),
                                 dict(signal_sd=1.0, lengthscale=1.0, noise_sd=-0.1)])
def test_hyper_positivity(bad):
    with pytest.raises(ValueError):
        HyperParams(**bad)


def test_family_parse_aliases():
    assert Family.parse("se") is Family.SE
    assert Family.parse("RationalQuadratic") is Family.RQ
    with pytest.raises(ValueError):
        Family.parse("linear")
