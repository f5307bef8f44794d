"""Stationary covariance functions and Gram-matrix assembly.

All five families take an isotropic lengthscale. Four depend on the inputs
only through the Euclidean distance ``r = |a - b|``:

    SE          sf^2 exp(-r^2 / (2 l^2))
    Matern12    sf^2 exp(-r / l)
    Matern32    sf^2 (1 + sqrt(3) r / l) exp(-sqrt(3) r / l)
    RQ          sf^2 (1 + r^2 / (2 alpha l^2))^(-alpha)

The periodic family sums over coordinates instead,

    Periodic    sf^2 exp(-2 sum_d sin^2(pi |a_d - b_d| / p) / l^2)

which equals the distance form in one dimension. The distance form itself is
not positive semidefinite once inputs have two or more coordinates.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from .errors import DimensionError, InvalidInput

__all__ = ["Family", "HyperParams", "KernelSpec", "eval_kernel", "gram", "gram_log_grads"]

SQRT3 = np.sqrt(3.0)


class Family(str, enum.Enum):
    SE = "SquaredExponential"
    MATERN12 = "Matern12"
    MATERN32 = "Matern32"
    PERIODIC = "Periodic"
    RQ = "RationalQuadratic"

    @property
    def has_extra(self) -> bool:
        return self in (Family.PERIODIC, Family.RQ)

    @classmethod
    def parse(cls, name: "str | Family") -> "Family":
        if isinstance(name, Family):
            return name
        key = str(name).strip().lower().replace("_", "").replace("-", "").replace(" ", "")
        aliases = {
            "se": cls.SE, "squaredexponential": cls.SE, "rbf": cls.SE,
            "matern12": cls.MATERN12, "exponential": cls.MATERN12,
            "matern32": cls.MATERN32,
            "periodic": cls.PERIODIC, "per": cls.PERIODIC,
            "rq": cls.RQ, "rationalquadratic": cls.RQ,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InvalidInput(f"unknown kernel family {name!r}") from None


# Tie-break order for kernel selection.
FAMILY_ORDER = (Family.SE, Family.MATERN12, Family.MATERN32, Family.PERIODIC, Family.RQ)


@dataclass(frozen=True)
class HyperParams:
    """Positive kernel hyperparameters.

    ``extra`` is the period (Periodic) or the shape alpha (RQ) and is ignored
    by the other families.
    """

    signal_sd: float
    lengthscale: float
    extra: Optional[float] = None
    noise_sd: float = 0.0

    def __post_init__(self):
        if not (self.signal_sd > 0 and self.lengthscale > 0):
            raise InvalidInput("signal_sd and lengthscale must be positive")
        if self.extra is not None and not self.extra > 0:
            raise InvalidInput("extra hyperparameter must be positive")
        if not self.noise_sd >= 0:
            raise InvalidInput("noise_sd must be non-negative")

    def to_log(self, family: Family) -> np.ndarray:
        """Log-space vector ``[log sf, log l, (log extra), log sn]``."""
        vals = [self.signal_sd, self.lengthscale]
        if family.has_extra:
            vals.append(self.extra)
        vals.append(self.noise_sd)
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(vals, dtype=float))

    @classmethod
    def from_log(cls, family: Family, theta) -> "HyperParams":
        v = np.exp(np.asarray(theta, dtype=float))
        if family.has_extra:
            return cls(float(v[0]), float(v[1]), float(v[2]), float(v[3]))
        return cls(float(v[0]), float(v[1]), None, float(v[2]))


@dataclass(frozen=True)
class KernelSpec:
    family: Family
    hyper: HyperParams

    def __post_init__(self):
        fam = Family.parse(self.family)
        object.__setattr__(self, "family", fam)
        if fam.has_extra and self.hyper.extra is None:
            raise InvalidInput(f"{fam.value} kernel requires the extra hyperparameter")

    def to_dict(self) -> dict:
        h = self.hyper
        d = {"family": self.family.value, "signal_sd": h.signal_sd,
             "lengthscale": h.lengthscale, "noise_sd": h.noise_sd}
        if self.family.has_extra:
            d["period" if self.family is Family.PERIODIC else "alpha"] = h.extra
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        fam = Family.parse(d["family"])
        extra = d.get("period", d.get("alpha"))
        return cls(fam, HyperParams(float(d["signal_sd"]), float(d["lengthscale"]),
                                    None if extra is None else float(extra),
                                    float(d.get("noise_sd", 0.0))))


def _profile(family: Family, h: HyperParams, D: np.ndarray) -> np.ndarray:
    """Kernel value as a function of the distance matrix ``D`` (unit signal)."""
    l = h.lengthscale
    if family is Family.SE:
        return np.exp(-0.5 * (D / l) ** 2)
    if family is Family.MATERN12:
        return np.exp(-D / l)
    if family is Family.MATERN32:
        a = SQRT3 * D / l
        return (1.0 + a) * np.exp(-a)
    if family is Family.PERIODIC:
        return np.exp(-2.0 * _periodic_sum(D, h.extra) / (l * l))
    if family is Family.RQ:
        return (1.0 + D * D / (2.0 * h.extra * l * l)) ** (-h.extra)
    raise InvalidInput(f"unknown family {family}")


def _periodic_sum(D: np.ndarray, p: float) -> np.ndarray:
    """``sum_d sin^2(pi D_d / p)``; D is a distance matrix or a stack of per-coordinate ones."""
    s = np.sin(np.pi * D / p)
    s = s * s
    return s.sum(axis=0) if D.ndim == 3 else s


def _as_points(A, name: str) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise DimensionError(f"{name} must be a matrix of points")
    return A


def eval_kernel(spec: KernelSpec, a, b) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"input dimensions differ: {a.shape} vs {b.shape}")
    if spec.family is Family.PERIODIC and a.size > 1:
        r = np.abs(a - b)[:, None, None]
    else:
        r = np.array([[np.sqrt(np.sum((a - b) ** 2))]])
    return float(spec.hyper.signal_sd ** 2 * _profile(spec.family, spec.hyper, r)[0, 0])


@njit(cache=True)
def _periodic_terms(A, B, p):
    """``S = sum_d sin^2(w_d)`` and ``G = sum_d w_d sin(w_d) cos(w_d)`` with
    ``w_d = pi (A_id - B_jd) / p``.

    sin and cos of each coordinate are taken once per point and combined with
    the angle-difference identities, so the pairwise work is arithmetic only.
    """
    r, d = A.shape
    s = B.shape[0]
    c = np.pi / p
    sa, ca = np.sin(c * A), np.cos(c * A)
    sb, cb = np.sin(c * B), np.cos(c * B)
    S = np.zeros((r, s))
    G = np.zeros((r, s))
    for i in range(r):
        for j in range(s):
            acc_s = 0.0
            acc_g = 0.0
            for k in range(d):
                sn = sa[i, k] * cb[j, k] - ca[i, k] * sb[j, k]
                cs = ca[i, k] * cb[j, k] + sa[i, k] * sb[j, k]
                acc_s += sn * sn
                acc_g += c * (A[i, k] - B[j, k]) * sn * cs
            S[i, j] = acc_s
            G[i, j] = acc_g
    return S, G


def _distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix."""
    if A.shape[1] == 1:
        return np.abs(A[:, 0][:, None] - B[:, 0][None, :])
    return cdist(A, B)


def gram(spec: KernelSpec, A, B=None) -> np.ndarray:
    """Noise-free covariance matrix ``K[i, j] = k(A_i, B_j)``."""
    A = _as_points(A, "A")
    B = A if B is None else _as_points(B, "B")
    if A.shape[1] != B.shape[1]:
        raise DimensionError(f"column dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    h = spec.hyper
    if spec.family is Family.PERIODIC:
        S, _ = _periodic_terms(A, B, float(h.extra))
        K = h.signal_sd ** 2 * np.exp(-2.0 * S / (h.lengthscale * h.lengthscale))
    else:
        K = h.signal_sd ** 2 * _profile(spec.family, h, _distances(A, B))
    if B is A:
        K = 0.5 * (K + K.T)
    return K


def gram_log_grads(spec: KernelSpec, Z, D: np.ndarray | None = None):
    """Gram matrix of ``Z`` with its derivatives w.r.t. the log hyperparameters.

    Returns ``(K, [dK/dlog sf, dK/dlog l, (dK/dlog extra)])``; the noise term
    is not included.
    """
    Z = _as_points(Z, "Z")
    h, fam = spec.hyper, spec.family
    sf2, l = h.signal_sd ** 2, h.lengthscale
    if fam is Family.PERIODIC:
        S, G = _periodic_terms(Z, Z, float(h.extra))  # G = d(-S)/dlog p
        S, G = 0.5 * (S + S.T), 0.5 * (G + G.T)
        K = sf2 * np.exp(-2.0 * S / (l * l))
        return K, [2.0 * K, K * 4.0 * S / (l * l), K * 4.0 * G / (l * l)]
    if D is None:
        D = _distances(Z, Z)
    K = sf2 * _profile(fam, h, D)
    grads = [2.0 * K]
    if fam is Family.SE:
        grads.append(K * (D / l) ** 2)
    elif fam is Family.MATERN12:
        grads.append(K * D / l)
    elif fam is Family.MATERN32:
        a = SQRT3 * D / l
        grads.append(sf2 * a * a * np.exp(-a))
    elif fam is Family.RQ:
        alpha = h.extra
        B = 1.0 + D * D / (2.0 * alpha * l * l)
        grads.append(sf2 * B ** (-alpha - 1.0) * D * D / (l * l))
        grads.append(K * alpha * (-np.log(B) + (B - 1.0) / B))
    return K, grads
