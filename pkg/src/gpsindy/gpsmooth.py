"""Zero-mean Gaussian-process smoothing of states and state derivatives.

Hyperparameters are fitted by minimizing the negative log marginal likelihood

    nll = 1/2 y^T (K + sn^2 I)^-1 y + 1/2 log|K + sn^2 I| + r/2 log(2 pi)

with L-BFGS-B on log-hyperparameters, using analytic gradients. Every kernel
family in the candidate set is fitted and the one with the lowest nll wins.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky
from scipy.linalg import lapack
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import DimensionError, IllConditioned, InsufficientData, OptimizationFailed
from .kernels import FAMILY_ORDER, Family, HyperParams, KernelSpec, _as_points, _distances, gram, gram_log_grads

__all__ = [
    "KernelInput",
    "SmootherConfig",
    "GPFit",
    "nll",
    "fit_hyperparams",
    "fit_gp",
    "select_kernel",
    "posterior_mean",
    "smooth_states",
    "smooth_derivatives",
]

LOG_2PI = math.log(2.0 * math.pi)
JITTER_MAX_FACTOR = 1e6  # jitter escalates from jitter_base up to jitter_base * 1e6
NOISE_FLOOR = 1e-6       # sn >= NOISE_FLOOR * std(y)


class KernelInput(str, enum.Enum):
    TIME = "time"
    SMOOTHED_STATE = "state"
    CONTROL = "control"

    @classmethod
    def parse(cls, v) -> "KernelInput":
        if isinstance(v, KernelInput):
            return v
        key = str(v).strip().lower()
        aliases = {"time": cls.TIME, "t": cls.TIME, "state": cls.SMOOTHED_STATE,
                   "smoothedstate": cls.SMOOTHED_STATE, "smoothed_state": cls.SMOOTHED_STATE,
                   "x_gp": cls.SMOOTHED_STATE, "control": cls.CONTROL, "u": cls.CONTROL}
        if key not in aliases:
            raise ValueError(f"unknown kernel input {v!r}; use time, state or control")
        return aliases[key]


@dataclass(frozen=True)
class SmootherConfig:
    """Smoothing options.

    ``max_fit_points`` caps the number of (evenly strided) samples used while
    optimizing hyperparameters; the posterior always conditions on all data.
    ``standardize`` runs each fit on zero-mean/unit-variance targets and inputs.
    """

    derivative_kernel_input: KernelInput = KernelInput.SMOOTHED_STATE
    candidate_families: tuple = FAMILY_ORDER
    restarts: int = 2
    jitter_base: float = 1e-10
    max_fit_points: Optional[int] = None
    standardize: bool = False

    def __post_init__(self):
        fams = tuple(Family.parse(f) for f in self.candidate_families)
        if not fams:
            raise ValueError("candidate_families must be nonempty")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        object.__setattr__(self, "candidate_families", fams)
        object.__setattr__(self, "derivative_kernel_input",
                           KernelInput.parse(self.derivative_kernel_input))


@dataclass(frozen=True, eq=False)
class GPFit:
    spec: KernelSpec
    Z: np.ndarray
    y: np.ndarray
    alpha: np.ndarray
    chol: np.ndarray
    nll: float
    jitter: float

    def summary(self) -> dict:
        d = self.spec.to_dict()
        d.update(nll=self.nll, jitter=self.jitter)
        return d


# --- factorization -----------------------------------------------------------

def _factor(A: np.ndarray, jitter_base: float = 1e-10):
    """Lower Cholesky factor of ``A + jitter I`` with escalating jitter."""
    r = A.shape[0]
    scale = max(np.trace(A) / r, np.finfo(float).tiny)
    jitter = jitter_base * scale
    limit = jitter_base * JITTER_MAX_FACTOR * scale * (1 + 1e-9)
    idx = np.diag_indices(r)
    while True:
        B = A.copy()
        B[idx] += jitter
        L, info = lapack.dpotrf(B, lower=1, clean=1, overwrite_a=1)
        if info == 0 and np.all(np.isfinite(L)):
            return L, jitter
        if jitter * 10 > limit:
            raise IllConditioned("Cholesky factorization failed", jitter=jitter)
        jitter *= 10


def _covariance(spec: KernelSpec, Z) -> np.ndarray:
    K = gram(spec, Z)
    K[np.diag_indices_from(K)] += spec.hyper.noise_sd ** 2
    return K


def nll(spec: KernelSpec, Z, y, jitter_base: float = 1e-10) -> float:
    """Negative log marginal likelihood of ``y`` under a zero-mean GP."""
    Z = _as_points(Z, "Z")
    y = np.asarray(y, dtype=float).reshape(-1)
    if Z.shape[0] != y.shape[0]:
        raise DimensionError(f"{Z.shape[0]} inputs but {y.shape[0]} targets")
    if y.shape[0] < 2:
        raise InsufficientData("need at least 2 training points")
    L, _ = _factor(_covariance(spec, Z), jitter_base)
    return _nll_from_factor(L, y)


def _nll_from_factor(L: np.ndarray, y: np.ndarray) -> float:
    alpha = cho_solve((L, True), y)
    return float(0.5 * y @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * y.shape[0] * LOG_2PI)


# --- hyperparameter optimization ---------------------------------------------

def _scales(Z: np.ndarray, y: np.ndarray):
    ys = float(np.std(y))
    peak = float(np.max(np.abs(y)))
    if ys <= 1e-12 * max(peak, 1.0):  # constant target, std is rounding noise
        ys = max(peak, 1.0)
    zs = float(np.linalg.norm(np.ptp(Z, axis=0)))
    if zs <= 0:
        zs = 1.0
    return ys, zs


class _Objective:
    """nll and gradient over scale-normalized log hyperparameters."""

    def __init__(self, family: Family, Z, y, jitter_base):
        self.family = family
        self.Z = Z
        self.jitter_base = jitter_base
        self.y = y
        # periodic gradients work from Z directly
        self.D = None if family is Family.PERIODIC else _distances(Z, Z)
        self.ys, self.zs = _scales(Z, y)
        # offsets map normalized coordinates to absolute log values
        off = [math.log(self.ys), math.log(self.zs)]
        if family is Family.PERIODIC:
            off.append(math.log(self.zs))
        elif family is Family.RQ:
            off.append(0.0)
        off.append(math.log(self.ys))
        self.offset = np.array(off)
        k = len(off)
        self.bounds = [(-7.0, 5.0)] * (k - 1) + [(math.log(NOISE_FLOOR), 3.0)]
        self.last = None

    def hyper(self, u) -> HyperParams:
        return HyperParams.from_log(self.family, np.asarray(u) + self.offset)

    def __call__(self, u):
        try:
            h = self.hyper(u)
        except ValueError:
            return 1e25, np.zeros_like(u)
        spec = KernelSpec(self.family, h)
        K, grads = gram_log_grads(spec, self.Z, self.D)
        sn2 = h.noise_sd ** 2
        A = K.copy()
        A[np.diag_indices_from(A)] += sn2
        try:
            L, _ = _factor(A, self.jitter_base)
        except IllConditioned:
            return 1e25, np.zeros_like(u)
        alpha = cho_solve((L, True), self.y)
        val = 0.5 * self.y @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * len(self.y) * LOG_2PI
        Kinv, info = lapack.dpotri(L, lower=1)
        if info != 0:
            return 1e25, np.zeros_like(u)
        # dpotri fills the lower triangle only; L has a zeroed upper triangle
        W = Kinv + Kinv.T
        W[np.diag_indices_from(W)] *= 0.5
        W -= np.outer(alpha, alpha)
        g = [0.5 * np.sum(W * dK) for dK in grads]
        g.append(0.5 * np.trace(W) * 2.0 * sn2)
        g = np.asarray(g)
        if not (np.isfinite(val) and np.all(np.isfinite(g))):
            return 1e25, np.zeros_like(u)
        self.last = (np.array(u, dtype=float), float(val))
        return float(val), g

    def value_at(self, u) -> float:
        if self.last is not None and np.array_equal(self.last[0], u):
            return self.last[1]
        return self(u)[0]


def _starts(family: Family, k: int, restarts: int) -> np.ndarray:
    """Deterministic starting points in normalized log space."""
    first = [0.0, math.log(0.1)]
    if family is Family.PERIODIC:
        first.append(math.log(0.5))
    elif family is Family.RQ:
        first.append(0.0)
    first.append(math.log(0.1))
    pts = [np.array(first)]
    if restarts > 1:
        lhs = qmc.LatinHypercube(d=k, seed=1234).random(restarts - 1)
        pts.extend(-4.0 + 6.0 * lhs)
    return np.vstack(pts)


def _subset(Z, y, max_points):
    if max_points is None or Z.shape[0] <= max_points:
        return Z, y
    idx = np.unique(np.round(np.linspace(0, Z.shape[0] - 1, max_points)).astype(int))
    return Z[idx], y[idx]


def fit_hyperparams(family, Z, y, restarts: int = 2, jitter_base: float = 1e-10,
                    max_fit_points: Optional[int] = None, _trace: Optional[list] = None):
    """Multi-start L-BFGS-B fit of one kernel family.

    Returns ``(HyperParams, nll)``; the nll is evaluated on the points used for
    fitting (a strided subset when ``max_fit_points`` is set).
    """
    family = Family.parse(family)
    Z = _as_points(Z, "Z")
    y = np.asarray(y, dtype=float).reshape(-1)
    if Z.shape[0] != y.shape[0]:
        raise DimensionError(f"{Z.shape[0]} inputs but {y.shape[0]} targets")
    if y.shape[0] < 2:
        raise InsufficientData("need at least 2 training points")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    Zf, yf = _subset(Z, y, max_fit_points)
    obj = _Objective(family, Zf, yf, jitter_base)
    best_u, best_val = None, np.inf
    for u0 in _starts(family, len(obj.offset), restarts):
        u0 = np.clip(u0, [b[0] for b in obj.bounds], [b[1] for b in obj.bounds])
        path = [obj.value_at(u0)] if _trace is not None else None
        callback = None if path is None else (lambda u: path.append(obj.value_at(u)))
        res = minimize(obj, u0, jac=True, method="L-BFGS-B", bounds=obj.bounds,
                       callback=callback,
                       options={"maxiter": 200, "ftol": 1e-10, "gtol": 1e-6})
        val = float(res.fun)
        if _trace is not None:
            _trace.append(path)
        if not np.isfinite(val) or val >= 1e24:
            continue
        if val < best_val:
            best_u, best_val = np.array(res.x), val
    if best_u is None:
        raise OptimizationFailed(f"{family.value}: every restart failed numerically")
    return obj.hyper(best_u), best_val


def fit_gp(spec: KernelSpec, Z, y, jitter_base: float = 1e-10) -> GPFit:
    """Condition a GP with fixed hyperparameters on ``(Z, y)``."""
    Z = _as_points(Z, "Z")
    y = np.asarray(y, dtype=float).reshape(-1)
    if Z.shape[0] != y.shape[0]:
        raise DimensionError(f"{Z.shape[0]} inputs but {y.shape[0]} targets")
    L, jitter = _factor(_covariance(spec, Z), jitter_base)
    alpha = cho_solve((L, True), y)
    return GPFit(spec=spec, Z=Z, y=y, alpha=alpha, chol=L,
                 nll=_nll_from_factor(L, y), jitter=jitter)


def _check_degenerate(Z: np.ndarray, jitter_base: float):
    if Z.shape[0] > 1 and np.all(Z == Z[0]):
        raise IllConditioned(
            f"kernel input has a single distinct row repeated {Z.shape[0]} times; "
            "the Gram matrix is rank one",
            jitter=jitter_base * JITTER_MAX_FACTOR,
        )


def select_kernel(Z, y, config: SmootherConfig = SmootherConfig()):
    """Fit every candidate family and keep the lowest-nll one.

    Ties go to the earlier family in SE, Matern12, Matern32, Periodic, RQ order.
    """
    Z = _as_points(Z, "Z")
    y = np.asarray(y, dtype=float).reshape(-1)
    _check_degenerate(Z, config.jitter_base)
    best = None
    errors = []
    order = [f for f in FAMILY_ORDER if f in config.candidate_families]
    for fam in order:
        try:
            h, val = fit_hyperparams(fam, Z, y, config.restarts, config.jitter_base,
                                     config.max_fit_points)
        except (OptimizationFailed, IllConditioned) as exc:
            errors.append(f"{fam.value}: {exc}")
            continue
        if best is None or val < best[1]:
            best = (KernelSpec(fam, h), val)
    if best is None:
        raise OptimizationFailed("every kernel family failed: " + "; ".join(errors))
    fit = fit_gp(best[0], Z, y, config.jitter_base)
    return best[0], fit


def posterior_mean(fit: GPFit, Zstar) -> np.ndarray:
    Zstar = _as_points(Zstar, "Zstar")
    if Zstar.shape[1] != fit.Z.shape[1]:
        raise DimensionError(f"test inputs have {Zstar.shape[1]} columns, fit has {fit.Z.shape[1]}")
    return gram(fit.spec, Zstar, fit.Z) @ fit.alpha


def _standardized(A: np.ndarray):
    mu = A.mean(axis=0)
    sd = A.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (A - mu) / sd, mu, sd


def _smooth_columns(Y: np.ndarray, Z: np.ndarray, config: SmootherConfig):
    if config.standardize:
        Z, _, _ = _standardized(Z)
    out = np.empty_like(Y)
    fits = []
    for j in range(Y.shape[1]):
        y = Y[:, j]
        mu, sd = 0.0, 1.0
        if config.standardize:
            mu, sd = float(y.mean()), float(y.std())
            sd = sd if sd > 0 else 1.0
        _, fit = select_kernel(Z, (y - mu) / sd, config)
        out[:, j] = posterior_mean(fit, Z) * sd + mu
        fits.append(fit)
    return out, fits


def smooth_states(t, X, config: SmootherConfig = SmootherConfig()):
    """Smooth each state column with a time-indexed GP, evaluated at ``t``."""
    t = np.asarray(t, dtype=float).reshape(-1, 1)
    X = _as_points(X, "X")
    if X.shape[0] != t.shape[0]:
        raise DimensionError(f"X has {X.shape[0]} rows but t has {t.shape[0]}")
    if X.shape[0] < 4:
        raise InsufficientData("state smoothing needs at least 4 samples")
    return _smooth_columns(X, t, config)


def smooth_derivatives(Xdot, kernel_input, config: SmootherConfig = SmootherConfig()):
    """Smooth each derivative column with a GP over ``kernel_input`` rows.

    ``kernel_input`` is the time column, the smoothed states, or the controls,
    according to ``config.derivative_kernel_input`` (chosen by the caller).
    """
    Xdot = _as_points(Xdot, "Xdot")
    Z = _as_points(kernel_input, "kernel_input")
    if Z.shape[0] != Xdot.shape[0]:
        raise DimensionError(f"kernel input has {Z.shape[0]} rows, Xdot has {Xdot.shape[0]}")
    return _smooth_columns(Xdot, Z, config)
