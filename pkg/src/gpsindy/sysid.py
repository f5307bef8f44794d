"""The identification pipeline: smoothing, library, sparse regression, rollout.

``gpsindy_fit`` smooths states with a time-indexed GP, smooths derivatives
with a GP over time / smoothed states / controls, builds the library on the
smoothed states, and solves one LASSO problem per derivative column.
``sindy_fit`` and ``ssr_fit`` run the same regression on the raw data.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from numba import njit

from .errors import Divergence, DivergentModel, InvalidInput, InvalidTimestamps
from .funclib import LibraryMatrix, LibrarySpec, build_library, compile_terms, library_terms
from .gpsmooth import KernelInput, SmootherConfig, smooth_derivatives, smooth_states
from .odeint import rk4_step
from .sparsereg import (AdmmConfig, LassoADMM, SparseSolution, ssr_coefficient,
                        ssr_residual, stlsq)
from .trajdata import TrajectoryDataset, central_difference

__all__ = [
    "LearnedModel",
    "LambdaSchedule",
    "FitResult",
    "default_lambda_schedule",
    "gpsindy_fit",
    "sindy_fit",
    "ssr_fit",
    "cross_validate_lambda",
    "model_to_dynamics",
    "rollout",
    "rollout_model",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

METHODS = ("gpsindy", "sindy", "ssr_coeff", "ssr_res")


@dataclass(frozen=True)
class LambdaSchedule:
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise InvalidInput("lambda schedule must be nonempty")
        if any(v < 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise InvalidInput("lambda schedule must be non-negative and strictly increasing")
        object.__setattr__(self, "values", vals)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


@dataclass(eq=False)
class LearnedModel:
    """Coefficient matrix ``xi`` (p x n); column j gives the model for xdot_j."""

    xi: np.ndarray
    library: LibrarySpec
    term_names: List[str]
    state_dim: int
    control_dim: int = 0
    method: str = "gpsindy"
    lambdas: Optional[list] = None
    smoother: Optional[dict] = None

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        if self.xi.shape != (len(self.term_names), self.state_dim):
            raise InvalidInput(f"xi shape {self.xi.shape} does not match "
                               f"{len(self.term_names)} terms x {self.state_dim} states")
        if not np.all(np.isfinite(self.xi)):
            raise InvalidInput("xi contains non-finite entries")

    def nonzero_terms(self, eps: float = 1e-6) -> List[List[str]]:
        return [[self.term_names[k] for k in np.flatnonzero(np.abs(self.xi[:, j]) > eps)]
                for j in range(self.state_dim)]

    def equations(self, precision: int = 4, eps: float = 1e-6) -> List[str]:
        out = []
        for j in range(self.state_dim):
            parts = [f"{self.xi[k, j]:+.{precision}f} {self.term_names[k]}"
                     for k in np.flatnonzero(np.abs(self.xi[:, j]) > eps)]
            out.append(f"dx{j + 1}/dt = " + (" ".join(parts) if parts else "0"))
        return out

    def to_dict(self) -> dict:
        return {
            "format": "gpsindy-model/1",
            "method": self.method,
            "state_dim": self.state_dim,
            "control_dim": self.control_dim,
            "library": self.library.to_dict(),
            "term_names": list(self.term_names),
            "xi": [[float(v) for v in row] for row in self.xi],
            "lambdas": self.lambdas,
            "smoother": self.smoother,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LearnedModel":
        lib = LibrarySpec.from_dict(d["library"])
        model = cls(xi=np.array(d["xi"], dtype=float).reshape(len(d["term_names"]), d["state_dim"]),
                    library=lib, term_names=list(d["term_names"]), state_dim=int(d["state_dim"]),
                    control_dim=int(d.get("control_dim", 0)), method=d.get("method", "gpsindy"),
                    lambdas=d.get("lambdas"), smoother=d.get("smoother"))
        expected = [t.name for t in library_terms(lib, model.state_dim,
                                                  model.control_dim if lib.include_control else 0)]
        if expected != model.term_names:
            raise InvalidInput("term names do not match the library specification")
        return model


def save_model(model: LearnedModel, path) -> None:
    # json writes floats with repr, which round-trips doubles exactly
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_model(path) -> LearnedModel:
    return LearnedModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --- dynamics and rollout ------------------------------------------------------

def model_to_dynamics(model: LearnedModel) -> Callable:
    """``f(x, u) -> xdot`` evaluating only the terms with a nonzero coefficient."""
    terms = library_terms(model.library, model.state_dim,
                          model.control_dim if model.library.include_control else 0)
    active = np.flatnonzero(np.any(model.xi != 0.0, axis=1))
    n = model.state_dim
    if active.size == 0:
        return lambda x, u=None: np.zeros(n)
    g = compile_terms([terms[k] for k in active])
    C = model.xi[active]

    def f(x, u=None):
        return np.asarray(g(x, u), dtype=float) @ C

    return f


def rollout(f: Callable, x0, t, u_of_t=None) -> np.ndarray:
    """Classical RK4 along the sample times ``t``, one step per interval.

    ``u_of_t`` is either an (r, m) array of recorded controls, held constant
    over each interval, or a callable ``u(time)`` evaluated at the RK stages.
    Raises :class:`Divergence` with the step index on a non-finite state.
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise InvalidTimestamps("rollout times must be strictly increasing")
    x = np.array(x0, dtype=float).reshape(-1)
    out = np.empty((t.size, x.size))
    out[0] = x
    if u_of_t is None or callable(u_of_t):
        hold = None
        u = u_of_t if u_of_t is not None else (lambda _t: None)
    else:
        hold = np.asarray(u_of_t, dtype=float)
        if hold.ndim == 1:
            hold = hold[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, t.size):
            if hold is not None:
                ui = hold[i - 1]
                u = lambda _t, ui=ui: ui
            try:
                x = rk4_step(f, x, t[i - 1], t[i] - t[i - 1], u)
            except (OverflowError, ValueError, ZeroDivisionError):
                raise Divergence(i) from None
            if not np.all(np.isfinite(x)):
                raise Divergence(i)
            out[i] = x
    return out


def _encode(model: LearnedModel):
    """Active terms as arrays: exponents (k, n), factor code, factor source and index."""
    terms = library_terms(model.library, model.state_dim,
                          model.control_dim if model.library.include_control else 0)
    active = np.flatnonzero(np.any(model.xi != 0.0, axis=1))
    P = np.zeros((active.size, model.state_dim), dtype=np.int64)
    code = np.zeros(active.size, dtype=np.int64)
    src = np.zeros(active.size, dtype=np.int64)
    idx = np.zeros(active.size, dtype=np.int64)
    for row, k in enumerate(active):
        term = terms[k]
        for i in term.monomial:
            P[row, i] += 1
        if term.factor is not None:
            func, var, j = term.factor
            code[row] = {"id": 1, "sin": 2, "cos": 3}[func]
            src[row] = 1 if var == "u" else 0
            idx[row] = j
    return P, code, src, idx, np.ascontiguousarray(model.xi[active])


@njit(cache=True)
def _eval_model(x, u, P, code, src, idx, C, out):
    out[:] = 0.0
    for k in range(P.shape[0]):
        v = 1.0
        for i in range(P.shape[1]):
            for _ in range(P[k, i]):
                v *= x[i]
        c = code[k]
        if c != 0:
            a = u[idx[k]] if src[k] == 1 else x[idx[k]]
            if c == 1:
                v *= a
            elif c == 2:
                v *= np.sin(a)
            else:
                v *= np.cos(a)
        for j in range(out.shape[0]):
            out[j] += v * C[k, j]


@njit(cache=True)
def _rk4_hold(P, code, src, idx, C, x0, t, U):
    """RK4 with controls held at the left sample; returns (states, failing step or 0)."""
    n = x0.shape[0]
    out = np.empty((t.shape[0], n))
    out[0] = x0
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    for i in range(1, t.shape[0]):
        h = t[i] - t[i - 1]
        u = U[i - 1]
        _eval_model(x, u, P, code, src, idx, C, k1)
        _eval_model(x + 0.5 * h * k1, u, P, code, src, idx, C, k2)
        _eval_model(x + 0.5 * h * k2, u, P, code, src, idx, C, k3)
        _eval_model(x + h * k3, u, P, code, src, idx, C, k4)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for j in range(n):
            if not np.isfinite(x[j]):
                return out, i
        out[i] = x
    return out, 0


def rollout_model(model: LearnedModel, x0, t, u_of_t=None) -> np.ndarray:
    """:func:`rollout` of a learned model, compiled when controls are recorded samples.

    A callable ``u_of_t`` falls back to the generic Python rollout.
    """
    if callable(u_of_t):
        return rollout(model_to_dynamics(model), x0, t, u_of_t)
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise InvalidTimestamps("rollout times must be strictly increasing")
    x0 = np.array(x0, dtype=float).reshape(-1)
    if x0.size != model.state_dim:
        raise InvalidInput(f"x0 has {x0.size} entries, model has {model.state_dim} states")
    if u_of_t is None:
        U = np.zeros((t.size, 1))
    else:
        U = np.asarray(u_of_t, dtype=float)
        U = U[:, None] if U.ndim == 1 else U
        if U.shape[0] < max(t.size - 1, 1):
            raise InvalidInput("recorded controls are shorter than the rollout")
    U = np.ascontiguousarray(U, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out, failed = _rk4_hold(*_encode(model), x0, t, U)
    if failed:
        raise Divergence(int(failed))
    return out


# --- lambda schedule and cross-validation --------------------------------------

def zero_lambda(theta, y) -> float:
    """Smallest lambda whose LASSO solution is identically zero."""
    return float(np.max(np.abs(np.asarray(theta).T @ np.asarray(y)))) if np.size(theta) else 0.0


def default_lambda_schedule(theta, y) -> LambdaSchedule:
    """1e-6, 1e-5, ..., 1, then 11, 21, 31, ... up to the first all-zero lambda."""
    lam_zero = zero_lambda(theta, y)
    values = []
    for v in [10.0 ** k for k in range(-6, 1)]:
        values.append(v)
        if v >= lam_zero:
            return LambdaSchedule(tuple(values))
    v = 11.0
    while True:
        values.append(v)
        if v >= lam_zero:
            return LambdaSchedule(tuple(values))
        v += 10.0


@dataclass
class Candidate:
    label: float  # lambda, or active-term count for stepwise paths
    solution: SparseSolution


def _rmse(a, b) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def _model_with(xi, lib, names, n, m, method) -> LearnedModel:
    return LearnedModel(xi=xi, library=lib, term_names=names, state_dim=n, control_dim=m,
                        method=method)


def cross_validate_lambda(candidates: Sequence[Sequence[Candidate]], val: TrajectoryDataset,
                          lib: LibrarySpec, names: Sequence[str], initial: Optional[Sequence[int]] = None,
                          controls=None, method: str = "gpsindy"):
    """Pick one candidate per column by validation rollout.

    Candidates per column are ordered from least to most sparse. Columns are
    swept once in index order; for column j each candidate is swapped in, the
    model is rolled out from the first validation state, and the RMSE on state
    j is scored (divergence scores +inf). Ties go to the sparser candidate.
    ``initial`` gives the starting choice per column (default: the first).

    Returns ``(chosen indices, per-column scores)``.
    """
    n = len(candidates)
    m = val.m if lib.include_control else 0
    chosen = list(initial) if initial is not None else [0] * n
    u_sig = controls if controls is not None else val.U
    xi = np.column_stack([candidates[j][chosen[j]].solution.xi for j in range(n)])
    scores = [np.inf] * n
    for j in range(n):
        if len(candidates[j]) == 1:
            chosen[j] = 0
            xi[:, j] = candidates[j][0].solution.xi
            continue
        best, best_score = None, np.inf
        for k, cand in enumerate(candidates[j]):
            trial = xi.copy()
            trial[:, j] = cand.solution.xi
            try:
                pred = rollout_model(_model_with(trial, lib, names, n, m, method), val.X[0],
                                     val.t, u_sig)
                score = _rmse(pred[:, j], val.X[:, j])
            except Divergence:
                score = np.inf
            if not np.isfinite(score):
                continue
            if score <= best_score:
                best, best_score = k, score
        if best is None:
            raise DivergentModel(j)
        chosen[j] = best
        scores[j] = best_score
        xi[:, j] = candidates[j][best].solution.xi
    return chosen, scores


# --- fitting -------------------------------------------------------------------

@dataclass(eq=False)
class FitResult:
    """A learned model plus the intermediate arrays that produced it."""

    model: LearnedModel
    X_used: np.ndarray
    Xdot_used: np.ndarray
    theta: np.ndarray
    smoother_fits: Optional[dict] = None


def _library(lib: LibrarySpec, X, U):
    if lib.include_control and U is None:
        raise InvalidInput("library includes controls but the data has none")
    return build_library(lib, X, U if lib.include_control else None)


def _require_xdot(data: TrajectoryDataset) -> np.ndarray:
    if data.Xdot is None:
        raise InvalidInput("training data has no derivatives; difference the states first "
                           "(TrajectoryDataset.with_derivatives or the CLI's --fd flag)")
    return data.Xdot


def _column_scales(theta: np.ndarray) -> np.ndarray:
    s = np.linalg.norm(theta, axis=0)
    return np.where(s > 0, s, 1.0)


def _lasso_candidates(theta, Y, lam, admm: AdmmConfig, normalize: bool):
    """Per column, a list of (lambda, solution) pairs in increasing lambda."""
    scale = _column_scales(theta) if normalize else np.ones(theta.shape[1])
    A = theta / scale
    solver = LassoADMM(A, admm)
    out = []
    for j in range(Y.shape[1]):
        y = Y[:, j]
        sched = default_lambda_schedule(A, y) if lam is None else LambdaSchedule((lam,))
        cands, warm = [], None
        for v in sched:
            sol = solver.solve(y, v, warm)
            warm = (sol.xi, sol.diagnostics["dual"])
            if not sol.converged:
                log.debug("ADMM hit max_iter for column %d at lambda %g", j, v)
            xi = sol.xi / scale
            cands.append(Candidate(v, SparseSolution(xi=xi, objective=sol.objective,
                                                     iterations=sol.iterations,
                                                     converged=sol.converged)))
        out.append(cands)
    return out


def _validation_derivatives(val: TrajectoryDataset) -> np.ndarray:
    return val.Xdot if val.Xdot is not None else central_difference(val.X, val.t)


def _initial_choice(candidates, val: TrajectoryDataset, lib: LibrarySpec):
    """Start each column at the candidate with least validation derivative residual."""
    theta_v = _library(lib, val.X, val.U).theta
    Yv = _validation_derivatives(val)
    init = []
    for j, cands in enumerate(candidates):
        res = [float(np.sum((theta_v @ c.solution.xi - Yv[:, j]) ** 2)) for c in cands]
        init.append(int(np.argmin(res)))
    return init


def _select(candidates, val, lib, names, method, controls):
    if all(len(c) == 1 for c in candidates):
        return [0] * len(candidates)
    if val is None or val.r < 2:
        raise InvalidInput("selecting among several candidates needs a validation trajectory")
    init = _initial_choice(candidates, val, lib)
    chosen, _ = cross_validate_lambda(candidates, val, lib, names, init, controls, method)
    return chosen


def _assemble(candidates, chosen, lib, names, n, m, method, smoother=None) -> LearnedModel:
    xi = np.column_stack([candidates[j][chosen[j]].solution.xi for j in range(n)])
    labels = [float(candidates[j][chosen[j]].label) for j in range(n)]
    return LearnedModel(xi=xi, library=lib, term_names=list(names), state_dim=n, control_dim=m,
                        method=method, lambdas=labels, smoother=smoother)


def _regress(method, X, Xdot, U, val, lib, lam, admm, normalize, controls, smoother=None):
    n = X.shape[1]
    m = 0 if (U is None or not lib.include_control) else U.shape[1]
    L = _library(lib, X, U)
    cands = _lasso_candidates(L.theta, Xdot, lam, admm, normalize)
    chosen = _select(cands, val, lib, L.names, method, controls)
    return _assemble(cands, chosen, lib, L.names, n, m, method, smoother), L.theta


def gpsindy_fit(train: TrajectoryDataset, val: Optional[TrajectoryDataset], lib: LibrarySpec,
                smoother: SmootherConfig = SmootherConfig(), lam: Optional[float] = 0.1,
                admm: AdmmConfig = AdmmConfig(), normalize_columns: bool = False,
                val_controls=None) -> FitResult:
    """GP-smooth the training data, then solve a LASSO per derivative column.

    ``lam=None`` sweeps the default lambda schedule and picks each column's
    lambda by validation rollout; ``val_controls`` overrides the recorded
    validation controls (e.g. an analytic control function).
    """
    Xdot = _require_xdot(train)
    X_gp, xfits = smooth_states(train.t, train.X, smoother)
    mode = smoother.derivative_kernel_input
    if mode is KernelInput.TIME:
        Z = train.t[:, None]
    elif mode is KernelInput.SMOOTHED_STATE:
        Z = X_gp
    else:
        if train.U is None:
            raise InvalidInput("control kernel input requested but the data has no controls")
        Z = train.U
    Xdot_gp, dfits = smooth_derivatives(Xdot, Z, smoother)
    summary = {"kernel_input": mode.value,
               "states": [f.summary() for f in xfits],
               "derivatives": [f.summary() for f in dfits]}
    model, theta = _regress("gpsindy", X_gp, Xdot_gp, train.U, val, lib, lam, admm,
                            normalize_columns, val_controls, summary)
    return FitResult(model=model, X_used=X_gp, Xdot_used=Xdot_gp, theta=theta,
                     smoother_fits={"states": xfits, "derivatives": dfits})


def sindy_fit(train: TrajectoryDataset, val: Optional[TrajectoryDataset], lib: LibrarySpec,
              lam: Optional[float] = 0.1, admm: AdmmConfig = AdmmConfig(),
              normalize_columns: bool = False, val_controls=None,
              solver: str = "lasso", threshold: float = 0.1) -> FitResult:
    """SINDy on the raw data. ``solver='stlsq'`` uses thresholded least squares."""
    Xdot = _require_xdot(train)
    if solver == "stlsq":
        L = _library(lib, train.X, train.U)
        sols = [[Candidate(threshold, stlsq(L.theta, Xdot[:, j], threshold))]
                for j in range(train.n)]
        m = train.m if lib.include_control else 0
        model = _assemble(sols, [0] * train.n, lib, L.names, train.n, m, "sindy")
        return FitResult(model=model, X_used=train.X, Xdot_used=Xdot, theta=L.theta)
    if solver != "lasso":
        raise InvalidInput(f"unknown SINDy solver {solver!r}")
    model, theta = _regress("sindy", train.X, Xdot, train.U, val, lib, lam, admm,
                            normalize_columns, val_controls)
    return FitResult(model=model, X_used=train.X, Xdot_used=Xdot, theta=theta)


def ssr_fit(train: TrajectoryDataset, val: Optional[TrajectoryDataset], lib: LibrarySpec,
            variant: str = "coeff", val_controls=None) -> FitResult:
    """Stepwise sparse regression baselines on the raw data.

    ``coeff`` selects each column's sparsity level by validation rollout;
    ``res`` keeps the model with the least validation derivative residual.
    """
    Xdot = _require_xdot(train)
    L = _library(lib, train.X, train.U)
    n = train.n
    m = train.m if lib.include_control else 0
    if variant == "coeff":
        cands = []
        for j in range(n):
            path = ssr_coefficient(L.theta, Xdot[:, j])
            cands.append([Candidate(s.diagnostics["active"], s) for s in path])
        chosen = _select(cands, val, lib, L.names, "ssr_coeff", val_controls)
        model = _assemble(cands, chosen, lib, L.names, n, m, "ssr_coeff")
    elif variant == "res":
        if val is not None:
            theta_v = _library(lib, val.X, val.U).theta
            Yv = _validation_derivatives(val)
        cands = []
        for j in range(n):
            if val is None:
                sol = ssr_residual(L.theta, Xdot[:, j])
            else:
                sol = ssr_residual(L.theta, Xdot[:, j], theta_v, Yv[:, j])
            cands.append([Candidate(sol.diagnostics["active"], sol)])
        model = _assemble(cands, [0] * n, lib, L.names, n, m, "ssr_res")
    else:
        raise InvalidInput(f"unknown SSR variant {variant!r}")
    return FitResult(model=model, X_used=train.X, Xdot_used=Xdot, theta=L.theta)


def fit_method(method: str, train, val, lib, smoother=SmootherConfig(), lam=0.1,
               admm=AdmmConfig(), normalize_columns=False, val_controls=None) -> FitResult:
    """Dispatch on a method tag from :data:`METHODS`."""
    if method == "gpsindy":
        return gpsindy_fit(train, val, lib, smoother, lam, admm, normalize_columns, val_controls)
    if method == "sindy":
        return sindy_fit(train, val, lib, lam, admm, normalize_columns, val_controls)
    if method == "ssr_coeff":
        return ssr_fit(train, val, lib, "coeff", val_controls)
    if method == "ssr_res":
        return ssr_fit(train, val, lib, "res", val_controls)
    raise InvalidInput(f"unknown method {method!r}; choose from {METHODS}")
