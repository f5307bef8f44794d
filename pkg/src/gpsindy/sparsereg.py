"""Sparse regression solvers: ADMM LASSO, STLSQ and stepwise sparse regression.

The LASSO objective is ``1/2 ||theta xi - y||^2 + lam ||xi||_1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from numba import njit

from .errors import DimensionError, InvalidInput

__all__ = [
    "AdmmConfig",
    "SparseSolution",
    "LassoADMM",
    "soft_threshold",
    "lasso_admm",
    "lasso_objective",
    "least_squares",
    "stlsq",
    "ssr_coefficient",
    "ssr_residual",
]

PRUNE_EPS = 1e-6


@dataclass(frozen=True)
class AdmmConfig:
    """ADMM settings.

    ``rho`` is the starting penalty. With ``adaptive_rho`` it is rebalanced
    whenever the primal and dual residuals drift a factor of 10 apart;
    ``relaxation`` in (0, 2) is the over-relaxation weight (1 disables it).
    """

    rho: float = 1.0
    abs_tol: float = 1e-6
    rel_tol: float = 1e-4
    max_iter: int = 10_000
    adaptive_rho: bool = True
    relaxation: float = 1.6

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidInput("rho must be positive")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise InvalidInput("tolerances must be positive")
        if self.max_iter < 1:
            raise InvalidInput("max_iter must be >= 1")
        if not 0 < self.relaxation < 2:
            raise InvalidInput("relaxation must lie in (0, 2)")


@dataclass(frozen=True, eq=False)
class SparseSolution:
    xi: np.ndarray
    objective: float
    iterations: int = 0
    converged: bool = True
    prune_eps: float = PRUNE_EPS
    diagnostics: dict = field(default_factory=dict)

    @property
    def nnz(self) -> int:
        return int(np.sum(np.abs(self.xi) > self.prune_eps))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.xi) > self.prune_eps)


def soft_threshold(a, kappa):
    if np.any(np.asarray(kappa) < 0):
        raise InvalidInput("threshold must be non-negative")
    return np.sign(a) * np.maximum(np.abs(a) - kappa, 0.0)


def lasso_objective(theta, y, xi, lam) -> float:
    r = theta @ xi - y
    return float(0.5 * r @ r + lam * np.sum(np.abs(xi)))


def _check_problem(theta, y):
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if theta.ndim != 2 or theta.shape[0] != y.shape[0]:
        raise DimensionError(f"theta {theta.shape} incompatible with y of length {y.shape[0]}")
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(y))):
        raise InvalidInput("regression inputs contain non-finite values")
    return theta, y


class LassoADMM:
    """ADMM LASSO solver for a fixed ``theta``.

    ``theta^T theta`` is eigendecomposed once; the x-update applies
    ``(theta^T theta + rho I)^-1``, rebuilt from the eigenpairs only when
    ``rho`` changes.
    """

    def __init__(self, theta, config: AdmmConfig = AdmmConfig()):
        self.theta = np.asarray(theta, dtype=float)
        if self.theta.ndim != 2 or not np.all(np.isfinite(self.theta)):
            raise InvalidInput("theta must be a finite matrix")
        self.config = config
        evals, self._V = np.linalg.eigh(self.theta.T @ self.theta)
        self._evals = np.maximum(evals, 0.0)

    def solve(self, y, lam: float, warm: Optional[tuple] = None) -> SparseSolution:
        """Minimize for target ``y``; ``warm`` is a previous ``(xi, dual)`` pair."""
        theta, y = _check_problem(self.theta, y)
        if not lam >= 0:
            raise InvalidInput("lambda must be non-negative")
        cfg = self.config
        p = theta.shape[1]
        Aty = theta.T @ y
        if p == 0 or lam >= np.max(np.abs(Aty)):
            # KKT: zero is optimal; its dual makes the x-update return zero
            zero = np.zeros(p)
            return SparseSolution(xi=zero, objective=lasso_objective(theta, y, zero, lam),
                                  iterations=0, converged=True,
                                  diagnostics={"lambda": float(lam), "dual": Aty / cfg.rho,
                                               "rho": cfg.rho})
        z = np.zeros(p) if warm is None else np.array(warm[0], dtype=float)
        u = np.zeros(p) if warm is None else np.array(warm[1], dtype=float)
        it, converged, rho = _admm_loop(self._V, self._evals, Aty, z, u,
                                        float(lam), float(cfg.rho), float(cfg.abs_tol),
                                        float(cfg.rel_tol), int(cfg.max_iter),
                                        bool(cfg.adaptive_rho), float(cfg.relaxation))
        # dual reported in the scale of the configured rho so it can seed the next solve
        u *= rho / cfg.rho
        return SparseSolution(xi=z, objective=lasso_objective(theta, y, z, lam),
                              iterations=int(it), converged=bool(converged),
                              diagnostics={"lambda": float(lam), "dual": u, "rho": rho})


@njit(cache=True)
def _shifted_inverse(V, evals, rho):
    return (V / (evals + rho)) @ V.T


@njit(cache=True)
def _admm_loop(V, evals, Aty, z, u, lam, rho, abs_tol, rel_tol, max_iter, adaptive, alpha):
    """Scaled-form ADMM; updates ``z`` and ``u`` in place, returns (iters, converged, rho)."""
    p = z.shape[0]
    eps_abs = np.sqrt(p) * abs_tol
    q = np.empty(p)
    x = np.empty(p)
    M = _shifted_inverse(V, evals, rho)
    for it in range(1, max_iter + 1):
        kappa = lam / rho
        for i in range(p):
            q[i] = Aty[i] + rho * (z[i] - u[i])
        for i in range(p):
            acc = 0.0
            for k in range(p):
                acc += M[i, k] * q[k]
            x[i] = acc
        r2 = 0.0
        s2 = 0.0
        x2 = 0.0
        z2 = 0.0
        u2 = 0.0
        for i in range(p):
            xh = alpha * x[i] + (1.0 - alpha) * z[i]
            v = xh + u[i]
            if v > kappa:
                zi = v - kappa
            elif v < -kappa:
                zi = v + kappa
            else:
                zi = 0.0
            dz = zi - z[i]
            z[i] = zi
            u[i] = v - zi
            r = x[i] - zi
            r2 += r * r
            s2 += dz * dz
            x2 += x[i] * x[i]
            z2 += zi * zi
            u2 += u[i] * u[i]
        rn = np.sqrt(r2)
        sn = rho * np.sqrt(s2)
        eps_pri = eps_abs + rel_tol * np.sqrt(max(x2, z2))
        eps_dual = eps_abs + rel_tol * rho * np.sqrt(u2)
        if rn <= eps_pri and sn <= eps_dual:
            return it, True, rho
        if adaptive:
            if rn > 10.0 * sn:
                rho *= 2.0
                M = _shifted_inverse(V, evals, rho)
                for i in range(p):
                    u[i] *= 0.5
            elif sn > 10.0 * rn:
                rho *= 0.5
                M = _shifted_inverse(V, evals, rho)
                for i in range(p):
                    u[i] *= 2.0
    return max_iter, False, rho


def lasso_admm(theta, y, lam: float, config: AdmmConfig = AdmmConfig()) -> SparseSolution:
    """Minimize ``1/2 ||theta xi - y||^2 + lam ||xi||_1`` by ADMM.

    The returned ``xi`` is the split variable ``z`` and is therefore exactly
    sparse.
    """
    theta, y = _check_problem(theta, y)
    return LassoADMM(theta, config).solve(y, lam)


def least_squares(theta, y):
    """Least squares with a ridge fallback (1e-10 * trace) for rank-deficient theta.

    Returns ``(xi, used_ridge)``.
    """
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    p = theta.shape[1]
    if p == 0:
        return np.zeros(0), False
    if np.linalg.matrix_rank(theta) == p:
        return np.linalg.lstsq(theta, y, rcond=None)[0], False
    G = theta.T @ theta
    pen = 1e-10 * max(np.trace(G), np.finfo(float).tiny)
    return np.linalg.solve(G + pen * np.eye(p), theta.T @ y), True


def _fit_support(theta, y, support):
    xi = np.zeros(theta.shape[1])
    ridge = False
    if len(support):
        xi[support], ridge = least_squares(theta[:, support], y)
    return xi, ridge


def _sse(theta, y, xi) -> float:
    r = theta @ xi - y
    return float(r @ r)


def stlsq(theta, y, threshold: float, max_rounds: int = 25) -> SparseSolution:
    """Sequential thresholded least squares."""
    theta, y = _check_problem(theta, y)
    if threshold < 0:
        raise InvalidInput("threshold must be non-negative")
    p = theta.shape[1]
    active = np.arange(p)
    xi, ridge = _fit_support(theta, y, active)
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        keep = active[np.abs(xi[active]) >= threshold]
        if keep.size == active.size:
            converged = True
            break
        active = keep
        if active.size == 0:
            xi = np.zeros(p)
            converged = True
            break
        xi, ridge = _fit_support(theta, y, active)
    return SparseSolution(xi=xi, objective=0.5 * _sse(theta, y, xi), iterations=rounds,
                          converged=converged, diagnostics={"ridge_fallback": ridge})


def ssr_coefficient(theta, y) -> List[SparseSolution]:
    """Backward elimination by smallest |coefficient|; models with p, p-1, ..., 1 terms."""
    theta, y = _check_problem(theta, y)
    active = list(range(theta.shape[1]))
    models = []
    while active:
        xi, ridge = _fit_support(theta, y, active)
        models.append(SparseSolution(xi=xi, objective=0.5 * _sse(theta, y, xi),
                                     iterations=len(models),
                                     diagnostics={"active": len(active), "ridge_fallback": ridge}))
        drop = min(active, key=lambda k: abs(xi[k]))
        active.remove(drop)
    return models


def ssr_residual_path(theta, y) -> List[SparseSolution]:
    """Backward elimination keeping, at each step, the removal with least residual.

    Dropping term k from a least-squares fit raises the SSE by
    ``xi_k^2 / [G^-1]_kk`` with ``G = theta_A^T theta_A``, so every trial
    removal is scored from one inverse instead of one refit per term.
    """
    theta, y = _check_problem(theta, y)
    active = list(range(theta.shape[1]))
    xi, ridge = _fit_support(theta, y, active)
    models = [SparseSolution(xi=xi, objective=0.5 * _sse(theta, y, xi),
                             diagnostics={"active": len(active), "ridge_fallback": ridge})]
    while len(active) > 1:
        A = theta[:, active]
        G = A.T @ A
        pen = 1e-10 * max(np.trace(G), np.finfo(float).tiny)
        Ginv = np.linalg.inv(G + pen * np.eye(len(active)))
        coef = Ginv @ (A.T @ y)
        cost = coef ** 2 / np.diag(Ginv)
        active.pop(int(np.argmin(cost)))
        xi, ridge = _fit_support(theta, y, active)
        models.append(SparseSolution(xi=xi, objective=0.5 * _sse(theta, y, xi),
                                     iterations=len(models),
                                     diagnostics={"active": len(active), "ridge_fallback": ridge}))
    return models


def ssr_residual(theta, y, val_theta=None, val_y=None) -> SparseSolution:
    """Stepwise residual elimination; return the model with least validation residual.

    The validation pair defaults to the training pair.
    """
    theta, y = _check_problem(theta, y)
    if val_theta is None:
        val_theta, val_y = theta, y
    val_theta, val_y = _check_problem(val_theta, val_y)
    if val_theta.shape[1] != theta.shape[1]:
        raise DimensionError("validation library has a different number of columns")
    path = ssr_residual_path(theta, y)
    scores = [_sse(val_theta, val_y, s.xi) for s in path]
    best = int(np.argmin(scores))
    sol = path[best]
    sol.diagnostics["validation_sse"] = scores[best]
    return sol
