"""Fixed-step classical Runge-Kutta integration."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .errors import Divergence, InvalidTimestamps

__all__ = ["rk4_step", "integrate"]


def rk4_step(f: Callable, x: np.ndarray, t: float, h: float, u: Callable) -> np.ndarray:
    """One RK4 step of ``xdot = f(x, u(t))``; ``u`` maps a time to a control vector."""
    k1 = f(x, u(t))
    k2 = f(x + 0.5 * h * k1, u(t + 0.5 * h))
    k3 = f(x + 0.5 * h * k2, u(t + 0.5 * h))
    k4 = f(x + h * k3, u(t + h))
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(f: Callable, x0, t, u: Optional[Callable] = None, substeps: int = 1) -> np.ndarray:
    """Integrate over the grid ``t`` with ``substeps`` equal RK4 steps per interval.

    Returns the states at the grid points, row 0 being ``x0``. Raises
    :class:`Divergence` with the offending grid index on a non-finite state.
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise InvalidTimestamps("integration grid must be strictly increasing")
    x = np.array(x0, dtype=float).reshape(-1)
    if u is None:
        u = lambda _t: None
    out = np.empty((t.size, x.size))
    out[0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, t.size):
            h = (t[i] - t[i - 1]) / substeps
            for s in range(substeps):
                try:
                    x = rk4_step(f, x, t[i - 1] + s * h, h, u)
                except (OverflowError, ValueError):
                    raise Divergence(i) from None
            if not np.all(np.isfinite(x)):
                raise Divergence(i)
            out[i] = x
    return out
