"""Ground-truth benchmark systems and synthetic dataset generation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .errors import ConfigError, IncompatibleLibrary, InvalidInput
from .funclib import LibrarySpec, index_of, term_names
from .odeint import integrate
from .trajdata import NoiseSpec, TrajectoryDataset, add_noise

__all__ = [
    "LotkaVolterraParams",
    "GroundTruthXi",
    "System",
    "SYSTEMS",
    "get_system",
    "lotka_volterra_deriv",
    "lotka_volterra_invariant",
    "unicycle_deriv",
    "unicycle_controls",
    "generate_dataset",
    "figure_eight_dataset",
    "figure_eight_state",
    "ground_truth_xi",
    "derived_seed",
    "sample_grid",
    "FigureEight",
]


@dataclass(frozen=True)
class LotkaVolterraParams:
    a: float = 1.1
    b: float = 0.4
    c: float = 1.0
    d: float = 0.4


def lotka_volterra_deriv(x, params: LotkaVolterraParams = LotkaVolterraParams()) -> np.ndarray:
    x1, x2 = float(x[0]), float(x[1])
    p = params
    return np.array([p.a * x1 - p.b * x1 * x2, -p.c * x2 + p.d * x1 * x2])


def lotka_volterra_invariant(X, params: LotkaVolterraParams = LotkaVolterraParams()):
    """First integral ``d x1 - c ln x1 + b x2 - a ln x2`` along rows of X."""
    X = np.atleast_2d(X)
    p = params
    return p.d * X[:, 0] - p.c * np.log(X[:, 0]) + p.b * X[:, 1] - p.a * np.log(X[:, 1])


def unicycle_deriv(x, u) -> np.ndarray:
    return np.array([x[2] * math.cos(x[3]), x[2] * math.sin(x[3]), u[0], u[1]], dtype=float)


def unicycle_controls(t: float) -> np.ndarray:
    return np.array([math.sin(t), 0.5 * math.cos(t)])


@dataclass(frozen=True)
class GroundTruthXi:
    xi: np.ndarray
    names: list


@dataclass(frozen=True)
class System:
    """A benchmark system: dynamics, default setup, and its true library terms."""

    name: str
    n: int
    m: int
    deriv: Callable  # (x, u) -> xdot
    x0: tuple
    library: LibrarySpec
    true_terms: tuple  # one {term name: coefficient} dict per state
    controls: Optional[Callable] = None
    standardize: bool = False


_LV = LotkaVolterraParams()

SYSTEMS: Dict[str, System] = {
    "lotka-volterra": System(
        name="lotka-volterra", n=2, m=0,
        deriv=lambda x, u: lotka_volterra_deriv(x, _LV),
        x0=(1.0, 1.0),
        library=LibrarySpec(poly_order=3, include_sin=True, include_cos=True,
                            include_cross_trig_products=True, include_control=False),
        true_terms=({"x1": _LV.a, "x1*x2": -_LV.b}, {"x2": -_LV.c, "x1*x2": _LV.d}),
        standardize=True,
    ),
    "unicycle": System(
        name="unicycle", n=4, m=2,
        deriv=unicycle_deriv,
        x0=(0.0, 0.0, 0.5, 0.5),
        library=LibrarySpec(poly_order=1, include_sin=True, include_cos=True,
                            include_cross_trig_products=True, include_control=True),
        true_terms=({"x3*cos(x4)": 1.0}, {"x3*sin(x4)": 1.0}, {"u1": 1.0}, {"u2": 1.0}),
        controls=unicycle_controls,
    ),
}
# The figure-eight data follows unicycle kinematics with recorded controls.
SYSTEMS["figure-eight"] = System(
    name="figure-eight", n=4, m=2, deriv=unicycle_deriv, x0=(0.0, 0.0, 0.0, 0.0),
    library=SYSTEMS["unicycle"].library, true_terms=SYSTEMS["unicycle"].true_terms,
)


def get_system(name: str) -> System:
    key = name.strip().lower().replace("_", "-")
    aliases = {"lotka-volterra": "lotka-volterra", "lv": "lotka-volterra",
               "predator-prey": "lotka-volterra", "unicycle": "unicycle",
               "figure-eight": "figure-eight", "figure-8": "figure-eight", "figure8": "figure-eight"}
    if key not in aliases:
        raise ConfigError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}")
    return SYSTEMS[aliases[key]]


def derived_seed(*keys: int) -> int:
    """Deterministic 64-bit seed from integer keys (root seed first)."""
    ss = np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_dataset(system, t_grid, x0=None, noise: NoiseSpec = NoiseSpec(0.0),
                     noise_on_xdot: bool = True, substeps: int = 10) -> TrajectoryDataset:
    """Simulate ``system`` on ``t_grid`` and corrupt the samples.

    Integration uses RK4 with ``substeps`` steps per sampling interval. Xdot is
    evaluated from the true dynamics at the clean states; noise is then added
    to X (seeded by ``noise.seed``) and, when ``noise_on_xdot``, to Xdot from
    an independent stream.
    """
    if isinstance(system, str):
        system = get_system(system)
    t = np.asarray(t_grid, dtype=float).reshape(-1)
    x0 = np.asarray(system.x0 if x0 is None else x0, dtype=float)
    if x0.shape != (system.n,):
        raise InvalidInput(f"x0 must have {system.n} entries")
    ctrl = system.controls
    X = integrate(system.deriv, x0, t, ctrl, substeps=substeps)
    U = None if ctrl is None else np.array([ctrl(ti) for ti in t])
    Xdot = np.array([system.deriv(X[i], None if U is None else U[i]) for i in range(t.size)])
    Xn = add_noise(X, noise)
    if noise_on_xdot:
        Xdot = add_noise(Xdot, NoiseSpec(noise.sigma, derived_seed(noise.seed, 1)))
    return TrajectoryDataset(t=t, X=Xn, Xdot=Xdot, U=U)


def sample_grid(duration: float, dt: float) -> np.ndarray:
    """Grid ``0, dt, ..., duration`` (inclusive when duration is a multiple of dt)."""
    count = int(math.floor(duration / dt + 1e-9)) + 1
    return np.arange(count) * dt


# --- figure eight --------------------------------------------------------------

@dataclass(frozen=True)
class FigureEight:
    """Two tangent circles traversed at a modulated speed.

    The car starts at the tangent point heading +x, turns left around the
    upper circle, then right around the lower one. Arc length is
    ``s(tau) = v0 tau + A sin(2 pi k tau / T)`` with ``tau = t + offset``, so
    the speed oscillates ``k`` times per lap and ``s(T) = 2 C`` exactly.
    """

    diameter: float = 3.0
    lap_time: float = 5.5
    speed_variation: float = 0.0
    offset: float = 0.0
    harmonics: int = 2

    @property
    def radius(self) -> float:
        return 0.5 * self.diameter

    @property
    def nominal_speed(self) -> float:
        return 2.0 * math.pi * self.diameter / self.lap_time

    def state(self, t: float):
        """Return ``(state, control, true derivative)`` at time t."""
        R, T, v0 = self.radius, self.lap_time, self.nominal_speed
        w = 2.0 * math.pi * self.harmonics / T
        tau = t + self.offset
        dv = self.speed_variation
        s = v0 * tau + (v0 * dv / w) * math.sin(w * tau)
        v = v0 * (1.0 + dv * math.cos(w * tau))
        a = -v0 * dv * w * math.sin(w * tau)
        C = 2.0 * math.pi * R
        laps, rem = divmod(s, 2.0 * C)
        if rem < C:
            ang = rem / R
            x1, x2 = R * math.sin(ang), R - R * math.cos(ang)
            phi, turn = ang, 1.0
        else:
            ang = (rem - C) / R
            x1, x2 = R * math.sin(ang), -R + R * math.cos(ang)
            phi, turn = 2.0 * math.pi - ang, -1.0
        u = np.array([a, turn * v / R])
        x = np.array([x1, x2, v, phi])
        xdot = np.array([v * math.cos(phi), v * math.sin(phi), u[0], u[1]])
        return x, u, xdot


def figure_eight_state(t: float, **kwargs):
    return FigureEight(**kwargs).state(t)


def figure_eight_dataset(diameter: float = 3.0, lap_time: float = 5.5, duration: float = 22.85,
                         rate_hz: float = 50.0, noise: NoiseSpec = NoiseSpec(0.0),
                         speed_variation: float = 0.0, offset: float = 0.0,
                         with_derivatives: bool = False) -> TrajectoryDataset:
    """Synthetic figure-8 run: state ``[x1, x2, v, phi]``, controls ``[vdot, phidot]``.

    Noise is added to the states only. ``Xdot`` (clean, analytic) is attached
    only when ``with_derivatives`` is set; otherwise callers differentiate the
    samples, as with logged hardware data.
    """
    if not (diameter > 0 and lap_time > 0 and duration > 0 and rate_hz > 0):
        raise InvalidInput("figure-eight parameters must be positive")
    fig = FigureEight(diameter, lap_time, speed_variation, offset)
    t = sample_grid(duration, 1.0 / rate_hz)
    rows = [fig.state(ti) for ti in t]
    X = np.array([r[0] for r in rows])
    U = np.array([r[1] for r in rows])
    Xdot = np.array([r[2] for r in rows]) if with_derivatives else None
    return TrajectoryDataset(t=t, X=add_noise(X, noise), Xdot=Xdot, U=U)


def ground_truth_xi(system, lib: Optional[LibrarySpec] = None) -> GroundTruthXi:
    """Place the true coefficients of ``system`` into the ordering of ``lib``."""
    if isinstance(system, str):
        system = get_system(system)
    lib = system.library if lib is None else lib
    names = term_names(lib, system.n, system.m if lib.include_control else 0)
    xi = np.zeros((len(names), system.n))
    for j, terms in enumerate(system.true_terms):
        for name, coef in terms.items():
            xi[index_of(names, name), j] = coef
    return GroundTruthXi(xi=xi, names=names)
