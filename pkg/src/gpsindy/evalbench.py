"""Metrics, benchmark sweeps and CSV reports.

Quantiles use linear interpolation between order statistics (Hyndman-Fan
type 7, numpy's default). Divergent rollouts are stored as ``inf`` RMSE,
excluded from quantiles and counted separately.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from .benchmodels import (FigureEight, derived_seed, generate_dataset, get_system,
                          ground_truth_xi, sample_grid)
from .errors import Divergence, DivergentModel, DimensionError, EmptySample, InvalidInput
from .funclib import LibrarySpec
from .gpsmooth import SmootherConfig
from .sparsereg import AdmmConfig
from .sysid import METHODS, fit_method, rollout_model
from .trajdata import (NoiseSpec, TrajectoryDataset, add_noise, central_difference, downsample,
                       train_test_split)

__all__ = [
    "coeff_mse",
    "trajectory_rmse",
    "log_rmse",
    "quantile_summary",
    "ReportRow",
    "BenchmarkReport",
    "NoiseSweepConfig",
    "FrequencySweepConfig",
    "run_noise_sweep",
    "run_frequency_sweep",
    "figure_eight_generator",
    "emit_report",
    "load_report",
    "summarize",
    "report_filename",
]


# --- metrics -------------------------------------------------------------------

def coeff_mse(xi_gt, xi_learned) -> float:
    """Mean squared entrywise difference of two coefficient matrices."""
    a = np.asarray(xi_gt, dtype=float)
    b = np.asarray(xi_learned, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"coefficient shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise DimensionError("empty coefficient matrices")
    return float(np.mean((a - b) ** 2))


def trajectory_rmse(pred, truth, columns: Optional[Sequence[int]] = None) -> float:
    """RMSE over all rows and the selected columns (all by default)."""
    p = np.atleast_2d(np.asarray(pred, dtype=float))
    q = np.atleast_2d(np.asarray(truth, dtype=float))
    if p.shape != q.shape:
        raise DimensionError(f"prediction {p.shape} and truth {q.shape} differ in shape")
    if columns is not None:
        cols = list(columns)
        if not cols or min(cols) < 0 or max(cols) >= p.shape[1]:
            raise DimensionError(f"column selection {cols} out of range for {p.shape[1]} columns")
        p, q = p[:, cols], q[:, cols]
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sqrt(np.mean((p - q) ** 2)))


def log_rmse(rmse: float) -> float:
    """Natural log; zero maps to -inf and divergence (inf) stays inf."""
    if rmse == 0:
        return -math.inf
    return math.log(rmse)


def quantile_summary(values) -> Dict[str, float]:
    """Median and quartiles (type-7 interpolation)."""
    v = np.asarray(list(values), dtype=float).reshape(-1)
    if v.size == 0:
        raise EmptySample("quantile_summary needs at least one value")
    q25, med, q75 = np.quantile(v, [0.25, 0.5, 0.75])
    return {"median": float(med), "q25": float(q25), "q75": float(q75)}


# --- report --------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    method: str
    system: str
    sigma: float
    frequency_hz: float
    seed: int
    coeff_mse: float
    traj_rmse: float  # inf marks a divergent rollout
    log_rmse: float
    lambda_used: tuple = ()
    wall_time: float = math.nan

    @property
    def diverged(self) -> bool:
        return math.isinf(self.traj_rmse) and self.traj_rmse > 0

    def sort_key(self):
        return (self.method, self.sigma, self.frequency_hz, self.seed, self.system)


COLUMNS = [f.name for f in fields(ReportRow)]


@dataclass
class BenchmarkReport:
    rows: List[ReportRow] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=ReportRow.sort_key)

    def __len__(self):
        return len(self.rows)

    @property
    def divergent_count(self) -> int:
        return sum(r.diverged for r in self.rows)

    def select(self, **match) -> List[ReportRow]:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]

    def merge(self, other: "BenchmarkReport") -> "BenchmarkReport":
        return BenchmarkReport(self.rows + other.rows, {**self.config, **other.config})


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def emit_report(report: BenchmarkReport, path) -> Path:
    """Write the report as CSV (fixed column order, 17 significant digits)."""
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in report.rows:
                lam = ";".join(_fmt(v) for v in r.lambda_used)
                w.writerow([r.method, r.system, _fmt(r.sigma), _fmt(r.frequency_hz), _fmt(r.seed),
                            _fmt(r.coeff_mse), _fmt(r.traj_rmse), _fmt(r.log_rmse), lam,
                            _fmt(r.wall_time)])
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc}") from exc
    return path


def load_report(path) -> BenchmarkReport:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != COLUMNS:
                raise InvalidInput(f"{path}: unexpected report header {header}")
            rows = []
            for rec in reader:
                if not rec:
                    continue
                lam = tuple(float(v) for v in rec[8].split(";")) if rec[8] else ()
                rows.append(ReportRow(rec[0], rec[1], float(rec[2]), float(rec[3]), int(rec[4]),
                                      float(rec[5]), float(rec[6]), float(rec[7]), lam,
                                      float(rec[9])))
    except OSError as exc:
        raise OSError(f"cannot read report {path}: {exc}") from exc
    return BenchmarkReport(rows)


def summarize(report: BenchmarkReport, metric: str = "traj_rmse") -> List[dict]:
    """One quantile row per (system, method, sigma, frequency).

    Non-finite values (divergent rollouts) are excluded and counted in
    ``divergent``; a group with no finite values gets NaN quantiles.
    """
    groups: Dict[tuple, List[float]] = {}
    for r in report.rows:
        groups.setdefault((r.system, r.method, r.sigma, r.frequency_hz), []).append(getattr(r, metric))
    out = []
    for (system, method, sigma, freq), vals in sorted(groups.items()):
        finite = [v for v in vals if math.isfinite(v)]
        if finite:
            q = quantile_summary(finite)
        else:
            q = {"median": math.nan, "q25": math.nan, "q75": math.nan}
        out.append({"system": system, "method": method, "sigma": sigma, "frequency_hz": freq,
                    "count": len(vals), "divergent": len(vals) - len(finite),
                    "mean": float(np.mean(finite)) if finite else math.nan, **q})
    return out


def _canonical(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _canonical(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if hasattr(obj, "value"):  # enums
        return obj.value
    if isinstance(obj, float):
        return _fmt(obj)
    return obj


def report_filename(system: str, sweep: str, config) -> str:
    """``<system>_<sweep>_<hash>.csv`` with a hash of the canonical config."""
    blob = json.dumps(_canonical(config), sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(blob.encode("utf-8")).hexdigest()[:10]
    return f"{system}_{sweep}_{digest}.csv"


# --- sweeps --------------------------------------------------------------------

def _sigma_key(sigma: float) -> int:
    return int(round(sigma * 1_000_000))


def _evaluate(model, x0, t, truth, controls, columns) -> float:
    try:
        pred = rollout_model(model, x0, t, controls)
    except Divergence:
        return math.inf
    return trajectory_rmse(pred, truth, columns)


@dataclass(frozen=True)
class NoiseSweepConfig:
    """Simulation sweep setup (defaults: 30 s at 0.1 s, 80/20 split, lambda 0.1)."""

    duration: float = 30.0
    dt: float = 0.1
    train_fraction: float = 0.8
    lam: float = 0.1
    root_seed: int = 0
    noise_on_xdot: bool = True
    smoother: SmootherConfig = SmootherConfig(restarts=1)
    admm: AdmmConfig = AdmmConfig()
    timing: bool = False


def run_noise_sweep(system, methods: Sequence[str] = ("sindy", "gpsindy"),
                    sigma_grid: Sequence[float] = (0.05, 0.10, 0.15, 0.20, 0.25),
                    seeds: Iterable[int] = range(40),
                    config: NoiseSweepConfig = NoiseSweepConfig(),
                    progress: Optional[Callable[[str], None]] = None) -> BenchmarkReport:
    """Coefficient and rollout error of each method over noise levels and seeds.

    Each (sigma, seed) cell simulates the system, corrupts X (and Xdot) with
    seeded noise, fits every method on the first ``train_fraction`` of the
    samples and rolls the learned model out over the rest from the clean
    state, scoring against the clean trajectory on all state columns.
    """
    sys_ = get_system(system) if isinstance(system, str) else system
    _check_methods(methods)
    t = sample_grid(config.duration, config.dt)
    clean = generate_dataset(sys_, t)
    _, clean_val = train_test_split(clean, config.train_fraction)
    gt = ground_truth_xi(sys_).xi
    smoother = replace(config.smoother, standardize=sys_.standardize)
    freq = 1.0 / config.dt
    rows = []
    for sigma in sigma_grid:
        for seed in seeds:
            noise = NoiseSpec(float(sigma), derived_seed(config.root_seed, seed, _sigma_key(sigma)))
            data = generate_dataset(sys_, t, noise=noise, noise_on_xdot=config.noise_on_xdot)
            train, val = train_test_split(data, config.train_fraction)
            for method in methods:
                start = time.perf_counter()
                res = fit_method(method, train, val, sys_.library, smoother, config.lam,
                                 config.admm, val_controls=sys_.controls)
                rmse = _evaluate(res.model, clean_val.X[0], clean_val.t, clean_val.X,
                                 sys_.controls, None)
                wall = time.perf_counter() - start if config.timing else math.nan
                rows.append(ReportRow(method, sys_.name, float(sigma), freq, int(seed),
                                      coeff_mse(gt, res.model.xi), rmse, log_rmse(rmse),
                                      tuple(res.model.lambdas or ()), wall))
            if progress is not None:
                progress(f"{sys_.name} sigma={sigma:g} seed={seed}")
    cfg = {"sweep": "noise", "system": sys_.name, "methods": list(methods),
           "sigma_grid": [float(s) for s in sigma_grid], "seeds": [int(s) for s in seeds],
           "config": _canonical(config)}
    return BenchmarkReport(rows, cfg)


@dataclass(frozen=True)
class FrequencySweepConfig:
    """Figure-8 sweep setup.

    ``lam=None`` selects lambda per column by validation rollout over the
    default schedule, with unit-norm library columns so the schedule stays
    short on large data sets.
    """

    base_rate_hz: float = 50.0
    duration: float = 22.85
    train_fraction: float = 0.8
    root_seed: int = 0
    lam: Optional[float] = None
    normalize_columns: bool = True
    eval_columns: tuple = (0, 1)
    smoother: SmootherConfig = SmootherConfig(restarts=1, max_fit_points=100)
    # the figure-8 library is rank deficient, so tiny-lambda solves stall; cap them
    admm: AdmmConfig = AdmmConfig(max_iter=2000)
    timing: bool = False


def figure_eight_generator(diameter: float = 3.0, lap_time: float = 5.5, duration: float = 22.85,
                           rate_hz: float = 50.0, root_seed: int = 0) -> Callable[[int], TrajectoryDataset]:
    """Clean constant-speed figure-8 runs; each run jitters the lap time by up
    to 5% and starts at a random phase of the lap."""

    def make(k: int) -> TrajectoryDataset:
        rng = np.random.Generator(np.random.PCG64(derived_seed(root_seed, k, 8)))
        fig = FigureEight(diameter=diameter,
                          lap_time=lap_time * (1.0 + rng.uniform(-0.05, 0.05)),
                          offset=rng.uniform(0.0, lap_time))
        t = sample_grid(duration, 1.0 / rate_hz)
        states = [fig.state(ti) for ti in t]
        return TrajectoryDataset(t=t, X=np.array([s[0] for s in states]),
                                 U=np.array([s[1] for s in states]))

    return make


def run_frequency_sweep(base: Union[TrajectoryDataset, Callable[[int], TrajectoryDataset], None] = None,
                        methods: Sequence[str] = METHODS,
                        freqs: Sequence[float] = (50, 25, 10, 5),
                        sigma_grid: Sequence[float] = (0.0, 0.1),
                        rollouts: Union[int, Iterable[int]] = 45,
                        config: FrequencySweepConfig = FrequencySweepConfig(),
                        system: str = "figure-eight",
                        progress: Optional[Callable[[str], None]] = None) -> BenchmarkReport:
    """Downsample clean base-rate runs, add state noise and fit each method.

    Derivatives are central differences of the noisy states. Each model is
    rolled out over the held-out tail from the clean initial state with the
    recorded controls held between samples, and scored on ``eval_columns``
    against the clean states. ``base`` is a clean base-rate dataset (reused
    for every rollout) or a function of the rollout index.
    """
    _check_methods(methods)
    if base is None:
        base = figure_eight_generator(duration=config.duration, rate_hz=config.base_rate_hz,
                                      root_seed=config.root_seed)
    make = base if callable(base) else (lambda _k: base)
    ids = list(range(rollouts)) if isinstance(rollouts, int) else [int(k) for k in rollouts]
    keep = {}
    for f in freqs:
        ratio = config.base_rate_hz / float(f)
        if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise InvalidInput(f"{f} Hz is not an integer divisor of {config.base_rate_hz} Hz")
        keep[f] = int(round(ratio))
    sys_ = get_system(system)
    rows = []
    for k in ids:
        full = make(k)
        lib = sys_.library
        gt = ground_truth_xi(sys_, lib).xi
        for f in freqs:
            clean = downsample(full, keep[f])
            _, clean_val = train_test_split(clean, config.train_fraction)
            for sigma in sigma_grid:
                seed = derived_seed(config.root_seed, k, keep[f], _sigma_key(sigma))
                X = add_noise(clean.X, NoiseSpec(float(sigma), seed))
                data = TrajectoryDataset(t=clean.t, X=X, Xdot=central_difference(X, clean.t),
                                         U=clean.U)
                train, val = train_test_split(data, config.train_fraction)
                for method in methods:
                    start = time.perf_counter()
                    try:
                        res = fit_method(method, train, val, lib, config.smoother, config.lam,
                                         config.admm, config.normalize_columns)
                    except DivergentModel:
                        rows.append(ReportRow(method, sys_.name, float(sigma), float(f), k,
                                              math.nan, math.inf, math.inf, (), math.nan))
                        continue
                    rmse = _evaluate(res.model, clean_val.X[0], clean_val.t, clean_val.X,
                                     clean_val.U, list(config.eval_columns))
                    wall = time.perf_counter() - start if config.timing else math.nan
                    rows.append(ReportRow(method, sys_.name, float(sigma), float(f), k,
                                          coeff_mse(gt, res.model.xi), rmse, log_rmse(rmse),
                                          tuple(res.model.lambdas or ()), wall))
            if progress is not None:
                progress(f"rollout {k} {f:g} Hz")
    cfg = {"sweep": "frequency", "system": sys_.name, "methods": list(methods),
           "freqs": [float(f) for f in freqs], "sigma_grid": [float(s) for s in sigma_grid],
           "rollouts": ids, "config": _canonical(config)}
    return BenchmarkReport(rows, cfg)


def _check_methods(methods):
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise InvalidInput(f"unknown methods {bad}; choose from {METHODS}")
