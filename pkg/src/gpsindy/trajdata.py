"""Trajectory containers, corruption, resampling and finite differencing.

Noise draws use numpy's ``PCG64`` bit generator with the ziggurat normal
sampler (``Generator.standard_normal``); a given ``(sigma, seed, shape)``
always reproduces the same array.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateColumn,
    DimensionError,
    InsufficientData,
    InvalidFactor,
    InvalidFraction,
    InvalidInput,
    InvalidTimestamps,
    ParseError,
)

__all__ = [
    "TrajectoryDataset",
    "StandardizationParams",
    "NoiseSpec",
    "central_difference",
    "add_noise",
    "train_test_split",
    "downsample",
    "standardize",
    "destandardize",
    "load_csv",
    "save_csv",
]


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    return arr


def _check_timestamps(t: np.ndarray) -> None:
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise InvalidTimestamps("timestamps must be strictly increasing")


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """Sampled trajectory: timestamps ``t`` (r,), states ``X`` (r, n), and
    optional derivatives ``Xdot`` (r, n) and controls ``U`` (r, m)."""

    t: np.ndarray
    X: np.ndarray
    Xdot: Optional[np.ndarray] = None
    U: Optional[np.ndarray] = None
    labels: Optional[dict] = field(default=None)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        X = _as_matrix(self.X, "X")
        r = t.shape[0]
        if X.shape[0] != r:
            raise DimensionError(f"X has {X.shape[0]} rows but t has {r}")
        Xdot = None if self.Xdot is None else _as_matrix(self.Xdot, "Xdot")
        U = None if self.U is None else _as_matrix(self.U, "U")
        if Xdot is not None and Xdot.shape != X.shape:
            raise DimensionError(f"Xdot shape {Xdot.shape} != X shape {X.shape}")
        if U is not None and U.shape[0] != r:
            raise DimensionError(f"U has {U.shape[0]} rows but t has {r}")
        for name, arr in (("t", t), ("X", X), ("Xdot", Xdot), ("U", U)):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise InvalidInput(f"{name} contains non-finite entries")
        _check_timestamps(t)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Xdot", Xdot)
        object.__setattr__(self, "U", U)

    @property
    def r(self) -> int:
        return self.t.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return 0 if self.U is None else self.U.shape[1]

    def rows(self, index) -> "TrajectoryDataset":
        """Row subset applied identically to every array."""
        pick = lambda a: None if a is None else a[index]
        return replace(self, t=self.t[index], X=self.X[index],
                       Xdot=pick(self.Xdot), U=pick(self.U))

    def with_derivatives(self) -> "TrajectoryDataset":
        """Return self if ``Xdot`` is present, otherwise fill it by central differences."""
        if self.Xdot is not None:
            return self
        return replace(self, Xdot=central_difference(self.X, self.t))


@dataclass(frozen=True)
class StandardizationParams:
    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise InvalidInput(f"noise sigma must be >= 0, got {self.sigma}")


def central_difference(X, t) -> np.ndarray:
    """Second-order finite-difference derivative of ``X`` along rows.

    Interior rows use the three-point Lagrange formula for arbitrary spacing;
    the first and last rows use second-order one-sided stencils.
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    squeeze = X.ndim == 1
    X = _as_matrix(X, "X")
    if X.shape[0] != t.shape[0]:
        raise DimensionError(f"X has {X.shape[0]} rows but t has {t.shape[0]}")
    if t.shape[0] < 3:
        raise InsufficientData("central differencing needs at least 3 samples")
    _check_timestamps(t)
    # np.gradient implements exactly the nonuniform three-point stencils
    D = np.gradient(X, t, axis=0, edge_order=2)
    return D[:, 0] if squeeze else D


def add_noise(M, spec: NoiseSpec) -> np.ndarray:
    """Return ``M + eps`` with ``eps ~ N(0, sigma^2)`` drawn from PCG64(seed)."""
    M = np.asarray(M, dtype=float)
    if spec.sigma == 0:
        return M.copy()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    return M + spec.sigma * rng.standard_normal(M.shape)


def train_test_split(data: TrajectoryDataset, train_fraction: float = 0.8):
    """Contiguous split: the first ``floor(r * train_fraction)`` rows train."""
    if not 0 < train_fraction < 1:
        raise InvalidFraction(f"train_fraction must lie in (0, 1), got {train_fraction}")
    k = int(math.floor(data.r * train_fraction))
    if k < 2 or data.r - k < 1:
        raise InsufficientData(f"split of {data.r} rows at {train_fraction} leaves a block too small")
    return data.rows(slice(0, k)), data.rows(slice(k, None))


def downsample(data: TrajectoryDataset, keep_every: int) -> TrajectoryDataset:
    if int(keep_every) != keep_every or keep_every < 1:
        raise InvalidFactor(f"keep_every must be a positive integer, got {keep_every}")
    return data.rows(slice(0, None, int(keep_every)))


def standardize(X):
    """Column-wise zero mean / unit variance with the population (ddof=0) std."""
    X = _as_matrix(X, "X")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    for j, s in enumerate(std):
        scale = max(1.0, abs(mean[j]))
        if s <= 1e-14 * scale:
            raise DegenerateColumn(j)
    return (X - mean) / std, StandardizationParams(mean=mean, std=std)


def destandardize(X_std, params: StandardizationParams) -> np.ndarray:
    return np.asarray(X_std, dtype=float) * params.std + params.mean


# --- CSV ---------------------------------------------------------------------

_ROLE = re.compile(r"^(dx|x|u)([1-9][0-9]*)$")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def save_csv(data: TrajectoryDataset, path) -> None:
    header = ["t"] + [f"x{i + 1}" for i in range(data.n)]
    blocks = [data.t[:, None], data.X]
    if data.Xdot is not None:
        header += [f"dx{i + 1}" for i in range(data.n)]
        blocks.append(data.Xdot)
    if data.U is not None:
        header += [f"u{j + 1}" for j in range(data.m)]
        blocks.append(data.U)
    table = np.hstack(blocks)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow([_fmt(v) for v in row])


def _role_columns(header: Sequence[str], prefix: str) -> list[int]:
    found = {}
    for col, name in enumerate(header):
        m = _ROLE.match(name)
        if m and m.group(1) == prefix:
            found[int(m.group(2))] = col
    if not found:
        return []
    if sorted(found) != list(range(1, len(found) + 1)):
        raise ParseError(f"{prefix} columns must be numbered 1..k without gaps", line=1)
    return [found[i] for i in range(1, len(found) + 1)]


def load_csv(path) -> TrajectoryDataset:
    """Read a trajectory CSV (header ``t, x1..xn[, dx1..dxn][, u1..um]``).

    Lines starting with ``#`` are ignored. Column order in the file is free;
    roles come from the header names.
    """
    path = Path(path)
    rows: list[list[float]] = []
    header: list[str] | None = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, raw in enumerate(csv.reader(fh), start=1):
            if not raw or (raw[0].lstrip().startswith("#")):
                continue
            if header is None:
                header = [h.strip() for h in raw]
                header_line = lineno
                if "t" not in header:
                    raise ParseError("missing required column 't'", line=lineno)
                for name in header:
                    if name != "t" and not _ROLE.match(name):
                        raise ParseError(f"unrecognized column name {name!r}", line=lineno)
                if len(set(header)) != len(header):
                    raise ParseError("duplicate column names", line=lineno)
                continue
            if len(raw) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(raw)}", line=lineno)
            try:
                vals = [float(v) for v in raw]
            except ValueError as exc:
                raise ParseError(f"non-numeric cell ({exc})", line=lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", line=lineno)
            rows.append(vals)
    if header is None:
        raise ParseError("empty file: no header row")
    xs = _role_columns(header, "x")
    if not xs:
        raise ParseError("no state columns x1..xn", line=header_line)
    dxs = _role_columns(header, "dx")
    us = _role_columns(header, "u")
    if dxs and len(dxs) != len(xs):
        raise ParseError("derivative columns must match state columns", line=header_line)
    table = np.array(rows, dtype=float).reshape(len(rows), len(header))
    try:
        return TrajectoryDataset(
            t=table[:, header.index("t")],
            X=table[:, xs],
            Xdot=table[:, dxs] if dxs else None,
            U=table[:, us] if us else None,
        )
    except InvalidTimestamps as exc:
        raise ParseError(str(exc)) from None
