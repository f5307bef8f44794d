"""Candidate-function library Theta(X, U).

Column order is fixed: the constant, state monomials by degree (lexicographic
within a degree), sin(x_i), cos(x_i), u_j, sin(u_j), cos(u_j), and finally the
products of every state monomial with every trig term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, IncompatibleLibrary, InvalidInput

__all__ = ["LibrarySpec", "LibraryMatrix", "Term", "library_terms", "term_names",
           "build_library", "compile_terms"]

MAX_POLY_ORDER = 3


@dataclass(frozen=True)
class LibrarySpec:
    poly_order: int = 3
    include_sin: bool = True
    include_cos: bool = True
    include_cross_trig_products: bool = True
    include_control: bool = False

    def __post_init__(self):
        if int(self.poly_order) != self.poly_order or not 0 <= self.poly_order <= MAX_POLY_ORDER:
            raise InvalidInput(f"poly_order must be an integer in [0, {MAX_POLY_ORDER}]")

    def to_dict(self) -> dict:
        return {"poly_order": int(self.poly_order), "include_sin": self.include_sin,
                "include_cos": self.include_cos,
                "include_cross_trig_products": self.include_cross_trig_products,
                "include_control": self.include_control}

    @classmethod
    def from_dict(cls, d: dict) -> "LibrarySpec":
        return cls(**{k: d[k] for k in cls().to_dict() if k in d})


@dataclass(frozen=True)
class Term:
    """Product of a state monomial and at most one trig (or control) factor.

    ``monomial`` holds 0-based state indices with multiplicity. ``factor`` is
    ``None`` or ``(func, var, index)`` with func in {"id", "sin", "cos"} and
    var in {"x", "u"}.
    """

    monomial: Tuple[int, ...] = ()
    factor: Optional[Tuple[str, str, int]] = None

    @property
    def name(self) -> str:
        parts = [f"x{i + 1}" for i in self.monomial]
        if self.factor is not None:
            func, var, idx = self.factor
            sym = f"{var}{idx + 1}"
            parts.append(sym if func == "id" else f"{func}({sym})")
        return "*".join(parts) if parts else "1"


@dataclass(frozen=True, eq=False)
class LibraryMatrix:
    theta: np.ndarray
    names: List[str]


def library_terms(spec: LibrarySpec, n: int, m: int = 0) -> List[Term]:
    if n < 1:
        raise DimensionError("library needs at least one state")
    if spec.include_control and m < 1:
        raise InvalidInput("include_control requires at least one control column")
    monos = [c for d in range(1, spec.poly_order + 1)
             for c in combinations_with_replacement(range(n), d)]
    trig_funcs = [f for f, on in (("sin", spec.include_sin), ("cos", spec.include_cos)) if on]
    trig = [(f, "x", i) for f in trig_funcs for i in range(n)]
    ctrl, ctrl_trig = [], []
    if spec.include_control:
        ctrl = [("id", "u", j) for j in range(m)]
        ctrl_trig = [(f, "u", j) for f in trig_funcs for j in range(m)]
    terms = [Term()]
    terms += [Term(mono) for mono in monos]
    terms += [Term((), f) for f in trig + ctrl + ctrl_trig]
    if spec.include_cross_trig_products:
        terms += [Term(mono, f) for mono in monos for f in trig + ctrl_trig]
    return terms


def term_names(spec: LibrarySpec, n: int, m: int = 0) -> List[str]:
    return [t.name for t in library_terms(spec, n, m)]


_FUNCS = {"id": lambda v: v, "sin": np.sin, "cos": np.cos}


def build_library(spec: LibrarySpec, X, U=None) -> LibraryMatrix:
    """Evaluate the library row-wise; rows of ``theta`` are samples."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if U is not None:
        U = np.asarray(U, dtype=float)
        if U.ndim == 1:
            U = U[None, :]
        if U.shape[0] != X.shape[0]:
            raise DimensionError(f"U has {U.shape[0]} rows, X has {X.shape[0]}")
    m = 0 if U is None else U.shape[1]
    if spec.include_control and U is None:
        raise InvalidInput("include_control requires U")
    if not np.all(np.isfinite(X)) or (U is not None and not np.all(np.isfinite(U))):
        raise InvalidInput("library inputs contain non-finite values")
    terms = library_terms(spec, X.shape[1], m)
    cols = np.empty((X.shape[0], len(terms)))
    for k, term in enumerate(terms):
        v = np.ones(X.shape[0])
        for i in term.monomial:
            v = v * X[:, i]
        if term.factor is not None:
            func, var, idx = term.factor
            src = X if var == "x" else U
            v = v * _FUNCS[func](src[:, idx])
        cols[:, k] = v
    return LibraryMatrix(theta=cols, names=[t.name for t in terms])


_MATH = {"id": lambda v: v, "sin": math.sin, "cos": math.cos}


def compile_terms(terms: Sequence[Term]) -> Callable:
    """Scalar evaluator ``g(x, u) -> list`` of the given terms at one sample."""
    compiled = []
    for term in terms:
        func = None if term.factor is None else (_MATH[term.factor[0]], term.factor[1] == "u",
                                                 term.factor[2])
        compiled.append((term.monomial, func))

    def g(x, u):
        out = []
        for mono, func in compiled:
            v = 1.0
            for i in mono:
                v *= x[i]
            if func is not None:
                f, use_u, idx = func
                v *= f(u[idx] if use_u else x[idx])
            out.append(v)
        return out

    return g


def index_of(names: Sequence[str], name: str) -> int:
    try:
        return list(names).index(name)
    except ValueError:
        raise IncompatibleLibrary(f"library has no term {name!r}") from None
