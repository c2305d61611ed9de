"""Symbols a(t, x, xi) of declared order, matrices of symbols, and grids.

A symbol is a plain callable closed over its parameters, not an expression
tree.  All evaluation is numpy-broadcasting: ``fn(t, x, xi)`` must accept a
scalar ``t`` and arrays ``x``, ``xi`` and broadcast them.

The discrete Fourier convention used everywhere in this package:
for ``nx`` samples on a torus of circumference ``L``, frequency index
``k`` maps to ``xi_k = (2*pi/L)*k`` for ``k < nx/2`` and
``(2*pi/L)*(k - nx)`` otherwise.  The forward transform carries no
normalization, the inverse carries ``1/nx``.  This is exactly
``numpy.fft`` with the frequencies above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import DimensionError, EvaluationError

#: Sentinel returned by estimate_order for identically vanishing symbols.
VANISHING_ORDER = float("-inf")


@dataclass(frozen=True)
class GridSpec:
    """Discretization of [0, T_final] x torus x dual frequencies.

    ``M`` is the frequency cutoff: transforms produced by triangularisation
    are only certified on the shell ``|xi| >= M``.
    """

    T_final: float
    nt: int
    L: float
    nx: int
    M: float = 0.0

    def __post_init__(self):
        if self.nx < 4 or (self.nx & (self.nx - 1)) != 0:
            raise ValueError(f"nx must be a power of two >= 4, got {self.nx}")
        if self.nt < 2:
            raise ValueError(f"nt must be >= 2, got {self.nt}")
        if self.T_final <= 0 or self.L <= 0:
            raise ValueError("T_final and L must be positive")
        xi_max = (2.0 * math.pi / self.L) * (self.nx // 2)
        if not 0.0 <= self.M < xi_max:
            raise ValueError(f"M must satisfy 0 <= M < {xi_max}, got {self.M}")

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T_final, self.nt)

    @cached_property
    def dt(self) -> float:
        return self.T_final / (self.nt - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * (self.L / self.nx)

    @cached_property
    def frequencies(self) -> np.ndarray:
        k = np.fft.fftfreq(self.nx, d=1.0 / self.nx)
        return (2.0 * math.pi / self.L) * k

    @cached_property
    def shell(self) -> np.ndarray:
        """Boolean mask of frequencies with ``|xi| >= M``."""
        return np.abs(self.frequencies) >= self.M

    @cached_property
    def xi_max(self) -> float:
        return float(np.abs(self.frequencies).max())

    def sample_times(self, cap: int = 9) -> np.ndarray:
        """Up to ``cap`` evenly spaced grid times, for symbol-level checks."""
        if self.nt <= cap:
            return self.times
        idx = np.unique(np.linspace(0, self.nt - 1, cap).round().astype(int))
        return self.times[idx]


@dataclass(frozen=True)
class ScalarSymbol:
    """A function (t, x, xi) -> complex with a declared order.

    ``depends_t`` / ``depends_x`` are metadata set by the builders; they
    enable table caching and the fast Fourier-multiplier path but never
    change values.  ``is_zero`` marks the identically-zero symbol so that
    operator assembly can skip it.
    """

    fn: Callable
    order: float
    depends_t: bool = True
    depends_x: bool = True
    is_zero: bool = False
    name: str = ""

    def __call__(self, t, x, xi):
        return self.fn(t, x, xi)

    def __add__(self, other):
        other = _as_symbol(other)
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        f, g = self.fn, other.fn
        return ScalarSymbol(
            lambda t, x, xi: f(t, x, xi) + g(t, x, xi),
            order=max(self.order, other.order),
            depends_t=self.depends_t or other.depends_t,
            depends_x=self.depends_x or other.depends_x,
            name=_combine(self.name, "+", other.name),
        )

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-_as_symbol(other))

    def __neg__(self):
        if self.is_zero:
            return self
        f = self.fn
        return ScalarSymbol(
            lambda t, x, xi: -f(t, x, xi),
            order=self.order,
            depends_t=self.depends_t,
            depends_x=self.depends_x,
            name=f"-({self.name})" if self.name else "",
        )

    def __mul__(self, other):
        other = _as_symbol(other)
        if self.is_zero or other.is_zero:
            return zero_symbol()
        f, g = self.fn, other.fn
        return ScalarSymbol(
            lambda t, x, xi: f(t, x, xi) * g(t, x, xi),
            order=self.order + other.order,
            depends_t=self.depends_t or other.depends_t,
            depends_x=self.depends_x or other.depends_x,
            name=_combine(self.name, "*", other.name),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_symbol(other)
        f, g = self.fn, other.fn
        return ScalarSymbol(
            lambda t, x, xi: f(t, x, xi) / g(t, x, xi),
            order=self.order - other.order,
            depends_t=self.depends_t or other.depends_t,
            depends_x=self.depends_x or other.depends_x,
            name=_combine(self.name, "/", other.name),
        )


def _combine(a: str, op: str, b: str) -> str:
    if a and b:
        return f"({a}{op}{b})"
    return ""


_ZERO = None


def zero_symbol() -> ScalarSymbol:
    """The identically-zero symbol (shared singleton)."""
    global _ZERO
    if _ZERO is None:
        _ZERO = ScalarSymbol(
            lambda t, x, xi: np.zeros(np.broadcast(x, xi).shape, dtype=complex),
            order=VANISHING_ORDER,
            depends_t=False,
            depends_x=False,
            is_zero=True,
            name="0",
        )
    return _ZERO


def constant(c, name: str = "") -> ScalarSymbol:
    """Constant symbol of order 0."""
    if c == 0:
        return zero_symbol()
    cc = complex(c)
    return ScalarSymbol(
        lambda t, x, xi: np.broadcast_to(np.asarray(cc), np.broadcast(x, xi).shape),
        order=0.0,
        depends_t=False,
        depends_x=False,
        name=name or repr(c),
    )


def xi_symbol() -> ScalarSymbol:
    """The coordinate symbol xi, of order 1."""
    return ScalarSymbol(
        lambda t, x, xi: np.broadcast_arrays(np.asarray(xi, dtype=complex), x)[0],
        order=1.0,
        depends_t=False,
        depends_x=False,
        name="xi",
    )


def bracket(power: float = 1.0) -> ScalarSymbol:
    """Japanese bracket <xi> = (1 + xi^2)^(1/2), raised to a real power."""
    p = float(power)
    return ScalarSymbol(
        lambda t, x, xi: np.broadcast_arrays(
            np.power(1.0 + np.asarray(xi, dtype=float) ** 2, 0.5 * p).astype(complex), x
        )[0],
        order=p,
        depends_t=False,
        depends_x=False,
        name=f"bracket^{p:g}",
    )


def from_function(fn, order, depends_t=True, depends_x=True, name="") -> ScalarSymbol:
    """Wrap an arbitrary numpy-broadcasting callable as a symbol."""
    return ScalarSymbol(fn, float(order), depends_t, depends_x, name=name)


def x_function(f, name: str = "") -> ScalarSymbol:
    """Order-0 symbol depending on x only, e.g. x_function(np.sin)."""
    return ScalarSymbol(
        lambda t, x, xi: np.broadcast_arrays(np.asarray(f(x), dtype=complex), xi)[0],
        order=0.0,
        depends_t=False,
        depends_x=True,
        name=name,
    )


def _as_symbol(v) -> ScalarSymbol:
    if isinstance(v, ScalarSymbol):
        return v
    if isinstance(v, (int, float, complex)):
        return constant(v)
    raise TypeError(f"cannot interpret {v!r} as a symbol")


def eval_grid(sym: ScalarSymbol, grid: GridSpec, t: float) -> np.ndarray:
    """Evaluate a symbol on the (x, xi) grid at time t.

    Returns the (nx, nx) complex array ``a[i, k] = sym(t, x_i, xi_k)``.
    Raises EvaluationError naming the first offending node if any value
    is non-finite.
    """
    if not 0.0 <= t <= grid.T_final + 1e-12 * max(1.0, grid.T_final):
        raise ValueError(f"t={t} outside [0, {grid.T_final}]")
    X = grid.x[:, None]
    XI = grid.frequencies[None, :]
    arr = np.asarray(sym(t, X, XI), dtype=complex)
    arr = np.ascontiguousarray(np.broadcast_to(arr, (grid.nx, grid.nx)))
    bad = ~np.isfinite(arr)
    if bad.any():
        i, k = np.argwhere(bad)[0]
        raise EvaluationError(
            f"non-finite symbol value at t={t}, x={grid.x[i]}, xi={grid.frequencies[k]}",
            t=t,
            x=float(grid.x[i]),
            xi=float(grid.frequencies[k]),
        )
    return arr


def estimate_order(sym: ScalarSymbol, grid: GridSpec, levels) -> float:
    """Numerical probe of the growth order of a symbol.

    Evaluates ``sup_{t,x} |sym(t, x, +-level)|`` on the grid's time and
    space samples for each dyadic frequency level and returns the
    least-squares slope of ``log sup`` against ``log <level>``.

    Returns VANISHING_ORDER if the symbol vanishes on every level.
    """
    levels = np.asarray(sorted(float(v) for v in levels))
    if levels.size < 3:
        raise ValueError("need at least 3 probe levels")
    lo = max(2.0 * grid.M, 2.0)
    if levels[0] < lo:
        raise ValueError(f"probe levels must all be >= {lo}")
    X = grid.x[:, None]
    sups = np.empty(levels.size)
    for idx, lev in enumerate(levels):
        XI = np.array([[lev, -lev]])
        best = 0.0
        for t in grid.sample_times():
            vals = np.abs(np.asarray(sym(t, X, XI), dtype=complex))
            if not np.isfinite(vals).all():
                raise EvaluationError(f"non-finite value probing level {lev}", t=t)
            best = max(best, float(vals.max()))
        sups[idx] = best
    keep = sups > 1e-280
    if not keep.any():
        return VANISHING_ORDER
    if keep.sum() < 2:
        return VANISHING_ORDER
    logw = np.log(np.sqrt(1.0 + levels[keep] ** 2))
    slope = np.polyfit(logw, np.log(sups[keep]), 1)[0]
    return float(slope)


@dataclass(frozen=True)
class MatrixSymbol:
    """Square matrix of scalar symbols."""

    entries: tuple
    upper_triangular: bool = False

    @staticmethod
    def from_rows(rows, upper_triangular: bool = False) -> "MatrixSymbol":
        m = len(rows)
        for r in rows:
            if len(r) != m:
                raise DimensionError("matrix of symbols must be square")
        ent = tuple(tuple(_as_symbol(s) for s in r) for r in rows)
        return MatrixSymbol(ent, upper_triangular)

    @staticmethod
    def identity(m: int) -> "MatrixSymbol":
        one = constant(1.0, "1")
        zero = zero_symbol()
        return MatrixSymbol.from_rows(
            [[one if i == j else zero for j in range(m)] for i in range(m)],
            upper_triangular=True,
        )

    @property
    def dim(self) -> int:
        return len(self.entries)

    def entry(self, i: int, j: int) -> ScalarSymbol:
        return self.entries[i][j]

    def eval_grid(self, grid: GridSpec, t: float) -> np.ndarray:
        """(m, m, nx, nx) complex array of all entries at time t."""
        m = self.dim
        out = np.empty((m, m, grid.nx, grid.nx), dtype=complex)
        for i in range(m):
            for j in range(m):
                out[i, j] = eval_grid(self.entries[i][j], grid, t)
        return out

    def eval_point(self, t, x, xi) -> np.ndarray:
        m = self.dim
        return np.array(
            [[complex(np.asarray(self.entries[i][j](t, x, xi)).reshape(())) for j in range(m)] for i in range(m)]
        )

    def matmul(self, other: "MatrixSymbol") -> "MatrixSymbol":
        if self.dim != other.dim:
            raise DimensionError(f"dim mismatch: {self.dim} vs {other.dim}")
        m = self.dim
        rows = []
        for i in range(m):
            row = []
            for j in range(m):
                acc = zero_symbol()
                for k in range(m):
                    acc = acc + self.entries[i][k] * other.entries[k][j]
                row.append(acc)
            rows.append(row)
        return MatrixSymbol.from_rows(rows)

    def add(self, other: "MatrixSymbol") -> "MatrixSymbol":
        if self.dim != other.dim:
            raise DimensionError(f"dim mismatch: {self.dim} vs {other.dim}")
        return MatrixSymbol.from_rows(
            [
                [self.entries[i][j] + other.entries[i][j] for j in range(self.dim)]
                for i in range(self.dim)
            ]
        )

    def scale(self, c) -> "MatrixSymbol":
        cs = _as_symbol(c)
        return MatrixSymbol.from_rows(
            [[cs * self.entries[i][j] for j in range(self.dim)] for i in range(self.dim)]
        )

    def apply_vector(self, vec) -> tuple:
        """Matrix-vector product with a sequence of scalar symbols."""
        if len(vec) != self.dim:
            raise DimensionError(f"vector length {len(vec)} != dim {self.dim}")
        out = []
        for i in range(self.dim):
            acc = zero_symbol()
            for j in range(self.dim):
                acc = acc + self.entries[i][j] * _as_symbol(vec[j])
            out.append(acc)
        return tuple(out)

    def check_upper_triangular(self, grid: GridSpec, tol: float = 1e-12) -> bool:
        """True if every strictly-below-diagonal entry stays below tol on the grid."""
        for t in grid.sample_times():
            for i in range(self.dim):
                for j in range(i):
                    sym = self.entries[i][j]
                    if sym.is_zero:
                        continue
                    if np.abs(eval_grid(sym, grid, t)).max() > tol:
                        return False
        return True


def matsym_apply_pointwise(op: str, A: MatrixSymbol, B) -> MatrixSymbol:
    """Pointwise matrix algebra: 'add', 'mul' (matrix product) or 'scale'.

    Declared orders combine entrywise: max for add, sum along products
    for mul and scale.
    """
    if op == "add":
        return A.add(B)
    if op == "mul":
        return A.matmul(B)
    if op == "scale":
        return A.scale(B)
    raise ValueError(f"unknown op {op!r}; expected add|mul|scale")
