"""Discrete quantization of symbols on torus grid functions, Sobolev norms.

Quantization is left: ``(a(t,x,D)u)(x_i) = (1/nx) * sum_k e^{i x_i xi_k}
a(t, x_i, xi_k) uhat(xi_k)`` with ``uhat`` the unnormalized forward DFT.
For x-independent symbols this reduces to an exact Fourier multiplier.
"""

from __future__ import annotations

import warnings
import weakref
from dataclasses import dataclass

import numpy as np

from .errors import AliasingWarning, EvaluationError
from .symbols import GridSpec, ScalarSymbol

_fft = np.fft.fft
_ifft = np.fft.ifft


@dataclass(frozen=True)
class Field:
    """Complex-valued function on the spatial grid at one time level."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.grid.nx,):
            raise ValueError(f"field length {vals.shape} != nx {self.grid.nx}")
        if not np.isfinite(vals).all():
            raise ValueError("field contains non-finite entries")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class StateVector:
    """m fields sharing a grid; component k is tracked in H^{s+k-1}."""

    components: tuple
    sobolev_base: float = 0.0

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("state vector needs at least one component")
        g = comps[0].grid
        for c in comps:
            if c.grid != g:
                raise ValueError("all components must share a grid")
        object.__setattr__(self, "components", comps)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def grid(self) -> GridSpec:
        return self.components[0].grid

    def component_norms(self) -> list:
        """H^{s+k-1} norm of component k, for k = 1..m."""
        s = self.sobolev_base
        return [sobolev_norm(c, s + k) for k, c in enumerate(self.components)]


# Per-symbol cache of evaluated multiplier vectors / quantization matrices.
# Keyed by the symbol object (weakly) then by (grid, time-key).  Time key is
# None for t-independent symbols so their tables are built exactly once.
_TABLE_CACHE: "weakref.WeakKeyDictionary[ScalarSymbol, dict]" = weakref.WeakKeyDictionary()
_CACHE_PER_SYMBOL = 16


def _cache_get(sym: ScalarSymbol, key):
    d = _TABLE_CACHE.get(sym)
    if d is None:
        return None
    return d.get(key)


def _cache_put(sym: ScalarSymbol, key, value):
    d = _TABLE_CACHE.setdefault(sym, {})
    if len(d) >= _CACHE_PER_SYMBOL:
        d.pop(next(iter(d)))
    d[key] = value


def _tkey(sym: ScalarSymbol, t: float):
    return None if not sym.depends_t else float(t)


def multiplier_values(sym: ScalarSymbol, grid: GridSpec, t: float) -> np.ndarray:
    """Frequency multiplier a(t, ., xi_k) for an x-independent symbol."""
    key = (grid, _tkey(sym, t), "mult")
    cached = _cache_get(sym, key)
    if cached is not None:
        return cached
    vals = np.asarray(sym(t, np.zeros(1), grid.frequencies), dtype=complex).reshape(grid.nx)
    if not np.isfinite(vals).all():
        k = int(np.argwhere(~np.isfinite(vals))[0])
        raise EvaluationError(
            f"non-finite multiplier at t={t}, xi={grid.frequencies[k]}",
            t=t, xi=float(grid.frequencies[k]),
        )
    vals.flags.writeable = False
    _cache_put(sym, key, vals)
    return vals


def _resum_matrix(grid: GridSpec) -> np.ndarray:
    """E[i, k] = exp(i x_i xi_k) / nx, the inverse-transform resummation."""
    key = (grid, None, "resum")
    cached = _cache_get(_RESUM_OWNER, key)
    if cached is not None:
        return cached
    E = np.exp(1j * np.outer(grid.x, grid.frequencies)) / grid.nx
    E.flags.writeable = False
    _cache_put(_RESUM_OWNER, key, E)
    return E


# Dummy hashable owner for grid-level (symbol-independent) cache entries.
_RESUM_OWNER = ScalarSymbol(lambda t, x, xi: 0.0, 0.0, name="_resum_owner")


def quantization_matrix(sym: ScalarSymbol, grid: GridSpec, t: float) -> np.ndarray:
    """Dense operator Q with (Qu)(x_i) = (a(t,x,D)u)(x_i), acting on uhat."""
    key = (grid, _tkey(sym, t), "quant")
    cached = _cache_get(sym, key)
    if cached is not None:
        return cached
    from .symbols import eval_grid

    table = eval_grid(sym, grid, t)
    Q = table * _resum_matrix(grid)
    Q.flags.writeable = False
    _cache_put(sym, key, Q)
    return Q


def apply_symbol_values(sym: ScalarSymbol, t: float, values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Quantized action on a raw sample array (hot path used by the solvers)."""
    if sym.is_zero:
        return np.zeros_like(values, dtype=complex)
    uhat = _fft(values)
    if not sym.depends_x:
        return _ifft(multiplier_values(sym, grid, t) * uhat)
    return quantization_matrix(sym, grid, t) @ uhat


def apply_symbol(sym: ScalarSymbol, t: float, u: Field) -> Field:
    """Apply the operator a(t, x, D_x) to a field."""
    out = apply_symbol_values(sym, t, u.values, u.grid)
    if not np.isfinite(out).all():
        raise EvaluationError(f"non-finite field after applying {sym.name or 'symbol'}", t=t)
    return Field(out, u.grid)


def apply_symbol_many(sym: ScalarSymbol, times, U: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Apply a symbol to a stack of fields U[level, :] at the given times.

    Batched over levels whenever the symbol is t-independent.
    """
    U = np.asarray(U, dtype=complex)
    if sym.is_zero:
        return np.zeros_like(U)
    if not sym.depends_t:
        Uhat = _fft(U, axis=1)
        if not sym.depends_x:
            return _ifft(multiplier_values(sym, grid, 0.0)[None, :] * Uhat, axis=1)
        return Uhat @ quantization_matrix(sym, grid, 0.0).T
    out = np.empty_like(U)
    for r, t in enumerate(times):
        out[r] = apply_symbol_values(sym, float(t), U[r], grid)
    return out


def sobolev_weights(grid: GridSpec, s: float) -> np.ndarray:
    key = (grid, float(s), "sobw")
    cached = _cache_get(_RESUM_OWNER, key)
    if cached is not None:
        return cached
    w = (1.0 + grid.frequencies**2) ** float(s)
    w.flags.writeable = False
    _cache_put(_RESUM_OWNER, key, w)
    return w


def sobolev_norm_values(values: np.ndarray, grid: GridSpec, s: float) -> float:
    """H^s norm (sum_k <xi_k>^{2s} |uhat_k|^2)^{1/2} of a sample array."""
    uhat = _fft(np.asarray(values, dtype=complex))
    return float(np.sqrt(np.sum(sobolev_weights(grid, s) * np.abs(uhat) ** 2)))


def sobolev_norm(u: Field, s: float) -> float:
    return sobolev_norm_values(u.values, u.grid, s)


def frequency_cutoff(u: Field, M: float, mode: str) -> Field:
    """Zero the coefficients with |xi| < M ('high') or |xi| >= M ('low')."""
    if mode not in ("low", "high"):
        raise ValueError(f"mode must be 'low' or 'high', got {mode!r}")
    keep = np.abs(u.grid.frequencies) >= M
    if mode == "low":
        keep = ~keep
    uhat = _fft(u.values)
    return Field(_ifft(np.where(keep, uhat, 0.0)), u.grid)


def highfreq_mass_fraction(values: np.ndarray, grid: GridSpec, s: float) -> float:
    """Fraction of the H^s mass carried by the top quarter of the spectrum."""
    uhat = _fft(np.asarray(values, dtype=complex))
    mass = sobolev_weights(grid, s) * np.abs(uhat) ** 2
    total = mass.sum()
    if total == 0.0:
        return 0.0
    top = np.abs(grid.frequencies) >= 0.75 * grid.xi_max
    return float(mass[top].sum() / total)


def warn_if_aliased(values: np.ndarray, grid: GridSpec, s: float, context: str = "") -> bool:
    """Emit AliasingWarning when the band-limit guard is violated."""
    frac = highfreq_mass_fraction(values, grid, s)
    if frac > 1e-8:
        warnings.warn(
            f"top quarter of the spectrum carries {frac:.3e} of the H^{s:g} mass"
            + (f" ({context})" if context else ""),
            AliasingWarning,
            stacklevel=2,
        )
        return True
    return False


def measure_operator_norm(sym: ScalarSymbol, grid: GridSpec, sigma: float, modes=None) -> float:
    """sup over single modes of |a u|_{H^sigma} / |u|_{H^{sigma+r}}, r = declared order."""
    if modes is None:
        modes = [k for k in (1, 2, 4, 8, 16, 32) if k < grid.nx // 2]
    best = 0.0
    for k in modes:
        u = Field(np.exp(1j * k * (2.0 * np.pi / grid.L) * grid.x), grid)
        num = sobolev_norm(apply_symbol(sym, 0.0, u), sigma)
        den = sobolev_norm(u, sigma + sym.order)
        if den > 0:
            best = max(best, num / den)
    return best
