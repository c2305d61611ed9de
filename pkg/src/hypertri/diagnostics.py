"""Norm-trace fitting and refinement studies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateData
from .cascade import SystemSpec, solve_cascade, solve_reference
from .symbols import GridSpec

SATURATION_FLOOR = 1e-13


@dataclass(frozen=True)
class GrowthFit:
    """Exponential-envelope fit of a norm trace: norm ~ const * e^{c t}."""

    c_fit: float
    residual: float
    window: tuple
    raw_slope: float

    def to_dict(self) -> dict:
        return {
            "c_fit": self.c_fit,
            "residual": self.residual,
            "window": list(self.window),
            "raw_slope": self.raw_slope,
        }


def fit_exponential_bound(times, norms, data_norm: float) -> GrowthFit:
    """Least-squares slope of log(norm / data_norm) against t.

    The slope is clipped below at zero (the envelope allows decay); the
    raw slope is kept in the report.  ``residual`` is the largest absolute
    deviation of the log-norm from the fitted line.
    """
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if times.size < 4:
        raise DegenerateData("need at least 4 trace points")
    if data_norm <= 0.0 or not np.isfinite(data_norm):
        raise DegenerateData("data norm must be positive and finite")
    if (norms <= 0.0).any() or not np.isfinite(norms).all():
        raise DegenerateData("norm trace must be positive and finite")
    y = np.log(norms / data_norm)
    slope, intercept = np.polyfit(times, y, 1)
    residual = float(np.abs(y - (slope * times + intercept)).max())
    return GrowthFit(
        c_fit=float(max(slope, 0.0)),
        residual=residual,
        window=(float(times[0]), float(times[-1])),
        raw_slope=float(slope),
    )


def fit_solution_growth(solution, data_norm: Optional[float] = None) -> GrowthFit:
    """Fit the summed anisotropic norms of a CascadeSolution."""
    totals = solution.norm_trace.sum(axis=1)
    if data_norm is None:
        data_norm = float(totals[0])
    return fit_exponential_bound(solution.times, totals, data_norm)


@dataclass
class ConvergenceReport:
    """Errors and empirical orders across a resolution ladder."""

    substeps: list
    errors: list
    orders: list
    saturated: list
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "substeps": self.substeps,
            "errors": self.errors,
            "orders": self.orders,
            "saturated": self.saturated,
            "warnings": self.warnings,
        }


def _solution_error(a, b) -> float:
    """Relative sup-in-t anisotropic discrepancy between two solutions."""
    worst = 0.0
    m = a.m
    for k in range(m):
        ref = max(max(sv.component_norms()[k] for sv in b.states), 1e-300)
        for sa, sb in zip(a.states, b.states):
            diff = sa.components[k].values - sb.components[k].values
            from .pdo import sobolev_norm_values

            num = sobolev_norm_values(diff, sa.components[k].grid, a.states[0].sobolev_base + k)
            worst = max(worst, num / ref)
    return worst


def refinement_study(spec: SystemSpec, grid: GridSpec, substeps_ladder,
                     mode: str = "pair", oracle=None,
                     override_levi: bool = False) -> ConvergenceReport:
    """Error decay along a temporal refinement ladder.

    mode 'pair' measures the cascade-versus-reference discrepancy at each
    resolution; mode 'cascade' or 'reference' measures one solver against
    ``oracle`` (a callable grid -> CascadeSolution-like truth) or, when no
    oracle is given, against the finest run of the same solver.
    """
    ladder = sorted(int(v) for v in substeps_ladder)
    if len(ladder) < 2:
        raise ValueError("need at least 2 resolutions")
    import warnings as _w

    collected = []
    runs = []
    with _w.catch_warnings(record=True) as caught:
        _w.simplefilter("always")
        for sub in ladder:
            if mode == "pair":
                ca = solve_cascade(spec, grid, substeps=sub, override_levi=override_levi)
                re = solve_reference(spec, grid, substeps=sub, override_levi=override_levi)
                runs.append((ca, re))
            elif mode == "cascade":
                runs.append(solve_cascade(spec, grid, substeps=sub, override_levi=override_levi))
            elif mode == "reference":
                runs.append(solve_reference(spec, grid, substeps=sub, override_levi=override_levi))
            else:
                raise ValueError(f"unknown mode {mode!r}")
        collected = [str(w.message) for w in caught if w.category.__name__ == "AliasingWarning"]

    errors = []
    if mode == "pair":
        errors = [_solution_error(ca, re) for ca, re in runs]
    elif oracle is not None:
        truth = oracle(grid)
        errors = [_solution_error(r, truth) for r in runs]
    else:
        finest = runs[-1]
        errors = [_solution_error(r, finest) for r in runs[:-1]]
        ladder_used = ladder[:-1]
        orders, saturated = _orders(errors)
        return ConvergenceReport(ladder_used, errors, orders, saturated, collected)

    orders, saturated = _orders(errors)
    return ConvergenceReport(ladder, errors, orders, saturated, collected)


def _orders(errors):
    orders = []
    saturated = []
    for e0, e1 in zip(errors, errors[1:]):
        sat = e0 < SATURATION_FLOOR or e1 < SATURATION_FLOOR
        saturated.append(sat)
        if sat or e1 == 0.0:
            orders.append(None)
        else:
            orders.append(float(np.log2(e0 / e1)))
    return orders, saturated
