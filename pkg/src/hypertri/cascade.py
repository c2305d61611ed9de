"""Cascade solver for first-order systems with upper-triangular principal part.

The system ``D_t u = (Lambda + N) u + B u + f`` is solved slab by slab:
on each slab the highest component is eliminated first, each level k is
resolved by inverting ``I - G0_k`` with a truncated geometric (Neumann)
series, the bottom component is obtained as the fixed point of its own
level operator, and the remaining components follow by forward
substitution.  The level operators are never materialized; they are
closures composing characteristic propagator sweeps with quantized symbol
applications.

``solve_reference`` integrates the full coupled system by the method of
lines with the same Runge-Kutta contract, providing an independent
cross-check of the cascade.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    DimensionError,
    HypothesisFailure,
    InstabilityError,
    NotContractive,
    SolveFailure,
)
from .pdo import (
    Field,
    StateVector,
    apply_symbol_many,
    apply_symbol_values,
    sobolev_weights,
    warn_if_aliased,
)
from .propagators import (
    CFL_LIMIT,
    CoarseSource,
    MeshSource,
    PropagatorConfig,
    _grid_sup,
    _integrate,
    check_hyperbolic,
)
from .schur import default_order_levels
from .symbols import (
    GridSpec,
    MatrixSymbol,
    ScalarSymbol,
    VANISHING_ORDER,
    estimate_order,
    eval_grid,
    zero_symbol,
)

MIN_SLAB_INTERVALS = 4
LEVI_SLACK = 0.1


@dataclass(frozen=True)
class SystemSpec:
    """Upper-triangular principal part plus zero-order coupling and data.

    ``Lambda`` is the list of m order-1 diagonal symbols, ``Nupper`` the
    strictly upper order-1 part, ``B`` the order-0 matrix whose entry
    (i, j) with i > j must actually decay like order j - i.  ``f`` is
    either None or a list of StateVector samples at the grid times.
    Component k (0-based) is tracked in H^{s+k}.
    """

    m: int
    Lambda: tuple
    Nupper: MatrixSymbol
    B: MatrixSymbol
    u0: StateVector
    s: float = 0.0
    f: Optional[tuple] = None

    def __post_init__(self):
        if len(self.Lambda) != self.m:
            raise DimensionError("Lambda length != m")
        if self.Nupper.dim != self.m or self.B.dim != self.m:
            raise DimensionError("matrix dimensions != m")
        if self.u0.m != self.m:
            raise DimensionError("initial data has wrong component count")
        if self.f is not None:
            object.__setattr__(self, "f", tuple(self.f))
            for sv in self.f:
                if sv.m != self.m:
                    raise DimensionError("source has wrong component count")

    def coupling(self, i: int, j: int) -> Optional[ScalarSymbol]:
        """Off-diagonal operator entry: a_ij + b_ij above, b_ij below; None if zero."""
        if i == j:
            raise ValueError("diagonal terms live in the propagators")
        sym = self.B.entry(i, j)
        if i < j:
            sym = self.Nupper.entry(i, j) + sym
        return None if sym.is_zero else sym

    def diagonal(self, i: int) -> ScalarSymbol:
        return self.Lambda[i] + self.B.entry(i, i)


@dataclass
class HypothesisReport:
    """Order bookkeeping for the below-diagonal terms plus data checks."""

    levi: list = field(default_factory=list)
    lambda_imag_max: float = 0.0
    nupper_strict: bool = True
    u0_norms: list = field(default_factory=list)
    f_norm_sup: list = field(default_factory=list)
    passed: bool = True

    def to_dict(self) -> dict:
        return {
            "levi": [
                {
                    "entry": f"{e['i'] + 1},{e['j'] + 1}",
                    "required_order": e["required"],
                    "estimated_order": (
                        -999.0 if e["estimated"] == VANISHING_ORDER else e["estimated"]
                    ),
                    "passed": e["passed"],
                }
                for e in self.levi
            ],
            "lambda_imag_max": self.lambda_imag_max,
            "nupper_strict": self.nupper_strict,
            "u0_norms": self.u0_norms,
            "f_norm_sup": self.f_norm_sup,
            "passed": self.passed,
        }


def check_hypotheses(spec: SystemSpec, grid: GridSpec) -> HypothesisReport:
    """Probe the order conditions and data regularity; report only."""
    rep = HypothesisReport()
    levels = default_order_levels(grid)
    for i in range(spec.m):
        for j in range(i):
            sym = spec.B.entry(i, j)
            required = float(j - i)
            est = (
                VANISHING_ORDER
                if sym.is_zero
                else estimate_order(sym, grid, levels)
            )
            ok = est <= required + LEVI_SLACK
            rep.levi.append(
                {"i": i, "j": j, "required": required, "estimated": est, "passed": ok}
            )
            if not ok:
                rep.passed = False
    worst_imag = 0.0
    for lam in spec.Lambda:
        for t in grid.sample_times():
            worst_imag = max(worst_imag, float(np.abs(eval_grid(lam, grid, t).imag).max()))
    rep.lambda_imag_max = worst_imag
    if worst_imag > 1e-10:
        rep.passed = False
    rep.nupper_strict = spec.Nupper.check_upper_triangular(grid, tol=1e-12)
    if not rep.nupper_strict:
        rep.passed = False
    rep.u0_norms = spec.u0.component_norms()
    if not all(np.isfinite(rep.u0_norms)):
        rep.passed = False
    if spec.f is not None:
        sup = [0.0] * spec.m
        for sv in spec.f:
            for k, v in enumerate(sv.component_norms()):
                sup[k] = max(sup[k], v)
        rep.f_norm_sup = sup
        if not all(np.isfinite(sup)):
            rep.passed = False
    return rep


def component_rhs(spec: SystemSpec, i: int, u: StateVector, t: float) -> Field:
    """Off-diagonal coupling source feeding the level-i propagator.

    Component indices are 0-based.
    """
    if not 0 <= i < spec.m:
        raise ValueError(f"component index {i} out of range")
    grid = u.grid
    acc = np.zeros(grid.nx, dtype=complex)
    for j in range(spec.m):
        if j == i:
            continue
        sym = spec.coupling(i, j)
        if sym is None:
            continue
        acc += apply_symbol_values(sym, t, u.components[j].values, grid)
    return Field(acc, grid)


@dataclass
class NeumannStats:
    iterations: int
    rho: float
    ratios: list
    converged: bool

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "rho": self.rho,
            "converged": self.converged,
        }


def _geomean(ratios) -> float:
    pos = [r for r in ratios if r > 0]
    if not pos:
        return 0.0
    return float(np.exp(np.mean(np.log(pos))))


def _neumann_core(apply_fn: Callable, rhs: np.ndarray, norm_fn: Callable,
                  tol_fp: float, max_iter: int) -> tuple:
    v = rhs.copy()
    rhs_norm = norm_fn(rhs)
    if rhs_norm == 0.0:
        return v, NeumannStats(0, 0.0, [], True)
    inc = rhs
    prev_norm = rhs_norm
    ratios = []
    bad_run = 0
    converged = False
    for _ in range(max_iter):
        inc = apply_fn(inc)
        n = norm_fn(inc)
        ratios.append(n / prev_norm if prev_norm > 0 else 0.0)
        if ratios[-1] >= 1.0:
            bad_run += 1
            if bad_run >= 3:
                raise NotContractive(
                    f"increment ratio {ratios[-1]:.3f} >= 1 for 3 consecutive iterations",
                    rho=_geomean(ratios),
                )
        else:
            bad_run = 0
        v = v + inc
        if n <= tol_fp * rhs_norm:
            converged = True
            break
        if n == 0.0:
            converged = True
            break
        prev_norm = n
    return v, NeumannStats(len(ratios), _geomean(ratios), ratios, converged)


def neumann_invert(apply_G: Callable, rhs, grid: Optional[GridSpec] = None,
                   tol_fp: float = 1e-10, max_iter: int = 200,
                   norm: Optional[Callable] = None) -> tuple:
    """Solve (I - G) v = rhs by the truncated geometric series.

    ``rhs`` is a list of Fields or a raw (levels, nx) array; ``apply_G``
    must act on the same representation.  Returns (v, NeumannStats).
    Raises NotContractive when the increment ratio stays >= 1.
    """
    as_fields = not isinstance(rhs, np.ndarray)
    if as_fields:
        g = rhs[0].grid
        arr = np.stack([f.values for f in rhs])
        wrap = lambda U: [Field(row, g) for row in U]
        unwrap = lambda fl: np.stack([f.values for f in fl])
        apply_arr = lambda U: unwrap(apply_G(wrap(U)))
        grid = g
    else:
        arr = np.asarray(rhs, dtype=complex)
        apply_arr = apply_G
    if norm is None:
        if grid is None:
            raise ValueError("need a grid or an explicit norm")
        w = sobolev_weights(grid, 0.0)
        norm = lambda U: float(
            np.sqrt((w * np.abs(np.fft.fft(U, axis=-1)) ** 2).sum(axis=-1)).max()
        )
    v, stats = _neumann_core(apply_arr, arr, norm, tol_fp, max_iter)
    if as_fields:
        return [Field(row, grid) for row in v], stats
    return v, stats


@dataclass
class CascadeSolution:
    """Grid-time solution, slab bookkeeping and norm trace."""

    times: np.ndarray
    states: tuple  # one StateVector per grid time
    slab_boundaries: list
    neumann_stats: list  # per slab: {level: [NeumannStats, ...]}
    norm_trace: np.ndarray  # (nt, m) of H^{s+k} norms
    internals: Optional[dict] = None

    @property
    def m(self) -> int:
        return self.states[0].m

    def final(self) -> StateVector:
        return self.states[-1]


class _Slab:
    """Operator context for one time slab: levels are 0-based, level k
    is measured in H^{s+k}."""

    def __init__(self, spec: SystemSpec, grid: GridSpec, i0: int, n_int: int,
                 substeps: int, tol_fp: float, max_iter: int,
                 u_start: np.ndarray, record: bool):
        self.spec = spec
        self.grid = grid
        self.t0 = float(grid.times[i0])
        self.i0 = i0
        self.n_int = n_int
        self.substeps = substeps
        self.nsteps = n_int * substeps
        self.h = grid.dt / substeps
        self.fine_times = self.t0 + self.h * np.arange(self.nsteps + 1)
        self.tol_fp = tol_fp
        self.max_iter = max_iter
        self.u_start = u_start
        self.stats = {k: [] for k in range(spec.m)}
        self.record = record
        self.utilde0 = {}
        self._norm_w = [sobolev_weights(grid, spec.s + k) for k in range(spec.m)]
        self._diag = [spec.diagonal(i) for i in range(spec.m)]

    def norm_fn(self, k: int) -> Callable:
        w = self._norm_w[k]

        def nf(U):
            return float(np.sqrt((w * np.abs(np.fft.fft(U, axis=-1)) ** 2).sum(axis=-1)).max())

        return nf

    def prop_homog(self, i: int, w0: np.ndarray) -> np.ndarray:
        return _integrate(self._diag[i], self.grid, self.t0, self.nsteps, self.h, w0)

    def prop_inhom(self, i: int, S: np.ndarray) -> np.ndarray:
        zero = np.zeros(self.grid.nx, dtype=complex)
        return _integrate(self._diag[i], self.grid, self.t0, self.nsteps, self.h,
                          zero, MeshSource(S))

    def prop_inhom_coarse(self, i: int, src: CoarseSource) -> np.ndarray:
        zero = np.zeros(self.grid.nx, dtype=complex)
        return _integrate(self._diag[i], self.grid, self.t0, self.nsteps, self.h,
                          zero, src)

    def apply_coupling(self, i: int, j: int, U: np.ndarray) -> np.ndarray:
        sym = self.spec.coupling(i, j)
        return apply_symbol_many(sym, self.fine_times, U, self.grid)

    def solve_levels(self, k: int, data: dict, record: bool = False) -> dict:
        """Resolve levels k..m-1 given their affine data on this slab."""
        spec = self.spec
        m = spec.m
        if k == m - 1:
            if record and self.record:
                self.utilde0[k] = data[k].copy()
            return {k: data[k]}
        hi = range(k + 1, m)
        P = self.solve_levels(k + 1, {j: data[j] for j in hi}, record=record)
        rhs = data[k].copy()
        has_up = [j for j in hi if spec.coupling(k, j) is not None]
        has_down = [j for j in hi if spec.coupling(j, k) is not None]
        for j in has_up:
            rhs += self.prop_inhom(k, self.apply_coupling(k, j, P[j]))
        if record and self.record:
            self.utilde0[k] = rhs.copy()

        if has_up and has_down:
            def G0(v):
                sub = {}
                for j in hi:
                    if spec.coupling(j, k) is not None:
                        sub[j] = self.prop_inhom(j, self.apply_coupling(j, k, v))
                    else:
                        sub[j] = np.zeros_like(v)
                S = self.solve_levels(k + 1, sub)
                out = np.zeros_like(v)
                for j in has_up:
                    out += self.prop_inhom(k, self.apply_coupling(k, j, S[j]))
                return out

            u_k, stats = _neumann_core(G0, rhs, self.norm_fn(k), self.tol_fp, self.max_iter)
            self.stats[k].append(stats)
        else:
            u_k = rhs
            self.stats[k].append(NeumannStats(0, 0.0, [], True))

        out = {k: u_k}
        if has_down:
            sub = {}
            for j in hi:
                if spec.coupling(j, k) is not None:
                    sub[j] = self.prop_inhom(j, self.apply_coupling(j, k, u_k))
                else:
                    sub[j] = np.zeros((self.nsteps + 1, self.grid.nx), dtype=complex)
            Q = self.solve_levels(k + 1, sub)
            for j in hi:
                out[j] = P[j] + Q[j]
        else:
            for j in hi:
                out[j] = P[j]
        return out

    def run(self, f_sources) -> dict:
        data = {}
        for i in range(self.spec.m):
            data[i] = self.prop_homog(i, self.u_start[i])
            if f_sources is not None:
                data[i] = data[i] + self.prop_inhom_coarse(i, f_sources[i])
        return self.solve_levels(0, data, record=True)


def _validate_configs(spec: SystemSpec, grid: GridSpec, substeps: int):
    h = grid.dt / substeps
    for i in range(spec.m):
        cfg = PropagatorConfig(spec.Lambda[i], spec.B.entry(i, i), substeps)
        check_hyperbolic(cfg, grid)
        sup = _grid_sup(spec.diagonal(i), grid)
        if h * sup > CFL_LIMIT:
            raise InstabilityError(
                f"step-size guard violated on level {i}: dt*max = {h * sup:.3f}",
                cfl=h * sup,
            )


def _f_sources(spec: SystemSpec, grid: GridSpec):
    if spec.f is None:
        return None
    stacks = []
    for i in range(spec.m):
        vals = np.stack([sv.components[i].values for sv in spec.f])
        stacks.append(CoarseSource(grid.times, vals))
    return stacks


def solve_cascade(spec: SystemSpec, grid: GridSpec, substeps: int = 16,
                  tol_fp: float = 1e-10, max_iter: int = 200,
                  override_levi: bool = False,
                  collect_internals: bool = False) -> CascadeSolution:
    """Back-substitution / fixed-point / forward-substitution solver.

    Starts with the whole horizon as one slab and halves the slab on
    NotContractive down to MIN_SLAB_INTERVALS grid intervals, restarting
    from the slab-end state.  Raises HypothesisFailure when the order
    checks fail without override, SolveFailure when no slab contracts.
    """
    report = check_hypotheses(spec, grid)
    if not report.passed and not override_levi:
        raise HypothesisFailure("order or data checks failed; pass override_levi to force")
    _validate_configs(spec, grid, substeps)
    for k, c in enumerate(spec.u0.components):
        warn_if_aliased(c.values, grid, spec.s + k, context=f"initial data component {k}")

    nt, m = grid.nt, spec.m
    f_src = _f_sources(spec, grid)
    out = np.empty((nt, m, grid.nx), dtype=complex)
    for i in range(m):
        out[0, i] = spec.u0.components[i].values
    current = np.stack([c.values for c in spec.u0.components])

    slab_len = nt - 1
    i0 = 0
    slab_bounds = [0.0]
    slab_stats = []
    internals = {"utilde0": []} if collect_internals else None
    while i0 < nt - 1:
        n_int = min(slab_len, nt - 1 - i0)
        slab = _Slab(spec, grid, i0, n_int, substeps, tol_fp, max_iter,
                     current, record=collect_internals)
        try:
            sol = slab.run(f_src)
        except NotContractive:
            if slab_len <= MIN_SLAB_INTERVALS:
                raise SolveFailure(
                    f"no contraction on a slab of {slab_len} grid intervals"
                ) from None
            slab_len = max(MIN_SLAB_INTERVALS, slab_len // 2)
            continue
        for i in range(m):
            fine = sol[i]
            for r in range(1, n_int + 1):
                out[i0 + r, i] = fine[r * substeps]
            current[i] = fine[-1]
        if collect_internals:
            internals["utilde0"].append(
                {k: v for k, v in slab.utilde0.items()}
            )
            internals.setdefault("fine_times", slab.fine_times)
            internals.setdefault("fine", {i: sol[i] for i in range(m)})
        slab_stats.append({k: slab.stats[k] for k in range(m)})
        i0 += n_int
        slab_bounds.append(float(grid.times[i0]))

    states = tuple(
        StateVector(tuple(Field(out[r, i], grid) for i in range(m)), spec.s)
        for r in range(nt)
    )
    trace = np.array([sv.component_norms() for sv in states])
    return CascadeSolution(
        times=grid.times.copy(),
        states=states,
        slab_boundaries=slab_bounds,
        neumann_stats=slab_stats,
        norm_trace=trace,
        internals=internals,
    )


def solve_reference(spec: SystemSpec, grid: GridSpec, substeps: int = 16,
                    override_levi: bool = False) -> CascadeSolution:
    """Method-of-lines integration of the full coupled system (oracle path)."""
    report = check_hypotheses(spec, grid)
    if not report.passed and not override_levi:
        raise HypothesisFailure("order or data checks failed; pass override_levi to force")
    m = spec.m
    # Row-sum step guard for the coupled system.
    h = grid.dt / substeps
    row_sup = np.zeros(m)
    for t in grid.sample_times():
        for i in range(m):
            acc = np.abs(eval_grid(spec.diagonal(i), grid, t))
            for j in range(m):
                if j == i:
                    continue
                sym = spec.coupling(i, j)
                if sym is not None:
                    acc = acc + np.abs(eval_grid(sym, grid, t))
            row_sup[i] = max(row_sup[i], float(acc.max()))
    if h * row_sup.max() > CFL_LIMIT:
        raise InstabilityError(
            f"step-size guard violated: dt*max row sum = {h * row_sup.max():.3f}",
            cfl=h * row_sup.max(),
        )
    for i in range(m):
        cfg = PropagatorConfig(spec.Lambda[i], spec.B.entry(i, i), substeps)
        check_hyperbolic(cfg, grid)

    f_src = _f_sources(spec, grid)
    entries = []
    for i in range(m):
        row = [(j, spec.coupling(i, j)) for j in range(m) if j != i]
        entries.append([(j, s) for j, s in row if s is not None])
    diag = [spec.diagonal(i) for i in range(m)]

    def rhs(t, U):
        dU = np.empty_like(U)
        for i in range(m):
            acc = apply_symbol_values(diag[i], t, U[i], grid)
            for j, sym in entries[i]:
                acc += apply_symbol_values(sym, t, U[j], grid)
            if f_src is not None:
                acc = acc + f_src[i].at(t)
            dU[i] = 1j * acc
        return dU

    nt = grid.nt
    nsteps = (nt - 1) * substeps
    U = np.stack([c.values for c in spec.u0.components]).astype(complex)
    out = np.empty((nt, m, grid.nx), dtype=complex)
    out[0] = U
    for n in range(nsteps):
        t = n * h
        k1 = rhs(t, U)
        k2 = rhs(t + 0.5 * h, U + (0.5 * h) * k1)
        k3 = rhs(t + 0.5 * h, U + (0.5 * h) * k2)
        k4 = rhs(t + h, U + h * k3)
        U = U + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(U).all():
            raise InstabilityError(
                f"non-finite state at t={t + h:.6g}", t=t + h, cfl=h * row_sup.max()
            )
        if (n + 1) % substeps == 0:
            out[(n + 1) // substeps] = U

    states = tuple(
        StateVector(tuple(Field(out[r, i], grid) for i in range(m)), spec.s)
        for r in range(nt)
    )
    trace = np.array([sv.component_norms() for sv in states])
    return CascadeSolution(
        times=grid.times.copy(),
        states=states,
        slab_boundaries=[0.0, float(grid.T_final)],
        neumann_stats=[],
        norm_trace=trace,
    )


@dataclass
class GrowthReport:
    """Per-mode amplification across a frequency ladder."""

    ladder: list
    ratios: list
    exponent: float

    def to_dict(self) -> dict:
        return {"ladder": self.ladder, "ratios": self.ratios, "exponent": self.exponent}


def mode_matrix(spec: SystemSpec, t: float, xi: float) -> np.ndarray:
    """Full symbol matrix at one frequency for x-independent systems."""
    m = spec.m
    M = np.zeros((m, m), dtype=complex)
    x0 = np.zeros(1)
    k = np.array([float(xi)])
    for i in range(m):
        M[i, i] = complex(np.asarray(spec.diagonal(i)(t, x0, k)).reshape(()))
        for j in range(m):
            if j == i:
                continue
            sym = spec.coupling(i, j)
            if sym is not None:
                M[i, j] = complex(np.asarray(sym(t, x0, k)).reshape(()))
    return M


def _require_x_independent(spec: SystemSpec, grid: GridSpec):
    from .propagators import _assert_x_independent

    for i in range(spec.m):
        _assert_x_independent(spec.diagonal(i), grid)
        for j in range(spec.m):
            if j == i:
                continue
            sym = spec.coupling(i, j)
            if sym is not None:
                _assert_x_independent(sym, grid)


def demo_loss_of_regularity(spec: SystemSpec, grid: GridSpec, ladder,
                            override_levi: bool = False) -> GrowthReport:
    """Per-mode amplification study over a frequency ladder.

    Requires x-independent coefficients so each mode evolves by the m x m
    system ``d uhat / dt = i M(t, xi) uhat``, integrated by an adaptive
    high-order method independent of the package's own stepper.  Ratios
    are measured in the flat component norm: the anisotropic scale absorbs
    one frequency factor per level by construction, so the flat norm is
    what exposes the loss.
    """
    report = check_hypotheses(spec, grid)
    if not report.passed and not override_levi:
        raise HypothesisFailure("order checks failed; pass override_levi to run the demo")
    _require_x_independent(spec, grid)
    T = float(grid.T_final)
    m = spec.m
    u0 = np.ones(m, dtype=complex) / np.sqrt(m)
    ratios = []
    for xi in ladder:
        def f(t, y):
            z = y[:m] + 1j * y[m:]
            dz = 1j * (mode_matrix(spec, t, xi) @ z)
            return np.concatenate([dz.real, dz.imag])

        y0 = np.concatenate([u0.real, u0.imag])
        sol = solve_ivp(f, (0.0, T), y0, method="DOP853", rtol=1e-10, atol=1e-12)
        if not sol.success:
            raise SolveFailure(f"mode integration failed at xi={xi}: {sol.message}")
        zT = sol.y[:m, -1] + 1j * sol.y[m:, -1]
        ratios.append(float(np.linalg.norm(zT) / np.linalg.norm(u0)))
    exponent = float(np.polyfit(np.log(np.asarray(ladder, float)), np.log(ratios), 1)[0])
    return GrowthReport(ladder=list(map(float, ladder)), ratios=ratios, exponent=exponent)
