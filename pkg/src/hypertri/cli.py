"""Scenario-driven command-line front end.

Subcommands:

    hypertri triangularise --scenario S.json --out DIR
    hypertri solve         --scenario S.json --out DIR [--mode cascade|reference|both]
                           [--override-levi] [--from-triangularised DIR]
                           [--seed N] [--tol-fp X]
    hypertri verify        --out DIR

Every flag can also be set through an environment variable with prefix
``HYPERTRI_`` (``HYPERTRI_SCENARIO``, ``HYPERTRI_OUT``, ``HYPERTRI_MODE``,
``HYPERTRI_OVERRIDE_LEVI``, ``HYPERTRI_FROM_TRIANGULARISED``,
``HYPERTRI_SEED``, ``HYPERTRI_TOL_FP``); an explicit flag wins.

Exit codes: 0 success; 1 verification mismatch; 2 triangularisation
failure (no valid pivot, bad eigenpair, or residual above tolerance);
3 order-condition failure without override; 4 solve failure (no
contraction at the minimum slab, or unstable stepping); 64 scenario or
expression parse error; 66 missing input file.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .cascade import (
    SystemSpec,
    check_hypotheses,
    solve_cascade,
    solve_reference,
)
from .diagnostics import fit_solution_growth
from .errors import (
    BadEigenpair,
    ConditionFailure,
    HypothesisFailure,
    InstabilityError,
    ParseError,
    ScenarioError,
    SolveFailure,
)
from .pdo import Field, StateVector, frequency_cutoff, apply_symbol, sobolev_norm
from .scenario import Scenario, build_matrix, build_system, load_scenario
from .schur import full_triangularise, numeric_eigendata, verify_triangular
from .symbols import GridSpec

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONDITION = 2
EXIT_HYPOTHESIS = 3
EXIT_SOLVE = 4
EXIT_USAGE = 64
EXIT_NOINPUT = 66

TOL_TRI = 1e-9
VERIFY_TOL = 1e-9


def _env(name: str):
    return os.environ.get(f"HYPERTRI_{name}")


def _json_dump(path: Path, obj) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    path.write_text(text, encoding="utf-8")


def _fmt(v) -> str:
    return repr(float(v))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _sample_indices(n: int, cap: int) -> np.ndarray:
    if n <= cap:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, cap).round().astype(int))


def _scenario_echo(sc: Scenario, extra=None) -> dict:
    d = {
        "m": sc.m,
        "s": sc.s,
        "T_final": sc.grid.T_final,
        "nt": sc.grid.nt,
        "nx": sc.grid.nx,
        "L": sc.grid.L,
        "M": sc.grid.M,
        "substeps": sc.substeps,
        "seed": sc.seed,
    }
    if extra:
        d.update(extra)
    return d


def _order_spotcheck(sc: Scenario, rng: np.random.Generator) -> list:
    """Seeded spot check of declared expression orders (warn-only)."""
    from .expressions import compile_symbol

    out = []
    syms = sc.raw.get("symbols", {})
    exprs = []
    for key in ("lambda", "eigenvalues"):
        exprs += list(syms.get(key) or [])
    for key in ("N", "B"):
        exprs += list((syms.get(key) or {}).values())
    for e in sorted(set(exprs)):
        sym = compile_symbol(e)
        t = float(rng.uniform(0.0, sc.grid.T_final))
        x = float(rng.uniform(0.0, sc.grid.L))
        lo = abs(complex(np.asarray(sym(t, np.array([x]), np.array([128.0]))).reshape(())))
        hi = abs(complex(np.asarray(sym(t, np.array([x]), np.array([256.0]))).reshape(())))
        if lo < 1e-300 or hi < 1e-300:
            probe = None
        else:
            probe = float(np.log2(hi / lo))
        entry = {"expr": e, "declared": sym.order, "probe": probe}
        entry["warn"] = probe is not None and probe > sym.order + 0.6
        out.append(entry)
    return out


# ---------------------------------------------------------------- triangularise


def _triangularise_sample(A, res, grid: GridSpec):
    """Decimated evaluation sample used for the CSV outputs."""
    it = _sample_indices(grid.nt, 5)
    ix = _sample_indices(grid.nx, 8)
    shell = np.where(grid.shell)[0]
    if shell.size == 0:
        shell = np.arange(grid.nx)
    order = shell[np.argsort(grid.frequencies[shell])]
    ik = order[_sample_indices(order.size, 8)]
    return it, ix, ik


def _eval_entries(mat, grid, times_idx, ix, ik):
    m = mat.dim
    out = np.empty((len(times_idx), m, m, len(ix), len(ik)), dtype=complex)
    X = grid.x[ix][:, None]
    XI = grid.frequencies[ik][None, :]
    for a, t_i in enumerate(times_idx):
        t = float(grid.times[t_i])
        for i in range(m):
            for j in range(m):
                vals = np.asarray(mat.entry(i, j)(t, X, XI), dtype=complex)
                out[a, i, j] = np.broadcast_to(vals, (len(ix), len(ik)))
    return out


def _sampled_residuals(A_s, T_s, Ti_s, Lam_s, N_s) -> dict:
    P = np.einsum("aik...,akl...,alj...->aij...", Ti_s, A_s, T_s)
    m = P.shape[1]
    target = N_s.copy()
    for i in range(m):
        target[:, i, i] = Lam_s[:, i]
    total = float(np.abs(P - target).max())
    below = 0.0
    for i in range(m):
        for j in range(i):
            below = max(below, float(np.abs(P[:, i, j]).max()))
    return {"residual_total_sampled": total, "residual_below_diag_sampled": below}


def cmd_triangularise(scenario_path: str, out_dir: str, seed=None) -> int:
    try:
        sc = load_scenario(scenario_path)
        A, eig, _B = build_matrix(sc)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except (ScenarioError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if seed is not None:
        sc.seed = int(seed)
    grid = sc.grid
    if eig is None:
        eig = numeric_eigendata(A, grid)
    report = {"kind": "triangularise", "scenario": _scenario_echo(sc)}
    try:
        res = full_triangularise(A, eig, grid, eps_cond=float(sc.flags.get("eps_cond", 1e-6)))
    except (ConditionFailure, BadEigenpair) as exc:
        report["failure"] = {
            "error": type(exc).__name__,
            "message": str(exc),
            "witness": {
                "t": getattr(exc, "t", None),
                "x": getattr(exc, "x", None),
                "xi": getattr(exc, "xi", None),
            },
        }
        _json_dump(out / "report.json", report)
        (out / "scenario.json").write_text(
            json.dumps(sc.raw, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        print(f"triangularisation failed: {exc}", file=sys.stderr)
        return EXIT_CONDITION

    ver = verify_triangular(A, res, grid)
    it, ix, ik = _triangularise_sample(A, res, grid)
    A_s = _eval_entries(A, grid, it, ix, ik)
    T_s = _eval_entries(res.T, grid, it, ix, ik)
    Ti_s = _eval_entries(res.Tinv, grid, it, ix, ik)
    N_s = _eval_entries(res.N, grid, it, ix, ik)
    m = sc.m
    Lam_s = np.empty((len(it), m, len(ix), len(ik)), dtype=complex)
    X = grid.x[ix][:, None]
    XI = grid.frequencies[ik][None, :]
    for a, t_i in enumerate(it):
        t = float(grid.times[t_i])
        for i in range(m):
            Lam_s[a, i] = np.broadcast_to(
                np.asarray(res.Lambda[i](t, X, XI), dtype=complex), (len(ix), len(ik))
            )

    def entry_rows(tab):
        rows = []
        for a, t_i in enumerate(it):
            t = grid.times[t_i]
            for i in range(m):
                for j in range(m):
                    for bx, x_i in enumerate(ix):
                        for bk, k_i in enumerate(ik):
                            v = tab[a, i, j, bx, bk]
                            rows.append(
                                (_fmt(t), _fmt(grid.x[x_i]), _fmt(grid.frequencies[k_i]),
                                 i + 1, j + 1, _fmt(v.real), _fmt(v.imag))
                            )
        return rows

    hdr = ["t", "x", "xi", "i", "j", "Re", "Im"]
    _write_csv(out / "T.csv", hdr, entry_rows(T_s))
    _write_csv(out / "Tinv.csv", hdr, entry_rows(Ti_s))
    _write_csv(out / "N.csv", hdr, entry_rows(N_s))
    lam_rows = []
    for a, t_i in enumerate(it):
        t = grid.times[t_i]
        for i in range(m):
            for bx, x_i in enumerate(ix):
                for bk, k_i in enumerate(ik):
                    v = Lam_s[a, i, bx, bk]
                    lam_rows.append(
                        (_fmt(t), _fmt(grid.x[x_i]), _fmt(grid.frequencies[k_i]),
                         i + 1, _fmt(v.real), _fmt(v.imag))
                    )
    _write_csv(out / "Lambda.csv", ["t", "x", "xi", "i", "Re", "Im"], lam_rows)

    report["verification"] = ver.to_dict()
    report["csv_residual"] = _sampled_residuals(A_s, T_s, Ti_s, Lam_s, N_s)
    report["condition_report"] = [
        {"step": k + 1, "pivot": j + 1, "min_modulus": mn}
        for k, j, mn in res.condition_report
    ]
    report["permutations"] = [[a + 1, b + 1] for a, b in res.permutations]
    rng = np.random.default_rng(sc.seed)
    report["order_spotcheck"] = _order_spotcheck(sc, rng)
    _json_dump(out / "report.json", report)
    (out / "scenario.json").write_text(
        json.dumps(sc.raw, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    ok = (
        ver.residual_total < TOL_TRI
        and ver.residual_below_diag < TOL_TRI
        and ver.residual_inverse < TOL_TRI
    )
    if not ok:
        print(f"residuals above tolerance: {ver.to_dict()}", file=sys.stderr)
        return EXIT_CONDITION
    return EXIT_OK


# ------------------------------------------------------------------------ solve


def _transformed_system(tri_dir: Path):
    """Rebuild the triangularised system of a prior run and conjugate the data.

    The zero-order matrix is conjugated pointwise (exact for x-independent
    symbols); data and sources are mapped by the quantized inverse
    transform and high-passed at the cutoff, with the discarded
    low-frequency norms recorded.
    """
    sc = load_scenario(tri_dir / "scenario.json")
    A, eig, B = build_matrix(sc)
    grid = sc.grid
    if eig is None:
        eig = numeric_eigendata(A, grid)
    res = full_triangularise(A, eig, grid, eps_cond=float(sc.flags.get("eps_cond", 1e-6)))
    m = sc.m
    Btil = res.Tinv.matmul(B).matmul(res.T)

    from .scenario import _data_field

    def transform_state(fields, t=0.0):
        new = []
        discarded = []
        for i in range(m):
            acc = np.zeros(grid.nx, dtype=complex)
            for j in range(m):
                sym = res.Tinv.entry(i, j)
                if sym.is_zero:
                    continue
                acc += apply_symbol(sym, t, fields[j]).values
            full = Field(acc, grid)
            high = frequency_cutoff(full, grid.M, "high")
            low = frequency_cutoff(full, grid.M, "low")
            new.append(high)
            discarded.append(sobolev_norm(low, sc.s + i))
        return StateVector(tuple(new), sc.s), discarded

    u0_fields = [_data_field(e, grid) for e in sc.raw["u0"]]
    u0t, discarded = transform_state(u0_fields)
    f = None
    if sc.raw.get("f") is not None:
        f = tuple(
            transform_state([_data_field(e, grid, t=float(t)) for e in sc.raw["f"]], t=float(t))[0]
            for t in grid.times
        )
    spec = SystemSpec(m=m, Lambda=res.Lambda, Nupper=res.N, B=Btil, u0=u0t, s=sc.s, f=f)
    return sc, spec, discarded


def _comparison(ca, re) -> dict:
    per = []
    for k in range(ca.m):
        ref = max(max(sv.component_norms()[k] for sv in re.states), 1e-300)
        worst = 0.0
        for sa, sb in zip(ca.states, re.states):
            diff = sa.components[k].values - sb.components[k].values
            from .pdo import sobolev_norm_values

            worst = max(
                worst,
                sobolev_norm_values(diff, sa.components[k].grid, sa.sobolev_base + k) / ref,
            )
        per.append(worst)
    return {"per_component_rel_sup": per, "max_rel_sup": max(per)}


def _write_solution_csv(out: Path, sol) -> None:
    rows = []
    grid = sol.states[0].components[0].grid
    for r, t in enumerate(sol.times):
        for k in range(sol.m):
            vals = sol.states[r].components[k].values
            for i in range(grid.nx):
                rows.append(
                    (_fmt(t), _fmt(grid.x[i]), k + 1, _fmt(vals[i].real), _fmt(vals[i].imag))
                )
    _write_csv(out / "solution.csv", ["t", "x", "k", "Re", "Im"], rows)


def _write_norms_csv(out: Path, sol) -> None:
    rows = []
    for r, t in enumerate(sol.times):
        for k in range(sol.m):
            rows.append((_fmt(t), k + 1, _fmt(sol.norm_trace[r, k])))
    _write_csv(out / "norms.csv", ["t", "k", "norm"], rows)


def cmd_solve(scenario_path, out_dir: str, mode: str = "both",
              override_levi: bool = False, from_triangularised=None,
              seed=None, tol_fp: float = 1e-10) -> int:
    out = Path(out_dir)
    discarded = None
    try:
        if from_triangularised:
            tri = Path(from_triangularised)
            if not (tri / "scenario.json").exists():
                print(f"error: no scenario.json in {tri}", file=sys.stderr)
                return EXIT_NOINPUT
            sc, spec, discarded = _transformed_system(tri)
        else:
            sc = load_scenario(scenario_path)
            spec = build_system(sc)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except (ScenarioError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConditionFailure, BadEigenpair) as exc:
        print(f"triangularisation failed: {exc}", file=sys.stderr)
        return EXIT_CONDITION
    if mode not in ("cascade", "reference", "both"):
        print(f"error: bad mode {mode!r}", file=sys.stderr)
        return EXIT_USAGE
    out.mkdir(parents=True, exist_ok=True)
    if seed is not None:
        sc.seed = int(seed)
    override = override_levi or bool(sc.flags.get("override_levi"))
    grid = sc.grid

    report = {"kind": "solve", "mode": mode, "scenario": _scenario_echo(sc)}
    hyp = check_hypotheses(spec, grid)
    report["hypothesis"] = hyp.to_dict()
    if discarded is not None:
        report["transformed"] = {"lowfreq_discarded_norms": discarded}
    if not hyp.passed and not override:
        _json_dump(out / "report.json", report)
        print("order-condition checks failed (no override)", file=sys.stderr)
        return EXIT_HYPOTHESIS

    import warnings as _w

    try:
        with _w.catch_warnings(record=True) as caught:
            _w.simplefilter("always")
            primary = None
            if mode in ("cascade", "both"):
                primary = solve_cascade(
                    spec, grid, substeps=sc.substeps, tol_fp=tol_fp, override_levi=override
                )
                report["neumann"] = [
                    {str(k + 1): [s.to_dict() for s in stats[k]] for k in stats}
                    for stats in primary.neumann_stats
                ]
                report["slab_boundaries"] = primary.slab_boundaries
            ref = None
            if mode in ("reference", "both"):
                ref = solve_reference(
                    spec, grid, substeps=sc.substeps, override_levi=override
                )
            report["warnings"] = sorted({str(w.message) for w in caught})
    except (SolveFailure, NotContractive, InstabilityError) as exc:
        report["failure"] = {"error": type(exc).__name__, "message": str(exc)}
        _json_dump(out / "report.json", report)
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_SOLVE

    main_sol = primary if primary is not None else ref
    fit = fit_solution_growth(main_sol)
    report["fit"] = fit.to_dict()
    if mode == "both":
        report["comparison"] = _comparison(primary, ref)
    rng = np.random.default_rng(sc.seed)
    report["order_spotcheck"] = _order_spotcheck(sc, rng)
    _write_norms_csv(out, main_sol)
    _write_solution_csv(out, main_sol)
    _json_dump(out / "report.json", report)
    return EXIT_OK


# ----------------------------------------------------------------------- verify


def _read_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, list(r)


def cmd_verify(out_dir: str) -> int:
    out = Path(out_dir)
    rpt_path = out / "report.json"
    if not rpt_path.exists():
        print(f"error: missing {rpt_path}", file=sys.stderr)
        return EXIT_NOINPUT
    try:
        report = json.loads(rpt_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        print("mismatch: report.json is not valid JSON", file=sys.stderr)
        return EXIT_MISMATCH
    kind = report.get("kind")
    if kind == "solve":
        return _verify_solve(out, report)
    if kind == "triangularise":
        return _verify_triangularise(out, report)
    print(f"mismatch: unknown report kind {kind!r}", file=sys.stderr)
    return EXIT_MISMATCH


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= VERIFY_TOL * max(1.0, abs(a), abs(b))


def _verify_solve(out: Path, report: dict) -> int:
    for name in ("solution.csv", "norms.csv"):
        if not (out / name).exists():
            print(f"error: missing {out / name}", file=sys.stderr)
            return EXIT_NOINPUT
    meta = report.get("scenario", {})
    try:
        grid = GridSpec(
            T_final=float(meta["T_final"]), nt=int(meta["nt"]),
            L=float(meta["L"]), nx=int(meta["nx"]), M=float(meta["M"]),
        )
        s = float(meta["s"])
        m = int(meta["m"])
    except (KeyError, ValueError):
        print("mismatch: report.json lacks usable scenario metadata", file=sys.stderr)
        return EXIT_MISMATCH

    _, sol_rows = _read_csv(out / "solution.csv")
    fields = {}
    for t_s, x_s, k_s, re_s, im_s in sol_rows:
        fields.setdefault((t_s, int(k_s)), []).append(float(re_s) + 1j * float(im_s))
    _, norm_rows = _read_csv(out / "norms.csv")
    from .pdo import sobolev_norm_values

    norms_csv = {}
    for t_s, k_s, n_s in norm_rows:
        norms_csv[(t_s, int(k_s))] = float(n_s)
    if set(norms_csv) != set(fields):
        print("mismatch: norms.csv and solution.csv cover different (t, k)", file=sys.stderr)
        return EXIT_MISMATCH
    for key, vals in fields.items():
        arr = np.asarray(vals, dtype=complex)
        if arr.size != grid.nx:
            print(f"mismatch: solution.csv row count at (t,k)={key}", file=sys.stderr)
            return EXIT_MISMATCH
        recomputed = sobolev_norm_values(arr, grid, s + key[1] - 1)
        if not _close(recomputed, norms_csv[key]):
            print(
                f"mismatch: norm at (t,k)={key}: csv {norms_csv[key]!r}, "
                f"recomputed {recomputed!r}",
                file=sys.stderr,
            )
            return EXIT_MISMATCH

    # Refit the growth constant from the stored norms.
    from .diagnostics import fit_exponential_bound

    times = sorted({float(t) for t, _ in norms_csv}, key=float)
    totals = []
    for t in times:
        totals.append(sum(norms_csv[(repr(t), k + 1)] for k in range(m)))
    fit = fit_exponential_bound(np.asarray(times), np.asarray(totals), totals[0])
    want = report.get("fit", {})
    for key, have in (("c_fit", fit.c_fit), ("raw_slope", fit.raw_slope), ("residual", fit.residual)):
        if key in want and not _close(have, float(want[key])):
            print(
                f"mismatch: fit.{key}: report {want[key]!r}, recomputed {have!r}",
                file=sys.stderr,
            )
            return EXIT_MISMATCH
    print("verify: ok")
    return EXIT_OK


def _verify_triangularise(out: Path, report: dict) -> int:
    needed = ["T.csv", "Tinv.csv", "Lambda.csv", "N.csv", "scenario.json"]
    for name in needed:
        if not (out / name).exists():
            print(f"error: missing {out / name}", file=sys.stderr)
            return EXIT_NOINPUT
    try:
        sc = load_scenario(out / "scenario.json")
        A, _eig, _B = build_matrix(sc)
    except (ScenarioError, ParseError, FileNotFoundError) as exc:
        print(f"mismatch: cannot rebuild scenario: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    m = sc.m

    def read_mat(name):
        _, rows = _read_csv(out / name)
        table = {}
        for t_s, x_s, xi_s, i_s, j_s, re_s, im_s in rows:
            table[(t_s, x_s, xi_s, int(i_s), int(j_s))] = float(re_s) + 1j * float(im_s)
        return table

    T_t = read_mat("T.csv")
    Ti_t = read_mat("Tinv.csv")
    N_t = read_mat("N.csv")
    _, lam_rows = _read_csv(out / "Lambda.csv")
    Lam_t = {}
    for t_s, x_s, xi_s, i_s, re_s, im_s in lam_rows:
        Lam_t[(t_s, x_s, xi_s, int(i_s))] = float(re_s) + 1j * float(im_s)

    points = sorted({(t, x, xi) for (t, x, xi, _i, _j) in T_t})
    total = 0.0
    below = 0.0
    for (t_s, x_s, xi_s) in points:
        t, x, xi = float(t_s), float(x_s), float(xi_s)
        Amat = A.eval_point(t, np.array([x]), np.array([xi]))
        Tm = np.array([[T_t[(t_s, x_s, xi_s, i + 1, j + 1)] for j in range(m)] for i in range(m)])
        Tim = np.array([[Ti_t[(t_s, x_s, xi_s, i + 1, j + 1)] for j in range(m)] for i in range(m)])
        Nm = np.array([[N_t[(t_s, x_s, xi_s, i + 1, j + 1)] for j in range(m)] for i in range(m)])
        target = Nm + np.diag([Lam_t[(t_s, x_s, xi_s, i + 1)] for i in range(m)])
        P = Tim @ Amat @ Tm
        total = max(total, float(np.abs(P - target).max()))
        for i in range(m):
            for j in range(i):
                below = max(below, abs(P[i, j]))
    want = report.get("csv_residual", {})
    for key, have in (
        ("residual_total_sampled", total),
        ("residual_below_diag_sampled", below),
    ):
        if key not in want or not _close(have, float(want[key])):
            print(
                f"mismatch: {key}: report {want.get(key)!r}, recomputed {have!r}",
                file=sys.stderr,
            )
            return EXIT_MISMATCH
    print("verify: ok")
    return EXIT_OK


# ------------------------------------------------------------------------- main


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hypertri", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", default=_env("SCENARIO"), help="scenario JSON path")
        sp.add_argument("--out", default=_env("OUT"), required=_env("OUT") is None,
                        help="output directory")

    tri = sub.add_parser("triangularise", help="triangularise a full matrix scenario")
    common(tri)
    tri.add_argument("--seed", type=int, default=None)

    sol = sub.add_parser("solve", help="solve an upper-triangular scenario")
    common(sol)
    sol.add_argument("--mode", default=_env("MODE") or "both",
                     choices=["cascade", "reference", "both"])
    sol.add_argument("--override-levi", action="store_true",
                     default=(_env("OVERRIDE_LEVI") or "").lower() in ("1", "true", "yes"))
    sol.add_argument("--from-triangularised", default=_env("FROM_TRIANGULARISED"),
                     help="consume a prior triangularise output directory")
    sol.add_argument("--seed", type=int,
                     default=int(_env("SEED")) if _env("SEED") else None)
    sol.add_argument("--tol-fp", type=float,
                     default=float(_env("TOL_FP")) if _env("TOL_FP") else 1e-10)

    ver = sub.add_parser("verify", help="recheck a stored output directory")
    common(ver, scenario=False)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "triangularise":
        if not args.scenario:
            print("error: --scenario is required", file=sys.stderr)
            return EXIT_USAGE
        return cmd_triangularise(args.scenario, args.out, seed=args.seed)
    if args.command == "solve":
        if not args.scenario and not args.from_triangularised:
            print("error: need --scenario or --from-triangularised", file=sys.stderr)
            return EXIT_USAGE
        return cmd_solve(
            args.scenario,
            args.out,
            mode=args.mode,
            override_levi=args.override_levi,
            from_triangularised=args.from_triangularised,
            seed=args.seed,
            tol_fp=args.tol_fp,
        )
    return cmd_verify(args.out)


if __name__ == "__main__":
    sys.exit(main())
