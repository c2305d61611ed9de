"""Scenario files: JSON descriptions of systems, data and grids.

A scenario carries the grid parameters, the symbol expressions (parsed by
the package grammar, see ``expressions``), the initial data and source
expressions, and flags.  Solve scenarios give the upper-triangular system
(``lambda``, sparse ``N`` and ``B``); triangularise scenarios give the
full matrix ``A`` plus closed-form eigendata or a request for the numeric
eigensolver.  Matrix entry keys are 1-based ``"i,j"`` strings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .cascade import SystemSpec
from .errors import ParseError, ScenarioError
from .expressions import compile_symbol
from .pdo import Field, StateVector
from .schur import EigenData
from .symbols import GridSpec, MatrixSymbol, zero_symbol

_REQUIRED = ("m", "s", "T_final", "nt", "nx", "L", "M", "symbols", "u0")


@dataclass
class Scenario:
    raw: dict
    grid: GridSpec
    seed: int
    flags: dict
    substeps: int
    path: Optional[str] = None

    @property
    def m(self) -> int:
        return int(self.raw["m"])

    @property
    def s(self) -> float:
        return float(self.raw["s"])


def load_scenario(path) -> Scenario:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"scenario file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    return scenario_from_dict(raw, path=str(p))


def scenario_from_dict(raw: dict, path: Optional[str] = None) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a JSON object")
    for key in _REQUIRED:
        if key not in raw:
            raise ScenarioError(f"scenario is missing required key {key!r}")
    m = raw["m"]
    if not isinstance(m, int) or m < 1:
        raise ScenarioError("m must be a positive integer")
    try:
        grid = GridSpec(
            T_final=float(raw["T_final"]),
            nt=int(raw["nt"]),
            L=float(raw["L"]),
            nx=int(raw["nx"]),
            M=float(raw["M"]),
        )
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"bad grid parameters: {exc}") from exc
    if not isinstance(raw["symbols"], dict):
        raise ScenarioError("symbols must be an object")
    u0 = raw["u0"]
    if not isinstance(u0, list) or len(u0) != m:
        raise ScenarioError(f"u0 must be a list of {m} expressions")
    f = raw.get("f")
    if f is not None and (not isinstance(f, list) or len(f) != m):
        raise ScenarioError(f"f must be null or a list of {m} expressions")
    flags = raw.get("flags", {})
    if not isinstance(flags, dict):
        raise ScenarioError("flags must be an object")
    substeps = int(raw.get("substeps", 16))
    if substeps < 1:
        raise ScenarioError("substeps must be >= 1")
    return Scenario(
        raw=raw,
        grid=grid,
        seed=int(raw.get("seed", 0)),
        flags=flags,
        substeps=substeps,
        path=path,
    )


def _entry_key(key: str, m: int):
    try:
        i_s, j_s = key.split(",")
        i, j = int(i_s) - 1, int(j_s) - 1
    except ValueError as exc:
        raise ScenarioError(f"bad matrix entry key {key!r}; expected 'i,j'") from exc
    if not (0 <= i < m and 0 <= j < m):
        raise ScenarioError(f"entry key {key!r} out of range for m={m}")
    return i, j


def _sparse_matrix(table, m: int, strict_upper: bool = False) -> MatrixSymbol:
    rows = [[zero_symbol() for _ in range(m)] for _ in range(m)]
    if table:
        for key, expr in table.items():
            i, j = _entry_key(key, m)
            if strict_upper and i >= j:
                raise ScenarioError(f"entry {key!r} is not strictly upper triangular")
            rows[i][j] = compile_symbol(expr)
    return MatrixSymbol.from_rows(rows, upper_triangular=strict_upper)


def _data_field(expr: str, grid: GridSpec, t: Optional[float] = None) -> Field:
    allowed = ("x",) if t is None else ("t", "x")
    sym = compile_symbol(expr, allowed_vars=allowed)
    vals = np.asarray(sym(0.0 if t is None else t, grid.x, 0.0), dtype=complex)
    return Field(np.broadcast_to(vals, (grid.nx,)), grid)


def build_system(sc: Scenario) -> SystemSpec:
    """Construct the upper-triangular SystemSpec of a solve scenario."""
    syms = sc.raw["symbols"]
    if "lambda" not in syms:
        raise ScenarioError("solve scenario needs symbols.lambda")
    lam_exprs = syms["lambda"]
    if not isinstance(lam_exprs, list) or len(lam_exprs) != sc.m:
        raise ScenarioError(f"symbols.lambda must list {sc.m} expressions")
    Lambda = tuple(compile_symbol(e) for e in lam_exprs)
    Nupper = _sparse_matrix(syms.get("N"), sc.m, strict_upper=True)
    B = _sparse_matrix(syms.get("B"), sc.m)
    u0 = StateVector(
        tuple(_data_field(e, sc.grid) for e in sc.raw["u0"]), sobolev_base=sc.s
    )
    f = None
    if sc.raw.get("f") is not None:
        f = tuple(
            StateVector(
                tuple(_data_field(e, sc.grid, t=float(t)) for e in sc.raw["f"]),
                sobolev_base=sc.s,
            )
            for t in sc.grid.times
        )
    return SystemSpec(m=sc.m, Lambda=Lambda, Nupper=Nupper, B=B, u0=u0, s=sc.s, f=f)


def build_matrix(sc: Scenario):
    """Construct (A, eigendata-or-None, B) of a triangularise scenario.

    Returns eigendata None when flags.numeric_eigendata is set.
    """
    syms = sc.raw["symbols"]
    if "A" not in syms:
        raise ScenarioError("triangularise scenario needs symbols.A")
    rows = syms["A"]
    if not isinstance(rows, list) or len(rows) != sc.m or any(len(r) != sc.m for r in rows):
        raise ScenarioError(f"symbols.A must be an {sc.m}x{sc.m} expression matrix")
    A = MatrixSymbol.from_rows([[compile_symbol(e) for e in r] for r in rows])
    B = _sparse_matrix(syms.get("B"), sc.m)
    if sc.flags.get("numeric_eigendata"):
        return A, None, B
    if "eigenvalues" not in syms or "eigenvectors" not in syms:
        raise ScenarioError(
            "triangularise scenario needs eigenvalues and eigenvectors "
            "or flags.numeric_eigendata"
        )
    lam_exprs = syms["eigenvalues"]
    vec_exprs = syms["eigenvectors"]
    if len(lam_exprs) != sc.m:
        raise ScenarioError(f"need {sc.m} eigenvalues")
    if len(vec_exprs) < sc.m - 1 or any(len(v) != sc.m for v in vec_exprs):
        raise ScenarioError(f"need {sc.m - 1} eigenvectors of length {sc.m}")
    eig = EigenData(
        eigenvalues=tuple(compile_symbol(e) for e in lam_exprs),
        eigenvectors=tuple(tuple(compile_symbol(c) for c in v) for v in vec_exprs),
    )
    return A, eig, B
