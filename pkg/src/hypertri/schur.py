"""Parameter-dependent triangularisation of matrix symbols.

One reduction step conjugates the matrix by a transform whose first column
is the eigenvector rescaled by a nonvanishing pivot component, annihilating
the first column below the diagonal and leaving a smaller block.  Iterating
on the blocks produces ``Tinv A T = diag(Lambda) + N`` with ``N`` strictly
upper triangular, valid on the frequency shell ``|xi| >= M``.

All component indices in this module are 0-based.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    BadEigenpair,
    ConditionFailure,
    ContinuationError,
    DimensionError,
    MultiplicityWarning,
)
from .symbols import (
    GridSpec,
    MatrixSymbol,
    ScalarSymbol,
    VANISHING_ORDER,
    constant,
    estimate_order,
    eval_grid,
    zero_symbol,
)

DEFAULT_EPS_COND = 1e-6
DEFAULT_TOL_EIG = 1e-8
DEFAULT_TOL_TRI = 1e-9
DEFAULT_EPS_VEC = 1e-9


@dataclass(frozen=True)
class EigenData:
    """Eigenvalue symbols with eigenvector symbols for the leading ones.

    ``eigenvalues`` has length m; ``eigenvectors`` needs at least m-1
    entries (the last eigenvalue never steps), each a length-m tuple of
    order-0 symbols.
    """

    eigenvalues: tuple
    eigenvectors: tuple

    def __post_init__(self):
        m = len(self.eigenvalues)
        if len(self.eigenvectors) < m - 1:
            raise DimensionError(f"need at least {m - 1} eigenvectors, got {len(self.eigenvectors)}")
        for h in self.eigenvectors:
            if len(h) != m:
                raise DimensionError("eigenvector length must equal matrix dimension")

    @property
    def m(self) -> int:
        return len(self.eigenvalues)


def _vector_tables(h, grid: GridSpec, t: float) -> np.ndarray:
    return np.stack([eval_grid(c, grid, t) for c in h])


def eigen_residual(A: MatrixSymbol, lam: ScalarSymbol, h, grid: GridSpec) -> float:
    """Relative residual max |A h - lam h| / scale over the shell |xi| >= M."""
    m = A.dim
    if len(h) != m:
        raise DimensionError(f"eigenvector length {len(h)} != matrix dim {m}")
    shell = grid.shell
    worst = 0.0
    for t in grid.sample_times():
        At = A.eval_grid(grid, t)
        ht = _vector_tables(h, grid, t)
        lt = eval_grid(lam, grid, t)
        Ah = np.einsum("ij...,j...->i...", At, ht)
        res = np.abs(Ah - lt[None] * ht).max(axis=0)
        scale = np.maximum(1.0, np.maximum(np.abs(Ah).max(axis=0), np.abs(lt) * np.abs(ht).max(axis=0)))
        rel = (res / scale)[:, shell]
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst


def check_condition(hred, grid: GridSpec, eps_cond: float = DEFAULT_EPS_COND) -> int:
    """Smallest component index whose modulus clears the threshold on the shell.

    The threshold is ``eps_cond`` relative to the sup norm of the whole
    vector over the grid.  Raises ConditionFailure with the witness point
    of the best candidate when every component dips below it.
    """
    shell = grid.shell
    times = grid.sample_times()
    mins = None
    argmins = None
    sup = 0.0
    for t in times:
        ht = np.abs(_vector_tables(hred, grid, t))[:, :, shell]
        sup = max(sup, float(ht.max()))
        flat = ht.reshape(len(hred), -1)
        tmins = flat.min(axis=1)
        targs = flat.argmin(axis=1)
        if mins is None:
            mins = tmins
            argmins = [(t, a) for a in targs]
        else:
            for c in range(len(hred)):
                if tmins[c] < mins[c]:
                    mins[c] = tmins[c]
                    argmins[c] = (t, targs[c])
    threshold = eps_cond * sup
    for j, mn in enumerate(mins):
        if mn >= threshold and mn > 0.0:
            return j
    best = int(np.argmax(mins))
    t_w, flat_idx = argmins[best]
    shell_idx = np.where(shell)[0]
    ix, ik = divmod(int(flat_idx), len(shell_idx))
    raise ConditionFailure(
        f"no eigenvector component stays above {threshold:.3e} on the shell "
        f"(best: component {best}, min {mins[best]:.3e})",
        t=float(t_w),
        x=float(grid.x[ix]),
        xi=float(grid.frequencies[shell_idx[ik]]),
        min_moduli=[float(v) for v in mins],
    )


def _ratio0(num: ScalarSymbol, den: ScalarSymbol) -> ScalarSymbol:
    """Component ratio, declared order 0 (verified a posteriori)."""
    f, g = num.fn, den.fn
    return ScalarSymbol(
        lambda t, x, xi: f(t, x, xi) / g(t, x, xi),
        order=0.0,
        depends_t=num.depends_t or den.depends_t,
        depends_x=num.depends_x or den.depends_x,
        name="ratio",
    )


def schur_step(A: MatrixSymbol, lam: ScalarSymbol, h, grid: GridSpec,
               eps_cond: float = DEFAULT_EPS_COND,
               tol_eig: float = DEFAULT_TOL_EIG):
    """One reduction step.

    Returns ``(T1, T1inv, E, j)`` where the pivot swap 1<->j is already
    folded into ``T1``: the first column of ``T1inv A T1`` is
    ``(lam, 0, ..., 0)`` on the shell and ``E`` is its lower-right block.
    """
    m = A.dim
    if m < 2:
        raise DimensionError("schur_step needs a matrix of dimension >= 2")
    if len(h) != m:
        raise DimensionError(f"eigenvector length {len(h)} != matrix dim {m}")
    res = eigen_residual(A, lam, h, grid)
    if res > tol_eig:
        raise BadEigenpair(f"eigenpair residual {res:.3e} exceeds {tol_eig:.1e}")
    j = check_condition(h, grid, eps_cond)

    perm = list(range(m))
    perm[0], perm[j] = perm[j], perm[0]
    hp = [h[perm[i]] for i in range(m)]
    one = constant(1.0, "1")
    zero = zero_symbol()
    mu = [one] + [_ratio0(hp[i], hp[0]) for i in range(1, m)]

    # T_core: first column mu, identity elsewhere (in the permuted frame).
    core = [[mu[i] if jj == 0 else (one if i == jj else zero) for jj in range(m)] for i in range(m)]
    core_inv = [
        [(one if i == 0 else -mu[i]) if jj == 0 else (one if i == jj else zero) for jj in range(m)]
        for i in range(m)
    ]
    # Fold the swap: T1 = P T_core (rows), T1inv = T_core^{-1} P (columns).
    T1 = MatrixSymbol.from_rows([core[perm[i]] for i in range(m)])
    T1inv = MatrixSymbol.from_rows([[core_inv[i][perm[jj]] for jj in range(m)] for i in range(m)])

    # Lower-right block of T1inv A T1 in the permuted frame:
    # E[i][j] = Ap[i][j] - mu_i Ap[0][j] for i, j >= 1, with Ap = P A P.
    Ap = [[A.entry(perm[i], perm[jj]) for jj in range(m)] for i in range(m)]
    E_rows = [
        [Ap[i][jj] - mu[i] * Ap[0][jj] for jj in range(1, m)]
        for i in range(1, m)
    ]
    E = MatrixSymbol.from_rows(E_rows)
    return T1, T1inv, E, j


def reduced_eigenvector(h_k, steps, k: int):
    """Eigenvector of the k-th block: drop the first k-1 coordinates of
    ``T_{k-1}^{-1} ... T_1^{-1} h_k`` (k is 1-based, matching the step count)."""
    if len(steps) != k - 1:
        raise DimensionError(f"expected {k - 1} prior steps, got {len(steps)}")
    v = tuple(h_k)
    for _, Tinv in steps:
        if Tinv.dim != len(v):
            raise DimensionError("step dimension does not match eigenvector length")
        v = Tinv.apply_vector(v)
    return v[k - 1 :]


@dataclass(frozen=True)
class TriangularResult:
    """Transform pair, prescribed diagonal, nilpotent part and bookkeeping."""

    T: MatrixSymbol
    Tinv: MatrixSymbol
    Lambda: tuple
    N: MatrixSymbol
    permutations: tuple
    condition_report: tuple


def full_triangularise(A: MatrixSymbol, eig: EigenData, grid: GridSpec,
                       eps_cond: float = DEFAULT_EPS_COND,
                       tol_eig: float = DEFAULT_TOL_EIG) -> TriangularResult:
    """Iterated reduction to upper triangular form with prescribed diagonal order.

    Raises ConditionFailure or BadEigenpair with the failing step index
    attached in the message.
    """
    m = A.dim
    if eig.m != m:
        raise DimensionError(f"eigendata dimension {eig.m} != matrix dim {m}")
    one = constant(1.0, "1")
    zero = zero_symbol()
    if m == 1:
        ident = MatrixSymbol.identity(1)
        return TriangularResult(
            T=ident, Tinv=ident, Lambda=tuple(eig.eigenvalues),
            N=MatrixSymbol.from_rows([[zero]]), permutations=(), condition_report=(),
        )

    steps = []
    permutations = []
    condition_report = []
    block = A
    for k in range(m - 1):
        hred = reduced_eigenvector(eig.eigenvectors[k], steps, k + 1)
        try:
            T1, T1inv, E, j = schur_step(block, eig.eigenvalues[k], hred, grid,
                                         eps_cond=eps_cond, tol_eig=tol_eig)
        except (ConditionFailure, BadEigenpair) as exc:
            exc.args = (f"step {k + 1}: {exc.args[0]}",) + exc.args[1:]
            raise
        # Record the pivot quality for the report.
        mins = _component_min(hred, grid, j)
        condition_report.append((k, j, mins))
        if j != 0:
            permutations.append((k, k + j))
        # Embed the block transform as blockdiag(I_k, T1).
        emb = _embed(T1, m, k, one, zero)
        emb_inv = _embed(T1inv, m, k, one, zero)
        steps.append((emb, emb_inv))
        block = E

    T = steps[0][0]
    for s, _ in steps[1:]:
        T = T.matmul(s)
    Tinv = steps[-1][1]
    for _, sinv in reversed(steps[:-1]):
        Tinv = Tinv.matmul(sinv)

    conj = Tinv.matmul(A).matmul(T)
    N = MatrixSymbol.from_rows(
        [[conj.entry(i, j) if i < j else zero for j in range(m)] for i in range(m)],
        upper_triangular=True,
    )
    return TriangularResult(
        T=T,
        Tinv=Tinv,
        Lambda=tuple(eig.eigenvalues),
        N=N,
        permutations=tuple(permutations),
        condition_report=tuple(condition_report),
    )


def _component_min(h, grid: GridSpec, j: int) -> float:
    shell = grid.shell
    worst = np.inf
    for t in grid.sample_times():
        vals = np.abs(eval_grid(h[j], grid, t))[:, shell]
        if vals.size:
            worst = min(worst, float(vals.min()))
    return worst


def _embed(B: MatrixSymbol, m: int, offset: int, one, zero) -> MatrixSymbol:
    rows = []
    for i in range(m):
        row = []
        for j in range(m):
            if i < offset or j < offset:
                row.append(one if i == j else zero)
            else:
                row.append(B.entry(i - offset, j - offset))
        rows.append(row)
    return MatrixSymbol.from_rows(rows)


@dataclass(frozen=True)
class VerificationReport:
    residual_total: float
    residual_below_diag: float
    residual_inverse: float
    diag_deviation_max: float
    order_T_max: float
    order_N_max: float

    def to_dict(self) -> dict:
        def clean(v):
            # JSON-safe: the vanishing-order sentinel becomes a deep negative.
            return -999.0 if v == VANISHING_ORDER else float(v)

        return {
            "residual_total": clean(self.residual_total),
            "residual_below_diag": clean(self.residual_below_diag),
            "residual_inverse": clean(self.residual_inverse),
            "diag_deviation_max": clean(self.diag_deviation_max),
            "order_T_max": clean(self.order_T_max),
            "order_N_max": clean(self.order_N_max),
        }


def default_order_levels(grid: GridSpec):
    """Dyadic probe frequencies for order estimation, clear of the cutoff."""
    lo = max(8.0, 2.0 * grid.M, 2.0)
    start = 2.0 ** np.ceil(np.log2(lo))
    return [start * 2.0**i for i in range(5)]


def verify_triangular(A: MatrixSymbol, res: TriangularResult, grid: GridSpec) -> VerificationReport:
    """Numerical audit of a triangularisation on the shell |xi| >= M."""
    m = A.dim
    if res.T.dim != m:
        raise DimensionError("result dimension does not match matrix")
    shell = grid.shell
    ident = np.eye(m)
    r_total = r_below = r_inv = r_diag = 0.0
    for t in grid.sample_times():
        At = A.eval_grid(grid, t)
        Tt = res.T.eval_grid(grid, t)
        Tit = res.Tinv.eval_grid(grid, t)
        P = np.einsum("ik...,kl...,lj...->ij...", Tit, At, Tt)
        target = np.zeros_like(P)
        for i in range(m):
            target[i, i] = eval_grid(res.Lambda[i], grid, t)
            for j in range(i + 1, m):
                target[i, j] = eval_grid(res.N.entry(i, j), grid, t)
        diff = np.abs(P - target)[:, :, :, shell]
        if diff.size:
            r_total = max(r_total, float(diff.max()))
            below = np.abs(P)[:, :, :, shell]
            for i in range(m):
                for j in range(i):
                    r_below = max(r_below, float(below[i, j].max()))
            r_diag = max(
                r_diag,
                max(float(diff[i, i].max()) for i in range(m)),
            )
        TT = np.einsum("ik...,kj...->ij...", Tit, Tt)
        dev = np.abs(TT - ident[:, :, None, None])[:, :, :, shell]
        if dev.size:
            r_inv = max(r_inv, float(dev.max()))
    levels = default_order_levels(grid)
    ord_T = VANISHING_ORDER
    ord_N = VANISHING_ORDER
    for i in range(m):
        for j in range(m):
            ord_T = max(ord_T, estimate_order(res.T.entry(i, j), grid, levels))
            if i < j:
                ord_N = max(ord_N, estimate_order(res.N.entry(i, j), grid, levels))
    return VerificationReport(
        residual_total=r_total,
        residual_below_diag=r_below,
        residual_inverse=r_inv,
        diag_deviation_max=r_diag,
        order_T_max=ord_T,
        order_N_max=ord_N,
    )


def _match_node(prev: np.ndarray, cur: np.ndarray, delta: float):
    """Pair current eigenvalues to the previous ordering.

    Returns (perm, n_collisions).  Raises ContinuationError when two well
    separated candidates fit the same slot equally well.
    """
    mm = prev.size
    C = np.abs(prev[:, None] - cur[None, :])
    rows, cols = linear_sum_assignment(C)
    perm = np.empty(mm, dtype=int)
    perm[rows] = cols
    pair = np.abs(cur[:, None] - cur[None, :])
    np.fill_diagonal(pair, np.inf)
    scale = 1.0 + np.abs(cur).max()
    collisions = int((pair.min(axis=1) < delta * scale).sum()) // 2
    for r in range(mm):
        chosen = perm[r]
        d0 = C[r, chosen]
        for c in range(mm):
            if c == chosen:
                continue
            if C[r, c] - d0 < delta * scale and pair[chosen, c] >= delta * scale:
                raise ContinuationError(
                    f"ambiguous eigenvalue match: {cur[chosen]:.6g} and {cur[c]:.6g} "
                    f"both continue {prev[r]:.6g}"
                )
    return perm, collisions


def _sampled_symbol(tables: np.ndarray, grid: GridSpec, order: float, name: str) -> ScalarSymbol:
    """Symbol interpolating node tables: linear in t, trig in x, nearest in xi."""
    times = grid.times
    freqs = grid.frequencies
    sort_idx = np.argsort(freqs)
    sorted_f = freqs[sort_idx]
    dx = grid.L / grid.nx
    ftab = np.fft.fft(tables, axis=1)  # for off-node x evaluation

    def fn(t, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        shape = np.broadcast(x, xi).shape
        xb = np.broadcast_to(x, shape).ravel()
        kb = np.broadcast_to(xi, shape).ravel()
        tt = float(np.clip(t, 0.0, grid.T_final))
        it = int(np.clip(np.searchsorted(times, tt) - 1, 0, grid.nt - 2))
        w = (tt - times[it]) / (times[it + 1] - times[it])
        pos = np.clip(np.searchsorted(sorted_f, kb), 1, grid.nx - 1)
        left, right = sorted_f[pos - 1], sorted_f[pos]
        nearest = np.where(np.abs(kb - left) <= np.abs(right - kb), pos - 1, pos)
        kidx = sort_idx[nearest]
        fx = xb / dx
        ix = np.rint(fx)
        if np.abs(fx - ix).max() < 1e-9:
            ixi = ix.astype(int) % grid.nx
            v0 = tables[it][ixi, kidx]
            v1 = tables[it + 1][ixi, kidx]
        else:
            phases = np.exp(1j * np.outer(xb, freqs)) / grid.nx
            v0 = np.einsum("pm,pm->p", phases, ftab[it][:, kidx].T)
            v1 = np.einsum("pm,pm->p", phases, ftab[it + 1][:, kidx].T)
        return ((1.0 - w) * v0 + w * v1).reshape(shape)

    return ScalarSymbol(fn, order, depends_t=grid.nt > 1, depends_x=True, name=name)


def numeric_eigendata(A: MatrixSymbol, grid: GridSpec, delta_sep: float = 1e-6) -> EigenData:
    """Eigendata from pointwise dense decomposition with continuation matching.

    Eigenpairs are ordered by real part at the anchor node of each shell
    segment and matched to neighbours by minimal eigenvalue distance along
    xi, then x, then t.  Each eigenvector is normalized so its
    largest-modulus component equals 1.  Frequencies below the cutoff take
    the nearest in-shell values.
    """
    m = A.dim
    nt, nx = grid.nt, grid.nx
    vals = np.empty((nt, nx, nx, m), dtype=complex)
    vecs = np.empty((nt, nx, nx, m, m), dtype=complex)
    for it, t in enumerate(grid.times):
        tab = np.moveaxis(A.eval_grid(grid, t), (0, 1), (2, 3))
        w, v = np.linalg.eig(tab)
        vals[it], vecs[it] = w, v

    freqs = grid.frequencies
    shell_idx = np.where(grid.shell)[0]
    if shell_idx.size == 0:
        shell_idx = np.arange(nx)
    segments = []
    in_order = shell_idx[np.argsort(freqs[shell_idx])]
    neg = [k for k in in_order if freqs[k] < 0]
    pos = [k for k in in_order if freqs[k] >= 0]
    for seg in (neg, pos):
        if seg:
            segments.append(seg)

    perm = np.zeros((nt, nx, nx, m), dtype=int)
    collisions = 0
    witness = None

    def matched(it, ix, ik):
        return vals[it, ix, ik][perm[it, ix, ik]]

    for seg in segments:
        k0 = seg[0]
        w0 = vals[0, 0, k0]
        perm[0, 0, k0] = np.lexsort((w0.imag, w0.real))
        for prev_k, k in zip(seg, seg[1:]):
            p, c = _match_node(matched(0, 0, prev_k), vals[0, 0, k], delta_sep)
            perm[0, 0, k] = p
            if c and witness is None:
                witness = (0.0, float(grid.x[0]), float(freqs[k]))
            collisions += c
        for k in seg:
            for ix in range(1, nx):
                p, c = _match_node(matched(0, ix - 1, k), vals[0, ix, k], delta_sep)
                perm[0, ix, k] = p
                if c and witness is None:
                    witness = (0.0, float(grid.x[ix]), float(freqs[k]))
                collisions += c
            for ix in range(nx):
                for it in range(1, nt):
                    p, c = _match_node(matched(it - 1, ix, k), vals[it, ix, k], delta_sep)
                    perm[it, ix, k] = p
                    if c and witness is None:
                        witness = (float(grid.times[it]), float(grid.x[ix]), float(freqs[k]))
                    collisions += c

    # Out-of-shell frequencies copy the nearest in-shell node.
    covered = np.zeros(nx, dtype=bool)
    covered[[k for seg in segments for k in seg]] = True
    for k in range(nx):
        if covered[k]:
            continue
        cands = np.where(covered)[0]
        src = cands[np.argmin(np.abs(freqs[cands] - freqs[k]))]
        vals[:, :, k] = vals[:, :, src]
        vecs[:, :, k] = vecs[:, :, src]
        perm[:, :, k] = perm[:, :, src]

    if collisions:
        warnings.warn(
            f"{collisions} node(s) with eigenvalue separation below threshold; "
            f"first witness (t, x, xi) = {witness}",
            MultiplicityWarning,
            stacklevel=2,
        )

    lam_tabs = np.empty((m, nt, nx, nx), dtype=complex)
    vec_tabs = np.empty((m, m, nt, nx, nx), dtype=complex)
    it_idx, ix_idx, ik_idx = np.meshgrid(
        np.arange(nt), np.arange(nx), np.arange(nx), indexing="ij"
    )
    for j in range(m):
        sel = perm[..., j]
        lam_tabs[j] = vals[it_idx, ix_idx, ik_idx, sel]
        vj = vecs[it_idx, ix_idx, ik_idx, :, sel]
        pivot = np.take_along_axis(
            vj, np.argmax(np.abs(vj), axis=-1)[..., None], axis=-1
        )
        vj = vj / pivot
        vec_tabs[j] = np.moveaxis(vj, -1, 0)

    eigenvalues = tuple(
        _sampled_symbol(lam_tabs[j], grid, order=1.0, name=f"lam[{j}]") for j in range(m)
    )
    eigenvectors = tuple(
        tuple(
            _sampled_symbol(vec_tabs[j][c], grid, order=0.0, name=f"h[{j}][{c}]")
            for c in range(m)
        )
        for j in range(m)
    )
    return EigenData(eigenvalues=eigenvalues, eigenvectors=eigenvectors)
