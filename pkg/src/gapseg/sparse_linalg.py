"""Minimal sparse numeric kernel: CSR matrices, matvec, PCG, Lanczos.

All solver math runs in float64. The CSR matvec is the hot loop and has
numba/numpy flavors; the CG and Lanczos drivers are plain numpy on top
of it. Dot products use np.dot, so results are reproducible bit-for-bit
for a given build.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import backend


@dataclass(eq=False)
class CsrMatrix:
    """Compressed sparse row matrix with sorted column indices per row."""

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.row_ptr.shape != (self.n_rows + 1,):
            raise ValueError("row_ptr must have n_rows + 1 entries")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != self.col_idx.shape[0]:
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if self.col_idx.shape != self.values.shape:
            raise ValueError("col_idx and values must have equal length")
        if self.col_idx.size:
            if self.col_idx.min() < 0 or self.col_idx.max() >= self.n_cols:
                raise ValueError("column index out of bounds")
            row_of = np.repeat(np.arange(self.n_rows), np.diff(self.row_ptr))
            same_row = row_of[1:] == row_of[:-1]
            if np.any(same_row & (np.diff(self.col_idx) <= 0)):
                raise ValueError("column indices must be strictly increasing per row")

    @property
    def nnz(self) -> int:
        return int(self.col_idx.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.float64)
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_ptr))
        out[rows, self.col_idx] = self.values
        return out

    def diagonal(self) -> np.ndarray:
        if self.n_rows != self.n_cols:
            raise ValueError("diagonal of a non-square matrix")
        diag = np.zeros(self.n_rows, dtype=np.float64)
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_ptr))
        on_diag = rows == self.col_idx
        diag[rows[on_diag]] = self.values[on_diag]
        return diag


def csr_from_coo(
    rows: np.ndarray,
    cols: np.ndarray,
    vals: np.ndarray,
    shape: tuple[int, int],
    symmetric: bool = False,
) -> CsrMatrix:
    """Assemble CSR from COO triplets, summing duplicate entries."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    n_rows, n_cols = shape
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size:
        new_group = np.empty(rows.size, dtype=bool)
        new_group[0] = True
        new_group[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(new_group)
        vals = np.add.reduceat(vals, starts)
        rows = rows[starts]
        cols = cols[starts]
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=row_ptr[1:])
    return CsrMatrix(n_rows, n_cols, row_ptr, cols, vals, symmetric=symmetric)


def csr_submatrix(A: CsrMatrix, row_sel: np.ndarray, col_sel: np.ndarray) -> CsrMatrix:
    """Submatrix A[row_sel][:, col_sel] with rows/cols renumbered in order.

    ``row_sel``/``col_sel`` are index arrays in ascending order.
    """
    row_sel = np.asarray(row_sel, dtype=np.int64)
    col_sel = np.asarray(col_sel, dtype=np.int64)
    col_map = np.full(A.n_cols, -1, dtype=np.int64)
    col_map[col_sel] = np.arange(col_sel.size)
    counts = np.diff(A.row_ptr)[row_sel]
    take = _ragged_gather(A.row_ptr[row_sel], counts)
    cols = col_map[A.col_idx[take]]
    keep = cols >= 0
    cols = cols[keep]
    vals = A.values[take][keep]
    row_of = np.repeat(np.arange(row_sel.size), counts)[keep]
    kept_per_row = np.bincount(row_of, minlength=row_sel.size)
    row_ptr = np.zeros(row_sel.size + 1, dtype=np.int64)
    np.cumsum(kept_per_row, out=row_ptr[1:])
    return CsrMatrix(row_sel.size, col_sel.size, row_ptr, cols, vals)


def _ragged_gather(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Flat indices covering [starts[i], starts[i]+counts[i]) per segment."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    seg = np.repeat(np.arange(starts.size), counts)
    offs = np.arange(total) - np.repeat(
        np.concatenate(([0], np.cumsum(counts)[:-1])), counts
    )
    return starts[seg] + offs


def _spmv_numpy(row_ptr, col_idx, values, x, n_rows):
    prod = values * x[col_idx]
    out = np.zeros(n_rows, dtype=np.float64)
    if prod.size == 0:
        return out
    starts = np.minimum(row_ptr[:-1], prod.size - 1)
    sums = np.add.reduceat(prod, starts)
    empty = np.diff(row_ptr) == 0
    sums[empty] = 0.0
    out[:] = sums
    return out


if backend.HAS_NUMBA:
    import numba

    @numba.njit(cache=True, parallel=True)
    def _spmv_numba(row_ptr, col_idx, values, x, out):  # pragma: no cover
        for i in numba.prange(row_ptr.shape[0] - 1):
            acc = 0.0
            for p in range(row_ptr[i], row_ptr[i + 1]):
                acc += values[p] * x[col_idx[p]]
            out[i] = acc


def spmv(A: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """y = A x, each row accumulated in column order."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n_cols,):
        raise ValueError(f"x has shape {x.shape}, expected ({A.n_cols},)")
    if backend.USE_NUMBA:
        out = np.empty(A.n_rows, dtype=np.float64)
        _spmv_numba(A.row_ptr, A.col_idx, A.values, x, out)
        return out
    return _spmv_numpy(A.row_ptr, A.col_idx, A.values, x, A.n_rows)


@dataclass
class CgResult:
    """Outcome of a conjugate-gradient solve."""

    x: np.ndarray
    iterations: int
    residual: float  # final true residual norm ||Ax - b||
    converged: bool
    residual_norms: list[float] = field(default_factory=list)


def cg_solve(
    A: CsrMatrix,
    b: np.ndarray,
    tol: float = 1e-8,
    max_iter: int | None = None,
    jacobi: bool = True,
    x0: np.ndarray | None = None,
) -> CgResult:
    """Jacobi-preconditioned CG on a symmetric positive definite system.

    Converged when ||Ax - b|| <= tol * max(1, ||b||); a non-converged
    result is returned (not raised) so callers can decide. Plain CG
    residual norms can tick upward, so ``residual_norms`` reports the
    improving subsequence: the preconditioned norm sqrt(r' M^-1 r) of
    each iterate that beats every earlier one (a nonincreasing list).
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    n = A.n_rows
    if max_iter is None:
        max_iter = min(10 * n, 10000)
    b = np.asarray(b, dtype=np.float64)
    if jacobi:
        diag = A.diagonal()
        if np.any(diag <= 0):
            bad = int(np.flatnonzero(diag <= 0)[0])
            raise ValueError(
                f"Jacobi preconditioner needs positive diagonal; "
                f"entry {bad} is {diag[bad]}"
            )
        inv_diag = 1.0 / diag
    else:
        inv_diag = None

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    target = tol * max(1.0, float(np.linalg.norm(b)))
    r = b - spmv(A, x)
    z = r * inv_diag if jacobi else r
    p = z.copy()
    rz = float(np.dot(r, z))
    norms = [float(np.sqrt(max(rz, 0.0)))]
    it = 0
    while it < max_iter:
        if float(np.linalg.norm(r)) <= target:
            # trust-but-verify: recompute the true residual once
            r_true = b - spmv(A, x)
            if float(np.linalg.norm(r_true)) <= target:
                return CgResult(x, it, float(np.linalg.norm(r_true)), True, norms)
            r = r_true
            z = r * inv_diag if jacobi else r
            p = z.copy()
            rz = float(np.dot(r, z))
        Ap = spmv(A, p)
        pAp = float(np.dot(p, Ap))
        if pAp <= 0:
            break  # not positive definite on this subspace
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        z = r * inv_diag if jacobi else r
        rz_new = float(np.dot(r, z))
        norm_new = float(np.sqrt(max(rz_new, 0.0)))
        if norm_new <= norms[-1]:
            norms.append(norm_new)
        beta = rz_new / rz if rz > 0 else 0.0
        p = z + beta * p
        rz = rz_new
        it += 1
    res = float(np.linalg.norm(b - spmv(A, x)))
    return CgResult(x, it, res, res <= target, norms)


@dataclass(eq=False)
class EigenPairs:
    """The m smallest eigenpairs of a symmetric PSD matrix."""

    eigenvalues: np.ndarray  # ascending, (m,)
    eigenvectors: np.ndarray  # column-orthonormal, (n, m)

    def __post_init__(self):
        self.eigenvalues = np.ascontiguousarray(self.eigenvalues, dtype=np.float64)
        self.eigenvectors = np.ascontiguousarray(self.eigenvectors, dtype=np.float64)
        if np.any(np.diff(self.eigenvalues) < 0):
            raise ValueError("eigenvalues must be ascending")
        if self.eigenvectors.shape[1] != self.eigenvalues.shape[0]:
            raise ValueError("eigenvector count must match eigenvalue count")

    @property
    def m(self) -> int:
        return int(self.eigenvalues.shape[0])


class LanczosError(RuntimeError):
    """Lanczos failed to converge; carries the best residuals reached."""

    def __init__(self, message: str, best_residuals: np.ndarray):
        super().__init__(message)
        self.best_residuals = best_residuals


def lanczos_lowest(
    A: CsrMatrix,
    m: int,
    tol: float = 1e-6,
    seed: int = 0,
    max_basis: int | None = None,
) -> EigenPairs:
    """The m smallest eigenpairs of symmetric PSD ``A`` by Lanczos.

    Full reorthogonalization against the whole basis; on breakdown the
    basis is extended with a fresh random direction. The basis grows
    (default cap: n, so the solve cannot stall short of a full
    tridiagonalization) until every returned pair passes the residual
    test ||A v - lambda v|| <= tol * max(1, lambda). The cheap Lanczos
    bound |beta * S[j-1, i]| prefilters; explicit residuals confirm.
    """
    n = A.n_rows
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= {n}, got m={m}")
    max_basis = n if max_basis is None else min(max(max_basis, m), n)

    rng = np.random.default_rng(seed)
    Q = np.empty((n, max_basis), dtype=np.float64)
    alphas = np.empty(max_basis, dtype=np.float64)
    betas = np.empty(max_basis, dtype=np.float64)

    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    Q[:, 0] = v
    j = 0
    beta_prev = 0.0
    best_residuals = np.full(m, np.inf)
    check_every = max(10, m // 2)

    def ritz_pairs(j, count):
        theta, S = eigh_tridiagonal(alphas[:j], betas[: j - 1])
        V = Q[:, :j] @ S[:, :count]
        V /= np.linalg.norm(V, axis=0, keepdims=True)
        resid = np.empty(count)
        for i in range(count):
            resid[i] = np.linalg.norm(spmv(A, V[:, i]) - theta[i] * V[:, i])
        return theta, S, V, resid

    while True:
        w = spmv(A, Q[:, j])
        if j > 0:
            w -= beta_prev * Q[:, j - 1]
        alpha = float(np.dot(Q[:, j], w))
        alphas[j] = alpha
        w -= alpha * Q[:, j]
        # full reorthogonalization, two passes
        for _ in range(2):
            w -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        beta = float(np.linalg.norm(w))
        j += 1

        at_cap = j == max_basis
        if j >= m and (j % check_every == 0 or at_cap or beta < 1e-13):
            theta, S = eigh_tridiagonal(alphas[:j], betas[: j - 1])
            bound = np.abs(beta * S[j - 1, :m]) + 1e-12
            plausible = np.all(bound <= tol * np.maximum(1.0, np.abs(theta[:m])))
            if plausible or at_cap or j == n:
                theta, S, V, resid = ritz_pairs(j, m)
                best_residuals = np.minimum(best_residuals, resid)
                if np.all(resid <= tol * np.maximum(1.0, np.abs(theta[:m]))):
                    return EigenPairs(theta[:m].copy(), V)
                if at_cap:
                    raise LanczosError(
                        f"no convergence with basis {j} (tol {tol}); "
                        f"worst residual {resid.max():.3e}",
                        best_residuals,
                    )

        if beta < 1e-13:
            # invariant subspace exhausted: restart with a fresh direction
            w = rng.standard_normal(n)
            for _ in range(2):
                w -= Q[:, :j] @ (Q[:, :j].T @ w)
            beta = float(np.linalg.norm(w))
            betas[j - 1] = 0.0
        else:
            betas[j - 1] = beta
        beta_prev = float(betas[j - 1])
        Q[:, j] = w / beta
