"""Similarity graph construction.

Pipeline: unit-normalize feature rows (so Euclidean distance is monotone
in angular distance), exact K-nearest-neighbor search, self-tuning
Gaussian edge weights

    w_ij = exp(-alpha * ||xi - xj||^2 / s_i^2),   s_i = dist to i's K-th
                                                  neighbor (floored)

symmetrized as (W + W^T) / 2, and the combinatorial Laplacian L = D - W.

All-zero feature rows carry no direction; they are matched last (treated
as infinitely far as candidates) and any edge to one gets weight zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .sparse_linalg import CsrMatrix, csr_from_coo, spmv

_BLOCK = 512
# zero-row candidates must sort after every real match (real squared
# distances are <= 4 on unit vectors) but before the self marker at +inf
_ZERO_SENTINEL = 1e300


@dataclass
class GraphConfig:
    """Neighbor count, kernel sharpness, and the self-tuning scale floor."""

    K: int = 20
    alpha: float = 4.0
    min_scale: float = 1e-12

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.min_scale > 0:
            raise ValueError(f"min_scale must be > 0, got {self.min_scale}")


@dataclass(eq=False)
class SparseGraph:
    """Symmetric weight matrix W, node degrees, and Laplacian L = D - W."""

    n: int
    W: CsrMatrix
    degrees: np.ndarray
    L: CsrMatrix


def normalize_rows(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale each row to unit Euclidean norm, in float64.

    Returns (normalized, zero_mask); all-zero rows are left at zero and
    flagged in ``zero_mask``.
    """
    data = np.asarray(data, dtype=np.float64)
    norms = np.sqrt((data * data).sum(axis=1))
    zero_mask = norms == 0.0
    safe = np.where(zero_mask, 1.0, norms)
    return data / safe[:, None], zero_mask


def _select_rows_numpy(d2: np.ndarray, K: int) -> np.ndarray:
    """Per-row indices of the K smallest d2 entries, ties to lowest index."""
    b, n = d2.shape
    part = np.argpartition(d2, K - 1, axis=1)[:, :K]
    part_vals = np.take_along_axis(d2, part, axis=1)
    thresh = part_vals.max(axis=1)
    # rows whose selection boundary has ties need exact treatment
    n_le = (d2 <= thresh[:, None]).sum(axis=1)
    sel = np.sort(part, axis=1)
    for i in np.flatnonzero(n_le > K):
        cand = np.flatnonzero(d2[i] <= thresh[i])
        order = np.lexsort((cand, d2[i, cand]))
        sel[i] = np.sort(cand[order[:K]])
    vals = np.take_along_axis(d2, sel, axis=1)
    order = np.argsort(vals, axis=1, kind="stable")  # sel ascending => ties ok
    return np.take_along_axis(sel, order, axis=1)


if backend.HAS_NUMBA:
    import numba

    @numba.njit(cache=True, parallel=True)
    def _select_rows_numba(d2, K, out):  # pragma: no cover - numba path
        b, n = d2.shape
        for i in numba.prange(b):
            best_v = np.empty(K, dtype=np.float64)
            best_j = np.empty(K, dtype=np.int64)
            size = 0
            for j in range(n):
                v = d2[i, j]
                if size == K and v >= best_v[K - 1]:
                    continue
                # insert after existing entries with value <= v; scanning j
                # ascending keeps the earlier index first among equals
                pos = size if size < K else K - 1
                while pos > 0 and best_v[pos - 1] > v:
                    best_v[pos] = best_v[pos - 1]
                    best_j[pos] = best_j[pos - 1]
                    pos -= 1
                best_v[pos] = v
                best_j[pos] = j
                if size < K:
                    size += 1
            out[i, :] = best_j


def knn_search(
    normalized: np.ndarray, K: int, zero_mask: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Exact K nearest other rows by Euclidean distance.

    Rows must be unit-normalized (see :func:`normalize_rows`). Returns
    (indices, distances), both (n, K), distances ascending per row with
    ties broken by ascending index. Zero-flagged rows are matched last;
    when one is taken as filler its reported distance is +inf.
    """
    X = np.ascontiguousarray(normalized, dtype=np.float64)
    n = X.shape[0]
    if K >= n:
        raise ValueError(f"K={K} must be < n={n}")
    if zero_mask is None:
        zero_mask = np.zeros(n, dtype=bool)
    sq = (X * X).sum(axis=1)
    XT = X.T.copy()
    idx_out = np.empty((n, K), dtype=np.int64)
    dist_out = np.empty((n, K), dtype=np.float64)
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        block = slice(start, stop)
        d2 = sq[block, None] + sq[None, :] - 2.0 * (X[block] @ XT)
        np.maximum(d2, 0.0, out=d2)
        d2[:, zero_mask] = _ZERO_SENTINEL
        d2[np.arange(start, stop) - start, np.arange(start, stop)] = np.inf
        if backend.USE_NUMBA:
            sel = np.empty((stop - start, K), dtype=np.int64)
            _select_rows_numba(d2, K, sel)
        else:
            sel = _select_rows_numpy(d2, K)
        # recompute selected distances directly for exactness, then restore
        # the +inf marker on zero-row fillers
        diff = X[block][:, None, :] - X[sel]
        d = np.sqrt((diff * diff).sum(axis=2))
        d[zero_mask[sel]] = np.inf
        idx_out[block] = sel
        dist_out[block] = d
    return idx_out, dist_out


def build_graph(
    normalized: np.ndarray,
    config: GraphConfig,
    zero_mask: np.ndarray | None = None,
) -> SparseGraph:
    """Self-tuning Gaussian KNN graph over unit-normalized rows."""
    n = normalized.shape[0]
    if n < config.K + 1:
        raise ValueError(f"need at least K+1={config.K + 1} points, got {n}")
    idx, dist = knn_search(normalized, config.K, zero_mask)
    if zero_mask is not None and zero_mask.any():
        # a zero row has no direction: isolate it entirely (its distances
        # to unit rows are placement artifacts, not similarity)
        dist[zero_mask, :] = np.inf

    # s_i is the K-th neighbor distance; fall back to the last finite match
    # (then the floor) when zero-row fillers padded the list
    finite = np.isfinite(dist)
    has_finite = finite.any(axis=1)
    last_idx = config.K - 1 - finite[:, ::-1].argmax(axis=1)
    last_finite = np.where(has_finite, dist[np.arange(n), last_idx], 0.0)
    scale = np.maximum(last_finite, config.min_scale)

    w = np.exp(-config.alpha * (dist * dist) / (scale * scale)[:, None])
    w[~finite] = 0.0

    rows = np.repeat(np.arange(n, dtype=np.int64), config.K)
    cols = idx.ravel()
    half = 0.5 * w.ravel()
    keep = half > 0.0
    W = csr_from_coo(
        np.concatenate([rows[keep], cols[keep]]),
        np.concatenate([cols[keep], rows[keep]]),
        np.concatenate([half[keep], half[keep]]),
        (n, n),
        symmetric=True,
    )
    degrees = spmv(W, np.ones(n))
    diag_rows = np.arange(n, dtype=np.int64)
    l_rows = np.concatenate([np.repeat(np.arange(n), np.diff(W.row_ptr)), diag_rows])
    l_cols = np.concatenate([W.col_idx, diag_rows])
    l_vals = np.concatenate([-W.values, degrees])
    L = csr_from_coo(l_rows, l_cols, l_vals, (n, n), symmetric=True)
    return SparseGraph(n, W, degrees, L)
