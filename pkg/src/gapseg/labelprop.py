"""Harmonic label propagation on a similarity graph.

Given one-hot labels on a subset of nodes, solve

    L_uu U_u = W_ul Y

so every solved node's score row is the weighted average of its
neighbors' rows. One CG solve per class column, shared Jacobi
preconditioner. Unlabeled nodes with no path to any labeled node cannot
be solved; they are flagged and given the uniform row 1/C.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import SparseGraph
from .sparse_linalg import CsrMatrix, cg_solve, csr_submatrix, spmv

FLAG_LABELED = 0
FLAG_SOLVED = 1
FLAG_UNREACHABLE = 2


@dataclass(eq=False)
class LabelAssignment:
    """Labeled node indices with one-hot class rows."""

    indices: np.ndarray  # (l,) int64, unique
    onehot: np.ndarray  # (l, C) float64
    n_classes: int

    def __post_init__(self):
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.onehot = np.ascontiguousarray(self.onehot, dtype=np.float64)
        if self.indices.size == 0:
            raise ValueError("at least one labeled node is required")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if np.unique(self.indices).size != self.indices.size:
            raise ValueError("labeled indices must be unique")
        if self.onehot.shape != (self.indices.size, self.n_classes):
            raise ValueError(
                f"onehot must be ({self.indices.size}, {self.n_classes}), "
                f"got {self.onehot.shape}"
            )
        ok = (self.onehot.sum(axis=1) == 1.0) & ((self.onehot == 0).sum(
            axis=1
        ) == self.n_classes - 1)
        if not ok.all():
            raise ValueError("every onehot row must be a single 1")

    @classmethod
    def from_codes(cls, indices, codes, n_classes: int) -> "LabelAssignment":
        indices = np.asarray(indices, dtype=np.int64)
        codes = np.asarray(codes, dtype=np.int64)
        onehot = np.zeros((indices.size, n_classes), dtype=np.float64)
        onehot[np.arange(indices.size), codes] = 1.0
        return cls(indices, onehot, n_classes)


@dataclass(eq=False)
class ScoreMatrix:
    """Per-node class scores plus labeled/solved/unreachable flags."""

    U: np.ndarray  # (n, C) float64
    flags: np.ndarray  # (n,) uint8
    solves: list = field(default_factory=list)  # (class, iters, residual, ok)


def _reachable_from(W: CsrMatrix, sources: np.ndarray) -> np.ndarray:
    """Nodes connected to any source through nonzero weights."""
    n = W.n_rows
    visited = np.zeros(n, dtype=bool)
    visited[sources] = True
    frontier = np.asarray(sources, dtype=np.int64)
    while frontier.size:
        starts = W.row_ptr[frontier]
        counts = W.row_ptr[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        seg = np.repeat(np.arange(frontier.size), counts)
        offs = np.arange(total) - np.repeat(
            np.concatenate(([0], np.cumsum(counts)[:-1])), counts
        )
        neighbors = W.col_idx[starts[seg] + offs]
        fresh = np.unique(neighbors[~visited[neighbors]])
        visited[fresh] = True
        frontier = fresh
    return visited


def laplace_learning(
    graph: SparseGraph,
    labels: LabelAssignment,
    cg_tol: float = 1e-10,
    cg_max_iter: int | None = None,
    warm_start: np.ndarray | None = None,
) -> ScoreMatrix:
    """Propagate one-hot labels harmonically to all reachable nodes.

    ``warm_start`` is an optional previous (n, C) score matrix used as
    the CG initial guess; it changes iteration counts only, not the
    solution. CG diagnostics per class land in ``ScoreMatrix.solves``.
    """
    n = graph.n
    C = labels.n_classes
    if labels.indices.max() >= n:
        raise ValueError("labeled index out of range")

    U = np.zeros((n, C), dtype=np.float64)
    flags = np.full(n, FLAG_SOLVED, dtype=np.uint8)
    U[labels.indices] = labels.onehot
    flags[labels.indices] = FLAG_LABELED

    unlabeled = np.ones(n, dtype=bool)
    unlabeled[labels.indices] = False
    reachable = _reachable_from(graph.W, labels.indices)
    unreachable = unlabeled & ~reachable
    flags[unreachable] = FLAG_UNREACHABLE
    U[unreachable] = 1.0 / C

    solve_nodes = np.flatnonzero(unlabeled & reachable)
    solves: list = []
    if solve_nodes.size:
        labeled_sorted = np.sort(labels.indices)
        onehot_sorted = labels.onehot[np.argsort(labels.indices, kind="stable")]
        A = csr_submatrix(graph.L, solve_nodes, solve_nodes)
        B = csr_submatrix(graph.W, solve_nodes, labeled_sorted)
        for c in range(C):
            rhs = spmv(B, onehot_sorted[:, c])
            x0 = warm_start[solve_nodes, c] if warm_start is not None else None
            result = cg_solve(A, rhs, tol=cg_tol, max_iter=cg_max_iter, x0=x0)
            U[solve_nodes, c] = result.x
            solves.append((c, result.iterations, result.residual, result.converged))
    return ScoreMatrix(U, flags, solves)


def predict_labels(scores: ScoreMatrix) -> np.ndarray:
    """Per-node argmax class codes; ties go to the lowest class code."""
    return np.argmax(scores.U, axis=1).astype(np.uint8)
