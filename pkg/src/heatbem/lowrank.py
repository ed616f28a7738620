"""Adaptive cross approximation with partial pivoting and low-rank block helpers."""
from dataclasses import dataclass

import numpy as np
from numba import njit

# residual pivots below this fraction of the largest entry seen count as zero
ZERO_PIVOT = 1e-13
# the stopping rule must hold on this many consecutive crosses; a single small
# cross under-estimates the residual at tight tolerances
STOP_STREAK = 3


@dataclass
class LowRankBlock:
    """Block stored either as U @ V.T (U: m x r, V: n x r) or densely in ``full``."""

    U: np.ndarray
    V: np.ndarray
    tol: float = 0.0
    residual: float = 0.0
    certified: bool = True
    rows_evaluated: int = 0
    cols_evaluated: int = 0
    full: np.ndarray = None

    @property
    def shape(self):
        if self.full is not None:
            return self.full.shape
        return self.U.shape[0], self.V.shape[0]

    @property
    def rank(self):
        if self.full is not None:
            return min(self.full.shape)
        return self.U.shape[1]

    def to_dense(self):
        if self.full is not None:
            return self.full
        return self.U @ self.V.T

    @classmethod
    def dense(cls, mat):
        mat = np.asarray(mat, dtype=float)
        return cls(np.zeros((mat.shape[0], 0)), np.zeros((mat.shape[1], 0)), full=mat)


def lr_matvec(block, x):
    """y = U (V^T x), or the dense product for dense blocks."""
    if block.full is not None:
        return block.full @ x
    if block.rank == 0:
        return np.zeros(block.U.shape[0]) if np.ndim(x) == 1 else np.zeros((block.U.shape[0],) + np.shape(x)[1:])
    return block.U @ (block.V.T @ x)


def lr_storage(block):
    """Stored coefficients: r (m + n) for low rank, m n for dense blocks."""
    m, n = block.shape
    if block.full is not None:
        return m * n
    return block.rank * (m + n)


@njit(cache=True)
def aca_core(get_row, get_col, ctx, m, n, tol, max_rank, absolute):
    """Partially pivoted ACA.

    ``get_row(ctx, i, out)`` and ``get_col(ctx, j, out)`` fill one row or column of
    the target block.  Stops when ``|u_k| |v_k| <= tol |S_k|_F`` (or ``<= tol`` in
    absolute mode) on STOP_STREAK consecutive crosses, when a residual row
    vanishes, or at ``max_rank`` crosses.
    Returns (U, V, rank, certified, last cross norm, rows, cols) with U, V stored
    rank-major.
    """
    cap = max(max_rank, 1)
    U = np.zeros((cap, m))
    V = np.zeros((cap, n))
    used = np.zeros(m, dtype=np.bool_)
    row = np.empty(n)
    col = np.empty(m)
    k = 0
    s2 = 0.0
    scale = 0.0
    i = 0
    nrows = 0
    ncols = 0
    certified = False
    last = 0.0
    streak = 0
    while True:
        if k >= max_rank:
            break
        get_row(ctx, i, row)
        nrows += 1
        used[i] = True
        for c in range(n):
            if abs(row[c]) > scale:
                scale = abs(row[c])
        for l in range(k):
            a = U[l, i]
            if a != 0.0:
                for c in range(n):
                    row[c] -= a * V[l, c]
        j = 0
        piv = 0.0
        for c in range(n):
            if abs(row[c]) > abs(piv):
                piv = row[c]
                j = c
        if abs(piv) <= ZERO_PIVOT * scale or piv == 0.0:
            if k > 0:
                certified = True
                break
            nxt = -1
            for r in range(m):
                if not used[r]:
                    nxt = r
                    break
            if nxt < 0:
                certified = True
                break
            i = nxt
            continue
        for c in range(n):
            V[k, c] = row[c] / piv
        get_col(ctx, j, col)
        ncols += 1
        for r in range(m):
            if abs(col[r]) > scale:
                scale = abs(col[r])
        for l in range(k):
            b = V[l, j]
            if b != 0.0:
                for r in range(m):
                    col[r] -= b * U[l, r]
        for r in range(m):
            U[k, r] = col[r]
        nu = 0.0
        for r in range(m):
            nu += col[r] * col[r]
        nv = 0.0
        for c in range(n):
            nv += V[k, c] * V[k, c]
        cross = 0.0
        for l in range(k):
            du = 0.0
            for r in range(m):
                du += U[l, r] * U[k, r]
            dv = 0.0
            for c in range(n):
                dv += V[l, c] * V[k, c]
            cross += du * dv
        s2 += 2.0 * cross + nu * nv
        k += 1
        last = np.sqrt(nu * nv)
        thr = tol if absolute else tol * np.sqrt(max(s2, 0.0))
        streak = streak + 1 if last <= thr else 0
        if streak >= STOP_STREAK:
            certified = True
            break
        best = -1
        bv = -1.0
        for r in range(m):
            if not used[r] and abs(U[k - 1, r]) > bv:
                bv = abs(U[k - 1, r])
                best = r
        if best < 0:
            certified = True
            break
        i = best
    return U[:k], V[:k], k, certified, last, nrows, ncols


@njit(cache=True)
def _dense_row(ctx, i, out):
    out[:] = ctx[0][i, :]


@njit(cache=True)
def _dense_col(ctx, j, out):
    out[:] = ctx[0][:, j]


def _py_row(ctx, i, out):
    out[:] = ctx[0](i)


def _py_col(ctx, j, out):
    out[:] = ctx[1](j)


class BlockEvaluator:
    """On-demand rows and columns of an m x n block."""

    def __init__(self, shape, row, col):
        self.shape = tuple(shape)
        self.row = row
        self.col = col

    @classmethod
    def from_matrix(cls, mat):
        mat = np.ascontiguousarray(mat, dtype=float)
        ev = cls(mat.shape, lambda i: mat[i], lambda j: mat[:, j])
        ev.matrix = mat
        return ev


def aca(evaluator, tol, max_rank=None, absolute=False):
    """Partially pivoted ACA of the block described by ``evaluator``.

    ``evaluator`` is a BlockEvaluator or a dense array.  Dense inputs run through the
    compiled kernel; callbacks run the same algorithm in Python.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not isinstance(evaluator, BlockEvaluator):
        evaluator = BlockEvaluator.from_matrix(evaluator)
    m, n = evaluator.shape
    if max_rank is None:
        max_rank = min(m, n)
    max_rank = min(max_rank, m, n)
    mat = getattr(evaluator, "matrix", None)
    if mat is not None:
        res = aca_core(_dense_row, _dense_col, (mat,), m, n, float(tol), max_rank, absolute)
    else:
        res = aca_core.py_func(
            _py_row, _py_col, (evaluator.row, evaluator.col), m, n, float(tol), max_rank, absolute
        )
    U, V, k, cert, last, nr, nc = res
    return LowRankBlock(
        np.ascontiguousarray(U.T),
        np.ascontiguousarray(V.T),
        tol=float(tol),
        residual=float(last),
        certified=bool(cert),
        rows_evaluated=int(nr),
        cols_evaluated=int(nc),
    )


def beneficial_rank(m, n, factor=1.0):
    """Largest rank whose factors store fewer entries than ``m n / factor``."""
    return max(int((m * n) / (factor * (m + n))), 0)
