"""Block-sparse storage for dense and low-rank blocks on contiguous cluster ranges.

A block couples the spatial row range [r0, r1) with the column range [c0, c1) for
all ``slots`` time slots (temporal shapes in the near field, Chebyshev nodes in
the far field).  Its local row index is ``s * (r1 - r0) + a`` for the global row
``s * n_space + r0 + a``.

A record with TRANS = 1 is the transpose of the stored block; TRANS = 2 swaps only
the spatial indices inside every slot pair (for kernels symmetric in x and y but
not in the slots, as in the far field).
"""
import numpy as np
import scipy.sparse as sps
from numba import njit

DENSE = 0
LOWRANK = 1

# record columns
R0, R1, C0, C1, KIND, RANK, OFFSET, TRANS = range(8)


@njit(cache=True)
def _partial_transpose_product(vals, off, kind, rank, slots, mA, mB, x, Y, n_space, r0):
    # stored block B is (slots mA) x (slots mB); the mirror maps (s, b), (s2, a) to B[(s, a), (s2, b)]
    k = x.shape[1]
    N = slots * mB
    if kind == DENSE:
        for s in range(slots):
            for s2 in range(slots):
                for a in range(mA):
                    base = off + (s * mA + a) * N + s2 * mB
                    for q in range(k):
                        xa = x[s2 * mA + a, q]
                        if xa != 0.0:
                            for b in range(mB):
                                Y[s * n_space + r0 + b, q] += vals[base + b] * xa
        return
    if rank == 0:
        return
    U = vals[off : off + slots * mA * rank].reshape(slots * mA, rank)
    V = vals[off + slots * mA * rank : off + slots * (mA + mB) * rank].reshape(slots * mB, rank)
    for q in range(k):
        for s in range(slots):
            for s2 in range(slots):
                w = np.zeros(rank)
                for a in range(mA):
                    xa = x[s2 * mA + a, q]
                    for r in range(rank):
                        w[r] += U[s * mA + a, r] * xa
                for b in range(mB):
                    acc = 0.0
                    for r in range(rank):
                        acc += V[s2 * mB + b, r] * w[r]
                    Y[s * n_space + r0 + b, q] += acc


@njit(cache=True)
def _matvec(rec, vals, slots, n_space, X, Y):
    k = X.shape[1]
    maxm = 1
    for b in range(rec.shape[0]):
        maxm = max(maxm, rec[b, 1] - rec[b, 0], rec[b, 3] - rec[b, 2])
    xl = np.empty((slots * maxm, k))
    for b in range(rec.shape[0]):
        r0, r1, c0, c1, kind, rank, off, tr = rec[b]
        ms = r1 - r0
        ns = c1 - c0
        M = slots * ms
        Nn = slots * ns
        for s in range(slots):
            for a in range(ns):
                for q in range(k):
                    xl[s * ns + a, q] = X[s * n_space + c0 + a, q]
        x = xl[:Nn]
        if tr == 2:
            _partial_transpose_product(vals, off, kind, rank, slots, ns, ms, x, Y, n_space, r0)
            continue
        if kind == DENSE:
            if tr == 0:
                yl = np.dot(vals[off : off + M * Nn].reshape(M, Nn), x)
            else:
                yl = np.dot(vals[off : off + M * Nn].reshape(Nn, M).T.copy(), x)
        else:
            if rank == 0:
                continue
            if tr == 0:
                U = vals[off : off + M * rank].reshape(M, rank)
                V = vals[off + M * rank : off + (M + Nn) * rank].reshape(Nn, rank)
            else:
                V = vals[off : off + Nn * rank].reshape(Nn, rank)
                U = vals[off + Nn * rank : off + (M + Nn) * rank].reshape(M, rank)
            yl = np.dot(U, np.dot(V.T.copy(), x))
        for s in range(slots):
            for a in range(ms):
                for q in range(k):
                    Y[s * n_space + r0 + a, q] += yl[s * ms + a, q]


@njit(cache=True)
def _dense_coo(rec, vals, slots, n_space, nnz):
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    data = np.empty(nnz)
    pos = 0
    for b in range(rec.shape[0]):
        r0, r1, c0, c1, kind, rank, off, tr = rec[b]
        if kind != DENSE:
            continue
        ms = r1 - r0
        ns = c1 - c0
        M = slots * ms
        Nn = slots * ns
        for i in range(M):
            gi = (i // ms) * n_space + r0 + i % ms
            for j in range(Nn):
                rows[pos] = gi
                cols[pos] = (j // ns) * n_space + c0 + j % ns
                data[pos] = vals[off + j * M + i] if tr else vals[off + i * Nn + j]
                pos += 1
    return rows, cols, data


class BlockSparse:
    """Collection of blocks acting on vectors of length ``slots * n_space``."""

    def __init__(self, slots, n_space, rec=None, vals=None, meta=None, csr=False):
        self.slots = slots
        self.n_space = n_space
        self.rec = np.zeros((0, 8), dtype=np.int64) if rec is None else rec
        self.vals = np.zeros(0) if vals is None else vals
        self.meta = meta or {}
        # cache dense blocks as one CSR matrix for products (many tiny blocks)
        self.csr = csr
        self._csr = None

    @property
    def shape(self):
        n = self.slots * self.n_space
        return n, n

    @property
    def n_blocks(self):
        return self.rec.shape[0]

    def _split(self):
        if self._csr is None:
            dense = (self.rec[:, KIND] == DENSE) & (self.rec[:, TRANS] < 2)
            nnz = int(self.block_entries()[1][dense].sum())
            rows, cols, data = _dense_coo(
                np.ascontiguousarray(self.rec[dense]), self.vals, self.slots, self.n_space, nnz
            )
            self._csr = sps.csr_matrix((data, (rows, cols)), shape=self.shape)
            self._lowrank = np.ascontiguousarray(self.rec[~dense])
        return self._csr, self._lowrank

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        X = x.reshape(x.shape[0], -1)
        if not self.n_blocks:
            return np.zeros_like(x)
        if not self.csr:
            Y = np.zeros_like(X)
            _matvec(self.rec, self.vals, self.slots, self.n_space, np.ascontiguousarray(X), Y)
            return Y.reshape(x.shape)
        csr, rest = self._split()
        Y = np.ascontiguousarray(csr @ X)
        if rest.shape[0]:
            _matvec(rest, self.vals, self.slots, self.n_space, np.ascontiguousarray(X), Y)
        return Y.reshape(x.shape)

    __matmul__ = matvec

    def block_entries(self):
        """Per block (stored, dense) entry counts."""
        ms = self.rec[:, R1] - self.rec[:, R0]
        ns = self.rec[:, C1] - self.rec[:, C0]
        dense = (self.slots * ms) * (self.slots * ns)
        stored = np.where(
            self.rec[:, KIND] == DENSE, dense, self.rec[:, RANK] * self.slots * (ms + ns)
        )
        return stored, dense

    def stored_entries(self):
        return int(self.block_entries()[0].sum())

    def dense_entries(self):
        return int(self.block_entries()[1].sum())

    def memory_entries(self):
        """Floats actually held; mirrored blocks share their source."""
        return int(self.vals.size)

    def to_dense(self):
        n = self.slots * self.n_space
        return self.matvec(np.eye(n))

    def local_block(self, b):
        """Dense local matrix of block ``b``."""
        r0, r1, c0, c1, kind, rank, off, tr = self.rec[b]
        M = self.slots * (r1 - r0)
        Nn = self.slots * (c1 - c0)
        v = self.vals
        if tr == 2:
            ms, ns = r1 - r0, c1 - c0
            rec = self.rec[b].copy()
            rec[R0], rec[R1], rec[C0], rec[C1], rec[TRANS] = c0, c1, r0, r1, 0
            B = BlockSparse(self.slots, self.n_space, rec[None], self.vals).local_block(0)
            B = B.reshape(self.slots, ns, self.slots, ms).transpose(0, 3, 2, 1)
            return B.reshape(M, Nn)
        if kind == DENSE:
            return v[off : off + M * Nn].reshape(Nn, M).T if tr else v[off : off + M * Nn].reshape(M, Nn)
        if tr:
            V = v[off : off + Nn * rank].reshape(Nn, rank)
            U = v[off + Nn * rank : off + (M + Nn) * rank].reshape(M, rank)
        else:
            U = v[off : off + M * rank].reshape(M, rank)
            V = v[off + M * rank : off + (M + Nn) * rank].reshape(Nn, rank)
        return U @ V.T


class BlockBuilder:
    """Accumulates blocks and produces a BlockSparse."""

    def __init__(self, slots, n_space):
        self.slots = slots
        self.n_space = n_space
        self.records = []
        self.chunks = []
        self.offset = 0
        self.flags = []

    def _push(self, data):
        off = self.offset
        self.chunks.append(np.ascontiguousarray(data, dtype=float).ravel())
        self.offset += self.chunks[-1].size
        return off

    def add_dense(self, r, c, mat, certified=True):
        off = self._push(mat)
        self.records.append((r[0], r[1], c[0], c[1], DENSE, 0, off, 0))
        self.flags.append(certified)
        return len(self.records) - 1

    def add_lowrank(self, r, c, U, V, certified=True):
        rank = U.shape[1]
        off = self._push(np.concatenate([np.ravel(U), np.ravel(V)])) if rank else self.offset
        self.records.append((r[0], r[1], c[0], c[1], LOWRANK, rank, off, 0))
        self.flags.append(certified)
        return len(self.records) - 1

    def add_mirror(self, index, partial=False):
        """Transpose of a previously added block (for symmetric operators).

        With ``partial`` only the spatial indices are swapped inside each slot pair.
        """
        r0, r1, c0, c1, kind, rank, off, tr = self.records[index]
        if partial and tr != 0:
            raise ValueError("partial mirrors need a plainly stored block")
        self.records.append((c0, c1, r0, r1, kind, rank, off, 2 if partial else 1 - tr))
        self.flags.append(self.flags[index])
        return len(self.records) - 1

    def build(self, meta=None, csr=False):
        rec = np.array(self.records, dtype=np.int64).reshape(-1, 8)
        vals = np.concatenate(self.chunks) if self.chunks else np.zeros(0)
        self.chunks = []
        out = BlockSparse(self.slots, self.n_space, rec, vals, meta, csr)
        out.certified = np.array(self.flags, dtype=bool)
        return out
