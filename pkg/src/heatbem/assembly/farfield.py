"""Far-field matrices A_d^l: heat kernel at Chebyshev time pairs on spatial cluster pairs.

The entry for row (beta, k, m) and column (beta', k', m') is

    int int G(x - y, t_beta - tau_beta') phi_km(x) phi_k'm'(y)

with t_beta the Chebyshev nodes of I_d^l and tau_beta' those of I_0^l.  Blocks are
compressed by ACA from on-demand rows and columns.
"""
import math

import numpy as np
from numba import njit

from ..clustering import neighbor_lists, temporal_to_spatial_level
from ..lowrank import aca_core, beneficial_rank
from ..temporal import chebyshev_nodes
from .blocks import BlockBuilder
from .nearfield import regular_points

DROP_FACTOR = 1e-3


def time_table(grid, level, d, p):
    """Prefactor and exponent scale of G at all Chebyshev pairs: (c1, c2), each p x p."""
    length = grid.block_length(level)
    nodes = chebyshev_nodes(0.0, length, p)
    dt = d * length + nodes[:, None] - nodes[None, :]
    if np.any(dt <= 0):
        raise ValueError("far-field time pairs violate temporal separation")
    return (4.0 * np.pi * dt) ** -1.5, 1.0 / (4.0 * dt)


@njit(cache=True)
def _far_row(ctx, i, out):
    rX, rW, rphi, a0, a1, b0, b1, c1, c2 = ctx
    p = c1.shape[0]
    ds = rphi.shape[2]
    nq = rW.shape[1]
    ms = (a1 - a0) * ds
    ns = (b1 - b0) * ds
    beta = i // ms
    rem = i % ms
    k = a0 + rem // ds
    m = rem % ds
    out[:] = 0.0
    for kp in range(b0, b1):
        col0 = (kp - b0) * ds
        for q in range(nq):
            wq = rW[k, q] * rphi[k, q, m]
            for qp in range(nq):
                r2 = 0.0
                for c in range(3):
                    r2 += (rX[k, q, c] - rX[kp, qp, c]) ** 2
                w = wq * rW[kp, qp]
                for bp in range(p):
                    g = w * c1[beta, bp] * math.exp(-r2 * c2[beta, bp])
                    for mp in range(ds):
                        out[bp * ns + col0 + mp] += g * rphi[kp, qp, mp]


@njit(cache=True)
def _far_col(ctx, j, out):
    rX, rW, rphi, a0, a1, b0, b1, c1, c2 = ctx
    p = c1.shape[0]
    ds = rphi.shape[2]
    nq = rW.shape[1]
    ms = (a1 - a0) * ds
    ns = (b1 - b0) * ds
    bp = j // ns
    rem = j % ns
    kp = b0 + rem // ds
    mp = rem % ds
    out[:] = 0.0
    for k in range(a0, a1):
        row0 = (k - a0) * ds
        for qp in range(nq):
            wqp = rW[kp, qp] * rphi[kp, qp, mp]
            for q in range(nq):
                r2 = 0.0
                for c in range(3):
                    r2 += (rX[k, q, c] - rX[kp, qp, c]) ** 2
                w = wqp * rW[k, q]
                for beta in range(p):
                    g = w * c1[beta, bp] * math.exp(-r2 * c2[beta, bp])
                    for m in range(ds):
                        out[beta * ms + row0 + m] += g * rphi[k, q, m]


@njit(cache=True)
def far_dense(rX, rW, rphi, a0, a1, b0, b1, c1, c2):
    """Full far-field block, (p * ms) x (p * ns)."""
    p = c1.shape[0]
    ds = rphi.shape[2]
    nq = rW.shape[1]
    ms = (a1 - a0) * ds
    ns = (b1 - b0) * ds
    out = np.zeros((p * ms, p * ns))
    g = np.empty((p, p))
    for k in range(a0, a1):
        row0 = (k - a0) * ds
        for kp in range(b0, b1):
            col0 = (kp - b0) * ds
            for q in range(nq):
                for qp in range(nq):
                    r2 = 0.0
                    for c in range(3):
                        r2 += (rX[k, q, c] - rX[kp, qp, c]) ** 2
                    w = rW[k, q] * rW[kp, qp]
                    for beta in range(p):
                        for bp in range(p):
                            g[beta, bp] = w * c1[beta, bp] * math.exp(-r2 * c2[beta, bp])
                    for beta in range(p):
                        for m in range(ds):
                            fm = rphi[k, q, m]
                            for bp in range(p):
                                gv = g[beta, bp] * fm
                                for mp in range(ds):
                                    out[beta * ms + row0 + m, bp * ns + col0 + mp] += gv * rphi[kp, qp, mp]
    return out


@njit
def far_aca(rX, rW, rphi, a0, a1, b0, b1, c1, c2, tol, max_rank, absolute):
    ctx = (rX, rW, rphi, a0, a1, b0, b1, c1, c2)
    ds = rphi.shape[2]
    p = c1.shape[0]
    m = p * (a1 - a0) * ds
    n = p * (b1 - b0) * ds
    return aca_core(_far_row, _far_col, ctx, m, n, tol, max_rank, absolute)


class FarFieldContext:
    """Per-mesh quadrature data for far-field blocks at one (level, d, p)."""

    def __init__(self, mesh, grid, level, d, p, quad_order, reg=None):
        self.mesh = mesh
        self.reg = reg if reg is not None else regular_points(mesh, quad_order)
        self.c1, self.c2 = time_table(grid, level, d, p)
        self.p = p

    def dense(self, ra, rb):
        return far_dense(*self.reg, int(ra[0]), int(ra[1]), int(rb[0]), int(rb[1]), self.c1, self.c2)

    def aca(self, ra, rb, tol, max_rank, absolute=False):
        U, V, k, cert, last, nr, nc = far_aca(
            *self.reg, int(ra[0]), int(ra[1]), int(rb[0]), int(rb[1]), self.c1, self.c2,
            float(tol), int(max_rank), absolute,
        )
        return np.ascontiguousarray(U.T), np.ascontiguousarray(V.T), bool(cert), nr, nc


def assemble_farfield(
    mesh, tree, grid, level, d, p, schedule, quad_order=2, eta0=None, neighbors=None,
    compress=True, drop=True, keep=True, reg=None,
):
    """Far-field matrix A_d^l on the neighbor pairs of spatial level l_s(l).

    Returns (BlockSparse or None when ``keep`` is false, stats dict).  Entry counts
    without compression include dropped blocks; ``stored`` counts mirrored blocks in
    full and ``memory`` counts the floats actually held.
    """
    if d not in (2, 3):
        raise ValueError("far-field offsets are 2 and 3")
    ls = temporal_to_spatial_level(level, tree.depth)
    lv = tree[ls]
    ranges = lv.ranges()
    if neighbors is None:
        neighbors, _ = neighbor_lists(tree, ls, eta0)
    ctx = FarFieldContext(mesh, grid, level, d, p, quad_order, reg)
    ds = mesh.shapes_per_patch
    n_space = mesh.n_local_dofs
    tol = schedule.far(level)
    length = grid.block_length(level)
    amax = float(mesh.areas.max())
    typical = float(np.mean(mesh.areas)) ** 2 * (4.0 * np.pi * d * length) ** -1.5
    thresh = DROP_FACTOR * (tol * typical if schedule.relative else tol)
    dt_min = (d - 1) * length
    dt_max = (d + 1) * length
    builder = BlockBuilder(p, n_space) if keep else None
    stats = {
        "level": level, "d": d, "spatial_level": ls, "tol": tol, "blocks": 0, "dropped": 0,
        "lowrank": 0, "dense": 0, "uncertified_fallback": 0, "stored": 0, "dense_entries": 0,
        "mirrored": 0, "memory": 0, "ranks": [],
    }
    # the kernel is symmetric in x and y, so each unordered pair is computed once with the
    # lower patch range as rows; the other orientation swaps the spatial indices
    done_pairs = {}
    mirrors = []
    for c in range(lv.n_clusters):
        for cp in neighbors[c]:
            pr = ranges[c]
            pc = ranges[cp]
            M = p * (pr[1] - pr[0]) * ds
            N = p * (pc[1] - pc[0]) * ds
            stats["dense_entries"] += int(M * N)
            if pc[0] < pr[0]:
                mirrors.append((c, cp))
                continue
            if drop:
                gap = np.linalg.norm(lv.centroids[c] - lv.centroids[cp]) - lv.diameters[c] - lv.diameters[cp]
                rmin = max(gap, 0.0)
                bound = amax * amax * (4.0 * np.pi * dt_min) ** -1.5 * math.exp(-rmin * rmin / (4.0 * dt_max))
                if bound < thresh:
                    stats["dropped"] += 1
                    continue
            stats["blocks"] += 1
            ra = (ranges[c, 0] * ds, ranges[c, 1] * ds)
            rb = (ranges[cp, 0] * ds, ranges[cp, 1] * ds)
            mr = beneficial_rank(M, N) if compress else 0
            entry = None
            if mr > 0:
                U, V, cert, _, _ = ctx.aca(pr, pc, tol, mr, not schedule.relative)
                if cert:
                    stats["lowrank"] += 1
                    stats["ranks"].append(U.shape[1])
                    size = int(U.shape[1] * (M + N))
                    idx = builder.add_lowrank(ra, rb, U, V) if keep else None
                    entry = ("lowrank", U.shape[1], size, idx)
                else:
                    stats["uncertified_fallback"] += 1
            if entry is None:
                stats["dense"] += 1
                size = int(M * N)
                idx = builder.add_dense(ra, rb, ctx.dense(pr, pc)) if keep else None
                entry = ("dense", 0, size, idx)
            stats["stored"] += entry[2]
            stats["memory"] += entry[2]
            done_pairs[(c, cp)] = entry
    for c, cp in mirrors:
        entry = done_pairs.get((cp, c))
        if entry is None:
            stats["dropped"] += 1
            continue
        kind, rank, size, idx = entry
        stats["blocks"] += 1
        stats["mirrored"] += 1
        stats[kind] += 1
        if kind == "lowrank":
            stats["ranks"].append(rank)
        stats["stored"] += size
        if keep:
            builder.add_mirror(idx, partial=True)
    mat = builder.build(stats) if keep else None
    return mat, stats
