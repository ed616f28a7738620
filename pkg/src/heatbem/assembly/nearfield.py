"""Near-field matrices A_d, d = 0 .. 2 n_T - 1, on finest-level neighbor cluster pairs.

All offsets of one cluster pair are computed together because they share the
spatial quadrature points.  Touching patch pairs use the singularity-removing
rules for d <= 1; everything else uses the regular tensor Gauss rule.
"""
import math

import numpy as np
from numba import njit

from ..kernels import kernel_tables, make_workspace, tik_eval
from ..lowrank import aca, beneficial_rank
from ..mesh import COMMON_EDGE, COMMON_VERTEX, IDENTICAL
from ..quadrature import pair_rule, shape_values, triangle_rule
from .blocks import BlockBuilder

# blocks are dropped when their entry bound falls below DROP_FACTOR * eps_near * diag
DROP_FACTOR = 1e-3


def regular_points(mesh, order):
    """Per-patch regular rule: points (N_s, n, 3), weights (N_s, n), shapes (N_s, n, D_s)."""
    pts, w = triangle_rule(order)
    c = mesh.corners
    X = (
        c[:, None, 0, :]
        + pts[None, :, :1] * (c[:, None, 1, :] - c[:, None, 0, :])
        + pts[None, :, 1:2] * (c[:, None, 2, :] - c[:, None, 1, :])
    )
    W = 2.0 * mesh.areas[:, None] * w[None, :]
    phi = np.broadcast_to(shape_values(mesh.element_order, (0, 1, 2), pts), (mesh.n_patches,) + (len(w), mesh.shapes_per_patch))
    return np.ascontiguousarray(X), np.ascontiguousarray(W), np.ascontiguousarray(phi)


def singular_rules(order):
    """Reference rules for (identical, common edge, common vertex) as flat arrays."""
    rules = [pair_rule(kind, order) for kind in (IDENTICAL, COMMON_EDGE, COMMON_VERTEX)]
    return tuple(np.ascontiguousarray(a) for r in rules for a in r)


@njit(cache=True)
def _accumulate(out, G, w, fx, fy, d0, d1, dt, ds, row0, col0, ms, ns):
    for d in range(d0, d1):
        for j in range(dt):
            for jp in range(dt):
                g = G[d, j, jp] * w
                if g == 0.0:
                    continue
                for m in range(ds):
                    rr = j * ms + row0 + m
                    for mp in range(ds):
                        out[d, rr, jp * ns + col0 + mp] += g * fx[m] * fy[mp]


@njit(cache=True)
def _shared(tk, tkp, perm_k, perm_kp):
    """Number of shared vertices; fills aligned vertex orders (shared first)."""
    sk = np.empty(3, dtype=np.int64)
    skp = np.empty(3, dtype=np.int64)
    n = 0
    for i in range(3):
        for j in range(3):
            if tk[i] == tkp[j]:
                sk[n] = i
                skp[n] = j
                n += 1
    if n == 3:
        for i in range(3):
            perm_k[i] = i
            perm_kp[i] = i
    elif n == 2:
        perm_k[0], perm_k[1], perm_k[2] = sk[0], sk[1], 3 - sk[0] - sk[1]
        perm_kp[0], perm_kp[1], perm_kp[2] = skp[0], skp[1], 3 - skp[0] - skp[1]
    elif n == 1:
        for i in range(3):
            perm_k[i] = (sk[0] + i) % 3
            perm_kp[i] = (skp[0] + i) % 3
    return n


@njit(cache=True)
def near_block(
    a0, a1, b0, b1, nd, h, tri, corners, areas, rX, rW, rphi, rules, tables, order_a, dt
):
    """Dense blocks for all offsets d < nd on patch ranges [a0, a1) x [b0, b1).

    Returns (out, touching) where out has shape (nd, dt * ms, dt * ns).
    """
    coef, even, odd, wts, gauss, d_quad, active = tables
    id_x, id_y, id_w, ce_x, ce_y, ce_w, cv_x, cv_y, cv_w = rules
    ds = rphi.shape[2]
    ms = (a1 - a0) * ds
    ns = (b1 - b0) * ds
    out = np.zeros((max(nd, 1), dt * ms, dt * ns))
    if nd == 0:
        return out[:0], False
    G = np.zeros((nd, dt, dt))
    ws = make_workspace(nd, coef.shape[3])
    fx = np.empty(ds)
    fy = np.empty(ds)
    pk = np.empty(3, dtype=np.int64)
    pkp = np.empty(3, dtype=np.int64)
    nq = rW.shape[1]
    touching = False
    # symmetric diagonal blocks: compute patch pairs once and mirror them
    mirror = dt == 1 and a0 == b0 and a1 == b1
    for k in range(a0, a1):
        for kp in range(b0, b1):
            if mirror and kp < k:
                continue
            row0 = (k - a0) * ds
            col0 = (kp - b0) * ds
            ns_shared = _shared(tri[k], tri[kp], pk, pkp)
            dreg = 0
            if ns_shared > 0:
                touching = True
                dreg = min(2, nd)
                if ns_shared == 3:
                    xs, ys, wq = id_x, id_y, id_w
                elif ns_shared == 2:
                    xs, ys, wq = ce_x, ce_y, ce_w
                else:
                    xs, ys, wq = cv_x, cv_y, cv_w
                jac = 4.0 * areas[k] * areas[kp]
                P = corners[k]
                Q = corners[kp]
                for q in range(wq.shape[0]):
                    x1, x2 = xs[q, 0], xs[q, 1]
                    y1, y2 = ys[q, 0], ys[q, 1]
                    r2 = 0.0
                    for c in range(3):
                        X = P[pk[0], c] + x1 * (P[pk[1], c] - P[pk[0], c]) + x2 * (P[pk[2], c] - P[pk[1], c])
                        Y = Q[pkp[0], c] + y1 * (Q[pkp[1], c] - Q[pkp[0], c]) + y2 * (Q[pkp[2], c] - Q[pkp[1], c])
                        r2 += (X - Y) ** 2
                    if order_a == 0:
                        fx[0] = 1.0
                        fy[0] = 1.0
                    else:
                        fx[pk[0]] = 1.0 - x1
                        fx[pk[1]] = x1 - x2
                        fx[pk[2]] = x2
                        fy[pkp[0]] = 1.0 - y1
                        fy[pkp[1]] = y1 - y2
                        fy[pkp[2]] = y2
                    tik_eval(math.sqrt(r2), h, 0, dreg, coef, even, odd, wts, gauss, d_quad, active, G, ws)
                    _accumulate(out, G, wq[q] * jac, fx, fy, 0, dreg, dt, ds, row0, col0, ms, ns)
            if dreg >= nd:
                continue
            for q in range(nq):
                for qp in range(nq):
                    r2 = 0.0
                    for c in range(3):
                        r2 += (rX[k, q, c] - rX[kp, qp, c]) ** 2
                    tik_eval(math.sqrt(r2), h, dreg, nd, coef, even, odd, wts, gauss, d_quad, active, G, ws)
                    _accumulate(out, G, rW[k, q] * rW[kp, qp], rphi[k, q], rphi[kp, qp], dreg, nd, dt, ds, row0, col0, ms, ns)
    if mirror:
        for d in range(nd):
            for i in range(ms):
                for j in range(i):
                    if i // ds > j // ds:
                        out[d, i, j] = out[d, j, i]
    return out, touching


def offset_bound(rmin, d, h):
    """Upper bound of G_d(r) for r >= rmin (integral of the convolution weight <= 1)."""
    lo = max(d - 1, 0) * h
    hi = (d + 1) * h
    if rmin <= 0.0:
        return np.inf if d <= 1 else (4.0 * np.pi * lo) ** -1.5 * h * h
    s = min(max(rmin * rmin / 6.0, lo), hi)
    if s <= 0:
        return np.inf
    return h * h * (4.0 * np.pi * s) ** -1.5 * np.exp(-rmin * rmin / (4.0 * s))


class NearFieldContext:
    """Mesh-dependent data shared by all near-field block evaluations."""

    def __init__(self, mesh, grid, quad_order):
        self.mesh = mesh
        self.grid = grid
        self.quad_order = quad_order
        self.reg = regular_points(mesh, quad_order)
        self.rules = singular_rules(quad_order)
        self.tables = kernel_tables(grid.p_t)

    def block(self, ra, rb, nd):
        m = self.mesh
        out, touching = near_block(
            int(ra[0]), int(ra[1]), int(rb[0]), int(rb[1]), int(nd), float(self.grid.h_t),
            m.triangles, m.corners, m.areas, *self.reg, self.rules, self.tables,
            m.element_order, self.grid.shapes_per_step,
        )
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"non-finite near-field entries for patches {tuple(ra)} x {tuple(rb)}")
        return out, touching

    def typical_diagonal(self, samples=8):
        n = self.mesh.n_patches
        idx = np.unique(np.linspace(0, n - 1, min(samples, n)).astype(int))
        vals = []
        for k in idx:
            out, _ = self.block((k, k + 1), (k, k + 1), 1)
            vals.append(np.mean(np.diag(out[0])))
        return float(np.mean(vals))


def assemble_nearfield(
    mesh, tree, grid, schedule, quad_order=2, compress=True, n_offsets=None, eta0=None,
    drop=True, neighbors=None, keep=True,
):
    """Near-field matrices A_d for d < n_offsets (default 2 n_T) as BlockSparse objects.

    ``mesh`` must be sorted so that finest clusters are contiguous.  Returns
    (list of BlockSparse, or None when ``keep`` is false, and a stats dict).  Entry
    counts without compression include dropped blocks.
    """
    from ..clustering import neighbor_lists

    nd = 2 * grid.leaf_steps if n_offsets is None else n_offsets
    lv = tree[0]
    ranges = lv.ranges()
    if neighbors is None:
        neighbors, _ = neighbor_lists(tree, 0, eta0)
    ctx = NearFieldContext(mesh, grid, quad_order)
    dt = grid.shapes_per_step
    ds = mesh.shapes_per_patch
    n_space = mesh.n_local_dofs
    symmetric = dt == 1
    tol = schedule.near
    diag = ctx.typical_diagonal()
    thresh = DROP_FACTOR * (tol * diag if schedule.relative else tol)
    amax = float(mesh.areas.max())
    builders = [BlockBuilder(dt, n_space) for _ in range(nd)]
    stats = {
        "tol": tol, "typical_diagonal": diag, "drop_threshold": thresh,
        "dropped": [0] * nd, "lowrank": [0] * nd, "dense": [0] * nd,
        "stored": [0] * nd, "dense_entries": [0] * nd, "ranks": [[] for _ in range(nd)],
    }
    for c in range(lv.n_clusters):
        for cp in neighbors[c]:
            # mirrored pairs are computed with the lower patch range as rows
            if symmetric and ranges[cp, 0] < ranges[c, 0]:
                continue
            gap = np.linalg.norm(lv.centroids[c] - lv.centroids[cp]) - lv.diameters[c] - lv.diameters[cp]
            rmin = max(gap, 0.0)
            mult = 1 if (not symmetric or c == cp) else 2
            size = (dt * ds) ** 2 * int(ranges[c, 1] - ranges[c, 0]) * int(ranges[cp, 1] - ranges[cp, 0])
            for d in range(nd):
                stats["dense_entries"][d] += mult * size
            n_eff = nd
            if drop:
                while n_eff > 0 and offset_bound(rmin, n_eff - 1, grid.h_t) * amax * amax < thresh:
                    n_eff -= 1
            for d in range(n_eff, nd):
                stats["dropped"][d] += mult
            if n_eff == 0:
                continue
            ra = (ranges[c, 0] * ds, ranges[c, 1] * ds)
            rb = (ranges[cp, 0] * ds, ranges[cp, 1] * ds)
            out, touching = ctx.block(ranges[c], ranges[cp], n_eff)
            for d in range(n_eff):
                blk = out[d]
                b = builders[d]
                may_compress = compress and (d >= 2 or (c != cp and not touching))
                idx = None
                if may_compress:
                    mr = beneficial_rank(*blk.shape, factor=2.0)
                    if mr > 0:
                        if schedule.relative:
                            lr = aca(blk, tol, max_rank=mr)
                        else:
                            lr = aca(blk, tol, max_rank=mr, absolute=True)
                        if lr.certified:
                            idx = b.add_lowrank(ra, rb, lr.U, lr.V) if keep else -1
                            stats["lowrank"][d] += mult
                            stats["ranks"][d].append(lr.rank)
                            stats["stored"][d] += mult * lr.rank * sum(blk.shape)
                if idx is None:
                    idx = b.add_dense(ra, rb, blk) if keep else -1
                    stats["dense"][d] += mult
                    stats["stored"][d] += mult * blk.size
                if keep and symmetric and cp != c:
                    b.add_mirror(idx)
    if not keep:
        return None, stats
    mats = [b.build({"offset": d}, csr=True) for d, b in enumerate(builders)]
    return mats, stats
