"""Gauss rules on triangles and singularity-removing rules for Galerkin patch pairs.

All rules live on the reference triangle T = {0 <= x2 <= x1 <= 1} mapped by
``x -> P0 + x1 (P1 - P0) + x2 (P2 - P1)``.  The barycentric shape functions are
``(1 - x1, x1 - x2, x2)``.  Pair rules return points on T x T whose weights sum to
|T|^2 = 1/4; the Jacobian 4 |T_k| |T_k'| is applied when mapping to patches.

The singular rules are the relative-coordinate transforms of Sauter and Schwab
for identical patches, patches sharing an edge and patches sharing a vertex.
Shared vertices must be listed first, in the same order, in both patches.
"""
from functools import lru_cache

import numpy as np

from .mesh import COMMON_EDGE, COMMON_VERTEX, DISJOINT, IDENTICAL, classify_pair


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    if n < 1:
        raise ValueError("n must be positive")
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(n):
    """Collapsed Gauss rule with n*n points on T; weights sum to 1/2."""
    x, w = gauss_legendre(n)
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    pts = np.stack([u.ravel(), (u * v).ravel()], axis=1)
    return pts, (wu * wv * u).ravel()


def _cube(n, dim):
    x, w = gauss_legendre(n)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wg = np.meshgrid(*([w] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in wg], axis=1), axis=1)
    return pts, wts


def _identical(n):
    c, w = _cube(n, 4)
    xi, e1, e2, e3 = c.T
    jac = w * xi**3 * e1**2 * e2
    terms = [
        ((xi, xi * (1 - e1 + e1 * e2)), (xi * (1 - e1 * e2 * e3), xi * (1 - e1))),
        ((xi, xi * e1 * (1 - e2 + e2 * e3)), (xi * (1 - e1 * e2), xi * e1 * (1 - e2))),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * (1 - e2))),
    ]
    xs, ys, ws = [], [], []
    for a, b in terms:
        for p, q in ((a, b), (b, a)):
            xs.append(np.stack(p, axis=1))
            ys.append(np.stack(q, axis=1))
            ws.append(jac)
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)


def _common_edge(n):
    c, w = _cube(n, 4)
    xi, e1, e2, e3 = c.T
    w1 = w * xi**3 * e1**2
    w2 = w1 * e2
    terms = [
        ((xi, xi * e1 * e3), (xi * (1 - e1 * e2), xi * e1 * (1 - e2)), w1),
        ((xi, xi * e1), (xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), w2),
        ((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * e2 * e3), w2),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), (xi, xi * e1), w2),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * e2), w2),
    ]
    xs = np.concatenate([np.stack(a, axis=1) for a, _, _ in terms])
    ys = np.concatenate([np.stack(b, axis=1) for _, b, _ in terms])
    ws = np.concatenate([t for _, _, t in terms])
    return xs, ys, ws


def _common_vertex(n):
    c, w = _cube(n, 4)
    xi, e1, e2, e3 = c.T
    jac = w * xi**3 * e2
    a = np.stack([xi, xi * e1], axis=1)
    b = np.stack([xi * e2, xi * e2 * e3], axis=1)
    return np.concatenate([a, b]), np.concatenate([b, a]), np.concatenate([jac, jac])


def _regular(n):
    p, w = triangle_rule(n)
    m = len(w)
    xs = np.repeat(p, m, axis=0)
    ys = np.tile(p, (m, 1))
    return xs, ys, np.outer(w, w).ravel()


@lru_cache(maxsize=None)
def pair_rule(kind, n):
    """Reference points (x_hat, y_hat) on T x T and weights for a pair class."""
    builder = {
        IDENTICAL: _identical,
        COMMON_EDGE: _common_edge,
        COMMON_VERTEX: _common_vertex,
        DISJOINT: _regular,
    }[kind]
    xs, ys, ws = builder(n)
    for a in (xs, ys, ws):
        a.setflags(write=False)
    return xs, ys, ws


def barycentric(pts):
    """Shape function values (1 - x1, x1 - x2, x2) at reference points: (n, 3)."""
    return np.stack([1.0 - pts[:, 0], pts[:, 0] - pts[:, 1], pts[:, 1]], axis=1)


def map_points(corners, perm, pts):
    """Physical points on a patch whose corners are reordered by ``perm``."""
    p = corners[list(perm)]
    return p[0] + pts[:, :1] * (p[1] - p[0]) + pts[:, 1:2] * (p[2] - p[1])


def shape_values(element_order, perm, pts):
    """Values of the patch-local shape functions (original local order): (n, D_s)."""
    if element_order == 0:
        return np.ones((len(pts), 1))
    lam = barycentric(pts)
    out = np.empty_like(lam)
    out[:, list(perm)] = lam
    return out


def pair_points(mesh, k, kp, order, singular=True, pair=None):
    """Quadrature data for patches k, k': points X, Y, weights and shape values.

    With ``singular=False`` the regular tensor rule is used regardless of the pair class.
    """
    pair = pair if pair is not None else classify_pair(mesh, k, kp)
    kind = pair.kind if singular else DISJOINT
    perm_k, perm_kp = (pair.perm_k, pair.perm_kp) if singular else ((0, 1, 2), (0, 1, 2))
    xh, yh, w = pair_rule(kind, order)
    X = map_points(mesh.corners[k], perm_k, xh)
    Y = map_points(mesh.corners[kp], perm_kp, yh)
    w = w * 4.0 * mesh.areas[k] * mesh.areas[kp]
    return X, Y, w, shape_values(mesh.element_order, perm_k, xh), shape_values(
        mesh.element_order, perm_kp, yh
    )


def galerkin_block(kernel, mesh, k, kp, order, singular=True):
    """Local (D_s x D_s) matrix of int int kernel(x, y) phi_km(x) phi_k'm'(y).

    ``kernel(X, Y)`` receives arrays of paired points and returns kernel values.
    """
    X, Y, w, fx, fy = pair_points(mesh, k, kp, order, singular)
    kv = np.asarray(kernel(X, Y), dtype=float) * w
    if not np.all(np.isfinite(kv)):
        raise FloatingPointError(f"non-finite kernel values on patch pair ({k}, {kp})")
    return fx.T @ (kv[:, None] * fy)


def galerkin_entry(kernel, mesh, k, kp, m, mp, order, singular=True):
    """Single Galerkin entry for local shapes m (patch k) and m' (patch k')."""
    return float(galerkin_block(kernel, mesh, k, kp, order, singular)[m, mp])
