"""Manufactured solution, its projection onto the discrete space and L2 errors."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spsl

from ..assembly.extension import build_extension
from ..quadrature import shape_values, triangle_rule
from ..temporal import local_shape_values

SPACE_RULE = 4
TIME_RULE = 4


@dataclass(frozen=True)
class SeparableFunction:
    """q(x, t) = sum_n f_n(x) g_n(t); ``space`` and ``time`` are lists of callables."""

    space: tuple
    time: tuple

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        return sum(f(x) * g(t) for f, g in zip(self.space, self.time))


def quadratic_solution():
    """q*(x, t) = 1 + x1 + x2 x3 + t x1 + t^2."""
    return SeparableFunction(
        space=(
            lambda x: 1.0 + x[..., 0] + x[..., 1] * x[..., 2],
            lambda x: x[..., 0],
            lambda x: np.ones(x.shape[:-1]),
        ),
        time=(lambda t: np.ones_like(t), lambda t: t, lambda t: t * t),
    )


def constant_solution(value=1.0):
    return SeparableFunction((lambda x: np.full(x.shape[:-1], value),), (lambda t: np.ones_like(t),))


def space_points(mesh, n=SPACE_RULE):
    """Quadrature points (N_s, nq, 3), weights (N_s, nq) and shape values (nq, D_s)."""
    pts, w = triangle_rule(n)
    c = mesh.corners
    X = (
        c[:, None, 0]
        + pts[None, :, :1] * (c[:, None, 1] - c[:, None, 0])
        + pts[None, :, 1:2] * (c[:, None, 2] - c[:, None, 1])
    )
    W = 2.0 * mesh.areas[:, None] * w[None, :]
    return X, W, shape_values(mesh.element_order, (0, 1, 2), pts)


def time_points(grid, n=TIME_RULE):
    """Reference Gauss points a in [0, 1], weights and temporal shapes (D_t, n)."""
    x, w = np.polynomial.legendre.leggauss(n)
    a = 0.5 * (x + 1.0)
    return a, 0.5 * w, local_shape_values(grid.p_t, a)


def spatial_mass(mesh):
    """Block diagonal mass matrix of the patch-local shape functions."""
    if mesh.element_order == 0:
        return sps.diags(mesh.areas).tocsr()
    loc = (np.ones((3, 3)) + np.eye(3)) / 12.0
    blocks = [a * loc for a in mesh.areas]
    return sps.block_diag(blocks, format="csr")


def temporal_mass(grid):
    """Mass matrix of the local temporal shapes on one step (includes h_t)."""
    a, w, chi = time_points(grid, grid.p_t + 2)
    return grid.h_t * (chi * w) @ chi.T


def project(func, mesh, grid, continuous=None):
    """L2 projection of a separable function onto the space-time trial space.

    Returns discontinuous coefficients of shape (N_t, D_t D_s N_s).  Linear
    elements are continuous in space unless ``continuous`` is False.
    """
    continuous = mesh.element_order == 1 if continuous is None else continuous
    X, W, phi = space_points(mesh)
    a, wt, chi = time_points(grid)
    h = grid.h_t
    Ms = spatial_mass(mesh)
    Mt = temporal_mass(grid)
    if continuous:
        ext = build_extension(mesh)
        Mv = (ext.E.T @ Ms @ ext.E).tocsc()
        solve_v = spsl.factorized(Mv)
    out = np.zeros((grid.n_steps, grid.shapes_per_step, mesh.n_local_dofs))
    t = (np.arange(grid.n_steps)[:, None] + a[None, :]) * h
    for f, g in zip(func.space, func.time):
        load_s = np.einsum("kq,kq,qm->km", f(X), W, phi).ravel()
        if continuous:
            cs = ext.E @ solve_v(ext.E.T @ load_s)
        elif mesh.element_order == 0:
            cs = load_s / mesh.areas
        else:
            cs = spsl.spsolve(Ms.tocsc(), load_s)
        load_t = h * (g(t) * wt) @ chi.T
        ct = np.linalg.solve(Mt, load_t.T).T
        out += ct[:, :, None] * cs[None, None, :]
    return out.reshape(grid.n_steps, -1)


def l2_norm_coefficients(q, mesh, grid):
    """L2(Gamma x (0, T)) norm of a discrete function given its coefficients."""
    Ms = spatial_mass(mesh)
    Mt = temporal_mass(grid)
    Q = np.asarray(q, dtype=float).reshape(grid.n_steps, grid.shapes_per_step, -1)
    MQ = np.stack([(Ms @ Q[:, j].T).T for j in range(Q.shape[1])], axis=1)
    return float(np.sqrt(max(np.einsum("ijg,jk,ikg->", Q, Mt, MQ), 0.0)))


def l2_error(q_h, q_star, mesh, grid):
    """||q_h - q*|| in L2 for two discrete coefficient vectors (mass matrix form)."""
    return l2_norm_coefficients(np.asarray(q_h) - np.asarray(q_star), mesh, grid)


def l2_error_function(q_h, func, mesh, grid):
    """||q_h - func|| in L2(Gamma_h x (0, T)) by quadrature exact for quadratics."""
    X, W, phi = space_points(mesh)
    a, wt, chi = time_points(grid)
    h = grid.h_t
    ds = mesh.shapes_per_patch
    Q = np.asarray(q_h, dtype=float).reshape(grid.n_steps, grid.shapes_per_step, mesh.n_patches, ds)
    F = np.stack([f(X) for f in func.space])
    total = 0.0
    for i in range(grid.n_steps):
        t = (i + a) * h
        G = np.stack([g(t) for g in func.time])
        exact = np.einsum("nkq,nt->tkq", F, G)
        disc = np.einsum("jkm,qm,jt->tkq", Q[i], phi, chi)
        total += h * np.einsum("t,kq,tkq->", wt, W, (disc - exact) ** 2)
    return float(np.sqrt(total))
