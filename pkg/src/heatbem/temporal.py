"""Uniform time grid, binary interval tree, temporal shape functions and moment matrices."""
from dataclasses import dataclass
import math

import numpy as np

from .kernels import local_shape_nodes


@dataclass(frozen=True)
class TemporalGrid:
    """Uniform grid of ``n_steps = 2**levels * leaf_steps`` intervals on [0, T]."""

    T: float
    n_steps: int
    levels: int
    leaf_steps: int
    p_t: int = 0

    def __post_init__(self):
        if self.n_steps != 2**self.levels * self.leaf_steps:
            raise ValueError("n_steps must equal 2**levels * leaf_steps")
        if self.T <= 0 or self.leaf_steps < 1 or self.levels < 0 or self.p_t < 0:
            raise ValueError("invalid temporal grid parameters")

    @classmethod
    def from_levels(cls, T, levels, leaf_steps, p_t=0):
        return cls(float(T), 2**levels * leaf_steps, levels, leaf_steps, p_t)

    @property
    def h_t(self):
        return self.T / self.n_steps

    @property
    def shapes_per_step(self):
        """D_t: temporal shape functions per interval."""
        return self.p_t + 1

    @property
    def n_leaves(self):
        return 2**self.levels

    def steps_per_block(self, level):
        """N_{l,t}: fine steps in an interval of tree level ``level``."""
        return self.leaf_steps * 2**level

    def block_length(self, level):
        return self.steps_per_block(level) * self.h_t

    def interval(self, level, n):
        return IntervalNode(self, level, n)


@dataclass(frozen=True)
class IntervalNode:
    """Node ``n`` at tree level ``level`` (0 is the finest, leaves hold leaf_steps steps)."""

    grid: TemporalGrid
    level: int
    position: int

    @property
    def start(self):
        return self.position * self.grid.block_length(self.level)

    @property
    def end(self):
        return (self.position + 1) * self.grid.block_length(self.level)

    @property
    def indices(self):
        m = self.grid.steps_per_block(self.level)
        return np.arange(self.position * m, (self.position + 1) * m)


def binary_digits(n):
    """Highest digit R, lowest nonzero digit S and the ancestors n_l = n // 2**l, l = 0..R.

    For n = 0 returns (-1, -1, (0,)), meaning no far-field work.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return -1, -1, (0,)
    R = n.bit_length() - 1
    S = (n & -n).bit_length() - 1
    return R, S, tuple(n >> l for l in range(R + 1))


def chebyshev_nodes(start, end, p):
    """The ``p`` Chebyshev points of the first kind mapped onto [start, end]."""
    beta = np.arange(p)
    x = np.cos(np.pi * (2 * beta + 1) / (2 * p))
    return start + (end - start) * (0.5 + 0.5 * x)


def interval_chebyshev_nodes(node, p):
    return chebyshev_nodes(node.start, node.end, p)


def lagrange_eval(nodes, t):
    """Lagrange polynomials of ``nodes`` at points ``t``: array (len(nodes), len(t))."""
    nodes = np.asarray(nodes, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.ones((nodes.size, t.size))
    for b, xb in enumerate(nodes):
        for k, xk in enumerate(nodes):
            if k != b:
                out[b] *= (t - xk) / (xb - xk)
    return out


def local_shape_values(p_t, a):
    """Temporal shape functions on the reference interval: array (p_t + 1, len(a))."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if p_t == 0:
        return np.ones((1, a.size))
    return lagrange_eval(local_shape_nodes(p_t), a)


def temporal_basis_eval(grid, i, j, t):
    """chi_{ij}(t): shape ``j`` of interval I_i = [i h, (i+1) h] (0-based), zero outside."""
    t = np.asarray(t, dtype=float)
    h = grid.h_t
    a = (t - i * h) / h
    inside = (a >= 0) & (a <= 1)
    vals = local_shape_values(grid.p_t, np.where(inside, a, 0.0).ravel())[j]
    vals = np.where(inside.ravel(), vals, 0.0).reshape(t.shape)
    return vals[()] if vals.ndim == 0 else vals


def moment_matrix(level, p, grid):
    """M_l with entries int L_beta(t) chi_{ij}(t) dt over the first block of level ``level``.

    Columns are ordered (step, shape) to match the space-time vector layout.
    """
    m = grid.steps_per_block(level)
    dt = grid.shapes_per_step
    h = grid.h_t
    nodes = chebyshev_nodes(0.0, m * h, p)
    ng = (p + grid.p_t) // 2 + 2
    x, w = np.polynomial.legendre.leggauss(ng)
    a = 0.5 * (x + 1.0)
    w = 0.5 * w
    chi = local_shape_values(grid.p_t, a)
    out = np.empty((p, m * dt))
    for i in range(m):
        lb = lagrange_eval(nodes, (i + a) * h)
        out[:, i * dt : (i + 1) * dt] = h * (lb * w) @ chi.T
    return out


def moment_bound(level, p, grid):
    """(h_t p log p 2^l)^(1/2), with log p replaced by 1 for p = 1."""
    lg = math.log(p) if p > 1 else 1.0
    return math.sqrt(grid.h_t * p * lg * 2**level)


def moment_norm_check(level, p, grid, constant=None):
    """Spectral norm of M_l against the bound; ``ok`` only if a constant is supplied."""
    norm = float(np.linalg.norm(moment_matrix(level, p, grid), 2))
    bound = moment_bound(level, p, grid)
    ratio = norm / bound
    return {
        "norm": norm,
        "bound": bound,
        "ratio": ratio,
        "ok": None if constant is None else bool(ratio <= constant),
    }
