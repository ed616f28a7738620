"""Uncompressed reference operator: all Toeplitz blocks A_0 .. A_{N_t - 1} with exact time integration."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .nearfield import NearFieldContext

# default cap on stored reference entries N_t * (D_t D_s N_s)^2
DEFAULT_GUARD = 6e7


@dataclass
class ToeplitzOperator:
    """Block lower triangular Toeplitz operator with blocks ``blocks[d]`` = A_d."""

    blocks: np.ndarray

    @property
    def n_steps(self):
        return self.blocks.shape[0]

    @property
    def block_size(self):
        return self.blocks.shape[1]

    def block(self, i, ip):
        """V_{i, i'} = A_{i - i'} for i' <= i, zero otherwise."""
        return self.blocks[i - ip] if ip <= i else np.zeros_like(self.blocks[0])

    def matvec(self, q):
        """p_i = sum_{i' <= i} A_{i - i'} q_{i'} for q of shape (N_t, n)."""
        q = np.asarray(q, dtype=float).reshape(self.n_steps, -1)
        p = np.zeros_like(q)
        for d in range(self.n_steps):
            p[d:] += q[: self.n_steps - d] @ self.blocks[d].T
        return p

    def to_dense(self):
        nt, n = self.n_steps, self.block_size
        V = np.zeros((nt * n, nt * n))
        for i in range(nt):
            for ip in range(i + 1):
                V[i * n : (i + 1) * n, ip * n : (ip + 1) * n] = self.blocks[i - ip]
        return V

    def continuous(self, ext):
        """Blocks E^T A_d E of the continuous formulation."""
        E = ext.E
        if self.block_size != E.shape[0]:
            E = sps.kron(sps.identity(self.block_size // E.shape[0]), E).tocsr()
        return ToeplitzOperator(np.stack([(E.T @ (E.T @ A).T).T for A in self.blocks]))


def assemble_dense_reference(mesh, grid, quad_order=2, max_entries=DEFAULT_GUARD, n_offsets=None):
    """Exactly time-integrated blocks A_0 .. A_{N_t - 1} over all patch pairs."""
    nd = grid.n_steps if n_offsets is None else int(n_offsets)
    n = grid.shapes_per_step * mesh.n_local_dofs
    if nd * n * n > max_entries:
        raise MemoryError(f"dense reference needs {nd * n * n:.3g} entries (guard {max_entries:.3g})")
    ctx = NearFieldContext(mesh, grid, quad_order)
    out, _ = ctx.block((0, mesh.n_patches), (0, mesh.n_patches), nd)
    return ToeplitzOperator(out)
