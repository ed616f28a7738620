"""Extension from continuous vertex coefficients to patch-local discontinuous ones."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps


@dataclass
class ExtensionOperator:
    """E is (D_s N_s) x N_v with one unit entry per row; D_v = E^T E is diagonal."""

    E: sps.csr_matrix
    D_v: np.ndarray

    @property
    def shape(self):
        return self.E.shape

    def extend(self, q):
        """Continuous (..., N_v) -> discontinuous (..., D_s N_s)."""
        return (self.E @ np.moveaxis(q, -1, 0)).T if q.ndim > 1 else self.E @ q

    def restrict(self, p):
        """Discontinuous (..., D_s N_s) -> continuous (..., N_v) via E^T."""
        return (self.E.T @ np.moveaxis(p, -1, 0)).T if p.ndim > 1 else self.E.T @ p


def build_extension(mesh):
    """E_{(k,m), v} = 1 iff local node m of patch k is vertex v."""
    nodes = mesh.node_map.ravel()
    n = len(nodes)
    E = sps.csr_matrix((np.ones(n), (np.arange(n), nodes)), shape=(n, int(nodes.max()) + 1))
    D_v = np.bincount(nodes, minlength=E.shape[1]).astype(float)
    return ExtensionOperator(E, D_v)
