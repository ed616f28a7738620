"""Uniform cube hierarchy over patch centroids, separation ratios and neighbor lists."""
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ClusterLevel:
    """Nonempty cubes of one level.  ``patches[c]`` lists the patches of cluster ``c``."""

    level: int
    cells_per_axis: int
    cube_index: np.ndarray
    patches: list
    patch_cluster: np.ndarray
    centroids: np.ndarray
    diameters: np.ndarray
    neighbors: dict = field(default_factory=dict)

    @property
    def n_clusters(self):
        return len(self.patches)

    def ranges(self):
        """(start, stop) of each cluster, valid when clusters are contiguous."""
        out = np.array([[p.min(), p.max() + 1] for p in self.patches], dtype=np.int64)
        if np.any(out[:, 1] - out[:, 0] != np.array([len(p) for p in self.patches])):
            raise ValueError("clusters are not contiguous; sort the mesh first")
        return out

    def separation(self, a, b):
        if a == b:
            return np.inf
        return separation_ratio(
            self.diameters[a], self.centroids[a], self.diameters[b], self.centroids[b]
        )


@dataclass
class ClusterTree:
    """Levels 0 (finest) .. n_levels - 1 = L_s (coarsest) of a uniformly refined bounding cube."""

    origin: np.ndarray
    edge: float
    levels: list
    fine_index: np.ndarray = None

    @property
    def depth(self):
        """L_s, the index of the coarsest level."""
        return len(self.levels) - 1

    def __getitem__(self, level):
        return self.levels[level]


def separation_ratio(rho_a, x_a, rho_b, x_b):
    """(rho_a + rho_b) / |x_a - x_b|; infinite for coincident centroids."""
    dist = float(np.linalg.norm(np.asarray(x_a) - np.asarray(x_b)))
    if dist == 0.0:
        return np.inf
    return (rho_a + rho_b) / dist


def _point_set_diameter(pts, chunk=2048):
    best = 0.0
    for s in range(0, len(pts), chunk):
        block = pts[s : s + chunk]
        d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(d2.max()))
    return np.sqrt(best)


def _finest_index(mesh, origin, edge, depth):
    n = 2**depth
    idx = np.ceil((mesh.centroids - origin) / (edge / n)).astype(np.int64) - 1
    return np.clip(idx, 0, n - 1)


def _build_level(mesh, fine_idx, depth, level):
    n = 2 ** (depth - level)
    # coarse cubes are unions of fine ones, so parents are exact
    idx = fine_idx >> level
    key = (idx[:, 0] * n + idx[:, 1]) * n + idx[:, 2]
    uniq, inverse = np.unique(key, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
    patches = [order[bounds[c] : bounds[c + 1]] for c in range(len(uniq))]
    cube = np.stack([uniq // (n * n), (uniq // n) % n, uniq % n], axis=1)
    areas = mesh.areas
    cents = np.empty((len(uniq), 3))
    diams = np.empty(len(uniq))
    for c, pl in enumerate(patches):
        w = areas[pl]
        cents[c] = (mesh.centroids[pl] * w[:, None]).sum(axis=0) / w.sum()
        verts = mesh.vertices[np.unique(mesh.triangles[pl])]
        diams[c] = _point_set_diameter(verts)
    return ClusterLevel(level, n, cube, patches, inverse.astype(np.int64), cents, diams)


def build_cluster_tree(mesh, levels=None, max_patches_per_leaf=None):
    """Cube hierarchy with ``levels`` refinements, or refined until leaves hold at most
    ``max_patches_per_leaf`` patches.  Level 0 is the finest."""
    if mesh.n_patches == 0:
        raise ValueError("empty mesh")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    edge = float((hi - lo).max())
    if edge == 0.0:
        raise ValueError("degenerate mesh")
    c = mesh.centroids
    if mesh.n_patches > 1 and np.all(np.ptp(c, axis=0) == 0):
        raise ValueError("all patch centroids coincide")
    edge *= 1.0 + 1e-10
    origin = 0.5 * (lo + hi) - 0.5 * edge
    if levels is None:
        if max_patches_per_leaf is None:
            raise ValueError("give levels or max_patches_per_leaf")
        levels = 0
        while True:
            leaf = _build_level(mesh, _finest_index(mesh, origin, edge, levels), levels, 0)
            if max(len(p) for p in leaf.patches) <= max_patches_per_leaf or levels >= 20:
                break
            levels += 1
    fine = _finest_index(mesh, origin, edge, levels)
    tree_levels = [_build_level(mesh, fine, levels, lv) for lv in range(levels + 1)]
    return ClusterTree(origin, edge, tree_levels, fine)


def morton_keys(idx, bits):
    """Interleave the bits of integer cube coordinates (coarsest bit first)."""
    key = np.zeros(len(idx), dtype=np.int64)
    for b in range(bits - 1, -1, -1):
        for ax in range(3):
            key = (key << 1) | ((idx[:, ax] >> b) & 1)
    return key


def sort_mesh_by_tree(mesh, levels):
    """Reorder patches so that every cluster of every level is a contiguous range.

    Returns the reordered mesh, its cluster tree and the permutation ``perm`` with
    ``sorted.triangles = mesh.triangles[perm]``.
    """
    tree = build_cluster_tree(mesh, levels)
    key = morton_keys(tree.fine_index, tree.depth)
    perm = np.lexsort((np.arange(mesh.n_patches), key))
    sorted_mesh = type(mesh)(mesh.vertices, mesh.triangles[perm], mesh.element_order)
    return sorted_mesh, build_cluster_tree(sorted_mesh, levels), perm


def neighbor_lists(tree, level, eta0):
    """Neighbor lists {c: array of c'} with separation ratio > eta0, and gamma."""
    if not 0 < eta0 < 1:
        raise ValueError("eta0 must lie in (0, 1)")
    lv = tree[level]
    if eta0 in lv.neighbors:
        return lv.neighbors[eta0]
    x = lv.centroids
    dist = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2))
    rho = lv.diameters[:, None] + lv.diameters[None, :]
    with np.errstate(divide="ignore"):
        eta = np.where(dist > 0, rho / np.where(dist > 0, dist, 1.0), np.inf)
    np.fill_diagonal(eta, np.inf)
    mask = eta > eta0
    lists = {c: np.flatnonzero(mask[c]) for c in range(lv.n_clusters)}
    gamma = int(mask.sum(axis=1).max())
    lv.neighbors[eta0] = (lists, gamma)
    return lists, gamma


def temporal_to_spatial_level(level, depth):
    """Spatial level min(floor(l / 2), L_s) used for temporal level ``level``."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    return min(level // 2, depth)
