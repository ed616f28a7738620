"""The compressed single-layer operator: near-field A_d, far-field A_d^l and moment matrices."""
from dataclasses import dataclass, field
import json
import time

import numpy as np

from ..clustering import neighbor_lists, sort_mesh_by_tree, temporal_to_spatial_level
from ..temporal import moment_matrix
from .extension import build_extension
from .farfield import assemble_farfield
from .nearfield import assemble_nearfield, regular_points
from .schedule import tolerance_schedule

FAR_OFFSETS = (2, 3)


@dataclass
class CompressedOperator:
    """Data-sparse representation of the block lower triangular space-time matrix.

    All vectors use the patch order of ``mesh`` (the tree-sorted mesh); ``perm`` maps
    it back to the input mesh (``mesh.triangles = input.triangles[perm]``).
    """

    mesh: object
    tree: object
    perm: np.ndarray
    grid: object
    p: int
    eta0: float
    schedule: object
    near: list
    far: dict
    moments: dict
    extension: object = None
    stats: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    @property
    def n_space(self):
        return self.mesh.n_local_dofs

    @property
    def step_size(self):
        """Coefficients per time step, D_t D_s N_s."""
        return self.grid.shapes_per_step * self.n_space

    @property
    def far_levels(self):
        return range(max(self.grid.levels - 1, 0))

    def build_far(self, level, d):
        """Assemble A_d^l with the options of this operator (used for streamed products)."""
        o = self.options
        return assemble_farfield(
            self.mesh, self.tree, self.grid, level, d, self.p, self.schedule, o["quad_order"],
            eta0=self.eta0, compress=o["compress_far"], drop=o["drop"], reg=o.get("reg"),
        )

    def far_block_matvec(self, level, d, q_block):
        """(M^T x I) A_d^l (M x I) applied to one level-``level`` block of coefficients.

        ``q_block`` has shape (N_{l,t}, D_t N_s D_s) or a flat equivalent.
        """
        M = self.moments[level]
        Q = np.asarray(q_block, dtype=float).reshape(M.shape[1], self.n_space)
        m = M @ Q
        u = self.far[(level, d)].matvec(m.ravel()).reshape(self.p, self.n_space)
        return (M.T @ u).reshape(np.shape(q_block))

    def far_block_dense(self, level, d):
        """Dense (N_{l,t} D_t N) square matrix of the interpolated block c_d^l."""
        M = self.moments[level]
        A = self.far[(level, d)].to_dense()
        n = self.n_space
        K = np.kron(M.T, np.eye(n))
        return K @ A @ K.T

    def near_apply(self, d, X):
        """A_d applied to columns of X, shape (D_t N_s D_s, k)."""
        return self.near[d].matvec(X)

    def to_dense(self):
        """Dense matrix of the hierarchical operator (small problems only)."""
        from ..solver import apply_operator

        n = self.grid.n_steps * self.step_size
        if n > 20000:
            raise MemoryError("operator too large for a dense copy")
        V = np.empty((n, n))
        for c in range(n):
            e = np.zeros(n)
            e[c] = 1.0
            V[:, c] = apply_operator(self, e.reshape(self.grid.n_steps, -1)).ravel()
        return V

    def entry_counts(self):
        """Stored entries and uncompressed neighbor-block entries for near and far field."""
        ns = self.stats["near"]
        far = self.stats["far"]
        return {
            "near_stored": int(sum(ns["stored"])),
            "near_dense": int(sum(ns["dense_entries"])),
            "far_stored": int(sum(s["stored"] for s in far.values())),
            "far_dense": int(sum(s["dense_entries"] for s in far.values())),
        }

    def stats_json(self, path=None):
        text = json.dumps(_jsonable(self.stats), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _gamma(tree, eta0, levels):
    return max(neighbor_lists(tree, lv, eta0)[1] for lv in levels)


def assemble_operator(
    mesh, grid, p, epsilon, eta0, levels_spatial, quad_order=2, compress_near=True,
    compress_far=True, relative=True, drop=True, keep=True, sort=True, far=True,
):
    """Sort the mesh into the cluster tree, build the schedule and assemble all blocks.

    With ``keep=False`` only the statistics are produced (no blocks are stored).  With
    ``far=False`` the far field is left out; ``build_far`` assembles it on demand.
    """
    t0 = time.perf_counter()
    if sort:
        smesh, tree, perm = sort_mesh_by_tree(mesh, levels_spatial)
    else:
        from ..clustering import build_cluster_tree

        smesh, tree, perm = mesh, build_cluster_tree(mesh, levels_spatial), np.arange(mesh.n_patches)
        for lv in tree.levels:
            lv.ranges()  # raises unless every cluster is a contiguous patch range
    far_levels = range(max(grid.levels - 1, 0))
    spatial_levels = sorted({0} | {temporal_to_spatial_level(lv, tree.depth) for lv in far_levels})
    gamma = _gamma(tree, eta0, spatial_levels)
    schedule = tolerance_schedule(
        epsilon, gamma, p, smesh.h_s, grid.h_t, grid.leaf_steps, grid.levels, relative
    )
    t1 = time.perf_counter()
    near, near_stats = assemble_nearfield(
        smesh, tree, grid, schedule, quad_order, compress=compress_near, eta0=eta0,
        drop=drop, keep=keep,
    )
    t2 = time.perf_counter()
    reg = regular_points(smesh, quad_order)
    far_mats = {}
    far_stats = {}
    for lv in far_levels if far else ():
        for d in FAR_OFFSETS:
            mat, st = assemble_farfield(
                smesh, tree, grid, lv, d, p, schedule, quad_order, eta0=eta0,
                compress=compress_far, drop=drop, keep=keep, reg=reg,
            )
            far_mats[(lv, d)] = mat
            far_stats[(lv, d)] = st
    t3 = time.perf_counter()
    moments = {lv: moment_matrix(lv, p, grid) for lv in far_levels}
    ext = build_extension(smesh) if smesh.element_order == 1 else None
    stats = {
        "n_patches": smesh.n_patches,
        "n_steps": grid.n_steps,
        "gamma": gamma,
        "neighbors": {
            lv: {
                "clusters": tree[lv].n_clusters,
                "gamma": neighbor_lists(tree, lv, eta0)[1],
            }
            for lv in spatial_levels
        },
        "schedule": schedule.as_dict(),
        "near": near_stats,
        "far": far_stats,
        "uncertified": int(sum(s["uncertified_fallback"] for s in far_stats.values())),
        "time": {"tree": t1 - t0, "near": t2 - t1, "far": t3 - t2, "total": t3 - t0},
    }
    op = CompressedOperator(
        smesh, tree, perm, grid, p, eta0, schedule, near, far_mats, moments, ext, stats,
        {"quad_order": quad_order, "compress_far": compress_far, "drop": drop, "reg": reg},
    )
    stats["entries"] = op.entry_counts()
    return op
