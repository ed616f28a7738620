"""Flat triangular surface meshes, the 48-patch sphere and patch-pair classification."""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sps

MAX_SPHERE_LEVEL = 6

IDENTICAL = "identical"
COMMON_EDGE = "common_edge"
COMMON_VERTEX = "common_vertex"
DISJOINT = "disjoint"
PAIR_CODES = {IDENTICAL: 3, COMMON_EDGE: 2, COMMON_VERTEX: 1, DISJOINT: 0}


@dataclass
class SurfaceMesh:
    """Triangulated surface with piecewise constant (a=0) or linear (a=1) elements.

    ``vertices`` is (N_v, 3), ``triangles`` is (N_s, 3) with outward orientation.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    element_order: int = 0

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if self.element_order not in (0, 1):
            raise ValueError("element_order must be 0 or 1")
        if np.any(self.areas <= 0):
            raise ValueError("degenerate patch with nonpositive area")

    @property
    def n_patches(self):
        return self.triangles.shape[0]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def shapes_per_patch(self):
        """D_s: local spatial shape functions per patch."""
        return 1 if self.element_order == 0 else 3

    @property
    def n_local_dofs(self):
        """D_s * N_s, the discontinuous spatial dimension."""
        return self.shapes_per_patch * self.n_patches

    @cached_property
    def corners(self):
        """(N_s, 3, 3) array of patch corner coordinates."""
        return self.vertices[self.triangles]

    @cached_property
    def areas(self):
        c = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @cached_property
    def centroids(self):
        return self.corners.mean(axis=1)

    @cached_property
    def diameters(self):
        c = self.corners
        e = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 1], c[:, 0] - c[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    @property
    def h_s(self):
        return float(self.diameters.max())

    @property
    def node_map(self):
        """(N_s, D_s) map from local node to global node index."""
        if self.element_order == 1:
            return self.triangles
        return np.arange(self.n_patches)[:, None]

    @property
    def total_area(self):
        return float(self.areas.sum())

    def with_order(self, element_order):
        return SurfaceMesh(self.vertices, self.triangles, element_order)

    @cached_property
    def incidence(self):
        """Sparse patch-vertex incidence (N_s x N_v)."""
        n = self.n_patches
        rows = np.repeat(np.arange(n), 3)
        return sps.csr_matrix(
            (np.ones(3 * n), (rows, self.triangles.ravel())), shape=(n, self.n_vertices)
        )

    @cached_property
    def touching(self):
        """Sparse (N_s x N_s) matrix of shared-vertex counts for touching patches."""
        return (self.incidence @ self.incidence.T).tocsr()

    def edge_counts(self):
        """Map from undirected edge to the number of patches containing it."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return dict(zip(map(tuple, uniq), counts))

    def is_closed(self):
        return all(c == 2 for c in self.edge_counts().values())


@dataclass(frozen=True)
class PatchPairClass:
    """Relation between two patches and local vertex orderings aligning shared vertices.

    ``perm_k[i]`` is the local index in patch k of the i-th vertex in the aligned
    ordering; shared vertices come first and appear in the same order for both.
    """

    kind: str
    perm_k: tuple = (0, 1, 2)
    perm_kp: tuple = (0, 1, 2)
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def code(self):
        return PAIR_CODES[self.kind]


def classify_pair(mesh, k, kp):
    """Classify a pair of patches as identical, common edge, common vertex or disjoint."""
    tk = [int(v) for v in mesh.triangles[k]]
    tkp = [int(v) for v in mesh.triangles[kp]]
    if k == kp:
        return PatchPairClass(IDENTICAL)
    shared = [v for v in tk if v in tkp]
    if len(shared) == 3:
        raise ValueError(f"patches {k} and {kp} coincide")
    if len(shared) == 2:
        a, b = shared
        pk = (tk.index(a), tk.index(b), 3 - tk.index(a) - tk.index(b))
        pkp = (tkp.index(a), tkp.index(b), 3 - tkp.index(a) - tkp.index(b))
        return PatchPairClass(COMMON_EDGE, pk, pkp)
    if len(shared) == 1:
        i, ip = tk.index(shared[0]), tkp.index(shared[0])
        return PatchPairClass(
            COMMON_VERTEX, (i, (i + 1) % 3, (i + 2) % 3), (ip, (ip + 1) % 3, (ip + 2) % 3)
        )
    return PatchPairClass(DISJOINT)


def patch_geometry(mesh, k):
    """Centroid, diameter (longest edge) and area of patch ``k``."""
    return mesh.centroids[k].copy(), float(mesh.diameters[k]), float(mesh.areas[k])


def _orient_outward(vertices, triangles):
    c = vertices[triangles]
    nrm = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    flip = np.einsum("ij,ij->i", nrm, c.mean(axis=1)) < 0
    triangles = triangles.copy()
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return triangles


def cube_sphere_base():
    """The 48-triangle base mesh: cube faces in 2x2 quads, each cut through the face center."""
    index = {}
    verts = []

    def vid(p):
        key = tuple(int(x) for x in p)
        if key not in index:
            index[key] = len(verts)
            verts.append(key)
        return index[key]

    tris = []
    for axis in range(3):
        u_ax, v_ax = [a for a in range(3) if a != axis]
        for sign in (-1, 1):
            grid = np.empty((3, 3), dtype=np.int64)
            for i in range(3):
                for j in range(3):
                    p = [0, 0, 0]
                    p[axis], p[u_ax], p[v_ax] = sign, i - 1, j - 1
                    grid[i, j] = vid(p)
            for i in range(2):
                for j in range(2):
                    quad = [grid[i, j], grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]]
                    cells = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
                    c = cells.index((1, 1))
                    # split along the diagonal through the face center
                    o = (c + 2) % 4
                    tris.append([quad[c], quad[(c + 1) % 4], quad[o]])
                    tris.append([quad[c], quad[o], quad[(c + 3) % 4]])
    v = np.array(verts, dtype=float)
    v /= np.linalg.norm(v, axis=1)[:, None]
    t = _orient_outward(v, np.array(tris, dtype=np.int64))
    return v, t


def refine(mesh, project=True):
    """Split every patch into four at edge midpoints; optionally project onto the unit sphere."""
    verts = [tuple(v) for v in mesh.vertices]
    mid = {}

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in mid:
            p = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
            if project:
                p = p / np.linalg.norm(p)
            mid[key] = len(verts)
            verts.append(tuple(p))
        return mid[key]

    tris = []
    for a, b, c in mesh.triangles:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        tris.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
    return SurfaceMesh(np.array(verts), np.array(tris, dtype=np.int64), mesh.element_order)


def build_sphere_mesh(refinement_level, element_order=0, max_level=MAX_SPHERE_LEVEL):
    """Unit sphere with 48 * 4**refinement_level flat triangular patches."""
    if refinement_level < 0:
        raise ValueError("refinement level must be nonnegative")
    if refinement_level > max_level:
        raise MemoryError(f"sphere level {refinement_level} exceeds the guard {max_level}")
    v, t = cube_sphere_base()
    mesh = SurfaceMesh(v, t, element_order)
    for _ in range(refinement_level):
        mesh = refine(mesh)
    return mesh


def write_off(mesh, path):
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_patches} 0\n")
        for v in mesh.vertices:
            fh.write(" ".join(repr(float(x)) for x in v) + "\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def read_off(path, element_order=0):
    with open(path) as fh:
        tokens = [ln.split("#")[0].strip() for ln in fh]
    lines = [ln for ln in tokens if ln]
    if not lines or lines[0] != "OFF":
        raise ValueError("not an OFF file")
    nv, nf = (int(x) for x in lines[1].split()[:2])
    v = np.array([[float(x) for x in ln.split()[:3]] for ln in lines[2 : 2 + nv]])
    f = []
    for ln in lines[2 + nv : 2 + nv + nf]:
        parts = [int(x) for x in ln.split()]
        if parts[0] != 3:
            raise ValueError("only triangular faces are supported")
        f.append(parts[1:4])
    return SurfaceMesh(v, np.array(f, dtype=np.int64), element_order)
