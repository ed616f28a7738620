import itertools

import numpy as np
import pytest

from heatbem.clustering import (
    build_cluster_tree, neighbor_lists, separation_ratio, sort_mesh_by_tree,
    temporal_to_spatial_level,
)
from heatbem.mesh import SurfaceMesh


def test_single_patch_tree(right_triangle):
    tree = build_cluster_tree(right_triangle, levels=2)
    for lv in tree.levels:
        assert lv.n_clusters == 1
        assert list(lv.patches[0]) == [0]


def test_sphere_tree_depth(sphere0):
    assert build_cluster_tree(sphere0, levels=2).depth == 2


def test_partition_every_level(sphere1):
    tree = build_cluster_tree(sphere1, levels=3)
    for lv in tree.levels:
        allp = np.sort(np.concatenate(lv.patches))
        assert np.array_equal(allp, np.arange(sphere1.n_patches))


def test_nesting(sphere1):
    tree = build_cluster_tree(sphere1, levels=3)
    for l in range(tree.depth):
        fine, coarse = tree[l], tree[l + 1]
        for pl in fine.patches:
            assert len(set(coarse.patch_cluster[pl])) == 1


def test_leaf_size_refinement(sphere1):
    tree = build_cluster_tree(sphere1, max_patches_per_leaf=8)
    assert max(len(p) for p in tree[0].patches) <= 8


def test_degenerate_inputs():
    with pytest.raises(ValueError):
        build_cluster_tree(SurfaceMesh(np.eye(3), np.array([[0, 1, 2]])))


def test_separation_ratio():
    assert separation_ratio(1.0, [0, 0, 0], 1.0, [4, 0, 0]) == pytest.approx(0.5)
    assert separation_ratio(1.0, [0, 0, 0], 1.0, [0, 0, 0]) == np.inf
    a, b = np.array([0.3, 1, 2]), np.array([-1, 0.5, 0])
    assert separation_ratio(0.2, a, 0.7, b) == separation_ratio(0.7, b, 0.2, a)


def test_self_separation_infinite(sphere0):
    tree = build_cluster_tree(sphere0, levels=2)
    assert tree[0].separation(3, 3) == np.inf


def test_neighbor_lists_brute_force(sphere1):
    tree = build_cluster_tree(sphere1, levels=3)
    for level in range(3):
        lists, gamma = neighbor_lists(tree, level, 0.4)
        lv = tree[level]
        for c in range(lv.n_clusters):
            ref = [cp for cp in range(lv.n_clusters) if lv.separation(c, cp) > 0.4]
            assert list(lists[c]) == ref
        assert gamma == max(len(v) for v in lists.values())


def test_neighbor_lists_eta_near_one():
    # two far apart triangles: only self pairs remain
    v = np.array([[0, 0, 0], [0.1, 0, 0], [0, 0.1, 0], [5, 5, 5], [5.1, 5, 5], [5, 5.1, 5]], float)
    mesh = SurfaceMesh(v, np.array([[0, 1, 2], [3, 4, 5]]))
    tree = build_cluster_tree(mesh, levels=1)
    lists, gamma = neighbor_lists(tree, 0, 0.999)
    assert all(list(lists[c]) == [c] for c in lists)
    assert gamma == 1


def test_gamma_recorded(sphere0):
    tree = build_cluster_tree(sphere0, levels=2)
    lists, gamma = neighbor_lists(tree, 0, 0.40)
    assert gamma >= 1
    assert 0.40 in tree[0].neighbors
    with pytest.raises(ValueError):
        neighbor_lists(tree, 0, 1.0)


@pytest.mark.parametrize("l,depth,out", [(0, 2, 0), (5, 4, 2), (11, 5, 5), (3, 1, 1)])
def test_temporal_to_spatial(l, depth, out):
    assert temporal_to_spatial_level(l, depth) == out


def test_sorted_mesh_contiguous(sphere1):
    smesh, tree, perm = sort_mesh_by_tree(sphere1, 3)
    assert np.array_equal(smesh.triangles, sphere1.triangles[perm])
    for lv in tree.levels:
        r = lv.ranges()
        r = r[np.argsort(r[:, 0])]
        assert r[0, 0] == 0 and r[-1, 1] == sphere1.n_patches
        assert np.all(r[1:, 0] == r[:-1, 1])
