import csv
import json
import math

import numpy as np
import pytest

from heatbem.assembly.dense import assemble_dense_reference
from heatbem.assembly.operator import assemble_operator
from heatbem.bench.cli import build_parser, configs_from_args, main
from heatbem.bench.config import TABLE1, TABLE2, RunConfig, load_config
from heatbem.bench.problem import (
    constant_solution, l2_error, l2_error_function, l2_norm_coefficients, project,
    quadratic_solution,
)
from heatbem.bench.run import reference_rhs, run_benchmark, write_outputs
from heatbem.clustering import sort_mesh_by_tree
from heatbem.mesh import build_sphere_mesh
from heatbem.solver import hierarchical_solve
from heatbem.temporal import TemporalGrid


# configuration

def test_table_rows():
    r = TABLE1[0]
    assert (r.epsilon, r.levels_spatial, r.levels_temporal, r.eta0, r.quad_order, r.cheb_order) == \
        (2e-2, 2, 3, 0.40, 2, 4)
    assert (r.n_patches, r.nt) == (48, 40)
    assert [c.n_patches for c in TABLE1] == [48, 192, 768, 3072, 12288]
    assert [c.nt for c in TABLE1] == [40, 160, 640, 2560, 10240]
    assert [c.nt for c in TABLE2] == [40, 160, 640, 2560]
    assert all(c.element_order == 1 and c.quad_order == 3 for c in TABLE2)
    assert TABLE2[3].cheb_order == 5


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(nt=41)
    with pytest.raises(ValueError):
        RunConfig(element_order=2)
    with pytest.raises(ValueError):
        RunConfig(eta0=1.5)


def test_load_config(tmp_path):
    path = tmp_path / "row.cfg"
    path.write_text("# Table 1 row 2\n[run]\nepsilon = 2e-3\nL = 5\nls = 2\neta = 0.39\nmesh_level = 1\nabsolute = true\n")
    cfg = load_config(path)
    assert cfg.epsilon == 2e-3 and cfg.levels_temporal == 5 and cfg.nt == 160
    assert cfg.eta0 == 0.39 and cfg.absolute is True
    path.write_text("bogus = 1\n")
    with pytest.raises(ValueError):
        load_config(path)
    path.write_text("epsilon 1\n")
    with pytest.raises(ValueError):
        load_config(path)


def test_cli_parsing():
    args = build_parser().parse_args(["--table", "1", "--rows", "2", "--epsilon", "1e-3", "--no-near-aca"])
    (cfg,) = configs_from_args(args)
    assert cfg.epsilon == 1e-3 and cfg.n_patches == 192 and cfg.near_aca is False
    args = build_parser().parse_args(["--levels-temporal", "2", "--leaf-nt", "4"])
    (cfg,) = configs_from_args(args)
    assert cfg.nt == 16


# manufactured problem and norms

@pytest.fixture(scope="module")
def small():
    mesh = build_sphere_mesh(0)
    grid = TemporalGrid.from_levels(1.0, 1, 4)
    return mesh, grid


def test_l2_error_zero_and_scaling(small):
    mesh, grid = small
    q = project(quadratic_solution(), mesh, grid)
    assert l2_error(q, q, mesh, grid) == 0.0
    d = np.random.default_rng(0).standard_normal(q.shape)
    assert l2_error(q + 2 * d, q, mesh, grid) == pytest.approx(2 * l2_error(q + d, q, mesh, grid))


def test_l2_error_all_ones(small):
    mesh, grid = small
    err = l2_error(np.ones((grid.n_steps, 48)), np.zeros((grid.n_steps, 48)), mesh, grid)
    assert err == pytest.approx(math.sqrt(mesh.total_area * grid.T), rel=1e-13)


def test_projection_of_constant_is_exact(small):
    mesh, grid = small
    for a in (0, 1):
        m = mesh.with_order(a)
        q = project(constant_solution(2.5), m, grid)
        assert np.allclose(q, 2.5)
        assert l2_error_function(q, constant_solution(2.5), m, grid) < 1e-12


def test_projection_is_best_approximation(small):
    mesh, grid = small
    f = quadratic_solution()
    q = project(f, mesh, grid)
    e0 = l2_error_function(q, f, mesh, grid)
    d = np.random.default_rng(1).standard_normal(q.shape) * 1e-2
    assert l2_error_function(q + d, f, mesh, grid) > e0


def test_linear_projection_continuous(small):
    from heatbem.assembly.extension import build_extension

    mesh = small[0].with_order(1)
    grid = small[1]
    q = project(quadratic_solution(), mesh, grid)
    ext = build_extension(mesh)
    # equal values on every copy of a vertex
    vals = ext.restrict(q) / ext.D_v
    assert np.allclose(ext.extend(vals), q)


def test_l2_norm_time_linear():
    mesh = build_sphere_mesh(0)
    grid = TemporalGrid.from_levels(1.0, 1, 2, p_t=1)
    q = project(constant_solution(1.0), mesh, grid)
    assert l2_norm_coefficients(q, mesh, grid) == pytest.approx(math.sqrt(mesh.total_area), rel=1e-12)


@pytest.fixture(scope="module")
def tiny_op(small):
    mesh, grid = small
    return assemble_operator(mesh, grid, 4, 1e-10, 0.01, 2, compress_near=False, drop=False)


def test_rhs_constant_density_row_sums(tiny_op):
    grid = tiny_op.grid
    cfg = RunConfig(levels_temporal=1, leaf_nt=4, oracle=True)
    ones = np.ones((grid.n_steps, 48))
    p, kind = reference_rhs(cfg, tiny_op.mesh, tiny_op.grid, ones)
    V = assemble_dense_reference(tiny_op.mesh, grid).to_dense()
    assert kind == "dense"
    assert np.allclose(p.ravel(), V.sum(axis=1))


def test_rhs_causality(tiny_op):
    grid = tiny_op.grid
    cfg = RunConfig(levels_temporal=1, leaf_nt=4, oracle=True)
    q = project(quadratic_solution(), tiny_op.mesh, grid)
    p, _ = reference_rhs(cfg, tiny_op.mesh, tiny_op.grid, q)
    q2 = q.copy()
    q2[1:] = 0.0
    p2, _ = reference_rhs(cfg, tiny_op.mesh, tiny_op.grid, q2)
    assert np.array_equal(p[0], p2[0])


def test_recover_projection(tiny_op):
    grid = tiny_op.grid
    cfg = RunConfig(levels_temporal=1, leaf_nt=4, oracle=True)
    q_star = project(quadratic_solution(), tiny_op.mesh, grid)
    p, _ = reference_rhs(cfg, tiny_op.mesh, tiny_op.grid, q_star)
    q, _ = hierarchical_solve(tiny_op, p, tol=1e-13)
    assert np.linalg.norm(q - q_star) <= 1e-6 * np.linalg.norm(q_star)


# pipeline

def test_run_small_config_end_to_end(tmp_path):
    cfg = RunConfig(levels_temporal=2, leaf_nt=2, out=str(tmp_path))
    rep = run_benchmark(cfg)
    assert rep["status"] == "ok"
    assert rep["rhs_operator"] == "dense"
    assert 0 < rep["l2_error"] < 1.0
    assert rep["l2_error"] >= rep["l2_error_projection"] * 0.0
    write_outputs([rep], str(tmp_path))
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["N_s"] == 48
    for name in ("setup", "solve", "error", "far_entries", "near_entries"):
        rows = list(csv.reader(open(tmp_path / "plots" / f"{name}.csv")))
        assert rows[0] == ["NsNt", "value"]
        assert rows[1][0] == str(48 * 8)


def test_run_stats_only():
    rep = run_benchmark(RunConfig(stats_only=True))
    assert rep["status"] == "stats_only"
    assert 0 < rep["ratios"]["far"] <= 1.0
    assert "l2_error" not in rep


def test_partial_report_on_failure():
    rep = run_benchmark(RunConfig(mesh_level=9))
    assert rep["status"] == "failed"
    assert rep["failed_stage"] == "setup"
    assert "MemoryError" in rep["error"]


def test_cli_main(tmp_path, capsys):
    rc = main(["--levels-temporal", "2", "--leaf-nt", "2", "--element-order", "1", "--quad-order", "3",
               "--out", str(tmp_path)])
    assert rc == 0
    line = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert line["status"] == "ok" and line["N_s"] == 48
    assert (tmp_path / "plots" / "error.csv").exists()


def test_cli_invalid(capsys):
    assert main(["--nt", "7"]) == 2


def test_rhs_compressed_reference_matches_dense():
    mesh = build_sphere_mesh(0)
    grid = TemporalGrid.from_levels(1.0, 3, 2)
    cfg = RunConfig(levels_temporal=3, leaf_nt=2, epsilon=1e-6, eta0=0.01, dense_guard=1.0)
    smesh = sort_mesh_by_tree(mesh, cfg.levels_spatial)[0]
    q = project(quadratic_solution(), smesh, grid)
    p, kind = reference_rhs(cfg, smesh, grid, q)
    V = assemble_dense_reference(smesh, grid)
    assert kind == "compressed"
    # bounded by the Chebyshev interpolation error at p = 4
    assert np.linalg.norm(p - V.matvec(q)) <= 1e-3 * np.linalg.norm(p)
