"""End-to-end benchmark: assemble, build the manufactured right-hand side, solve, measure."""
import csv
import json
import os
import time
import traceback

import numpy as np

from ..assembly.dense import assemble_dense_reference
from ..assembly.operator import _jsonable, assemble_operator
from ..clustering import sort_mesh_by_tree
from ..mesh import build_sphere_mesh
from ..solver import apply_operator, continuous_solve, hierarchical_solve
from ..temporal import TemporalGrid
from .problem import l2_error, l2_error_function, l2_norm_coefficients, project, quadratic_solution

# the right-hand side operator is compressed this much tighter than the solve operator
REFERENCE_FACTOR = 1e-3

PLOT_KEYS = {
    "setup": ("setup_seconds",),
    "solve": ("solve_seconds",),
    "error": ("l2_error",),
    "far_entries": ("entries", "far_stored"),
    "near_entries": ("entries", "near_stored"),
}


def _setup(config):
    mesh = build_sphere_mesh(config.mesh_level, element_order=config.element_order)
    grid = TemporalGrid.from_levels(config.T, config.levels_temporal, config.leaf_nt, config.temporal_degree)
    return mesh, grid


def _assemble(config, mesh, grid, epsilon, keep=True, far=True):
    return assemble_operator(
        mesh, grid, config.cheb_order, epsilon, config.eta0, config.levels_spatial,
        quad_order=config.quad_order, compress_near=config.near_aca,
        relative=not config.absolute, keep=keep, far=far,
    )


def reference_rhs(config, mesh, grid, q_star):
    """Right-hand side V_ref q* on the tree-sorted ``mesh``.

    V_ref is the dense reference when it fits, else the operator compressed at
    REFERENCE_FACTOR * epsilon, whose far field is streamed one matrix at a time.
    """
    size = grid.n_steps * (grid.shapes_per_step * mesh.n_local_dofs) ** 2
    if config.oracle or size <= config.dense_guard:
        ref = assemble_dense_reference(mesh, grid, config.quad_order, max_entries=max(size, config.dense_guard))
        return ref.matvec(q_star), "dense"
    ref_op = _assemble(config, mesh, grid, REFERENCE_FACTOR * config.epsilon, far=False)
    if not np.array_equal(ref_op.mesh.triangles, mesh.triangles):
        raise RuntimeError("reference operator uses a different patch order")
    return apply_operator(ref_op, q_star, stream=True), "compressed"


def run_benchmark(config):
    """Full pipeline for one configuration; returns the report dictionary.

    Any stage failure yields a partial report with ``failed_stage`` and the error.
    """
    report = {"config": config.as_dict(), "N_s": None, "N_t": config.nt}
    stage = "setup"
    try:
        mesh, grid = _setup(config)
        report["N_s"] = mesh.n_patches
        report["N_v"] = mesh.n_vertices
        report["h_s"] = mesh.h_s
        report["h_t"] = grid.h_t
        report["NsNt"] = mesh.n_patches * grid.n_steps
        if not config.stats_only:
            # the reference right-hand side comes first so its operator is released
            # before the solve operator is assembled
            stage = "rhs"
            smesh = sort_mesh_by_tree(mesh, config.levels_spatial)[0]
            func = quadratic_solution()
            t0 = time.perf_counter()
            q_star = project(func, smesh, grid)
            p, kind = reference_rhs(config, smesh, grid, q_star)
            report["rhs_seconds"] = time.perf_counter() - t0
            report["rhs_operator"] = kind
        stage = "assembly"
        t0 = time.perf_counter()
        op = _assemble(config, mesh, grid, config.epsilon, keep=not config.stats_only)
        report["setup_seconds"] = time.perf_counter() - t0
        report["operator"] = op.stats
        report["entries"] = op.stats["entries"]
        report["ratios"] = {
            "far": op.stats["entries"]["far_stored"] / max(op.stats["entries"]["far_dense"], 1),
            "near": op.stats["entries"]["near_stored"] / max(op.stats["entries"]["near_dense"], 1),
        }
        report["far_memory_entries"] = int(sum(s["memory"] for s in op.stats["far"].values()))
        report["uncertified_blocks"] = op.stats["uncertified"]
        if config.stats_only:
            report["status"] = "stats_only"
            return report
        if not np.array_equal(op.mesh.triangles, smesh.triangles):
            raise RuntimeError("solve operator uses a different patch order")
        stage = "solve"
        t0 = time.perf_counter()
        if config.element_order == 1:
            dt = grid.shapes_per_step
            P = p.reshape(grid.n_steps, dt, -1)
            p_cont = np.stack([op.extension.restrict(P[:, j]) for j in range(dt)], axis=1)
            _, q, solve_report = continuous_solve(op, p_cont.reshape(grid.n_steps, -1))
        else:
            q, solve_report = hierarchical_solve(op, p)
        report["solve_seconds"] = time.perf_counter() - t0
        report["cg"] = solve_report.as_dict()
        stage = "error"
        report["l2_error"] = l2_error_function(q, func, op.mesh, grid)
        report["l2_error_projection"] = l2_error(q, q_star, op.mesh, grid)
        report["l2_norm_solution"] = l2_norm_coefficients(q_star, op.mesh, grid)
        report["status"] = "ok"
    except Exception as exc:  # partial report with failure marker
        report["status"] = "failed"
        report["failed_stage"] = stage
        report["error"] = f"{type(exc).__name__}: {exc}"
        report["traceback"] = traceback.format_exc()
    return report


def _lookup(report, keys):
    v = report
    for k in keys:
        if not isinstance(v, dict) or k not in v:
            return None
        v = v[k]
    return v


def write_outputs(reports, out_dir):
    """report.json plus plots/<name>.csv with columns NsNt, value."""
    os.makedirs(os.path.join(out_dir, "plots"), exist_ok=True)
    single = len(reports) == 1
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(_jsonable(reports[0] if single else reports), fh, indent=2)
    for name, keys in PLOT_KEYS.items():
        with open(os.path.join(out_dir, "plots", f"{name}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["NsNt", "value"])
            for r in reports:
                v = _lookup(r, keys)
                if v is not None and r.get("NsNt") is not None:
                    w.writerow([r["NsNt"], v])
