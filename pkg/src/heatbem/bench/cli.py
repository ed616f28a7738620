"""Command line interface for the sphere benchmark."""
import argparse
import json
import sys

from .config import TABLES, RunConfig, load_config
from .run import run_benchmark, write_outputs


def build_parser():
    ap = argparse.ArgumentParser(
        prog="heatbem-bench",
        description="Space-time boundary element benchmark on the unit sphere (manufactured solution).",
    )
    ap.add_argument("--config", help="key=value file with run parameters")
    ap.add_argument("--table", type=int, choices=sorted(TABLES), help="run rows of a parameter table")
    ap.add_argument("--rows", default=None, help="comma separated 1-based table rows (default: 1,2,3)")
    ap.add_argument("--epsilon", type=float)
    ap.add_argument("--levels-spatial", type=int, dest="levels_spatial")
    ap.add_argument("--levels-temporal", type=int, dest="levels_temporal")
    ap.add_argument("--eta0", type=float)
    ap.add_argument("--quad-order", type=int, dest="quad_order")
    ap.add_argument("--cheb-order", type=int, dest="cheb_order")
    ap.add_argument("--element-order", type=int, choices=(0, 1), dest="element_order")
    ap.add_argument("--mesh-level", type=int, dest="mesh_level")
    ap.add_argument("--nt", type=int)
    ap.add_argument("--leaf-nt", type=int, dest="leaf_nt")
    ap.add_argument("--temporal-degree", type=int, dest="temporal_degree")
    ap.add_argument("--out", default=None)
    ap.add_argument("--oracle", action="store_true", default=None, help="force the dense reference right-hand side")
    ap.add_argument("--no-near-aca", action="store_false", dest="near_aca", default=None)
    ap.add_argument("--absolute", action="store_true", default=None, help="absolute ACA tolerances")
    ap.add_argument("--stats-only", action="store_true", default=None, dest="stats_only",
                    help="assemble for entry statistics only, without storing blocks or solving")
    ap.add_argument("--seed", type=int)
    return ap


FIELDS = (
    "epsilon", "levels_spatial", "levels_temporal", "eta0", "quad_order", "cheb_order",
    "element_order", "mesh_level", "nt", "leaf_nt", "temporal_degree", "out", "oracle",
    "near_aca", "absolute", "stats_only", "seed",
)


def configs_from_args(args):
    overrides = {k: getattr(args, k) for k in FIELDS if getattr(args, k) is not None}
    if args.table is not None:
        rows = [int(r) for r in (args.rows or "1,2,3").split(",")]
        table = TABLES[args.table]
        if any(r < 1 or r > len(table) for r in rows):
            raise SystemExit(f"table {args.table} has rows 1..{len(table)}")
        base = [table[r - 1] for r in rows]
    elif args.config:
        base = [load_config(args.config)]
    else:
        base = [RunConfig()]
    if "levels_temporal" in overrides or "leaf_nt" in overrides:
        overrides.setdefault("nt", None)
    return [c.with_(**overrides) for c in base]


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        configs = configs_from_args(args)
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    reports = []
    for cfg in configs:
        rep = run_benchmark(cfg)
        reports.append(rep)
        line = {
            "N_s": rep.get("N_s"), "N_t": rep.get("N_t"), "status": rep.get("status"),
            "setup_s": rep.get("setup_seconds"), "solve_s": rep.get("solve_seconds"),
            "l2_error": rep.get("l2_error"), "ratios": rep.get("ratios"),
        }
        print(json.dumps(line))
        if rep.get("status") == "failed":
            print(rep.get("error"), file=sys.stderr)
    write_outputs(reports, configs[0].out)
    return 0 if all(r.get("status") != "failed" for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
