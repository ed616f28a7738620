"""Sphere benchmark with a manufactured solution."""
from .config import TABLE1, TABLE2, RunConfig, load_config
from .problem import l2_error, l2_error_function, project, quadratic_solution
from .run import run_benchmark, write_outputs

__all__ = [
    "TABLE1", "TABLE2", "RunConfig", "load_config", "l2_error", "l2_error_function",
    "project", "quadratic_solution", "run_benchmark", "write_outputs",
]
