"""Run configurations: the sphere parameter tables and key=value config files."""
import ast
from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class RunConfig:
    """Parameters of one benchmark run on the unit sphere."""

    epsilon: float = 2e-2
    levels_spatial: int = 2
    levels_temporal: int = 3
    eta0: float = 0.40
    quad_order: int = 2
    cheb_order: int = 4
    element_order: int = 0
    mesh_level: int = 0
    nt: int = None
    leaf_nt: int = 5
    T: float = 1.0
    temporal_degree: int = 0
    out: str = "bench_out"
    oracle: bool = False
    near_aca: bool = True
    absolute: bool = False
    stats_only: bool = False
    dense_guard: float = 6e7
    seed: int = 0

    def __post_init__(self):
        expected = 2**self.levels_temporal * self.leaf_nt
        if self.nt is None:
            object.__setattr__(self, "nt", expected)
        elif self.nt != expected:
            raise ValueError(f"nt must equal 2**levels_temporal * leaf_nt = {expected}")
        if self.element_order not in (0, 1):
            raise ValueError("element_order must be 0 or 1")
        if not 0 < self.eta0 < 1:
            raise ValueError("eta0 must lie in (0, 1)")
        if self.epsilon <= 0 or self.cheb_order < 1 or self.quad_order < 1:
            raise ValueError("epsilon, cheb_order and quad_order must be positive")

    @property
    def n_patches(self):
        return 48 * 4**self.mesh_level

    def as_dict(self):
        return asdict(self)

    def with_(self, **kw):
        return replace(self, **kw)


def _row(eps, ls, L, eta, pq, p, level, nt, a):
    return RunConfig(
        epsilon=eps, levels_spatial=ls, levels_temporal=L, eta0=eta, quad_order=pq,
        cheb_order=p, element_order=a, mesh_level=level, nt=nt,
    )


# piecewise constant elements: N_s = 48, 192, 768, 3072, 12288
TABLE1 = [
    _row(2e-2, 2, 3, 0.40, 2, 4, 0, 40, 0),
    _row(2e-3, 2, 5, 0.39, 2, 4, 1, 160, 0),
    _row(2e-4, 3, 7, 0.36, 2, 4, 2, 640, 0),
    _row(2e-5, 4, 9, 0.33, 2, 4, 3, 2560, 0),
    _row(2e-6, 5, 11, 0.30, 2, 4, 4, 10240, 0),
]

# continuous linear elements: N_v = 26, 98, 386, 1538 (quadrature order 2 or 3)
TABLE2 = [
    _row(4e-3, 2, 3, 0.40, 3, 4, 0, 40, 1),
    _row(1.6e-4, 2, 5, 0.35, 3, 4, 1, 160, 1),
    _row(1e-5, 3, 7, 0.30, 3, 4, 2, 640, 1),
    _row(6.25e-7, 4, 9, 0.25, 3, 5, 3, 2560, 1),
]

TABLES = {1: TABLE1, 2: TABLE2}

_ALIASES = {
    "levels-spatial": "levels_spatial", "ls": "levels_spatial", "l_s": "levels_spatial",
    "levels-temporal": "levels_temporal", "l": "levels_temporal", "L": "levels_temporal",
    "L_s": "levels_spatial", "N_t": "nt",
    "eta": "eta0", "p_q": "quad_order", "pq": "quad_order", "p": "cheb_order",
    "a": "element_order", "n_t": "nt", "n_T": "leaf_nt", "leaf-nt": "leaf_nt",
}


def parse_value(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip("\"'")


def load_config(path, base=None):
    """Read ``key = value`` lines (``#`` comments, optional [section] headers ignored)."""
    names = {f.name for f in fields(RunConfig)}
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise ValueError(f"malformed config line: {raw.strip()!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            key = _ALIASES.get(key, key.replace("-", "_"))
            if key not in names:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = parse_value(val)
    base = base or RunConfig()
    if "nt" not in values and ("levels_temporal" in values or "leaf_nt" in values):
        values["nt"] = None
    return replace(base, **values)
