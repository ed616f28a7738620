"""Time marching solvers: flat block forward elimination, the hierarchical algorithm and CG."""
from dataclasses import dataclass, field
import time

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import LinearOperator, cg, gmres

from .assembly.dense import ToeplitzOperator
from .temporal import binary_digits


class ConvergenceError(RuntimeError):
    """Raised when an iterative diagonal solve misses its tolerance."""

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = residuals


@dataclass
class SpaceTimeVector:
    """Coefficients q[i, j, g] for step i, temporal shape j and spatial dof g.

    Block views at every tree level alias the same storage, so writes through a
    leaf view are visible in all ancestor views.
    """

    data: np.ndarray
    leaf_steps: int

    @classmethod
    def zeros(cls, n_steps, step_size, leaf_steps):
        return cls(np.zeros((n_steps, step_size)), leaf_steps)

    @property
    def n_steps(self):
        return self.data.shape[0]

    def view(self, level, n):
        """Rows of block ``n`` at tree level ``level``; None for n < 0."""
        if n < 0:
            return None
        m = self.leaf_steps * 2**level
        if (n + 1) * m > self.n_steps:
            raise IndexError("block outside the time grid")
        return self.data[n * m : (n + 1) * m]


def cg_solve(apply, b, tol=1e-10, max_iter=1000, x0=None):
    """Unpreconditioned CG for an SPD operator; returns (x, iterations).

    ``apply`` is a callable or a matrix.  Stops at ||A x - b|| <= tol ||b||.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if np.linalg.norm(b) == 0.0:
        return np.zeros(n), 0
    A = LinearOperator((n, n), matvec=apply if callable(apply) else (lambda v: apply @ v))
    count = [0]

    def callback(xk):
        count[0] += 1

    x, info = cg(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=max_iter, callback=callback)
    res = float(np.linalg.norm(b - A @ x) / np.linalg.norm(b))
    if info != 0 or res > 10.0 * tol:
        raise ConvergenceError(
            f"CG stopped after {count[0]} iterations with relative residual {res:.3e} (tol {tol:.1e})",
            [res],
        )
    return x, count[0]


def gmres_solve(apply, b, tol=1e-10, max_iter=1000):
    """GMRES for nonsymmetric diagonal blocks (temporal degree >= 1)."""
    b = np.asarray(b, dtype=float)
    n = b.size
    if np.linalg.norm(b) == 0.0:
        return np.zeros(n), 0
    A = LinearOperator((n, n), matvec=apply if callable(apply) else (lambda v: apply @ v))
    count = [0]

    def callback(r):
        count[0] += 1

    x, info = gmres(A, b, rtol=tol, atol=0.0, restart=min(n, 200), maxiter=max_iter,
                    callback=callback, callback_type="pr_norm")
    res = float(np.linalg.norm(b - A @ x) / np.linalg.norm(b))
    if info != 0 or res > 10.0 * tol:
        raise ConvergenceError(f"GMRES relative residual {res:.3e} (tol {tol:.1e})", [res])
    return x, count[0]


def _diag_solver(symmetric):
    return cg_solve if symmetric else gmres_solve


def flat_forward_elimination(V, p, block_size=None, tol=1e-12, max_iter=2000, symmetric=True):
    """Solve the block lower triangular system step by step.

    ``V`` is a ToeplitzOperator or a dense matrix of N_t x N_t blocks; ``p`` has
    shape (N_t, n).  Returns (q, iteration counts per step).
    """
    solve = _diag_solver(symmetric)
    if isinstance(V, ToeplitzOperator):
        nt, n = V.n_steps, V.block_size
        p = np.asarray(p, dtype=float).reshape(nt, n)
        q = np.zeros_like(p)
        its = []
        for i in range(nt):
            b = p[i].copy()
            for d in range(1, i + 1):
                b -= V.blocks[d] @ q[i - d]
            q[i], it = solve(V.blocks[0], b, tol, max_iter)
            its.append(it)
        return q, its
    V = np.asarray(V, dtype=float)
    n = block_size if block_size is not None else np.asarray(p).shape[-1]
    nt = V.shape[0] // n
    p = np.asarray(p, dtype=float).reshape(nt, n)
    q = np.zeros_like(p)
    its = []
    for i in range(nt):
        rows = slice(i * n, (i + 1) * n)
        b = p[i] - V[rows, : i * n] @ q[:i].ravel()
        q[i], it = solve(V[rows, i * n : (i + 1) * n], b, tol, max_iter)
        its.append(it)
    return q, its


def _near_pairs(n_steps, leaf_steps, d):
    """Steps i with (i, i - d) in the temporal near field (same or adjacent leaf)."""
    i = np.arange(d, n_steps)
    keep = (i // leaf_steps) - ((i - d) // leaf_steps) <= 1
    return i[keep]


def apply_operator(op, q, stream=False):
    """Full product of the hierarchical operator with q of shape (N_t, D_t N_s D_s).

    With ``stream`` each far-field matrix is assembled, applied and released in turn,
    so only one of them is held at a time.
    """
    grid = op.grid
    q = np.asarray(q, dtype=float).reshape(grid.n_steps, op.step_size)
    p = np.zeros_like(q)
    nT = grid.leaf_steps
    for d in range(min(2 * nT, grid.n_steps)):
        rows = _near_pairs(grid.n_steps, nT, d)
        if rows.size:
            p[rows] += op.near_apply(d, q[rows - d].T).T
    P = SpaceTimeVector(p, nT)
    Q = SpaceTimeVector(q, nT)
    for lv in op.far_levels:
        for d in (2, 3):
            if stream:
                op.far[(lv, d)] = op.build_far(lv, d)[0]
            for n in range(d, grid.n_leaves >> lv):
                # offset 3 only couples odd blocks to their parent's left neighbour
                if d == 2 or n % 2 == 1:
                    P.view(lv, n)[:] += op.far_block_matvec(lv, d, Q.view(lv, n - d))
            if stream:
                del op.far[(lv, d)]
    return p


@dataclass
class SolveReport:
    iterations: list = field(default_factory=list)
    times: dict = field(default_factory=lambda: {"near": 0.0, "far": 0.0, "diagonal": 0.0})
    warnings: list = field(default_factory=list)

    def as_dict(self):
        its = np.asarray(self.iterations) if self.iterations else np.zeros(1)
        return {
            "iterations": list(map(int, self.iterations)),
            "iterations_mean": float(its.mean()),
            "iterations_max": int(its.max()),
            "times": dict(self.times),
            "warnings": list(self.warnings),
        }


class _Diagonal:
    """Solver for A_0 (discontinuous) or E^T A_0 E (continuous) per time step."""

    def __init__(self, op, tol, max_iter, ext=None):
        self.op = op
        self.tol = tol
        self.max_iter = max_iter
        self.E = None
        if ext is not None:
            E = ext.E
            dt = op.grid.shapes_per_step
            self.E = E if dt == 1 else sps.kron(sps.identity(dt), E).tocsr()
        self.solve = _diag_solver(op.grid.shapes_per_step == 1)

    def __call__(self, b):
        A0 = self.op.near[0]
        if self.E is None:
            return self.solve(A0.matvec, b, self.tol, self.max_iter)
        E = self.E
        x, it = self.solve(lambda v: E.T @ A0.matvec(E @ v), E.T @ b, self.tol, self.max_iter)
        return E @ x, it


def default_cg_tol(op):
    return max(1e-2 * op.schedule.near, 1e-12)


def hierarchical_solve(op, p, tol=None, max_iter=2000, continuous=False):
    """Hierarchical block forward elimination.

    ``p`` has shape (N_t, D_t N_s D_s).  With ``continuous`` the diagonal solves act on
    E^T A_0 E and the returned coefficients are the extended ones E q.  Returns
    (q, SolveReport).
    """
    grid = op.grid
    nT = grid.leaf_steps
    tol = default_cg_tol(op) if tol is None else tol
    ext = op.extension if continuous else None
    if continuous and ext is None:
        raise ValueError("continuous solve needs linear elements")
    diag = _Diagonal(op, tol, max_iter, ext)
    rhs = SpaceTimeVector(np.array(p, dtype=float).reshape(grid.n_steps, op.step_size), nT)
    sol = SpaceTimeVector.zeros(grid.n_steps, op.step_size, nT)
    report = SolveReport()
    if op.stats.get("uncertified"):
        report.warnings.append(f"{op.stats['uncertified']} far-field blocks fell back to dense storage")
    for n0 in range(grid.n_leaves):
        t0 = time.perf_counter()
        if n0 >= 1:
            prev = sol.view(0, n0 - 1)
            cur = rhs.view(0, n0)
            for d in range(1, 2 * nT):
                a = np.arange(max(0, d - nT), min(nT, d))
                if a.size:
                    b = a + nT - d
                    cur[a] -= op.near_apply(d, prev[b].T).T
        t1 = time.perf_counter()
        _, S, anc = binary_digits(n0)
        for lv in range(S + 1):
            if lv not in op.moments:
                break
            n = anc[lv]
            if n - 2 >= 0:
                rhs.view(lv, n)[:] -= op.far_block_matvec(lv, 2, sol.view(lv, n - 2))
        if S >= 0 and S in op.moments and anc[S] - 3 >= 0:
            rhs.view(S, anc[S])[:] -= op.far_block_matvec(S, 3, sol.view(S, anc[S] - 3))
        t2 = time.perf_counter()
        cur = rhs.view(0, n0)
        out = sol.view(0, n0)
        for a in range(nT):
            b = cur[a].copy()
            for c in range(a):
                b -= op.near_apply(a - c, out[c])
            out[a], it = diag(b)
            report.iterations.append(it)
        t3 = time.perf_counter()
        report.times["near"] += (t1 - t0)
        report.times["far"] += (t2 - t1)
        report.times["diagonal"] += (t3 - t2)
    return sol.data, report


def continuous_solve(op, p_cont, tol=None, max_iter=2000):
    """Solve with continuous-in-space linear elements.

    ``p_cont`` has shape (N_t, D_t N_v) (tested against vertex hat functions).  The
    right-hand side is lifted by E D_v^{-1} and the discontinuous machinery is reused.
    Returns (q_cont, q_disc, report).
    """
    ext = op.extension
    if ext is None:
        raise ValueError("continuous solve needs linear elements")
    dt = op.grid.shapes_per_step
    nv = ext.E.shape[1]
    P = np.asarray(p_cont, dtype=float).reshape(op.grid.n_steps, dt, nv)
    lifted = np.stack([ext.extend(P[:, j] / ext.D_v) for j in range(dt)], axis=1)
    q_disc, report = hierarchical_solve(
        op, lifted.reshape(op.grid.n_steps, -1), tol, max_iter, continuous=True
    )
    Qd = q_disc.reshape(op.grid.n_steps, dt, -1)
    q_cont = np.stack([ext.restrict(Qd[:, j]) / ext.D_v for j in range(dt)], axis=1)
    return q_cont.reshape(op.grid.n_steps, -1), q_disc, report
