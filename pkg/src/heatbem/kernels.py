"""Heat kernel evaluation and closed-form time-integrated near-field kernels.

The time-integrated kernel for the temporal offset ``d`` is

    G_{d,j,j'}(r) = int_{I_d} int_{I_0} G(r, t - tau) chi_j(t) chi_j'(tau) dtau dt

with ``I_d = [d h, (d+1) h]``.  Substituting ``t - tau = h (d + u)`` turns it into
``h^2 int_{-1}^{1} W(u) G(r, h(d+u)) du`` where ``W`` is the piecewise polynomial
convolution of the two local shape functions.  Repeated integration by parts then
leaves only the iterated time antiderivatives of ``G`` at the three breakpoints:

    F_n(s) = (4 s)^(n-1) i^(2n-2) erfc(r / (2 sqrt(s))) / (4 pi r).

Two evaluation regimes keep this stable.  For small ``r`` (relative to the time
scale) the series of ``i^m erfc`` is split into its even part, a polynomial in
``r`` whose coefficients are combined per offset exactly, and its odd part.  For
large ``r`` the exponentially scaled ``i^m erfc`` is evaluated by a backward
recurrence (Miller's algorithm) and the breakpoint terms are summed directly.
"""
from functools import lru_cache
import math

import numpy as np
from numba import njit

SQRT_PI = math.sqrt(math.pi)
# exp(-x^2) below the smallest normal double
UNDERFLOW_X2 = 708.0
N_ODD = 40
# r / (2 sqrt(s_max)) below which the series form is used
SMALL_X = 1.0
N_TIME_GAUSS = 24


def heat_kernel(r_sq, t):
    """Fundamental solution of the heat equation in R^3.

    ``(4 pi t)^{-3/2} exp(-r^2 / 4t)`` for ``t > 0`` and zero otherwise.  Accepts
    scalars or broadcastable arrays.
    """
    r_sq = np.asarray(r_sq, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.isnan(r_sq).any() or np.isnan(t).any():
        raise ValueError("heat_kernel: NaN input")
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    val = np.where(pos, (4.0 * np.pi * ts) ** -1.5 * np.exp(-r_sq / (4.0 * ts)), 0.0)
    return val[()] if val.ndim == 0 else val


def kernel_at_cheb_nodes(r_sq, t_beta, tau_beta):
    """Heat kernel sampled at a pair of Chebyshev times with ``t_beta > tau_beta``."""
    dt = np.asarray(t_beta, dtype=float) - np.asarray(tau_beta, dtype=float)
    if np.any(dt <= 0):
        raise ValueError("kernel_at_cheb_nodes: times violate temporal separation")
    return heat_kernel(r_sq, dt)


# ---------------------------------------------------------------------------
# Coefficient tables


def local_shape_nodes(p_t):
    """Local nodes in [0, 1] of the temporal Lagrange basis.

    Ordered so that for ``p_t = 1`` the first function is ``(t - t_{i-1})/h`` and the
    second ``(t_i - t)/h``.
    """
    if p_t == 0:
        return np.array([0.5])
    return 1.0 - np.arange(p_t + 1) / p_t


def _shape_polys(p_t):
    import sympy as sp

    a = sp.Symbol("a")
    if p_t == 0:
        return a, [sp.Integer(1)]
    nodes = [1 - sp.Rational(k, p_t) for k in range(p_t + 1)]
    polys = []
    for j, nj in enumerate(nodes):
        expr = sp.Integer(1)
        for k, nk in enumerate(nodes):
            if k != j:
                expr *= (a - nk) / (nj - nk)
        polys.append(sp.expand(expr))
    return a, polys


@lru_cache(maxsize=None)
def breakpoint_coefficients(p_t):
    """Exact integration-by-parts coefficients ``C[j, j', i, n-1]``.

    ``G_{d,j,j'} = h^2 sum_{i,n} C[j,j',i,n-1] F_n(h (d - 1 + i)) / h^n``.
    """
    import sympy as sp

    a, polys = _shape_polys(p_t)
    u, b = sp.symbols("u b")
    dt = p_t + 1
    nmax = 2 * p_t + 2
    coef = np.zeros((dt, dt, 3, nmax))
    for j in range(dt):
        for jp in range(dt):
            f = polys[j].subs(a, b + u)
            g = polys[jp].subs(a, b)
            w_plus = sp.expand(sp.integrate(f * g, (b, 0, 1 - u)))
            w_minus = sp.expand(sp.integrate(f * g, (b, -u, 1)))
            for k in range(nmax):
                sgn = (-1) ** k
                dm = sp.diff(w_minus, u, k)
                dp = sp.diff(w_plus, u, k)
                coef[j, jp, 0, k] += float(-sgn * dm.subs(u, -1))
                coef[j, jp, 1, k] += float(sgn * dm.subs(u, 0) - sgn * dp.subs(u, 0))
                coef[j, jp, 2, k] += float(sgn * dp.subs(u, 1))
    coef[np.abs(coef) < 1e-15] = 0.0
    return coef


@lru_cache(maxsize=None)
def convolution_weights(p_t):
    """Monomial coefficients ``W[j, j', piece, k]`` of the convolution weight.

    Piece 0 lives on u in [-1, 0], piece 1 on [0, 1].
    """
    import sympy as sp

    a, polys = _shape_polys(p_t)
    u, b = sp.symbols("u b")
    dt = p_t + 1
    deg = 2 * p_t + 1
    out = np.zeros((dt, dt, 2, deg + 1))
    for j in range(dt):
        for jp in range(dt):
            fg = polys[j].subs(a, b + u) * polys[jp].subs(a, b)
            pieces = (sp.integrate(fg, (b, -u, 1)), sp.integrate(fg, (b, 0, 1 - u)))
            for q, w in enumerate(pieces):
                c = sp.Poly(sp.expand(w), u).all_coeffs()[::-1]
                for k, ck in enumerate(c):
                    out[j, jp, q, k] = float(ck)
    return out


def _series_coef(m, k):
    # coefficient of (-x)^k in i^m erfc(x)
    return 1.0 / (2.0 ** (m - k) * math.factorial(k) * math.gamma(1.0 + 0.5 * (m - k)))


@lru_cache(maxsize=None)
def series_tables(nmax):
    """Even and odd power-series coefficients of ``i^(2n-2) erfc`` for n = 1..nmax."""
    even = np.zeros((nmax, nmax))
    odd = np.zeros((nmax, N_ODD))
    for n in range(1, nmax + 1):
        m = 2 * n - 2
        for q in range(n):
            even[n - 1, q] = _series_coef(m, 2 * q)
        for q in range(N_ODD):
            odd[n - 1, q] = _series_coef(m, 2 * q + 1)
    return even, odd


@lru_cache(maxsize=None)
def kernel_tables(p_t):
    """All tables consumed by the compiled kernel routines for temporal degree ``p_t``.

    For ``p_t >= 1`` the integration-by-parts sums cancel badly once the kernel is
    smooth (``d >= 2``); there a Gauss rule in time is used instead.
    """
    coef = breakpoint_coefficients(p_t)
    even, odd = series_tables(coef.shape[-1])
    wts = convolution_weights(p_t)
    x, w = np.polynomial.legendre.leggauss(N_TIME_GAUSS)
    gauss = np.stack([(x + 1.0) / 2.0, w / 2.0])
    d_quad = 2 if p_t >= 1 else 1 << 30
    active = np.any(coef != 0.0, axis=(0, 1, 2))
    return coef, even, odd, wts, gauss, d_quad, active


# ---------------------------------------------------------------------------
# Compiled scalar routines


@njit(cache=True)
def erfcx(x):
    """Scaled complementary error function exp(x^2) erfc(x) for x >= 0."""
    if x < 26.0:
        return math.exp(x * x) * math.erfc(x)
    inv = 1.0 / (2.0 * x * x)
    s = 1.0
    term = 1.0
    for k in range(1, 12):
        term *= -(2 * k - 1) * inv
        s += term
    return s / (x * SQRT_PI)


@njit(cache=True)
def _ierfc_asymptotic(m, x):
    # e^{x^2} i^m erfc(x) ~ 2 / (sqrt(pi) (2x)^{m+1}) sum_k (-1)^k (m+2k)! / (m! k! (2x)^{2k})
    z = 1.0 / (4.0 * x * x)
    term = 1.0
    s = 1.0
    for k in range(1, 80):
        nxt = -term * (m + 2 * k - 1) * (m + 2 * k) * z / k
        if abs(nxt) >= abs(term):
            break
        term = nxt
        s += term
        if abs(term) < 1e-17 * abs(s):
            break
    return 2.0 / SQRT_PI / (2.0 * x) ** (m + 1) * s


@njit(cache=True)
def ierfc_scaled(m, x):
    """exp(x^2) i^m erfc(x) for x >= 1 (iterated complementary error function)."""
    if 1 <= m <= 6 and x >= 8.0:
        return _ierfc_asymptotic(m, x)
    e0 = erfcx(x)
    if m == 0:
        return e0
    # closed form; cancellation costs at most ~2.5 digits for x < 3
    if m == 2 and x < 3.0:
        return 0.25 * ((1.0 + 2.0 * x * x) * e0 - 2.0 * x / SQRT_PI)
    # Miller backward recurrence on J_k = int_0^inf u^k exp(-u^2 - 2xu) du,
    # k J_{k-1} = 2 J_{k+1} + 2 x J_k; J_k is the minimal solution.
    big = m + 10 + int(270.0 / (x * x))
    jp1 = 0.0
    jk = 1e-30
    jm = 0.0
    for k in range(big, 0, -1):
        jkm1 = (2.0 * jp1 + 2.0 * x * jk) / k
        jp1 = jk
        jk = jkm1
        if k - 1 == m:
            jm = jk
        if jk > 1e250:
            jp1 *= 1e-250
            jk *= 1e-250
            jm *= 1e-250
    j0 = 0.5 * SQRT_PI * e0
    fact = 1.0
    for k in range(2, m + 1):
        fact *= k
    return 2.0 * (jm / jk) * j0 / (SQRT_PI * fact)


@njit(cache=True)
def _fn_large(n, s, r):
    # F_n(s) by direct evaluation, requires x = r / (2 sqrt(s)) >= 1
    x = r / (2.0 * math.sqrt(s))
    x2 = x * x
    if x2 > UNDERFLOW_X2:
        return 0.0
    return (4.0 * s) ** (n - 1) * math.exp(-x2) * ierfc_scaled(2 * n - 2, x) / (4.0 * math.pi * r)


@njit(cache=True)
def _hn_small(n, s, r, odd):
    # odd-power part of F_n(s), regular at r = 0
    x = r / (2.0 * math.sqrt(s))
    x2 = x * x
    acc = 0.0
    xp = 1.0
    for q in range(odd.shape[1]):
        term = odd[n - 1, q] * xp
        acc += term
        if abs(term) < 1e-18 * abs(acc) and q > 2:
            break
        xp *= x2
    return -(4.0 * s) ** (n - 1) * acc / (8.0 * math.pi * math.sqrt(s))


@njit(cache=True)
def _tik_gauss(r2, h, d, wts, gauss, out):
    dt = wts.shape[0]
    deg = wts.shape[3]
    for q in range(2):
        for g in range(gauss.shape[1]):
            u = gauss[0, g] - 1.0 + q
            s = h * (d + u)
            kv = gauss[1, g] * h * h * (4.0 * math.pi * s) ** -1.5 * math.exp(-r2 / (4.0 * s))
            for j in range(dt):
                for jp in range(dt):
                    wv = 0.0
                    for k in range(deg - 1, -1, -1):
                        wv = wv * u + wts[j, jp, q, k]
                    out[d, j, jp] += kv * wv


@njit(cache=True)
def make_workspace(nd, nmax):
    """Scratch buffers for ``tik_eval`` (breakpoint values and flags)."""
    return (
        np.zeros((nd + 2, nmax)),
        np.zeros((nd + 2, nmax)),
        np.zeros(nd + 2, dtype=np.bool_),
        np.zeros(nd + 2, dtype=np.bool_),
    )


@njit(cache=True)
def tik_eval(r, h, d0, nd, coef, even, odd, wts, gauss, d_quad, active, out, ws):
    """Fill ``out[d, j, j']`` with G_{d,j,j'}(r) for d = d0..nd-1.

    Breakpoint evaluations are shared between consecutive offsets.  ``ws`` comes
    from ``make_workspace`` with at least ``nd`` offsets.
    """
    fv, hv, have_f, have_h = ws
    dt = coef.shape[0]
    nmax = coef.shape[3]
    for e in range(nd + 2):
        have_f[e] = False
        have_h[e] = False
    r2 = r * r
    for d in range(d0, nd):
        for j in range(dt):
            for jp in range(dt):
                out[d, j, jp] = 0.0
        smax = (d + 1) * h
        if r2 / (4.0 * smax) > UNDERFLOW_X2:
            continue
        small = r < 2.0 * SMALL_X * math.sqrt(smax)
        if d == 0 and r == 0.0:
            for j in range(dt):
                for jp in range(dt):
                    out[d, j, jp] = np.inf
        elif d >= d_quad:
            _tik_gauss(r2, h, d, wts, gauss, out)
        elif small:
            for i in range(3):
                e = d - 1 + i
                if e < 1 or have_h[e]:
                    continue
                for n in range(nmax):
                    if active[n]:
                        hv[e, n] = _hn_small(n + 1, e * h, r, odd)
                have_h[e] = True
            q0 = 0 if d == 0 else 1
            for j in range(dt):
                for jp in range(dt):
                    acc = 0.0
                    for i in range(3):
                        e = d - 1 + i
                        if e < 1:
                            continue
                        s = e * h
                        for n in range(nmax):
                            c = coef[j, jp, i, n]
                            if c == 0.0:
                                continue
                            # even part: sum_q r^(2q-1) (4s)^(n-q) a_q / (4 pi)
                            pol = 0.0
                            for q in range(q0, n + 1):
                                pol += even[n, q] * (4.0 * s) ** (n - q) * r ** (2 * q - 1)
                            acc += c * h ** (1 - n) * (pol / (4.0 * math.pi) + hv[e, n])
                    out[d, j, jp] = acc
        else:
            for i in range(3):
                e = d - 1 + i
                if e < 1 or have_f[e]:
                    continue
                for n in range(nmax):
                    if active[n]:
                        fv[e, n] = _fn_large(n + 1, e * h, r)
                have_f[e] = True
            for j in range(dt):
                for jp in range(dt):
                    acc = 0.0
                    for i in range(3):
                        e = d - 1 + i
                        if e < 1:
                            continue
                        for n in range(nmax):
                            c = coef[j, jp, i, n]
                            if c != 0.0:
                                acc += c * h ** (1 - n) * fv[e, n]
                    out[d, j, jp] = acc
    return out


@njit(cache=True)
def _tik_vec(d, j, jp, r, h, coef, even, odd, wts, gauss, d_quad, active):
    out = np.empty(r.shape[0])
    buf = np.empty((d + 1, coef.shape[0], coef.shape[0]))
    ws = make_workspace(d + 1, coef.shape[3])
    for q in range(r.shape[0]):
        tik_eval(r[q], h, d, d + 1, coef, even, odd, wts, gauss, d_quad, active, buf, ws)
        out[q] = buf[d, j, jp]
    return out


def time_integrated_kernel(d, j, jp, r, h_t, p_t=0):
    """Time-integrated heat kernel G_{d,j,j'}(r) for the temporal offset ``d``.

    ``j`` and ``jp`` index the local temporal shape functions of the test and trial
    interval.  ``r`` may be an array.  At ``r = 0`` the ``d = 0`` kernel is
    singular and the result is ``inf``.
    """
    if d < 0:
        raise ValueError("offset d must be nonnegative")
    if h_t <= 0:
        raise ValueError("h_t must be positive")
    dt = p_t + 1
    if not (0 <= j < dt and 0 <= jp < dt):
        raise ValueError("shape index out of range")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.isnan(r).any():
        raise ValueError("r must be nonnegative")
    flat = np.ascontiguousarray(r.ravel())
    with np.errstate(divide="ignore"):
        vals = _tik_vec(d, j, jp, flat, float(h_t), *kernel_tables(p_t))
    if d == 0:
        vals[flat == 0.0] = np.inf
    vals = vals.reshape(r.shape)
    return vals[()] if vals.ndim == 0 else vals


def time_integrated_all(r, h_t, nd, p_t=0):
    """All offsets ``d < nd`` and shape pairs at one distance: array (nd, D_t, D_t)."""
    tables = kernel_tables(p_t)
    out = np.empty((nd, p_t + 1, p_t + 1))
    ws = make_workspace(nd, tables[0].shape[3])
    return tik_eval(float(r), float(h_t), 0, nd, *tables, out, ws)
