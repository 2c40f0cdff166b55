"""Reference values computed without the package.

Everything here is built from power series, closed forms, bisection or a
separate piecewise-linear finite-element discretization, so that tests can
compare the package against a second route instead of against itself.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad
from scipy.linalg import solve_banded


def bisect(f, lo: float, hi: float, tol: float = 1e-15, max_iter: int = 400) -> float:
    flo = f(lo)
    if flo * f(hi) > 0:
        raise ValueError("no sign change")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- series


def i0_series(r, terms: int = 40):
    """``sum (r/2)^(2k) / (k!)^2`` and its derivative."""
    r = np.asarray(r, float)
    x = 0.5 * r
    val = np.zeros_like(r)
    der = np.zeros_like(r)
    for k in range(terms):
        c = 1.0 / math.factorial(k) ** 2
        val = val + c * x ** (2 * k)
        if k:
            der = der + c * k * x ** (2 * k - 1)
    return val, der


def j1_series(x: float, terms: int = 60) -> float:
    s = 0.0
    for k in range(terms):
        s += (-1) ** k * (x / 2) ** (2 * k + 1) / (math.factorial(k) * math.factorial(k + 1))
    return s


def bessel_j1_zero(n: int = 1) -> float:
    """``n``-th positive zero of ``J_1``; zeros are spaced by roughly pi."""
    lo = 3.0 + (n - 1) * math.pi
    return bisect(j1_series, lo, lo + 1.5)


def tan_root(n: int = 1) -> float:
    """``n``-th positive root of ``tan k = k``, written as ``sin k - k cos k = 0``."""
    return bisect(lambda k: math.sin(k) - k * math.cos(k), n * math.pi + 0.1, (n + 0.5) * math.pi - 1e-9)


# ------------------------------------------------------- N = 3 closed forms


def _basis3(r):
    r = np.asarray(r, float)
    return (np.sinh(r) / r, np.cosh(r) / r, (r * np.cosh(r) - np.sinh(r)) / r**2, (r * np.sinh(r) - np.cosh(r)) / r**2)


def sinhc(r):
    """``sinh(r)/r`` and derivative, continuous at 0."""
    r = np.asarray(r, float)
    small = np.abs(r) < 1e-3
    rs = np.where(small, 1.0, r)
    val = np.where(small, 1 + r**2 / 6 + r**4 / 120, np.sinh(rs) / rs)
    der = np.where(small, r / 3 + r**3 / 30, (rs * np.cosh(rs) - np.sinh(rs)) / rs**2)
    return val, der


class Green3:
    """Closed-form Green kernel for ``N = 3`` on ``[a, b]``.

    Homogeneous solutions are combinations of ``sinh(r)/r`` and
    ``cosh(r)/r``.
    """

    def __init__(self, a: float, b: float):
        self.a, self.b = float(a), float(b)
        if self.a == 0.0:
            self.cx = (1.0, 0.0)
        else:
            f, g, df, dg = _basis3(self.a)
            self.cx = tuple(np.linalg.solve([[f, g], [df, dg]], [1.0, 0.0]))
        f, g, df, dg = _basis3(self.b)
        cz = np.linalg.solve([[f, g], [df, dg]], [1.0, 0.0])
        r0 = 0.5 * (self.a + self.b)
        x, dx = self._xi(r0)
        z, dz = self._comb(cz, r0)
        w = r0**2 * (dx * z - x * dz)
        self.cz = tuple(cz / w)

    def _comb(self, c, r):
        f, g, df, dg = _basis3(r)
        return c[0] * f + c[1] * g, c[0] * df + c[1] * dg

    def _xi(self, r):
        if self.a == 0.0:
            return sinhc(r)
        return self._comb(self.cx, r)

    def xi(self, r):
        return self._xi(r)[0]

    def dxi(self, r):
        return self._xi(r)[1]

    def zeta(self, r):
        return self._comb(self.cz, r)[0]

    def dzeta(self, r):
        return self._comb(self.cz, r)[1]

    def G(self, r, s):
        r, s = np.broadcast_arrays(np.asarray(r, float), np.asarray(s, float))
        lo, hi = np.minimum(r, s), np.maximum(r, s)
        return s**2 * self.xi(lo) * self.zeta(hi)

    def diag_slope(self, r):
        return self.dxi(r) * self.zeta(r) + self.xi(r) * self.dzeta(r)


def amplitudes_2x2(g11: float, g12: float, g21: float, g22: float):
    """Cramer's rule for ``[[g11, g12], [g21, g22]] A = (1, 1)``."""
    det = g11 * g22 - g12 * g21
    return (g22 - g12) / det, (g11 - g21) / det


def scan_root(f, lo: float, hi: float, points: int = 10_000):
    """Bracket sign changes of ``f`` on a dense grid, refine each by bisection."""
    x = np.linspace(lo, hi, points)
    y = f(x)
    idx = np.nonzero(np.sign(y[:-1]) * np.sign(y[1:]) < 0)[0]
    return [bisect(lambda t: float(f(np.array([t]))[0]), x[i], x[i + 1]) for i in idx]


# ------------------------------------------------------------ constants


def lower_state(mu: float) -> float:
    return bisect(lambda x: x - math.exp(mu * (x - 1.0)), 0.0, 0.9)


# --------------------------------------------- constrained minimization


def fem_phi(N: int, a: float, b: float, pins, nodes: int = 2000) -> float:
    """``omega * min int (v'^2 + v^2) r^(N-1)`` over P1 functions with ``v(s) = 1`` at the pins.

    The pins are inserted as mesh nodes; element integrals use 4-point
    Gauss rules, exact for the polynomial weights at hand.  The reduced
    problem is tridiagonal on each free block and solved with a banded solver.
    """
    pins = np.asarray(pins, float)
    x = np.union1d(np.linspace(a, b, nodes), pins)
    n = x.size
    gx, gw = np.polynomial.legendre.leggauss(4)
    h = np.diff(x)
    diag = np.zeros(n)
    off = np.zeros(n - 1)
    for e in range(n - 1):
        xl, xr = x[e], x[e + 1]
        q = 0.5 * (xl + xr) + 0.5 * h[e] * gx
        w = 0.5 * h[e] * gw * q ** (N - 1)
        l1 = (xr - q) / h[e]
        l2 = (q - xl) / h[e]
        kw = np.sum(w) / h[e] ** 2
        diag[e] += kw + np.sum(w * l1 * l1)
        diag[e + 1] += kw + np.sum(w * l2 * l2)
        off[e] += -kw + np.sum(w * l1 * l2)
    fixed = np.isin(x, pins)
    v = np.where(fixed, 1.0, 0.0)
    free = np.nonzero(~fixed)[0]
    # right-hand side: minus the coupling to pinned neighbours
    rhs = np.zeros(n)
    rhs[:-1] -= off * v[1:]
    rhs[1:] -= off * v[:-1]
    d = diag[free]
    # neighbours within the free set are consecutive indices
    up = np.zeros(free.size)
    lo = np.zeros(free.size)
    adj = np.diff(free) == 1
    up[1:] = np.where(adj, off[free[:-1]], 0.0)
    lo[:-1] = np.where(adj, off[free[:-1]], 0.0)
    ab = np.vstack([up, d, lo])
    v[free] = solve_banded((1, 1), ab, rhs[free])
    energy = float(v @ (diag * v) + 2.0 * np.sum(off * v[:-1] * v[1:]))
    omega = 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)
    return omega * energy


# ------------------------------------------------ one-dimensional surrogate


def time_map_1d(mu: float, c: float) -> tuple:
    """Length of the monotone piece of ``-u'' + u = exp(mu (u - 1))`` with ``u(0) = c``, ``u'(0) = 0``.

    Uses the first integral ``u'^2 / 2 = H(u) - H(c)``,
    ``H(x) = x^2 / 2 - exp(mu (x - 1)) / mu``.  Returns ``(length, top)``
    with ``top`` the value where the slope vanishes again.
    """
    H = lambda x: 0.5 * x * x - math.exp(mu * (x - 1.0)) / mu
    h0 = H(c)
    # H rises from c to its maximum at the upper constant state 1, then falls
    top = bisect(lambda x: H(x) - h0, 1.0, 1.0 + 1.0, tol=1e-15)
    # x = c + (top - c)(1 - cos t)/2 removes the square-root endpoint singularities
    half = 0.5 * (top - c)

    def f(t):
        x = c + half * (1.0 - math.cos(t))
        return half * math.sin(t) / math.sqrt(max(2.0 * (H(x) - h0), 1e-300))

    length = quad(f, 0.0, math.pi, limit=400, epsabs=1e-12, epsrel=1e-9)[0]
    return length, top


def surrogate_boundary_value(mu: float, length: float) -> tuple:
    """``(u_low_end, u_high_end)`` of the increasing 1-D solution on ``[0, length]``."""
    low = lower_state(mu)
    # close to the lower state the piece is very long, close to 1 it is short
    c = bisect(lambda t: time_map_1d(mu, t)[0] - length, low + 1e-2 * (1.0 - low), 1.0 - 1e-3, tol=1e-13)
    return c, time_map_1d(mu, c)[1]
