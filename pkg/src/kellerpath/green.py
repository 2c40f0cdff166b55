"""Green function of the radial operator with Neumann conditions.

With ``xi`` the solution of ``L xi = 0`` regular at the left end
(``xi'(a) = 0``, or bounded with ``xi(0) = 1`` on the ball) and ``zeta`` the
solution with ``zeta'(b) = 0``, scaled so that

    r^(N-1) (xi'(r) zeta(r) - xi(r) zeta'(r)) = 1,

the kernel is ``G(r, s) = s^(N-1) xi(min(r, s)) zeta(max(r, s))``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateInterval, NoInteriorZero, NormalizationFailure, OutOfDomain, SingularSystem
from .radial_ode import Params, Profile, Source, State, integrate

PAIR_RTOL = 1e-13
PAIR_ATOL = 1e-16
PAIR_HMAX = 0.01
ZETA_FLOOR = 1e-5
S_MIN = 1e-3
GRAD_STEP = 1e-5


@dataclass(frozen=True)
class GreenPair:
    params: Params
    xi: Profile
    zeta: Profile
    wronskian: float

    @property
    def a(self) -> float:
        return float(self.params.a)

    @property
    def b(self) -> float:
        return float(self.params.b)

    @property
    def N(self) -> int:
        return int(self.params.N)

    def wronskian_defect(self, grid=None) -> float:
        """Max of ``|r^(N-1) W(r) - 1|`` over ``grid`` (default: zeta nodes)."""
        r = self.zeta.grid if grid is None else np.asarray(grid, float)
        w = r ** (self.N - 1) * (self.xi.deriv(r) * self.zeta(r) - self.xi(r) * self.zeta.deriv(r))
        return float(np.max(np.abs(w - 1.0)))

    def diag(self, r):
        """``G(r, r) / r^(N-1) = xi(r) zeta(r)``."""
        return self.xi(r) * self.zeta(r)

    def diag_slope(self, r):
        """``(xi zeta)'(r)``."""
        return self.xi.deriv(r) * self.zeta(r) + self.xi(r) * self.zeta.deriv(r)

    def limit_right(self, r):
        """Normalized limit profile peaked at ``b``: ``G(r, b) / G(b, b)``."""
        return self.xi(r) / self.xi.u[-1]

    def limit_right_slope(self) -> float:
        """Slope at ``b`` of :meth:`limit_right`."""
        return float(self.xi.du[-1] / self.xi.u[-1])

    def limit_left(self, r):
        """Normalized limit profile peaked at ``a > 0``: ``G(r, a) / G(a, a)``."""
        return self.zeta(r) / self.zeta.u[0]

    def limit_left_slope(self) -> float:
        return float(self.zeta.du[0] / self.zeta.u[0])

    def manifest(self) -> dict:
        return {
            "N": self.N,
            "a": self.a,
            "b": self.b,
            "wronskian": float(self.wronskian),
            "xi_points": int(self.xi.grid.size),
            "zeta_points": int(self.zeta.grid.size),
        }

    def export(self, directory) -> list:
        import os

        os.makedirs(directory, exist_ok=True)
        files = ["green.json", "xi.csv", "zeta.csv"]
        with open(os.path.join(directory, files[0]), "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.xi.to_csv(os.path.join(directory, files[1]))
        self.zeta.to_csv(os.path.join(directory, files[2]))
        return files


def homogeneous_pair(params: Params) -> GreenPair:
    """Build ``(xi, zeta)`` on ``[a, b]`` and normalize the Wronskian.

    Raises
    ------
    DegenerateInterval
        If ``b - a < 1e-6``.
    NormalizationFailure
        If the Wronskian vanishes.
    """
    return _pair_cached(int(params.N), float(params.a), float(params.b))


@lru_cache(maxsize=1024)
def _pair_cached(N: int, a: float, b: float) -> GreenPair:
    params = Params(N=N, mu=2.0, a=a, b=b)
    if b - a < 1e-6:
        raise DegenerateInterval("interval too short for a Green pair", a=a, b=b)
    zero = Source.affine(0.0, 0.0)
    hmax = min(PAIR_HMAX, (b - a) / 20.0)
    xi = integrate(zero, State(a, 1.0, 0.0), b, N, PAIR_RTOL, PAIR_ATOL, h_max=hmax, u_cap=1e300).profile
    left = a if a > 0.0 else min(ZETA_FLOOR, 0.5 * b)
    zt = integrate(zero, State(b, 1.0, 0.0), left, N, PAIR_RTOL, PAIR_ATOL, h_max=hmax, u_cap=1e300).profile
    w0 = b ** (N - 1) * xi.du[-1]
    if not np.isfinite(w0) or abs(w0) < 1e-300:
        raise NormalizationFailure("vanishing Wronskian", wronskian=float(w0))
    zt = zt.scaled(1.0 / w0)
    xi = Profile(xi.grid, xi.u, xi.du, params, xi.ddu)
    zt = Profile(zt.grid, zt.u, zt.du, params, zt.ddu)
    return GreenPair(params, xi, zt, float(w0))


def _check(pair: GreenPair, r, s):
    r = np.asarray(r, float)
    s = np.asarray(s, float)
    tol = 1e-12 * (pair.b - pair.a)
    if np.any(r < pair.a - tol) or np.any(r > pair.b + tol) or np.any(s < pair.a - tol) or np.any(s > pair.b + tol):
        raise OutOfDomain("Green evaluation outside [a, b]", a=pair.a, b=pair.b)
    if pair.a == 0.0 and np.any(s <= 0.0):
        raise OutOfDomain("source point must be positive on the ball")
    return np.clip(r, pair.a, pair.b), np.clip(s, pair.a, pair.b)


def green_eval(pair: GreenPair, r, s):
    """``G(r, s) = s^(N-1) xi(min(r, s)) zeta(max(r, s))`` (vectorized)."""
    r, s = _check(pair, r, s)
    lo, hi = np.minimum(r, s), np.maximum(r, s)
    return s ** (pair.N - 1) * pair.xi(lo) * pair.zeta(hi)


def green_dr(pair: GreenPair, r, s):
    """``dG/dr (r, s)``; one-sided from the left at ``r = s``."""
    r, s = _check(pair, r, s)
    left = r <= s
    lo, hi = np.minimum(r, s), np.maximum(r, s)
    val = np.where(left, pair.xi.deriv(lo) * pair.zeta(hi), pair.xi(lo) * pair.zeta.deriv(hi))
    return s ** (pair.N - 1) * val


def diag_critical_point(pair: GreenPair, tol: float = 1e-10) -> float:
    """Interior zero of ``(xi zeta)'`` on ``(a, b)``.

    Raises
    ------
    NoInteriorZero
        If the slope has the same sign at both ends of the scan.
    """
    lo = pair.a if pair.a > 0.0 else max(pair.zeta.a, S_MIN * pair.b * 1e-2)
    grid = np.linspace(lo, pair.b, 2001)
    d = pair.diag_slope(grid)
    idx = np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]
    if idx.size == 0:
        raise NoInteriorZero("diagonal slope has no sign change", left=float(d[0]), right=float(d[-1]))
    i = idx[0]
    f = lambda x: float(pair.diag_slope(x))
    root = brentq(f, grid[i], grid[i + 1], xtol=min(tol, 1e-13), rtol=4 * np.finfo(float).eps)
    return float(root)


def limit_matching(pair: GreenPair, s) -> np.ndarray:
    """Limit matching map ``((xi'/xi)^2 - (zeta'/zeta)^2) / 2`` at ``s``.

    The first term is the squared boundary slope of the normalized limit
    profile on ``(a, s)`` peaked at ``s``, the second that on ``(s, b)``.
    """
    s = np.asarray(s, float)
    left = pair.xi.deriv(s) / pair.xi(s)
    right = pair.zeta.deriv(s) / pair.zeta(s)
    return 0.5 * (left * left - right * right)


@dataclass(frozen=True)
class LayerLimit:
    alphas: Tuple[float, ...]
    amps: Tuple[float, ...]
    pair: GreenPair
    residual: float

    def profile(self, r):
        """``sum_j A_j G(r, alpha_j)``."""
        r = np.asarray(r, float)
        out = np.zeros_like(r)
        for al, am in zip(self.alphas, self.amps):
            out = out + am * green_eval(self.pair, r, al)
        return out

    @property
    def positive(self) -> bool:
        return all(a > 0 for a in self.amps)


def solve_amplitudes(pair: GreenPair, alphas: Sequence[float]) -> LayerLimit:
    """Solve ``sum_j A_j G(alpha_i, alpha_j) = 1``.

    Raises
    ------
    SingularSystem
        If the condition number exceeds 1e12.
    """
    al = np.asarray(alphas, float)
    if al.ndim != 1 or al.size == 0 or np.any(np.diff(al) <= 0.0):
        raise ValueError("alphas must be strictly increasing")
    mat = green_eval(pair, al[:, None], al[None, :])
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularSystem("amplitude system ill conditioned", cond=float(cond))
    amps = np.linalg.solve(mat, np.ones(al.size))
    res = float(np.max(np.abs(mat @ amps - 1.0)))
    return LayerLimit(tuple(float(x) for x in al), tuple(float(x) for x in amps), pair, res)


def phi_value(pair: GreenPair, s: Sequence[float]) -> float:
    s = np.asarray(s, float)
    lim = solve_amplitudes(pair, s)
    return float(pair.params.omega * np.sum(np.asarray(lim.amps) * s ** (pair.N - 1)))


def phi_functional(pair: GreenPair, s: Sequence[float], step: float = GRAD_STEP) -> Tuple[float, np.ndarray]:
    """Value and finite-difference gradient of ``omega * sum_i A_i s_i^(N-1)``.

    This is the squared radial ``H^1`` norm of the minimizer among functions
    pinned to 1 at each ``s_i``.  Components at ``b`` use a one-sided
    difference.
    """
    s = np.asarray(s, float)
    val = phi_value(pair, s)
    grad = np.zeros(s.size)
    for i in range(s.size):
        e = np.zeros(s.size)
        e[i] = step
        if s[i] + step <= pair.b:
            grad[i] = (phi_value(pair, s + e) - phi_value(pair, s - e)) / (2 * step)
        else:
            grad[i] = (3 * val - 4 * phi_value(pair, s - e) + phi_value(pair, s - 2 * e)) / (2 * step)
    return val, grad
