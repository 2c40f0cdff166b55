"""Monotone radial solutions of ``-Lap u + u = exp(mu (u - 1))`` with Neumann data.

The increasing solution is found by shooting from ``a`` with ``u(a) = c``
below 1.  For each ``c`` the trajectory either turns (``u' = 0`` again)
before ``b`` or still rises at ``b``; the continuous miss function

    m(c) = -(b - r_turn)    if the trajectory turns at r_turn <= b
    m(c) = u'(b)            otherwise

changes sign across the solution and is solved by Brent's method.  The
decreasing solution on an annulus is the mirror image: shoot from ``b``
towards ``a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import BelowThreshold, DegenerateInterval, ShootingCollapse, ZeroFunction
from .radial_ode import Params, Profile, Source, State, gauss_integral, integrate, profile_integral
from .spectrum import count_below, second_eigenvalue

SHOOT_RTOL = 1e-13
SHOOT_ATOL = 1e-15
MIN_WIDTH = 1e-3
INCREASING = "increasing"
DECREASING = "decreasing"


@dataclass(frozen=True)
class ConstantStates:
    """The two constant solutions ``lower < 1 = upper``."""

    mu: float
    lower: float
    upper: float = 1.0

    def h(self, x):
        """``x - exp(mu (x - 1))``; positive exactly on ``(lower, 1)``."""
        return np.asarray(x) - np.exp(self.mu * (np.asarray(x) - 1.0))


@lru_cache(maxsize=512)
def constant_states(mu: float) -> ConstantStates:
    """Small root of ``x = exp(mu (x - 1))`` by safeguarded Newton from 0."""
    if not mu > 1.0:
        raise ValueError(f"mu must exceed 1, got {mu}")
    lo, hi = 0.0, 1.0 - math.log(mu) / mu  # h'(hi) = 0, h > 0 on (lower, hi]
    x = 0.0
    for _ in range(200):
        e = math.exp(mu * (x - 1.0))
        f = x - e
        df = 1.0 - mu * e
        if f > 0.0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
        step = f / df
        x_new = x - step
        if not (lo <= x_new <= hi):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-16 * max(1.0, abs(x)) or x_new == x:
            x = x_new
            break
        x = x_new
    return ConstantStates(float(mu), float(x))


@dataclass(frozen=True)
class MonotoneSolution:
    direction: str
    profile: Profile
    mu: float
    boundary_value: float
    energy: float
    residual: float
    params: Params
    iterations: int = 0
    shoot_value: float = math.nan

    @property
    def u_start(self) -> float:
        return float(self.profile.u[0])

    def manifest(self) -> dict:
        p = self.params
        return {
            "mu": float(self.mu),
            "N": int(p.N),
            "a": float(p.a),
            "b": float(p.b),
            "direction": self.direction,
            "boundary_value": float(self.boundary_value),
            "energy": float(self.energy),
            "residual": float(self.residual),
            "iterations": int(self.iterations),
        }


# diagnostics usable on arbitrary profiles


def _dim(profile: Profile, N: Optional[int]) -> int:
    if N is not None:
        return int(N)
    if profile.params is None:
        raise ValueError("dimension unknown: pass N or attach params")
    return int(profile.params.N)


def flux_residual(profile: Profile, mu: float, N: Optional[int] = None, order: int = 6) -> np.ndarray:
    """Cell-averaged defect of the equation in conservation form.

    For each cell ``[r_i, r_{i+1}]`` returns

        ([r^(N-1) u']_{r_i}^{r_{i+1}} - int (u - e^{mu(u-1)}) r^(N-1) dr) / |cell|_N

    with ``|cell|_N = (r_{i+1}^N - r_i^N)/N``, i.e. the mean of
    ``-L u + e^{mu(u-1)}`` over the cell with radial weight.
    """
    N = _dim(profile, N)
    g = profile.grid
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = g[:-1], g[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * x[None, :]
    u = profile(pts.ravel()).reshape(pts.shape)
    f = (u - np.exp(mu * (u - 1.0))) * pts ** (N - 1)
    integral = np.sum(half[:, None] * w[None, :] * f, axis=1)
    flux = g ** (N - 1) * profile.du
    vol = (hi**N - lo**N) / N
    return (np.diff(flux) - integral) / vol


def residual(profile: Profile, mu: float, N: Optional[int] = None) -> float:
    """Sup of the cell defect plus the Neumann mismatch at both ends."""
    d = flux_residual(profile, mu, N)
    return float(max(np.max(np.abs(d)), abs(profile.du[0]), abs(profile.du[-1])))


def mass_balance(profile: Profile, mu: float, N: Optional[int] = None) -> float:
    """``omega * int (u - e^{mu(u-1)}) r^(N-1) dr``; zero for Neumann solutions."""
    N = _dim(profile, N)
    omega = Params(N=N).omega
    return omega * profile_integral(profile, lambda r, u, du: u - np.exp(mu * (u - 1.0)), N - 1)


def lyapunov(profile: Profile, mu: float) -> np.ndarray:
    """``u'^2/2 - u^2/2 + e^{mu(u-1)}/mu`` on the grid."""
    u, du = profile.u, profile.du
    return 0.5 * du * du - 0.5 * u * u + np.exp(mu * (u - 1.0)) / mu


def lyapunov_violation(profile: Profile, mu: float) -> float:
    """Largest increase of the Lyapunov function between grid nodes (0 if monotone)."""
    return float(max(0.0, np.max(np.diff(lyapunov(profile, mu)))))


def lower_barrier_gap(profile: Profile, mu: float) -> float:
    """``min u - lower``; nonnegative for solutions."""
    return float(np.min(profile.u) - constant_states(mu).lower)


def slope_sup(profile: Profile) -> float:
    return float(np.max(np.abs(profile.du)))


# energy and Nehari projection


def energy(z: Profile, mu: float, N: Optional[int] = None) -> float:
    """Reduced energy of ``z = u - lower``.

    ``omega * int (z'^2/2 + (z + lower)^2/2 - e^{mu(z + lower - 1)}/mu) r^(N-1) dr``.
    """
    N = _dim(z, N)
    low = constant_states(mu).lower
    omega = Params(N=N).omega

    def dens(r, zz, dz):
        u = zz + low
        return 0.5 * dz * dz + 0.5 * u * u - np.exp(mu * (u - 1.0)) / mu

    return omega * profile_integral(z, dens, N - 1)


def _ray_terms(z: Profile, mu: float, N: int):
    low = constant_states(mu).lower
    omega = Params(N=N).omega
    quad = omega * profile_integral(z, lambda r, u, du: du * du + u * u, N - 1)
    x, w = np.polynomial.legendre.leggauss(6)
    g = z.grid
    half = 0.5 * np.diff(g)
    mid = 0.5 * (g[1:] + g[:-1])
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel() * pts ** (N - 1) * omega
    zv = z(pts)
    return low, quad, zv, wts


def nehari_project(z: Profile, mu: float, N: Optional[int] = None) -> float:
    """Unique maximizer ``t > 0`` of ``t -> E(t z)``.

    Golden-section search on the energy along the ray, then Newton on its
    derivative ``t * Q - low * int z (e^{mu t z} - 1)`` where
    ``Q = int (z'^2 + z^2)``.
    """
    N = _dim(z, N)
    if not np.any(np.abs(z.u) > 0.0):
        raise ZeroFunction("zero function has no Nehari projection")
    low, quad, zv, wts = _ray_terms(z, mu, N)
    lin = np.sum(wts * zv)

    def g(t):
        with np.errstate(over="ignore"):
            ex = np.sum(wts * np.exp(mu * (t * zv + low - 1.0))) / mu
        return 0.5 * t * t * quad + t * low * lin - ex

    def dg(t):
        with np.errstate(over="ignore"):
            return t * quad + low * lin - np.sum(wts * zv * np.exp(mu * (t * zv + low - 1.0)))

    def d2g(t):
        with np.errstate(over="ignore"):
            return quad - mu * np.sum(wts * zv * zv * np.exp(mu * (t * zv + low - 1.0)))

    hi = 1.0
    while dg(hi) > 0.0:
        hi *= 2.0
        if hi > 1e6:
            raise ZeroFunction("energy unbounded along the ray")
    lo = 0.0
    phi = 0.5 * (math.sqrt(5.0) - 1.0)
    x1, x2 = hi - phi * (hi - lo), lo + phi * (hi - lo)
    g1, g2 = g(x1), g(x2)
    while hi - lo > 1e-4 * max(1.0, hi):
        if g1 < g2:
            lo, x1, g1 = x1, x2, g2
            x2 = lo + phi * (hi - lo)
            g2 = g(x2)
        else:
            hi, x2, g2 = x2, x1, g1
            x1 = hi - phi * (hi - lo)
            g1 = g(x1)
    t = 0.5 * (lo + hi)
    for _ in range(50):
        step = dg(t) / d2g(t)
        t_new = t - step
        if not (0.0 < t_new):
            t_new = 0.5 * t
        if abs(t_new - t) < 1e-15 * t:
            t = t_new
            break
        t = t_new
    return float(t)


# shooting


def _check_domain(params: Params, check_threshold: bool):
    if params.b - params.a < MIN_WIDTH:
        raise DegenerateInterval("annulus too thin", a=params.a, b=params.b, min_width=MIN_WIDTH)
    if params.mu <= 1.0:
        raise BelowThreshold("mu must exceed 1", mu=params.mu)
    if check_threshold and count_below(params.N, params.a, params.b, params.mu) < 2:
        raise BelowThreshold(
            "mu does not exceed the second radial eigenvalue",
            mu=params.mu,
            a=params.a,
            b=params.b,
            threshold=second_eigenvalue(params.N, params.a, params.b),
        )


def _trajectory(params: Params, c: float, direction: str, turn: bool, rtol=SHOOT_RTOL, atol=SHOOT_ATOL):
    src = Source.exponential(params.mu)
    if direction == INCREASING:
        start, end, sign = State(params.a, c, 0.0), params.b, 1
    else:
        start, end, sign = State(params.b, c, 0.0), params.a, -1
    return integrate(
        src, start, end, params.N, rtol, atol, turn_sign=sign if turn else 0, strict=False, params=params
    )


def _miss(c: float, params: Params, direction: str, rtol=SHOOT_RTOL, atol=SHOOT_ATOL) -> float:
    tr = _trajectory(params, c, direction, True, rtol, atol)
    if direction == INCREASING:
        if tr.status in ("turn", "blowup", "underflow", "maxsteps"):
            return -(params.b - tr.r_event)
        return float(tr.profile.du[-1])
    if tr.status in ("turn", "blowup", "underflow", "maxsteps"):
        return -(tr.r_event - params.a)
    return float(-tr.profile.du[0])


def _bracket(params: Params, direction: str, low: float):
    """Find ``c_lo < c_hi`` in ``(lower, 1)`` with ``m(c_lo) > 0 > m(c_hi)``."""
    c_hi = None
    for k in range(1, 16):
        c = 1.0 - 10.0 ** (-k)
        if c <= low:
            continue
        if _miss(c, params, direction) < 0.0:
            c_hi = c
            break
    if c_hi is None:
        raise ShootingCollapse("no overshooting start found", mu=params.mu, a=params.a, b=params.b)
    c_lo = 0.5 * (low + c_hi)
    for _ in range(200):
        if _miss(c_lo, params, direction) > 0.0:
            return c_lo, c_hi
        c_hi_new = c_lo
        c_lo = 0.5 * (low + c_lo)
        c_hi = c_hi_new
        if c_lo - low < 1e-15:
            break
    raise ShootingCollapse("no undershooting start found", mu=params.mu, a=params.a, b=params.b)


def _solve(params: Params, direction: str, check_threshold: bool = True, bracket=None) -> MonotoneSolution:
    _check_domain(params, check_threshold)
    if direction == DECREASING and params.a <= 0.0:
        raise ValueError("decreasing solution requires an annulus (a > 0)")
    low = constant_states(params.mu).lower
    c_lo, c_hi = _bracket(params, direction, low) if bracket is None else bracket
    count = [0]

    def f(c):
        count[0] += 1
        return _miss(c, params, direction)

    try:
        c = brentq(f, c_lo, c_hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=300)
    except (ValueError, RuntimeError) as exc:
        raise ShootingCollapse(str(exc), mu=params.mu, a=params.a, b=params.b, bracket=[c_lo, c_hi])
    tr = _trajectory(params, c, direction, False)
    if tr.status != "ok":
        raise ShootingCollapse("final trajectory failed", status=tr.status, c=c)
    prof = tr.profile
    res = residual(prof, params.mu, params.N)
    end_val = float(prof.u[-1] if direction == INCREASING else prof.u[0])
    z = Profile(prof.grid, prof.u - low, prof.du, params, prof.ddu)
    e = energy(z, params.mu, params.N)
    sol = MonotoneSolution(direction, prof, float(params.mu), end_val, e, res, params, count[0], float(c))
    _validate(sol, low)
    return sol


def _validate(sol: MonotoneSolution, low: float):
    u, du = sol.profile.u, sol.profile.du
    sign = 1.0 if sol.direction == INCREASING else -1.0
    inner = sign * du[1:-1]
    ok = np.all(inner >= -1e-8) and np.min(u) >= low - 1e-12
    if sol.direction == INCREASING:
        ok = ok and u[0] < 1.0 < u[-1]
    else:
        ok = ok and u[-1] < 1.0 < u[0]
    if not ok:
        raise ShootingCollapse(
            "converged profile violates monotone structure",
            u_start=float(u[0]),
            u_end=float(u[-1]),
            min_slope=float(np.min(inner)),
        )


@lru_cache(maxsize=4096)
def _cached(N: int, mu: float, a: float, b: float, direction: str, check_threshold: bool) -> MonotoneSolution:
    return _solve(Params(N=N, mu=mu, a=a, b=b), direction, check_threshold)


def solve_increasing(params: Params, check_threshold: bool = True) -> MonotoneSolution:
    """Increasing solution on ``[a, b]`` with ``u(a) < 1 < u(b)``.

    Raises
    ------
    BelowThreshold
        If ``mu`` does not exceed the second radial Neumann eigenvalue.
    ShootingCollapse
        If the shooting bracket cannot be established or closes without a
        valid profile.
    """
    return _cached(int(params.N), float(params.mu), float(params.a), float(params.b), INCREASING, check_threshold)


def solve_decreasing(params: Params, check_threshold: bool = True) -> MonotoneSolution:
    """Decreasing solution on an annulus, ``u(a) > 1 > u(b)``."""
    return _cached(int(params.N), float(params.mu), float(params.a), float(params.b), DECREASING, check_threshold)


def solve_monotone(params: Params, direction: str, check_threshold: bool = True) -> MonotoneSolution:
    if direction == INCREASING:
        return solve_increasing(params, check_threshold)
    if direction == DECREASING:
        return solve_decreasing(params, check_threshold)
    raise ValueError(f"unknown direction {direction!r}")


def multistart_probe(params: Params, direction: str = INCREASING, starts: int = 16, seed: int = 0) -> List[MonotoneSolution]:
    """Shoot from random admissible starts and return every converged solution.

    Each start ``c0`` is expanded geometrically towards the side indicated
    by the sign of the miss until a bracket forms, then closed by Brent.
    """
    _check_domain(params, True)
    low = constant_states(params.mu).lower
    rng = np.random.default_rng(seed)
    out = []
    for c0 in rng.uniform(low, 1.0, size=starts):
        m0 = _miss(c0, params, direction)
        if m0 == 0.0:
            br = (c0, c0)
        else:
            other = c0
            width = 1e-3
            m1 = m0
            while np.sign(m1) == np.sign(m0):
                if m0 > 0:
                    other = min(1.0 - 1e-15, c0 + width)
                else:
                    other = max(low + 1e-15, c0 - width)
                m1 = _miss(other, params, direction)
                width *= 2.0
                if width > 2.0:
                    break
            if np.sign(m1) == np.sign(m0):
                continue
            br = (c0, other) if m0 > 0 else (other, c0)
        out.append(_solve(params, direction, False, bracket=br))
    return out
