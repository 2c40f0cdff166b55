"""Radial ODE integration, profiles and quadrature.

The radial operator is ``L u = -u'' - (N-1)/r u' + u``.  Trajectories of
``L u = g(u)`` are produced by a compiled Dormand-Prince 5(4) integrator
(:mod:`kellerpath._core`) with a two-term series start at the origin.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BPoly, CubicHermiteSpline
from scipy.special import gamma, lambertw

from . import _core
from .errors import BlowUp, OutOfDomain, StepUnderflow

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
SERIES_RADIUS = 1e-4
U_CAP = 50.0
MAX_STEPS = 2_000_000


def sphere_measure(dim: int) -> float:
    """Surface measure of the unit sphere in ``R^dim``."""
    return 2.0 * math.pi ** (dim / 2.0) / float(gamma(dim / 2.0))


def lambda_from_mu(mu: float) -> float:
    return mu * math.exp(-mu)


def mu_from_lambda(lam: float) -> float:
    """Invert ``lam * exp(mu) = mu`` on the branch ``mu > 1``."""
    if not 0.0 < lam < math.exp(-1.0):
        raise ValueError(f"lambda must lie in (0, 1/e), got {lam}")
    return float(-lambertw(-lam, -1).real)


@dataclass(frozen=True)
class Params:
    """Problem descriptor: dimension, nonlinearity parameter, interval."""

    N: int = 3
    mu: float = 100.0
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.N}")
        if not (0.0 <= self.a < self.b):
            raise ValueError(f"need 0 <= a < b, got a={self.a}, b={self.b}")
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")

    @classmethod
    def from_lambda(cls, lam: float, **kw) -> "Params":
        return cls(mu=mu_from_lambda(lam), **kw)

    @property
    def lam(self) -> float:
        return lambda_from_mu(self.mu)

    @property
    def omega(self) -> float:
        return sphere_measure(self.N)

    def with_(self, **kw) -> "Params":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return {"N": int(self.N), "mu": float(self.mu), "a": float(self.a), "b": float(self.b)}


@dataclass(frozen=True)
class State:
    r: float
    u: float
    du: float

    def __post_init__(self):
        if self.r < 0.0:
            raise ValueError("radius must be nonnegative")


@dataclass(frozen=True)
class Source:
    """Right-hand side ``g`` of ``L u = g(u)``.

    Affine and exponential sources run in the compiled kernel; any other
    callable (with optional derivative) falls back to ``solve_ivp``.
    """

    kind: int
    p0: float = 0.0
    p1: float = 0.0
    func: Optional[Callable[[float], float]] = None

    @classmethod
    def affine(cls, slope: float, offset: float = 0.0) -> "Source":
        return cls(_core.SOURCE_AFFINE, float(slope), float(offset))

    @classmethod
    def exponential(cls, mu: float) -> "Source":
        return cls(_core.SOURCE_EXPONENTIAL, float(mu))

    @classmethod
    def from_callable(cls, func: Callable[[float], float]) -> "Source":
        return cls(-1, func=func)

    def __call__(self, u):
        if self.kind == _core.SOURCE_AFFINE:
            return self.p0 * np.asarray(u) + self.p1
        if self.kind == _core.SOURCE_EXPONENTIAL:
            return np.exp(self.p0 * (np.asarray(u) - 1.0))
        return self.func(u)


SourceLike = Union[Source, Callable[[float], float]]


def _as_source(g: SourceLike) -> Source:
    return g if isinstance(g, Source) else Source.from_callable(g)


class Profile:
    """A radial function sampled on a strictly increasing grid.

    ``ddu`` is optional; when present the interpolant is the quintic
    Hermite polynomial matching values and two derivatives per node,
    otherwise the cubic Hermite interpolant of ``(u, du)``.
    """

    __slots__ = ("grid", "u", "du", "ddu", "params", "_spl", "_dspl")

    def __init__(self, grid, u, du, params: Optional[Params] = None, ddu=None):
        grid = np.array(grid, dtype=float)
        u = np.array(u, dtype=float)
        du = np.array(du, dtype=float)
        if not (grid.shape == u.shape == du.shape) or grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid, u, du must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(grid) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        for arr in (grid, u, du):
            arr.flags.writeable = False
        if ddu is not None:
            ddu = np.array(ddu, dtype=float)
            if ddu.shape != grid.shape:
                raise ValueError("ddu must match grid")
            ddu.flags.writeable = False
        self.grid, self.u, self.du, self.ddu, self.params = grid, u, du, ddu, params
        self._spl = None
        self._dspl = None

    def __len__(self) -> int:
        return self.grid.size

    def __repr__(self) -> str:
        return f"Profile(n={self.grid.size}, r=[{self.grid[0]:.6g}, {self.grid[-1]:.6g}])"

    @property
    def a(self) -> float:
        return float(self.grid[0])

    @property
    def b(self) -> float:
        return float(self.grid[-1])

    def _build(self):
        if self._spl is None:
            if self.ddu is not None:
                y = np.stack([self.u, self.du, self.ddu], axis=1)
                self._spl = BPoly.from_derivatives(self.grid, y, extrapolate=False)
                self._dspl = self._spl.derivative()
            else:
                self._spl = CubicHermiteSpline(self.grid, self.u, self.du, extrapolate=False)
                self._dspl = self._spl.derivative()

    def _check(self, r):
        r = np.asarray(r, dtype=float)
        span = self.grid[-1] - self.grid[0]
        lo, hi = self.grid[0] - 1e-12 * span, self.grid[-1] + 1e-12 * span
        if np.any(r < lo) or np.any(r > hi):
            raise OutOfDomain(
                "evaluation outside profile range",
                r_min=float(np.min(r)),
                r_max=float(np.max(r)),
                a=self.a,
                b=self.b,
            )
        return np.clip(r, self.grid[0], self.grid[-1])

    def __call__(self, r):
        self._build()
        return self._spl(self._check(r))

    def deriv(self, r):
        self._build()
        return self._dspl(self._check(r))

    def scaled(self, c: float) -> "Profile":
        ddu = None if self.ddu is None else c * self.ddu
        return Profile(self.grid, c * self.u, c * self.du, self.params, ddu)

    def resample(self, n: int = 1001, grid=None) -> "Profile":
        """Profile on a uniform grid of ``n`` nodes (or the given grid)."""
        if grid is None:
            grid = np.linspace(self.grid[0], self.grid[-1], n)
        grid = np.asarray(grid, dtype=float)
        return Profile(grid, self(grid), self.deriv(grid), self.params)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("r,u,du\n")
        for r, u, du in zip(self.grid, self.u, self.du):
            buf.write(f"{r:.17g},{u:.17g},{du:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, params: Optional[Params] = None) -> "Profile":
        with open(path, encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["r", "u", "du"]:
                raise ValueError(f"unexpected header {header}")
            rows = np.array([[float(x) for x in row] for row in reader if row])
        return cls(rows[:, 0], rows[:, 1], rows[:, 2], params)


@dataclass
class Trajectory:
    """Result of :func:`integrate`: profile plus termination data."""

    profile: Profile
    status: str
    r_event: float
    stops: np.ndarray = field(default_factory=lambda: np.empty(0))
    forward: bool = True

    @property
    def end(self) -> State:
        p = self.profile
        i = -1 if self.forward else 0
        return State(float(p.grid[i]), float(p.u[i]), float(p.du[i]))


_STATUS = {
    _core.STATUS_OK: "ok",
    _core.STATUS_TURN: "turn",
    _core.STATUS_BLOWUP: "blowup",
    _core.STATUS_UNDERFLOW: "underflow",
    _core.STATUS_MAXSTEPS: "maxsteps",
}


def integrate(
    g: SourceLike,
    start: State,
    to: float,
    dim: int,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    *,
    stops: Optional[Sequence[float]] = None,
    turn_sign: int = 0,
    h_max: float = np.inf,
    u_cap: float = U_CAP,
    series_radius: float = SERIES_RADIUS,
    params: Optional[Params] = None,
    strict: bool = True,
) -> Trajectory:
    """Integrate ``-u'' - (N-1)/r u' + u = g(u)`` from ``start`` to ``to``.

    Parameters
    ----------
    g
        Source term; a :class:`Source` runs compiled, a plain callable runs
        through ``scipy.integrate.solve_ivp``.
    start
        Initial state.  At ``r = 0`` the slope must vanish.
    to
        Final radius (either side of ``start.r``).
    stops
        Radii the integrator must land on exactly (monotone in the
        direction of travel).
    turn_sign
        If ``+1`` stop where ``u'`` falls through zero from above, ``-1``
        where it rises through zero from below.
    strict
        Raise :class:`BlowUp` / :class:`StepUnderflow` instead of returning
        the truncated trajectory with its status.

    Returns
    -------
    Trajectory
        Profile in increasing ``r`` order, status string and event radius.
    """
    if start.r == 0.0 and start.du != 0.0:
        raise ValueError("slope must vanish at the origin")
    if to == start.r:
        raise ValueError("empty integration interval")
    src = _as_source(g)
    forward = to > start.r
    stop_arr = np.empty(0) if stops is None else np.asarray(stops, dtype=float)
    if stop_arr.size:
        stop_arr = np.sort(stop_arr) if forward else np.sort(stop_arr)[::-1].copy()
    if src.kind < 0:
        rs, us, vs, acc, flag, code, r_ev = _integrate_python(src, start, to, dim, rtol, atol, stop_arr)
    else:
        rs, us, vs, acc, flag, code, r_ev, _ = _core.integrate_kernel(
            src.kind,
            src.p0,
            src.p1,
            float(dim),
            float(start.r),
            float(start.u),
            float(start.du),
            float(to),
            float(rtol),
            float(atol),
            float(h_max),
            float(series_radius),
            stop_arr,
            float(turn_sign),
            float(u_cap),
            MAX_STEPS,
        )
    status = _STATUS[code]
    if strict and status == "blowup":
        raise BlowUp("solution exceeded cap", last_r=float(rs[-2] if rs.size > 1 else rs[-1]), cap=u_cap)
    if strict and status in ("underflow", "maxsteps"):
        raise StepUnderflow("step size underflow", last_r=float(r_ev))
    if not forward:
        rs, us, vs, acc, flag = rs[::-1], us[::-1], vs[::-1], acc[::-1], flag[::-1]
    if rs.size < 2:
        raise StepUnderflow("no step accepted", last_r=float(start.r))
    prof = Profile(rs, us, vs, params, acc)
    return Trajectory(prof, status, float(r_ev), rs[flag > 0.5], forward)


def _integrate_python(src, start, to, dim, rtol, atol, stops):
    # generic fallback: series start then solve_ivp RK45
    r0, u0, v0 = start.r, start.u, start.du
    pre_r, pre_u, pre_v = [], [], []
    if r0 == 0.0:
        h0 = min(SERIES_RADIUS, abs(to))
        c2 = (u0 - float(src(u0))) / dim
        pre_r, pre_u, pre_v = [0.0], [u0], [0.0]
        r0, u0, v0 = h0, u0 + 0.5 * c2 * h0 * h0, c2 * h0

    def rhs(r, y):
        return [y[1], y[0] - float(src(y[0])) - (dim - 1.0) * y[1] / r]

    t_eval = None
    sol = solve_ivp(rhs, (r0, to), [u0, v0], method="RK45", rtol=rtol, atol=atol, dense_output=True)
    rs = sol.t
    if stops.size:
        inside = stops[(stops - r0) * (to - r0) > 0]
        rs = np.unique(np.concatenate([rs, inside]))
        if to < r0:
            rs = rs[::-1]
    y = sol.sol(rs) if t_eval is None else sol.y
    rs = np.concatenate([pre_r, rs])
    us = np.concatenate([pre_u, y[0]])
    vs = np.concatenate([pre_v, y[1]])
    with np.errstate(divide="ignore", invalid="ignore"):
        acc = us - np.array([float(src(x)) for x in us]) - (dim - 1.0) * np.where(rs > 0, vs / rs, 0.0)
    if rs[0] == 0.0:
        acc[0] = (us[0] - float(src(us[0]))) / dim
    flag = np.isin(rs, stops).astype(float)
    code = _core.STATUS_OK if sol.status == 0 else _core.STATUS_UNDERFLOW
    return rs, us, vs, acc, flag, code, float(rs[-1])


def hermite_weights_integral(r, f, df) -> float:
    """Hermite-corrected composite trapezoid, exact for piecewise cubics."""
    h = np.diff(r)
    return float(np.sum(0.5 * h * (f[:-1] + f[1:]) + h * h * (df[:-1] - df[1:]) / 12.0))


def quadrature(p: Profile, weight: float = 0.0, func=None, dfunc=None) -> float:
    """Approximate ``int_a^b f(u(r)) r^m dr``.

    With ``func`` omitted ``f(u) = u``.  Uses the endpoint-corrected
    trapezoid rule with slopes from the stored derivatives, fourth order on
    smooth data.  ``dfunc`` is ``f'(u)``; without it the correction uses a
    centered difference of ``f``.
    """
    m = float(weight)
    if m < 0.0:
        raise ValueError("weight exponent must be nonnegative")
    r = p.grid
    if func is None:
        fu, dfu = p.u, np.ones_like(p.u)
    else:
        fu = np.asarray(func(p.u), dtype=float)
        if dfunc is not None:
            dfu = np.asarray(dfunc(p.u), dtype=float)
        else:
            eps = 1e-6 * np.maximum(1.0, np.abs(p.u))
            dfu = (np.asarray(func(p.u + eps)) - np.asarray(func(p.u - eps))) / (2 * eps)
    w = r**m
    with np.errstate(divide="ignore", invalid="ignore"):
        dw = np.where(r > 0.0, m * r ** (m - 1.0), 1.0 if m == 1.0 else 0.0)
    f = fu * w
    df = dfu * p.du * w + fu * dw
    return hermite_weights_integral(r, f, df)


def gauss_integral(fun, a: float, b: float, breaks=None, order: int = 8, panels: int = 64) -> float:
    """Composite Gauss-Legendre integral of a vectorized ``fun``.

    ``breaks`` are extra panel edges (e.g. the nodes of an interpolant) so
    that each panel sees a smooth integrand.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    if breaks is None:
        edges = np.linspace(a, b, panels + 1)
    else:
        edges = np.unique(np.clip(np.concatenate([[a, b], np.asarray(breaks, float)]), a, b))
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(fun(pts.ravel())).reshape(pts.shape)
    return float(np.sum(half[:, None] * w[None, :] * vals))


def profile_integral(p: Profile, fun, weight: float = 0.0, order: int = 6, lo=None, hi=None) -> float:
    """``int f(r, u, u') r^m dr`` by Gauss-Legendre on each cell of the profile grid.

    ``fun`` receives arrays ``(r, u, du)``.  The profile interpolant is
    evaluated at the Gauss nodes, so the rule inherits its smoothness.
    """
    lo = p.a if lo is None else lo
    hi = p.b if hi is None else hi
    inner = p.grid[(p.grid > lo) & (p.grid < hi)]

    def integrand(r):
        return fun(r, p(r), p.deriv(r)) * r**weight

    return gauss_integral(integrand, lo, hi, breaks=inner, order=order)
