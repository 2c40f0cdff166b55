"""k-layer radial solutions assembled from monotone pieces.

Each subinterval ``[c, d]`` of a partition carries one of three shapes:

    "inc"     increasing solution, peak at the right end
    "dec"     decreasing solution (annulus only), peak at the left end
    "1layer"  increasing on ``[c, s]`` then decreasing on ``[s, d]``; the
              interior peak ``s`` is the root of the matching map
              ``L(s) = (e^{mu(u_+(s; c, s) - 1)} - e^{mu(u_-(s; s, d) - 1)}) / mu``

Neumann data at every interface make the glued function C^1 as soon as
values match, so the partition points solve a square system ``M(beta) = 0``
of value differences.  Its limit as ``mu -> infinity`` is built from Green
functions and supplies the starting point for Newton.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .errors import (
    InfeasibleOrder,
    NewtonStall,
    NoBracket,
    ShootingCollapse,
    SolverError,
    SubSolveFailure,
)
from .green import (
    LayerLimit,
    diag_critical_point,
    green_eval,
    homogeneous_pair,
    limit_matching,
    solve_amplitudes,
)
from .monotone import DECREASING, INCREASING, MonotoneSolution, mass_balance, solve_monotone
from .radial_ode import Params, Profile
from .spectrum import count_below

DELTA = 0.02
ROOT_XTOL = 1e-12
JAC_STEP = 1e-5
MATCH_TOL = 1e-8
WINDOW_MARGIN = 1e-3

INC, DEC, ONE = "inc", "dec", "1layer"


# feasibility


def _feasible(N: int, mu: float, c: float, d: float) -> bool:
    return d - c > 1e-3 and count_below(N, c, d, mu) >= 2


@lru_cache(maxsize=4096)
def feasible_window(N: int, mu: float, c: float, d: float, tol: float = 1e-7) -> Tuple[float, float]:
    """Range of interior peaks ``s`` for which both pieces of a 1-layer exist.

    The lower end is the smallest ``s`` with ``mu`` above the second radial
    eigenvalue of ``(c, s)``, the upper end the largest with ``mu`` above that
    of ``(s, d)``.  Both are found by bisection on the eigenvalue count.
    """

    def edge(ok_at, bad_at, pred):
        lo, hi = ok_at, bad_at
        while abs(hi - lo) > tol:
            mid = 0.5 * (lo + hi)
            if pred(mid):
                lo = mid
            else:
                hi = mid
        return lo

    if not _feasible(N, mu, c, d):
        return float(d), float(c)
    s_lo = edge(d, c, lambda s: _feasible(N, mu, c, s))
    s_hi = edge(c, d, lambda s: _feasible(N, mu, s, d))
    return float(s_lo), float(s_hi)


def _sub(params: Params, direction: str, side: str) -> MonotoneSolution:
    try:
        return solve_monotone(params, direction, check_threshold=False)
    except SolverError as exc:
        raise SubSolveFailure(
            f"{side} sub-solve failed: {exc}", side=side, a=params.a, b=params.b, mu=params.mu, cause=exc.to_dict()
        ) from exc


def L_mu(s: float, params: Params) -> float:
    """One-layer matching map at the interface ``s`` of ``(params.a, params.b)``."""
    mu, N = params.mu, params.N
    left = _sub(Params(N=N, mu=mu, a=params.a, b=s), INCREASING, "left")
    right = _sub(Params(N=N, mu=mu, a=s, b=params.b), DECREASING, "right")
    return (math.exp(mu * (left.boundary_value - 1.0)) - math.exp(mu * (right.boundary_value - 1.0))) / mu


@dataclass(frozen=True)
class IntervalSolution:
    """Solution on one subinterval with its shape and peak."""

    kind: str
    c: float
    d: float
    alpha: float
    pieces: Tuple[MonotoneSolution, ...]
    root_residual: float = 0.0

    @property
    def left_value(self) -> float:
        return float(self.pieces[0].profile.u[0])

    @property
    def right_value(self) -> float:
        return float(self.pieces[-1].profile.u[-1])


def _interval_window(N, mu, c, d):
    s_lo, s_hi = feasible_window(N, mu, c, d)
    lo = max(c + DELTA, s_lo + WINDOW_MARGIN)
    hi = min(d - DELTA, s_hi - WINDOW_MARGIN)
    return lo, hi


@lru_cache(maxsize=8192)
def solve_interval(N: int, mu: float, c: float, d: float, kind: str) -> IntervalSolution:
    """Solve the subinterval problem of the given shape.

    Raises
    ------
    NoBracket
        When the 1-layer matching map has equal signs on the feasible window.
    SubSolveFailure
        When a monotone piece fails.
    """
    if kind == INC:
        sol = _sub(Params(N=N, mu=mu, a=c, b=d), INCREASING, "inc")
        return IntervalSolution(INC, c, d, d, (sol,))
    if kind == DEC:
        sol = _sub(Params(N=N, mu=mu, a=c, b=d), DECREASING, "dec")
        return IntervalSolution(DEC, c, d, c, (sol,))
    if kind != ONE:
        raise ValueError(f"unknown interval kind {kind!r}")
    params = Params(N=N, mu=mu, a=c, b=d)
    lo, hi = _interval_window(N, mu, c, d)
    if not lo < hi:
        raise NoBracket("empty feasible window for the interior peak", a=c, b=d, mu=mu, window=[lo, hi])
    f_lo, f_hi = L_mu(lo, params), L_mu(hi, params)
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoBracket(
            "matching map has equal signs at the window ends",
            a=c,
            b=d,
            mu=mu,
            window=[lo, hi],
            values=[f_lo, f_hi],
        )
    s = brentq(L_mu, lo, hi, args=(params,), xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)
    left = _sub(Params(N=N, mu=mu, a=c, b=s), INCREASING, "left")
    right = _sub(Params(N=N, mu=mu, a=s, b=d), DECREASING, "right")
    res = abs(L_mu(s, params))
    return IntervalSolution(ONE, c, d, float(s), (left, right), float(res))


# limit problem


def _pair(N: int, c: float, d: float):
    return homogeneous_pair(Params(N=N, mu=2.0, a=c, b=d))


@lru_cache(maxsize=8192)
def limit_interval(N: int, c: float, d: float, kind: str) -> Tuple[float, float, float]:
    """Limit profile on ``[c, d]`` normalized to 1 at its peak.

    Returns ``(alpha, value_at_c, value_at_d)`` where the profile is
    ``G(r, alpha; c, d) / G(alpha, alpha; c, d)``.
    """
    pair = _pair(N, c, d)
    if kind == INC:
        al = d
    elif kind == DEC:
        al = c
    else:
        al = diag_critical_point(pair)
    den = float(pair.xi(al) * pair.zeta(al))
    left = float(pair.xi.u[0] * pair.zeta(al)) / den
    right = float(pair.xi(al) * pair.zeta.u[-1]) / den
    return float(al), left, right


def interval_kinds(k: int, boundary_layer: bool, annulus_left: bool) -> List[str]:
    kinds = [ONE] * k
    if boundary_layer:
        kinds[-1] = INC
    if annulus_left:
        kinds[0] = DEC
    if k == 1 and boundary_layer and annulus_left:
        raise ValueError("a single interval cannot peak at both ends")
    return kinds


def M_inf(betas: Sequence[float], params: Params, kinds: Sequence[str]) -> np.ndarray:
    """Limit of the matching system at interior interfaces ``betas``."""
    edges = [params.a, *betas, params.b]
    vals = [limit_interval(params.N, edges[j], edges[j + 1], kinds[j]) for j in range(len(kinds))]
    return np.array([vals[j + 1][1] - vals[j][2] for j in range(len(kinds) - 1)])


def M_mu(betas: Sequence[float], params: Params, kinds: Sequence[str]) -> np.ndarray:
    """Value mismatch ``u(beta_j; right interval) - u(beta_j; left interval)``."""
    edges = [params.a, *betas, params.b]
    sols = [solve_interval(params.N, params.mu, edges[j], edges[j + 1], kinds[j]) for j in range(len(kinds))]
    return np.array([sols[j + 1].left_value - sols[j].right_value for j in range(len(kinds) - 1)])


def _ordered(betas, params, gap=1e-3) -> bool:
    e = np.concatenate([[params.a], betas, [params.b]])
    return bool(np.all(np.diff(e) > gap))


def solve_limit_config(params: Params, kinds: Sequence[str], scan: int = 40) -> np.ndarray:
    """Root of the limit matching system by damped Newton with a scan fallback."""
    m = len(kinds) - 1
    if m == 0:
        return np.empty(0)
    a, b = params.a, params.b
    f = lambda x: M_inf(x, params, kinds)

    def newton(x):
        for _ in range(60):
            fx = f(x)
            if np.max(np.abs(fx)) < 1e-13:
                return x
            jac = np.empty((m, m))
            h = 1e-6
            for i in range(m):
                e = np.zeros(m)
                e[i] = h
                jac[:, i] = (f(x + e) - f(x - e)) / (2 * h)
            step = np.linalg.solve(jac, -fx)
            t = 1.0
            nrm = np.max(np.abs(fx))
            while t > 1e-8:
                xn = x + t * step
                if _ordered(xn, params) and np.max(np.abs(f(xn))) < nrm:
                    break
                t *= 0.5
            else:
                return None
            x = xn
        return x if np.max(np.abs(f(x))) < 1e-10 else None

    x0 = a + (b - a) * np.arange(1, m + 1) / (m + 1)
    try:
        x = newton(x0)
    except (SolverError, np.linalg.LinAlgError):
        x = None
    if x is not None:
        return x
    # coarse scan over the ordered simplex
    best, best_val = None, np.inf
    ticks = np.linspace(a, b, scan + 1)[1:-1]
    for combo in _simplex(ticks, m):
        try:
            v = np.max(np.abs(f(np.array(combo))))
        except SolverError:
            continue
        if v < best_val:
            best, best_val = np.array(combo), v
    if best is None:
        raise NoBracket("limit system has no admissible configuration", kinds=list(kinds))
    x = newton(best)
    if x is None:
        raise NewtonStall("limit system Newton failed", best=best.tolist(), residual=best_val)
    return x


def _simplex(ticks, m):
    if m == 1:
        for t in ticks:
            yield (t,)
        return
    for i, t in enumerate(ticks):
        for rest in _simplex(ticks[i + 1 :], m - 1):
            yield (t, *rest)


# assembled solutions


@dataclass
class LayerSolution:
    k: int
    betas: Tuple[float, ...]
    alphas: Tuple[float, ...]
    boundary_layer: bool
    annulus_left: bool
    profile: Profile
    mu: float
    match_residual: float
    limit: LayerLimit
    params: Params
    intervals: Tuple[IntervalSolution, ...]
    limit_betas: Tuple[float, ...]
    converged: bool = True
    iterations: int = 0
    violations: List[str] = field(default_factory=list)

    @property
    def s_bar_infty(self) -> Tuple[float, ...]:
        return tuple(self.limit.alphas)

    @property
    def amps(self) -> Tuple[float, ...]:
        return tuple(self.limit.amps)

    def manifest(self) -> dict:
        return {
            "betas": [float(x) for x in self.betas],
            "alphas": [float(x) for x in self.alphas],
            "amps": [float(x) for x in self.amps],
            "match_residual": float(self.match_residual),
            "s_bar_infty": [float(x) for x in self.s_bar_infty],
            "k": int(self.k),
            "mu": float(self.mu),
            "N": int(self.params.N),
            "a": float(self.params.a),
            "b": float(self.params.b),
            "boundary_layer": bool(self.boundary_layer),
            "annulus_left": bool(self.annulus_left),
            "converged": bool(self.converged),
        }


def interface_jumps(intervals: Sequence[IntervalSolution]) -> Tuple[float, float]:
    """Max value jump and max one-sided slope magnitude over all internal joints."""
    vj, dj = 0.0, 0.0
    pieces = [p for iv in intervals for p in iv.pieces]
    for left, right in zip(pieces[:-1], pieces[1:]):
        vj = max(vj, abs(right.profile.u[0] - left.profile.u[-1]))
        dj = max(dj, abs(left.profile.du[-1]), abs(right.profile.du[0]))
    return vj, dj


def glue_profile(intervals: Sequence[IntervalSolution], params: Params) -> Profile:
    pieces = [p.profile for iv in intervals for p in iv.pieces]
    grid, u, du, ddu = [pieces[0].grid], [pieces[0].u], [pieces[0].du], [pieces[0].ddu]
    for p in pieces[1:]:
        grid.append(p.grid[1:])
        u.append(p.u[1:])
        du.append(p.du[1:])
        ddu.append(p.ddu[1:])
    return Profile(np.concatenate(grid), np.concatenate(u), np.concatenate(du), params, np.concatenate(ddu))


def _count_maxima(p: Profile) -> int:
    du = p.du
    s = np.sign(du)
    n = int(np.count_nonzero((s[:-1] > 0) & (s[1:] < 0)))
    # boundary maxima: Neumann end approached from below
    if p.u[0] > p.u[1]:
        n += 1
    if p.u[-1] > p.u[-2]:
        n += 1
    return n


def _check(sol: LayerSolution) -> List[str]:
    out = []
    vj, dj = interface_jumps(sol.intervals)
    if vj > 1e-7:
        out.append(f"value jump {vj:.3e} > 1e-7")
    if dj > 1e-8:
        out.append(f"interface slope {dj:.3e} > 1e-8")
    if sol.match_residual > MATCH_TOL:
        out.append(f"match residual {sol.match_residual:.3e} > {MATCH_TOL}")
    prof = sol.profile
    inner = [b for b in sol.betas[1:-1]]
    for b in inner:
        if not prof(b) < 1.0:
            out.append(f"interface value u({b:.6f}) >= 1")
    for al in sol.alphas:
        if not prof(al) > 1.0:
            out.append(f"peak value u({al:.6f}) <= 1")
    for j, al in enumerate(sol.alphas):
        if not sol.betas[j] <= al <= sol.betas[j + 1]:
            out.append(f"peak {j} outside its interval")
    nmax = _count_maxima(prof)
    if nmax != sol.k:
        out.append(f"{nmax} local maxima, expected {sol.k}")
    return out


def _limit(params: Params, kinds, betas_inf) -> LayerLimit:
    edges = [params.a, *betas_inf, params.b]
    alphas = [limit_interval(params.N, edges[j], edges[j + 1], kinds[j])[0] for j in range(len(kinds))]
    pair = homogeneous_pair(params.with_(mu=2.0))
    return solve_amplitudes(pair, alphas)


def _newton(params: Params, kinds, x0, max_iter: int = 30):
    """Damped Newton on the matching system; returns ``(x, residual, iterations)``."""
    m = len(kinds) - 1
    f = lambda z: M_mu(z, params, kinds)

    def safe(z):
        try:
            return f(z)
        except SolverError:
            return None

    x = np.array(x0, float)
    fx = safe(x)
    if fx is None:
        raise InfeasibleOrder("starting configuration infeasible at this mu", betas=x.tolist(), mu=params.mu)
    nrm = float(np.max(np.abs(fx)))
    it = 0
    while it < max_iter and nrm > 1e-11:
        it += 1
        jac = np.empty((m, m))
        for i in range(m):
            e = np.zeros(m)
            e[i] = JAC_STEP
            fp, fm = safe(x + e), safe(x - e)
            if fp is not None and fm is not None:
                jac[:, i] = (fp - fm) / (2 * JAC_STEP)
            elif fp is not None:
                jac[:, i] = (fp - fx) / JAC_STEP
            elif fm is not None:
                jac[:, i] = (fx - fm) / JAC_STEP
            else:
                raise InfeasibleOrder("Jacobian stencil leaves the feasible region", betas=x.tolist())
        step = np.linalg.solve(jac, -fx)
        t = 1.0
        accepted = False
        while t > 1e-6:
            xn = x + t * step
            if _ordered(xn, params):
                fn = safe(xn)
                if fn is not None and np.max(np.abs(fn)) < nrm:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            if it == 1 and nrm > MATCH_TOL:
                raise InfeasibleOrder("no admissible Newton step", betas=x.tolist(), residual=nrm)
            break
        x, fx, nrm = xn, fn, float(np.max(np.abs(fn)))
        if np.max(np.abs(t * step)) < 1e-14:
            break
    return x, nrm, it


def _continue_from_above(params: Params, kinds, x0, max_iter, factors=(2.0,), attempts: int = 8):
    """Solve at a larger ``mu`` where the start is feasible, then step ``mu`` down.

    At most ``attempts`` downward solves are tried per factor, so an
    infeasible target fails in bounded time.
    """
    for fac in factors:
        hi = params.with_(mu=params.mu * fac)
        try:
            x, nrm, _ = _newton(hi, kinds, x0, max_iter)
        except SolverError:
            continue
        if nrm > MATCH_TOL:
            continue
        mu_cur, ratio, total = hi.mu, fac**0.5, 0
        for _ in range(attempts):
            if mu_cur <= params.mu:
                break
            mu_next = max(params.mu, mu_cur / ratio)
            try:
                xn, nrm, k_it = _newton(params.with_(mu=mu_next), kinds, x, max_iter)
                ok = nrm <= MATCH_TOL
            except SolverError:
                ok = False
            if ok:
                x, mu_cur, total = xn, mu_next, total + k_it
            else:
                ratio = ratio**0.5
        if mu_cur <= params.mu:
            return x, nrm, total
    raise InfeasibleOrder("no feasible configuration reached from larger mu", mu=params.mu, betas=list(map(float, x0)))


def k_layer(
    params: Params,
    k: int,
    boundary_layer: bool = False,
    annulus_left: bool = False,
    strict: bool = False,
    max_iter: int = 30,
    continuation: bool = True,
) -> LayerSolution:
    """Glued solution with ``k`` layers.

    Newton on ``M_mu(beta) = 0`` with a central finite-difference Jacobian,
    started from the root of the limit system.  Steps are halved until the
    residual decreases and the interfaces stay ordered.  If the limit
    configuration is infeasible at ``mu`` (some piece below its existence
    threshold) and ``continuation`` is set, the system is first solved at a
    larger ``mu`` and followed back down.

    Raises
    ------
    InfeasibleOrder
        If no ordered configuration can be reached.
    NewtonStall
        With ``strict=True`` when the residual plateaus above tolerance; by
        default the best iterate is returned with ``converged=False``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if annulus_left and params.a <= 0.0:
        raise ValueError("annulus_left requires a > 0")
    kinds = interval_kinds(k, boundary_layer, annulus_left)
    beta_inf = solve_limit_config(params, kinds)
    limit = _limit(params, kinds, beta_inf)
    x = beta_inf.copy()
    m = k - 1
    it = 0
    converged = True
    if m > 0:
        try:
            x, nrm, it = _newton(params, kinds, x, max_iter)
        except InfeasibleOrder:
            if not continuation:
                raise
            x, nrm, it = _continue_from_above(params, kinds, beta_inf, max_iter)
        converged = nrm <= MATCH_TOL
        if not converged and strict:
            raise NewtonStall("matching system stalled", betas=x.tolist(), residual=float(nrm))
    edges = [params.a, *x, params.b]
    intervals = tuple(solve_interval(params.N, params.mu, edges[j], edges[j + 1], kinds[j]) for j in range(k))
    res = float(np.max(np.abs(M_mu(x, params, kinds)))) if m > 0 else 0.0
    sol = LayerSolution(
        k=k,
        betas=tuple(float(e) for e in edges),
        alphas=tuple(iv.alpha for iv in intervals),
        boundary_layer=boundary_layer,
        annulus_left=annulus_left,
        profile=glue_profile(intervals, params),
        mu=float(params.mu),
        match_residual=res,
        limit=limit,
        params=params,
        intervals=intervals,
        limit_betas=tuple(float(v) for v in beta_inf),
        converged=converged or m == 0,
        iterations=it,
    )
    sol.violations = _check(sol)
    return sol


def one_layer(params: Params) -> LayerSolution:
    """Single interior layer: ``s_mu`` is the root of :func:`L_mu` on ``(a, b)``."""
    return k_layer(params, 1)


def s_bar_infty(params: Params) -> float:
    return diag_critical_point(homogeneous_pair(params.with_(mu=2.0)))


def glued_mass_balance(sol: LayerSolution) -> float:
    return mass_balance(sol.profile, sol.mu, sol.params.N)
