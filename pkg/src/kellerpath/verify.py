"""Quantitative checks of the large-``mu`` asymptotics against computed solutions.

Limit statements are turned into trend assertions on a ladder of ``mu``
values: a check passes when its gap decreases strictly along the ladder.
Identities that hold at every ``mu`` are checked at a fixed relative
tolerance.  Every check returns a :class:`CheckReport`; reports serialize to
deterministic JSON (sorted keys, ``repr`` floats, no timings).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .discretize import RadialFV, eig_negative_count, richardson, smallest_magnitude_eig
from .errors import WindowTooWide
from .gluing import LayerSolution, k_layer
from .green import GreenPair, homogeneous_pair
from .monotone import DECREASING, MonotoneSolution, solve_increasing
from .radial_ode import Params, gauss_integral, profile_integral
from .spectrum import second_eigenvalue

LADDER = (100.0, 200.0, 400.0)
KERNEL_THRESHOLD = 1e-3
CONTROL_TOL = 1e-6
MESHES = (2001, 4001, 8001)
SQRT2 = math.sqrt(2.0)


@dataclass
class CheckReport:
    name: str
    inputs: Dict
    lhs: float
    rhs: float
    gap: float
    passed: bool
    trend: Optional[List[Tuple[float, float]]] = None
    extras: Dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "inputs": self.inputs,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "gap": self.gap,
            "trend": None if self.trend is None else [[float(m), float(g)] for m, g in self.trend],
            "pass": bool(self.passed),
            "extras": self.extras,
        }


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def reports_json(reports: Sequence[CheckReport]) -> str:
    return json.dumps([_clean(r.to_dict()) for r in reports], indent=2, sort_keys=True) + "\n"


def strictly_decreasing(values) -> bool:
    v = np.asarray(values, float)
    return bool(v.size >= 2 and np.all(np.diff(v) < 0.0))


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("KELLERPATH_THREADS", "1")))
    except ValueError:
        return 1


def _ladder(fun: Callable, mus: Sequence[float]) -> list:
    """Map ``fun`` over the ladder, concurrently; results keep ladder order."""
    with ThreadPoolExecutor(max_workers=_workers()) as ex:
        return list(ex.map(fun, mus))


def liouville_profile(r):
    """``log(4 e^{sqrt2 r} / (1 + e^{sqrt2 r})^2)``, written to avoid overflow."""
    x = SQRT2 * np.asarray(r, float)
    return math.log(4.0) + x - 2.0 * np.logaddexp(0.0, x)


def _limit_slope(sol: MonotoneSolution) -> Tuple[float, GreenPair]:
    pair = homogeneous_pair(sol.params)
    if sol.direction == DECREASING:
        return abs(pair.limit_left_slope()), pair
    return pair.limit_right_slope(), pair


# ----------------------------------------------------------------------------
# Pohozaev


def pohozaev_terms(sol: MonotoneSolution) -> Tuple[float, float]:
    """Both sides of the radial Pohozaev identity at finite ``mu``.

    With ``F(u) = e^{mu(u-1)}/mu - u^2/2`` and Neumann ends,

        b^N F(u(b)) - a^N F(u(a)) = N int F(u) r^(N-1) - (N-2)/2 int u'^2 r^(N-1).
    """
    p = sol.params
    N, mu, a, b = p.N, p.mu, p.a, p.b
    F = lambda u: np.exp(mu * (u - 1.0)) / mu - 0.5 * u * u
    prof = sol.profile
    lhs = b**N * F(prof.u[-1]) - a**N * F(prof.u[0])
    i_f = profile_integral(prof, lambda r, u, du: F(u), N - 1)
    i_d = profile_integral(prof, lambda r, u, du: du * du, N - 1)
    rhs = N * i_f - 0.5 * (N - 2) * i_d
    return float(lhs), float(rhs)


def pohozaev_balance(sol: MonotoneSolution) -> float:
    lhs, rhs = pohozaev_terms(sol)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


def pohozaev_check(sol: MonotoneSolution) -> CheckReport:
    """Boundary value ``e^{mu(u-1)}/mu`` at the peak against half the squared limit slope.

    For increasing solutions the peak is ``b``; decreasing ones are mirrored
    at ``a``.  Passes when the finite-``mu`` identity balances to 1e-6.
    """
    p = sol.params
    kappa, _ = _limit_slope(sol)
    u_peak = sol.profile.u[-1] if sol.direction != DECREASING else sol.profile.u[0]
    lhs = math.exp(p.mu * (u_peak - 1.0)) / p.mu
    rhs = 0.5 * kappa * kappa
    bal = pohozaev_balance(sol)
    return CheckReport(
        "pohozaev",
        {**p.as_dict(), "direction": sol.direction},
        lhs,
        rhs,
        abs(lhs - rhs),
        bal <= 1e-6,
        extras={"balance": bal},
    )


def pohozaev_trend(N: int = 3, mus: Sequence[float] = LADDER, a: float = 0.0, b: float = 1.0) -> CheckReport:
    sols = _ladder(lambda mu: solve_increasing(Params(N=N, mu=mu, a=a, b=b)), mus)
    reps = [pohozaev_check(s) for s in sols]
    trend = [(m, r.gap) for m, r in zip(mus, reps)]
    bals = [r.extras["balance"] for r in reps]
    ok = strictly_decreasing([g for _, g in trend]) and max(bals) <= 1e-6
    last = reps[-1]
    return CheckReport(
        "pohozaev_trend",
        {"N": N, "a": a, "b": b, "ladder": list(mus)},
        last.lhs,
        last.rhs,
        last.gap,
        ok,
        trend,
        {"balances": bals},
    )


def pohozaev_uniform(N: int = 3, mus: Sequence[float] = LADDER, bs: Sequence[float] = (0.8, 0.9, 1.0)) -> CheckReport:
    """Max over ``b`` of the Pohozaev gap, along the ladder."""
    trend = []
    for mu in mus:
        gaps = [pohozaev_check(solve_increasing(Params(N=N, mu=mu, b=b))).gap for b in bs]
        trend.append((mu, max(gaps)))
    return CheckReport(
        "pohozaev_uniform",
        {"N": N, "bs": list(bs), "ladder": list(mus)},
        trend[-1][1],
        0.0,
        trend[-1][1],
        strictly_decreasing([g for _, g in trend]),
        trend,
    )


# ----------------------------------------------------------------------------
# blow-up profile


def rescaled_profile(sol: MonotoneSolution, window: float = 5.0, points: int = 2001):
    """``(t, mu [u(b + t/(k mu)) - u(b)])`` on ``[-window, 0]`` with ``k`` the scaled limit slope.

    Raises
    ------
    WindowTooWide
        If the window does not fit in ``(a, b)`` after rescaling.
    """
    p = sol.params
    kappa, _ = _limit_slope(sol)
    k = kappa / SQRT2
    span = (p.b - p.a) * k * p.mu
    if window > span:
        raise WindowTooWide("window exceeds the rescaled interval", window=window, limit=span)
    t = np.linspace(-window, 0.0, points)
    r = p.b + t / (k * p.mu)
    ut = p.mu * (sol.profile(r) - sol.profile.u[-1])
    return t, ut, k


def blowup_profile(sol: MonotoneSolution, window: float = 5.0) -> CheckReport:
    """Sup distance between the rescaled profile and the Liouville bubble on ``[-window, 0]``."""
    p = sol.params
    t, ut, k = rescaled_profile(sol, window)
    ref = liouville_profile(t)
    i = int(np.argmax(np.abs(ut - ref)))
    gap = float(abs(ut[i] - ref[i]))
    scale = k * p.mu
    expo = lambda s: np.exp(p.mu * (sol.profile(p.b + s / scale) - sol.profile.u[-1]))
    mass = gauss_integral(expo, -window, 0.0, panels=64)
    dslope = float(sol.profile.deriv(p.b)) * p.mu / scale
    return CheckReport(
        "blowup",
        {**p.as_dict(), "window": window},
        float(ut[i]),
        float(ref[i]),
        gap,
        abs(mass / SQRT2 - 1.0) <= 0.05,
        extras={"at": float(t[i]), "k": k, "mass": mass, "mass_target": SQRT2, "value_at_0": float(ut[-1]), "slope_at_0": dslope},
    )


def blowup_trend(N: int = 3, mus: Sequence[float] = LADDER, window: float = 5.0) -> CheckReport:
    sols = _ladder(lambda mu: solve_increasing(Params(N=N, mu=mu)), mus)
    reps = [blowup_profile(s, window) for s in sols]
    trend = [(m, r.gap) for m, r in zip(mus, reps)]
    masses = [r.extras["mass"] for r in reps]
    # the bubble mass is a limit statement too: its error must shrink along
    # the ladder and be within tolerance at the last rung
    mass_err = [abs(m / SQRT2 - 1.0) for m in masses]
    ok = strictly_decreasing([g for _, g in trend]) and strictly_decreasing(mass_err) and reps[-1].passed
    last = reps[-1]
    return CheckReport(
        "blowup_trend",
        {"N": N, "window": window, "ladder": list(mus)},
        last.lhs,
        last.rhs,
        last.gap,
        ok,
        trend,
        {"masses": masses, "mass_errors": mass_err},
    )


def tail_slope(lo: float = -5.0, hi: float = -4.0, points: int = 201) -> float:
    """Least-squares slope of the Liouville bubble on ``[lo, hi]``."""
    t = np.linspace(lo, hi, points)
    return float(np.polyfit(t, liouville_profile(t), 1)[0])


def layer_scale_check(sol: MonotoneSolution, level: float = -1.0) -> CheckReport:
    """Width of the boundary layer against the predicted ``1/(k mu)``.

    The width is the distance from ``b`` at which ``mu (u - u(b))`` first
    reaches the bubble's value at ``level``.  Passes within 20%.
    """
    p = sol.params
    kappa, _ = _limit_slope(sol)
    k = kappa / SQRT2
    target = float(liouville_profile(level))
    g = lambda d: p.mu * (sol.profile(p.b - d) - sol.profile.u[-1]) - target
    grid = np.linspace(0.0, p.b - p.a, 4001)
    idx = int(np.argmax(g(grid) < 0.0))
    width = brentq(g, grid[idx - 1], grid[idx], xtol=1e-14)
    pred = -level / (k * p.mu)
    rel = abs(width / pred - 1.0)
    return CheckReport("layer_scale", {**p.as_dict(), "level": level}, width, pred, abs(width - pred), rel <= 0.2, extras={"relative": rel})


# ----------------------------------------------------------------------------
# limit profiles


def _limit_worst(sol: MonotoneSolution, hi_frac: float, points: int):
    p = sol.params
    pair = homogeneous_pair(p)
    r = np.linspace(p.a, p.a + hi_frac * (p.b - p.a), points)
    u, lim = sol.profile(r), pair.limit_right(r)
    i = int(np.argmax(np.abs(u - lim)))
    return float(u[i]), float(lim[i])


def monotone_limit_gap(sol: MonotoneSolution, hi_frac: float = 0.9, points: int = 4001) -> float:
    """Sup distance on ``[a, a + hi_frac (b - a)]`` to the normalized limit profile."""
    u, lim = _limit_worst(sol, hi_frac, points)
    return abs(u - lim)


def monotone_limit_trend(N: int = 3, mus: Sequence[float] = LADDER, hi_frac: float = 0.9) -> CheckReport:
    sols = _ladder(lambda mu: solve_increasing(Params(N=N, mu=mu)), mus)
    trend = [(m, monotone_limit_gap(s, hi_frac)) for m, s in zip(mus, sols)]
    g = [x for _, x in trend]
    u, lim = _limit_worst(sols[-1], hi_frac, 4001)
    return CheckReport(
        "monotone_limit",
        {"N": N, "hi_frac": hi_frac, "ladder": list(mus)},
        u,
        lim,
        g[-1],
        strictly_decreasing(g),
        trend,
    )


def limit_profile_check(layer: LayerSolution, exclusion: float = 0.1, points: int = 4001) -> CheckReport:
    """Sup distance to ``sum_j A_j G(., alpha_j)`` away from the layer radii."""
    p = layer.params
    lim = layer.limit
    r = np.linspace(p.a, p.b, points)
    far = np.all(np.abs(r[:, None] - np.asarray(lim.alphas)[None, :]) >= exclusion, axis=1)
    r = r[far]
    if r.size:
        u, v = layer.profile(r), lim.profile(r)
        i = int(np.argmax(np.abs(u - v)))
        lhs, rhs = float(u[i]), float(v[i])
    else:
        lhs = rhs = float("nan")
    return CheckReport(
        "limit_profile",
        {**p.as_dict(), "k": layer.k, "exclusion": exclusion},
        lhs,
        rhs,
        abs(lhs - rhs),
        lim.residual <= 1e-10,
        extras={"amplitude_residual": lim.residual, "alphas": list(lim.alphas), "amps": list(lim.amps)},
    )


def limit_profile_trend(N: int = 3, mus: Sequence[float] = (150.0, 300.0), k: int = 1) -> CheckReport:
    layers = _ladder(lambda mu: k_layer(Params(N=N, mu=mu), k), mus)
    reps = [limit_profile_check(l) for l in layers]
    trend = [(m, r.gap) for m, r in zip(mus, reps)]
    ok = strictly_decreasing([g for _, g in trend]) and all(r.passed for r in reps)
    last = reps[-1]
    return CheckReport(
        "limit_profile_trend",
        {"N": N, "k": k, "ladder": list(mus)},
        last.lhs,
        last.rhs,
        last.gap,
        ok,
        trend,
        {"amplitude_residuals": [r.extras["amplitude_residual"] for r in reps]},
    )


# ----------------------------------------------------------------------------
# boundary sensitivity


def boundary_sensitivity(params: Params, delta: float = 1e-4, points: int = 2001) -> CheckReport:
    """``mu`` times the one-sided derivative in ``b`` of the boundary value.

    Compared with ``2 (u''_inf(b) - u'_inf(b)^2) / u'_inf(b)`` where, from
    the homogeneous equation, ``u''_inf(b) = 1 - (N-1) u'_inf(b) / b``.  The
    extras carry the cosine between the finite-difference field on
    ``[a, a + 0.9 (b - a)]`` and ``-u'_inf(b) u_inf``.
    """
    p = params
    s0 = solve_increasing(p)
    s1 = solve_increasing(p.with_(b=p.b + delta))
    lhs = p.mu * (s1.profile.u[-1] - s0.profile.u[-1]) / delta
    pair = homogeneous_pair(p)
    kappa = pair.limit_right_slope()
    dd = 1.0 - (p.N - 1) * kappa / p.b
    rhs = 2.0 * (dd - kappa * kappa) / kappa
    r = np.linspace(p.a, p.a + 0.9 * (p.b - p.a), points)
    field_fd = (s1.profile(r) - s0.profile(r)) / delta
    pred = -kappa * pair.limit_right(r)
    cos = float(np.dot(field_fd, pred) / (np.linalg.norm(field_fd) * np.linalg.norm(pred)))
    return CheckReport(
        "sensitivity",
        {**p.as_dict(), "delta": delta},
        float(lhs),
        float(rhs),
        float(abs(lhs - rhs)),
        bool(cos > 0.0),
        extras={"cosine": cos, "kappa": kappa},
    )


def sensitivity_trend(N: int = 3, mus: Sequence[float] = (100.0, 200.0), bs: Sequence[float] = (1.0,), delta: float = 1e-4) -> CheckReport:
    """Max over ``bs`` of the sensitivity gap along the ladder; cosines must increase."""
    trend, cos = [], []
    for mu in mus:
        reps = [boundary_sensitivity(Params(N=N, mu=mu, b=b), delta) for b in bs]
        trend.append((mu, max(r.gap for r in reps)))
        cos.append(min(r.extras["cosine"] for r in reps))
    ok = strictly_decreasing([g for _, g in trend]) and all(c > 0 for c in cos) and bool(np.all(np.diff(cos) > 0))
    return CheckReport(
        "sensitivity_trend",
        {"N": N, "bs": list(bs), "ladder": list(mus), "delta": delta},
        trend[-1][1],
        0.0,
        trend[-1][1],
        ok,
        trend,
        {"cosines": cos},
    )


# ----------------------------------------------------------------------------
# nondegeneracy


def _sigma(N, a, b, u_fun, mu, n):
    fv = RadialFV(N, a, b, n)
    u = u_fun(fv.r)
    return smallest_magnitude_eig(fv, u, mu), eig_negative_count(fv, u, mu)


def nondegeneracy_check(sol: MonotoneSolution, meshes: Sequence[int] = MESHES) -> CheckReport:
    """Smallest-magnitude eigenvalue of the linearization over a mesh sequence.

    Passes when ``|sigma| > 1e-3`` on every mesh and the values vary by less
    than 10%.  The Morse index (negative count) is reported per mesh.
    """
    p = sol.params
    out = [_sigma(p.N, p.a, p.b, sol.profile, p.mu, n) for n in meshes]
    sig = np.array([s for s, _ in out])
    var = float((sig.max() - sig.min()) / np.max(np.abs(sig)))
    ok = bool(np.all(np.abs(sig) > KERNEL_THRESHOLD) and var < 0.1)
    return CheckReport(
        "nondegeneracy",
        {**p.as_dict(), "meshes": list(meshes)},
        float(sig[-1]),
        0.0,
        float(abs(sig[-1])),
        ok,
        extras={"sigmas": sig.tolist(), "variation": var, "morse": [m for _, m in out]},
    )


def bifurcation_control(N: int = 3, a: float = 0.0, b: float = 1.0, nodes: int = 2001) -> CheckReport:
    """Positive control: the linearization at ``u = 1``, ``mu = lambda_2`` has a kernel.

    ``sigma`` on ``nodes`` and ``2 nodes - 1`` points is Richardson
    extrapolated; passes when the extrapolated value is below 1e-6.
    """
    lam = second_eigenvalue(N, a, b)
    one = lambda r: np.ones_like(r)
    s1, _ = _sigma(N, a, b, one, lam, nodes)
    s2, _ = _sigma(N, a, b, one, lam, 2 * nodes - 1)
    ext = richardson(s1, s2)
    return CheckReport(
        "bifurcation_control",
        {"N": N, "a": a, "b": b, "mu": lam, "nodes": nodes},
        float(ext),
        0.0,
        float(abs(ext)),
        abs(ext) <= CONTROL_TOL,
        extras={"raw": [s1, s2]},
    )


# ----------------------------------------------------------------------------
# Green identities


def green_identity_terms(pair: GreenPair) -> List[Tuple[float, float]]:
    """Both integral identities of the normalized limit profile ``u = xi / xi(b)``.

        (N-1) int u' u r^(N-3) = b^(N-1) (u''(b) - u'(b)^2) - a^(N-1) u(a)^2
        2 int u^2 r^(N-1)      = b^(N-1) (u'(b) + b u''(b)) - b^N u'(b)^2 - a^N u(a)^2

    For ``N = 2`` on the ball the first integrand ``u' u / r`` stays bounded
    (``u'(r) ~ r u(0) / 2``) and the Gauss nodes avoid ``r = 0``.
    """
    N, a, b = pair.N, pair.a, pair.b
    scale = 1.0 / pair.xi.u[-1]
    u = lambda r: pair.xi(r) * scale
    du = lambda r: pair.xi.deriv(r) * scale
    k = float(du(b))
    dd = 1.0 - (N - 1) * k / b  # u(b) = 1
    ua = float(u(a))
    breaks = pair.xi.grid
    i1 = (N - 1) * gauss_integral(lambda r: du(r) * u(r) * r ** (N - 3.0), a, b, breaks=breaks)
    r1 = b ** (N - 1) * (dd - k * k) - (a ** (N - 1) * ua * ua if a > 0 else 0.0)
    i2 = 2.0 * gauss_integral(lambda r: u(r) ** 2 * r ** (N - 1.0), a, b, breaks=breaks)
    r2 = b ** (N - 1) * (k + b * dd) - b**N * k * k - a**N * ua * ua
    return [(float(i1), float(r1)), (float(i2), float(r2))]


def green_identity_check(pair: GreenPair, tol: float = 1e-7) -> CheckReport:
    terms = green_identity_terms(pair)
    rel = [abs(l - r) / max(abs(l), abs(r), 1e-300) for l, r in terms]
    worst = int(np.argmax(rel))
    return CheckReport(
        "green_identity",
        {"N": pair.N, "a": pair.a, "b": pair.b},
        terms[worst][0],
        terms[worst][1],
        float(max(rel)),
        max(rel) <= tol,
        extras={"terms": [list(t) for t in terms], "relative": rel},
    )


# ----------------------------------------------------------------------------
# suites

SUITES = ("pohozaev", "blowup", "limit", "sensitivity", "nondeg", "green")


def run_suite(suite: str, N: int = 3) -> List[CheckReport]:
    """Reports of one named suite (or ``all``) for dimension ``N``."""
    if suite == "all":
        out: List[CheckReport] = []
        for s in SUITES:
            out.extend(run_suite(s, N))
        return out
    if suite == "pohozaev":
        return [pohozaev_trend(N), pohozaev_uniform(N)]
    if suite == "blowup":
        rep = blowup_trend(N)
        scale = layer_scale_check(solve_increasing(Params(N=N, mu=LADDER[-1])))
        return [rep, scale]
    if suite == "limit":
        ladder = (150.0, 300.0) if N >= 3 else LADDER
        return [monotone_limit_trend(N), limit_profile_trend(N, ladder)]
    if suite == "sensitivity":
        return [sensitivity_trend(N), sensitivity_trend(N, bs=(0.9, 1.0))]
    if suite == "nondeg":
        return [bifurcation_control(N), nondegeneracy_check(solve_increasing(Params(N=N, mu=200.0)))]
    if suite == "green":
        return [green_identity_check(homogeneous_pair(Params(N=N, a=a))) for a in (0.0, 0.3)]
    raise ValueError(f"unknown suite {suite!r}")
