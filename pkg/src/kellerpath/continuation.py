"""Continuation of the radial branches bifurcating from ``u = 1``.

The discrete problem is the finite-volume system of :mod:`discretize`,

    G(u, mu) = M^-1 A u + u - exp(mu (u - 1)) = 0,

continued in ``(u, mu)`` by a pseudo-arclength predictor-corrector.  The
arclength metric is the cell-volume weighted mean square in ``u`` plus the
plain square in ``mu``.  A branch leaves the trivial line along the
eigenfunction of the corresponding radial Neumann eigenvalue.
"""

from __future__ import annotations

import csv
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .discretize import (
    DEFAULT_NODES,
    RadialFV,
    eig_negative_count,
    negative_count,
    richardson,
    smallest_magnitude_eig,
)
from .errors import CorrectorDivergence, EigSolverFailure, TrivialProfile
from .monotone import lyapunov_violation
from .radial_ode import Params, Profile
from .spectrum import cubic_integral, radial_neumann_eigs

MINUS = "minus"
PLUS = "plus"

STEP_MIN = 1e-4
STEP_MAX = 0.5
STEP_INIT = 0.05
ONSET_OFFSET = 0.1
ONSET_AMPLITUDE = 0.05
NEWTON_TOL = 1e-10
STALL_TOL = 1e-6
RESIDUAL_TOL = 1e-6
C1_CEILING = 200.0
SIMPLE_ZERO_SLOPE = 1e-10


@dataclass
class BranchRecord:
    index: int
    arclength: float
    mu: float
    u0: float
    sup_norm: float
    c1_norm: float
    slope_sup: float
    zeros_of_u_minus_1: int
    critical_points: int
    interlaced: bool
    min_linearized_eig: float
    morse_index: int
    nonsimple_zero: bool
    profile_ref: str = ""
    lyapunov_violation: Optional[float] = None

    def row(self) -> list:
        return [self.mu, self.u0, self.sup_norm, self.c1_norm, self.zeros_of_u_minus_1, self.min_linearized_eig]


CSV_HEADER = ["mu", "u0", "sup_norm", "c1_norm", "zeros", "min_eig"]


@dataclass
class Branch:
    i: int
    sign: str
    params: Params
    nodes: int
    eigenvalue: float
    records: List[BranchRecord] = field(default_factory=list)
    profiles: Dict[str, Profile] = field(default_factory=dict)
    folds: List[float] = field(default_factory=list)
    stop_reason: str = ""
    truncated: bool = False

    @property
    def key(self) -> str:
        return f"B{self.i}{self.sign}"

    def append(self, rec: BranchRecord, prof: Profile) -> None:
        rec.profile_ref = f"{self.key}/{rec.index:05d}"
        if rec.profile_ref in self.profiles:
            raise KeyError(f"profile {rec.profile_ref} already stored")
        self.records.append(rec)
        self.profiles[rec.profile_ref] = prof

    @property
    def mus(self) -> np.ndarray:
        return np.array([r.mu for r in self.records])

    @property
    def u0s(self) -> np.ndarray:
        return np.array([r.u0 for r in self.records])

    def zero_counts(self) -> List[int]:
        return [r.zeros_of_u_minus_1 for r in self.records]

    def sign_consistent(self) -> bool:
        u0 = self.u0s
        return bool(np.all(u0 < 1.0)) if self.sign == MINUS else bool(np.all(u0 > 1.0))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for rec in self.records:
                mu, u0, sup, c1, z, ev = rec.row()
                w.writerow([f"{mu:.17g}", f"{u0:.17g}", f"{sup:.17g}", f"{c1:.17g}", z, f"{ev:.17g}"])

    def manifest(self) -> dict:
        return {
            "branch": self.key,
            "i": self.i,
            "sign": self.sign,
            "params": self.params.as_dict(),
            "nodes": self.nodes,
            "eigenvalue": self.eigenvalue,
            "records": len(self.records),
            "folds": list(self.folds),
            "stop_reason": self.stop_reason,
            "truncated": self.truncated,
        }


# ----------------------------------------------------------------------------
# discrete system


def _system(fv: RadialFV, u: np.ndarray, mu: float):
    with np.errstate(over="ignore"):
        e = np.exp(mu * (u - 1.0))
    res = fv.apply_stiffness(u) / fv.volumes + u - e
    return res, -(u - 1.0) * e


def _bordered(fv: RadialFV, u, mu, border_u, border_mu):
    """Sparse ``[[G_u, G_mu], [border]]``."""
    _, g_mu = _system(fv, u, mu)
    with np.errstate(over="ignore"):
        ju = fv.jacobian(u, mu)
    col = sp.csc_matrix(g_mu.reshape(-1, 1))
    row = sp.csr_matrix(np.append(border_u, border_mu).reshape(1, -1))
    top = sp.hstack([ju, col])
    return sp.vstack([top, row]).tocsc()


class _Metric:
    """Weighted inner product on ``(u, mu)``."""

    def __init__(self, fv: RadialFV):
        v = fv.volumes
        self.w = v / v.sum()

    def dot(self, a, b) -> float:
        return float(np.dot(self.w * a[:-1], b[:-1]) + a[-1] * b[-1])

    def norm(self, a) -> float:
        return float(np.sqrt(self.dot(a, a)))

    def border(self, t):
        return self.w * t[:-1], t[-1]


def _settled(dy, prev: float, y) -> bool:
    """Update below tolerance, or stagnating at roundoff level.

    Rows of the scaled system carry entries of size ``1/h^2``, so the
    residual bottoms out near ``eps / h^2`` and the update with it.
    """
    step = float(np.max(np.abs(dy)))
    scale = 1.0 + float(np.max(np.abs(y)))
    return step <= NEWTON_TOL * scale or (step <= STALL_TOL * scale and step >= 0.5 * prev)


def newton_fixed_mu(fv: RadialFV, u0: np.ndarray, mu: float, max_iter: int = 30) -> np.ndarray:
    """Plain Newton for ``G(., mu) = 0``.

    Raises
    ------
    CorrectorDivergence
        If the update does not settle within ``max_iter`` iterations.
    """
    u = np.array(u0, float)
    prev = np.inf
    for it in range(max_iter):
        res, _ = _system(fv, u, mu)
        du = spsolve(fv.jacobian(u, mu), -res)
        if not np.all(np.isfinite(du)):
            break
        u = u + du
        done = _settled(du, prev, u)
        prev = float(np.max(np.abs(du)))
        if done:
            res, _ = _system(fv, u, mu)
            if np.max(np.abs(res)) <= RESIDUAL_TOL:
                return u
    raise CorrectorDivergence("fixed-mu Newton did not converge", mu=mu, iterations=max_iter)


def newton_amplitude(fv: RadialFV, u0: np.ndarray, mu0: float, phi: np.ndarray, amp: float, max_iter: int = 30):
    """Solve ``G(u, mu) = 0`` with ``<u - 1, phi>_M = amp`` for ``(u, mu)``."""
    metric = _Metric(fv)
    y = np.append(np.array(u0, float), mu0)
    wphi = metric.w * phi
    prev = np.inf
    for it in range(max_iter):
        u, mu = y[:-1], y[-1]
        res, _ = _system(fv, u, mu)
        rhs = -np.append(res, np.dot(wphi, u - 1.0) - amp)
        dy = spsolve(_bordered(fv, u, mu, wphi, 0.0), rhs)
        if not np.all(np.isfinite(dy)):
            break
        y = y + dy
        done = _settled(dy, prev, y)
        prev = float(np.max(np.abs(dy)))
        if done:
            return y[:-1], float(y[-1])
    raise CorrectorDivergence("amplitude-constrained Newton did not converge", mu=mu0, amp=amp)


def node_profile(fv: RadialFV, u: np.ndarray, params: Optional[Params] = None) -> Profile:
    """Profile on the finite-volume nodes; slopes by second-order differences, zero at the ends."""
    du = np.gradient(u, fv.h, edge_order=2)
    du[0] = 0.0
    du[-1] = 0.0
    return Profile(fv.r, u, du, params)


# ----------------------------------------------------------------------------
# classification


def _is_uniform(grid: np.ndarray) -> bool:
    d = np.diff(grid)
    return bool(np.max(np.abs(d - d[0])) <= 1e-9 * d[0])


def classify(profile: Profile, mu: float, N: Optional[int] = None, nodes: int = DEFAULT_NODES) -> BranchRecord:
    """Zero structure, norms and linearized spectrum of a solution profile.

    The smallest-magnitude eigenvalue and the Morse index come from the
    finite-volume linearization on ``profile``'s grid when it is uniform,
    otherwise on a uniform resampling with ``nodes`` points.

    Raises
    ------
    TrivialProfile
        For (numerically) constant profiles, whose zero count is undefined.
    """
    if N is None:
        if profile.params is None:
            raise ValueError("dimension unknown: pass N or a profile with params")
        N = profile.params.N
    if np.max(np.abs(profile.u - 1.0)) < 1e-12:
        raise TrivialProfile("constant profile has no zero structure")
    p = profile if _is_uniform(profile.grid) else profile.resample(nodes)
    r, u, du = p.grid, p.u, p.du
    v = u - 1.0
    # zeros of u - 1 by linear location between sign changes
    s = np.sign(v)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    zeros = r[idx] - v[idx] * (r[idx + 1] - r[idx]) / (v[idx + 1] - v[idx])
    exact = np.nonzero(s[1:-1] == 0)[0] + 1
    zeros = np.sort(np.concatenate([zeros, r[exact]]))
    nonsimple = bool(zeros.size and np.min(np.abs(p.deriv(zeros))) < SIMPLE_ZERO_SLOPE)
    # interior critical points
    d_in = du[1:-1]
    cs = np.sign(d_in)
    keep = np.abs(d_in) > 1e-12 * max(1.0, np.max(np.abs(du)))
    cs = cs[keep]
    ci = np.nonzero(cs[:-1] * cs[1:] < 0)[0]
    crit = r[1:-1][keep][ci]
    interlaced = all(np.any(zeros < c) and np.any(zeros > c) for c in crit)
    fv = RadialFV(int(N), float(r[0]), float(r[-1]), int(r.size))
    try:
        ev = smallest_magnitude_eig(fv, u, mu)
    except EigSolverFailure:
        ev = float("nan")
    morse = eig_negative_count(fv, u, mu)
    return BranchRecord(
        index=0,
        arclength=0.0,
        mu=float(mu),
        u0=float(u[0]),
        sup_norm=float(np.max(np.abs(u))),
        c1_norm=float(np.max(np.abs(u)) + np.max(np.abs(du))),
        slope_sup=float(np.max(np.abs(du))),
        zeros_of_u_minus_1=int(zeros.size),
        critical_points=int(crit.size),
        interlaced=bool(interlaced),
        min_linearized_eig=float(ev),
        morse_index=int(morse),
        nonsimple_zero=nonsimple,
    )


# ----------------------------------------------------------------------------
# bifurcation points


def discrete_crossings(params: Params, mu_range: Tuple[float, float], nodes: int = DEFAULT_NODES) -> List[float]:
    """Values of ``mu`` in the open range where the discrete Jacobian at ``u = 1`` is singular.

    The Jacobian there is similar to ``K + (1 - mu) I`` with ``K`` the
    symmetrized stiffness; its determinant changes sign exactly where the
    Sturm count of ``K - (mu - 1)`` jumps.  Crossings are isolated by
    bisection on that count, independently of the shooting eigenvalues.
    """
    lo, hi = map(float, mu_range)
    fv = RadialFV(params.N, params.a, params.b, nodes)
    d, o = fv.linearization(np.ones(nodes), 0.0)
    d = d - 1.0  # K alone: at mu = 0 the shift term q is 1
    cnt = lambda mu: negative_count(d, o, mu - 1.0)
    out: List[float] = []

    def split(a, b, ca, cb):
        if cb == ca:
            return
        if cb - ca == 1 and b - a < 1e-12 * max(1.0, b):
            out.append(0.5 * (a + b))
            return
        m = 0.5 * (a + b)
        cm = cnt(m)
        split(a, m, ca, cm)
        split(m, b, cm, cb)

    split(lo, hi, cnt(lo), cnt(hi))
    # the constant mode crosses at mu = 1 up to roundoff; the range is open
    return [m for m in out if lo < m < hi and abs(m - 1.0) > 1e-8]


def extrapolated_crossings(params: Params, mu_range, nodes: int = DEFAULT_NODES) -> List[float]:
    """Richardson combination of the crossings on ``nodes`` and ``2 nodes - 1`` points."""
    coarse = discrete_crossings(params, mu_range, nodes)
    fine = discrete_crossings(params, mu_range, 2 * nodes - 1)
    if len(coarse) != len(fine):
        # a crossing drifted over a range end; keep the common ones
        n = min(len(coarse), len(fine))
        coarse, fine = coarse[:n], fine[:n]
    return [richardson(c, f) for c, f in zip(coarse, fine)]


def detect_bifurcation(params: Params, mu_range: Tuple[float, float], nodes: int = DEFAULT_NODES, crosscheck: bool = True) -> List[float]:
    """Bifurcation values of ``mu`` from the trivial line inside ``mu_range``.

    These are the radial Neumann eigenvalues above 1 in the open range.  With
    ``crosscheck`` the discrete Jacobian crossings at ``nodes`` points must
    match them one to one within ``1e-4``; a mismatch raises ``RuntimeError``.
    """
    lo, hi = map(float, mu_range)
    if not hi > lo:
        raise ValueError("empty range")
    count = 2
    while True:
        eigs = radial_neumann_eigs(params, count)
        if eigs[-1].lam >= hi:
            break
        count += 1
    lams = [e.lam for e in eigs[1:] if lo < e.lam < hi]
    if crosscheck:
        disc = discrete_crossings(params, (lo, hi), nodes)
        if len(disc) != len(lams) or any(abs(x - y) > 1e-4 for x, y in zip(disc, lams)):
            raise RuntimeError(f"bifurcation cross-check failed: analytic {lams}, discrete {disc}")
    return lams


# ----------------------------------------------------------------------------
# branch tracing


def _onset(fv: RadialFV, params: Params, i: int, sign: str):
    """First point of the branch and the eigen-direction on the nodes."""
    eig = radial_neumann_eigs(params, i)[-1]
    phi = eig.phi(fv.r)
    eps = ONSET_AMPLITUDE / np.max(np.abs(phi))
    sgn = -1.0 if sign == MINUS else 1.0
    guess = 1.0 + sgn * eps * phi
    # positive cubic integral: the branch with u(0) < 1 lives right of the eigenvalue
    c3 = cubic_integral(eig)
    right = (sign == MINUS) == (c3 > 0.0)
    sides = (ONSET_OFFSET, -ONSET_OFFSET) if right else (-ONSET_OFFSET, ONSET_OFFSET)
    for off in sides:
        try:
            u = newton_fixed_mu(fv, guess, eig.lam + off)
        except CorrectorDivergence:
            continue
        dev = u - 1.0
        if np.max(np.abs(dev)) > 1e-4 and np.sign(dev[0]) == sgn:
            return eig, phi, u, eig.lam + off
    # fall back to prescribing the projection on the eigenfunction
    metric = _Metric(fv)
    amp = sgn * eps * metric.dot(np.append(phi, 0.0), np.append(phi, 0.0))
    u, mu = newton_amplitude(fv, guess, eig.lam, phi, amp)
    return eig, phi, u, mu


def onset_limit(params: Params, i: int, sign: str = MINUS, amps=(1e-3, 5e-4, 2.5e-4, 1.25e-4), nodes: int = DEFAULT_NODES):
    """Limit of ``mu`` along the branch as the eigen-amplitude shrinks to 0.

    Returns ``(pairs, mu0)``: the ``(amplitude, mu)`` samples and the value
    at zero amplitude of the interpolating polynomial through them.  Very
    small amplitudes are avoided because ``mu`` is then fixed by a quadratic
    term drowned in roundoff.
    """
    fv = RadialFV(params.N, params.a, params.b, nodes)
    eig = radial_neumann_eigs(params, i)[-1]
    phi = eig.phi(fv.r)
    metric = _Metric(fv)
    norm2 = metric.dot(np.append(phi, 0.0), np.append(phi, 0.0))
    sgn = -1.0 if sign == MINUS else 1.0
    out = []
    for a in amps:
        u, mu = newton_amplitude(fv, 1.0 + sgn * a * phi, eig.lam, phi, sgn * a * norm2)
        out.append((float(a), float(mu)))
    x = np.array(out)
    coef = np.polyfit(x[:, 0], x[:, 1], len(out) - 1)
    return out, float(coef[-1])


def _tangent(fv, metric, u, mu, prev):
    bu, bm = metric.border(prev)
    rhs = np.zeros(u.size + 1)
    rhs[-1] = 1.0
    t = spsolve(_bordered(fv, u, mu, bu, bm), rhs)
    return t / metric.norm(t)


def _corrector(fv, metric, y_pred, t, max_iter: int = 10):
    y = y_pred.copy()
    bu, bm = metric.border(t)
    prev = np.inf
    for it in range(1, max_iter + 1):
        u, mu = y[:-1], y[-1]
        res, _ = _system(fv, u, mu)
        arc = metric.dot(t, y - y_pred)
        if not np.all(np.isfinite(res)):
            return None, it
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MatrixRankWarning)
            dy = spsolve(_bordered(fv, u, mu, bu, bm), -np.append(res, arc))
        if not np.all(np.isfinite(dy)):
            return None, it
        y = y + dy
        done = _settled(dy, prev, y)
        prev = float(np.max(np.abs(dy)))
        if done:
            res, _ = _system(fv, y[:-1], y[-1])
            if np.max(np.abs(res)) <= RESIDUAL_TOL:
                return y, it
    return None, max_iter


def trace_branch(
    params: Params,
    i: int,
    sign: str,
    mu_max: float,
    max_steps: int = 400,
    nodes: int = DEFAULT_NODES,
    ds: float = STEP_INIT,
    c1_ceiling: float = C1_CEILING,
    mu_min: float = 1.0,
) -> Branch:
    """Follow the branch ``(i, sign)`` out of the trivial line.

    Stops when ``mu`` leaves ``(mu_min, mu_max)``, when the C1 norm passes
    ``c1_ceiling``, after ``max_steps`` accepted steps, or when the step
    would have to drop below the minimal size (the branch is then flagged
    as truncated).  ``stop_reason`` names which of these fired.
    """
    if i < 2:
        raise ValueError("branches start at i >= 2")
    if sign not in (MINUS, PLUS):
        raise ValueError(f"sign must be '{MINUS}' or '{PLUS}'")
    fv = RadialFV(params.N, params.a, params.b, nodes)
    eig, phi, u, mu = _onset(fv, params, i, sign)
    if not mu_max > eig.lam:
        raise ValueError("mu_max must exceed the bifurcation value")
    metric = _Metric(fv)
    br = Branch(i=i, sign=sign, params=params.with_(mu=mu), nodes=nodes, eigenvalue=eig.lam)
    y = np.append(u, mu)
    # orient away from the bifurcation point
    t = _tangent(fv, metric, u, mu, y - np.append(np.ones_like(u), eig.lam))
    s_total = 0.0
    _store(br, fv, y, 0, s_total)
    ds = min(max(ds, STEP_MIN), STEP_MAX)
    step = 0
    while True:
        if y[-1] >= mu_max:
            br.stop_reason = "mu_max"
            break
        if y[-1] <= mu_min:
            br.stop_reason = "mu_min"
            break
        if br.records[-1].c1_norm > c1_ceiling:
            br.stop_reason = "c1_ceiling"
            break
        if step >= max_steps:
            br.stop_reason = "max_steps"
            break
        y_new, iters = _corrector(fv, metric, y + ds * t, t)
        if y_new is not None and metric.norm(y_new - y) > 2.0 * ds:
            y_new = None  # jumped to another branch
        if y_new is not None and np.max(np.abs(y_new[:-1] - 1.0)) < 1e-6:
            y_new = None  # fell back onto the trivial line
        if y_new is None:
            ds *= 0.5
            if ds < STEP_MIN:
                br.stop_reason = "min_step"
                br.truncated = True
                break
            continue
        t_new = _tangent(fv, metric, y_new[:-1], y_new[-1], t)
        if np.sign(t_new[-1]) != np.sign(t[-1]) and t[-1] != 0.0:
            br.folds.append(float(y_new[-1]))
        s_total += ds
        step += 1
        y, t = y_new, t_new
        _store(br, fv, y, step, s_total)
        if iters <= 3:
            ds = min(1.5 * ds, STEP_MAX)
        elif iters >= 6:
            ds = max(0.7 * ds, STEP_MIN)
    return br


def _store(br: Branch, fv: RadialFV, y: np.ndarray, index: int, s: float) -> None:
    prof = node_profile(fv, y[:-1], br.params.with_(mu=float(y[-1])))
    rec = classify(prof, float(y[-1]), br.params.N)
    rec.index = index
    rec.arclength = float(s)
    if br.sign == MINUS and index % 5 == 0:
        rec.lyapunov_violation = lyapunov_violation(prof, float(y[-1]))
    br.append(rec, prof)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("KELLERPATH_THREADS", "1")))
    except ValueError:
        return 1


def trace_branches(params: Params, items: Sequence[Tuple[int, str]], mu_max: float, **kw) -> List[Branch]:
    """Trace several ``(i, sign)`` branches, concurrently up to ``KELLERPATH_THREADS`` workers."""
    with ThreadPoolExecutor(max_workers=_workers()) as ex:
        futs = [ex.submit(trace_branch, params, i, s, mu_max, **kw) for i, s in items]
        return [f.result() for f in futs]


def record_dict(rec: BranchRecord) -> dict:
    return asdict(rec)
