"""Radial Neumann eigenpairs of ``-Laplace + Id`` on balls and annuli.

Eigenvalues are located by shooting in ``lam``: the solution of
``L phi = lam phi`` with ``phi(a) = 1, phi'(a) = 0`` is an eigenfunction
exactly when ``phi'(b) = 0``.  Brackets come from a coarse scan in ``lam``
checked against the Sturm zero count of the shooting solution.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import List

import numpy as np
from scipy.optimize import brentq

from .errors import BracketFailure
from .radial_ode import Params, Profile, Source, State, integrate, profile_integral

SCAN_STEP = 1.0
EIG_XTOL = 1e-12
EIG_RTOL = 1e-12
EIG_ATOL = 1e-14


@dataclass(frozen=True)
class EigenPair:
    index: int
    lam: float
    phi: Profile
    params: Params

    def __repr__(self) -> str:
        return f"EigenPair(index={self.index}, lam={self.lam:.12g})"


def _shoot(lam: float, N: int, a: float, b: float, rtol: float = EIG_RTOL, atol: float = EIG_ATOL):
    tr = integrate(Source.affine(lam), State(a, 1.0, 0.0), b, N, rtol, atol, u_cap=1e12)
    return tr.profile


def _end_slope(lam, N, a, b):
    return float(_shoot(lam, N, a, b, 1e-11, 1e-13).du[-1])


def count_sign_changes(values) -> int:
    s = np.sign(np.asarray(values))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def _zeros(lam, N, a, b) -> int:
    return count_sign_changes(_shoot(lam, N, a, b, 1e-9, 1e-12).u)


def radial_neumann_eigs(params: Params, count: int) -> List[EigenPair]:
    """First ``count`` radial Neumann eigenpairs on ``[params.a, params.b]``.

    The first eigenvalue is 1 with a constant eigenfunction.  Each higher
    one is the root of ``lam -> phi'(b; lam)``; the scan proceeds in steps of
    ``SCAN_STEP`` and is subdivided wherever the zero count of the shooting
    solution jumps by more than one between scan points.

    Raises
    ------
    BracketFailure
        When the scan cannot isolate the requested number of roots.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    lams = _eigenvalues(int(params.N), float(params.a), float(params.b), int(count))
    return [_pair(i + 1, lam, params) for i, lam in enumerate(lams)]


@lru_cache(maxsize=256)
def _eigenvalues(N: int, a: float, b: float, count: int) -> tuple:
    lams = [1.0]
    scan = []
    lam_lo = 1.0 + 0.5 * SCAN_STEP
    f_lo = _end_slope(lam_lo, N, a, b)
    z_lo = _zeros(lam_lo, N, a, b)
    max_iter = 100000
    it = 0
    step = SCAN_STEP
    while len(lams) < count:
        it += 1
        if it > max_iter:
            raise BracketFailure("eigenvalue scan exhausted", scan=scan[-20:], found=lams)
        lam_hi = lam_lo + step
        f_hi = _end_slope(lam_hi, N, a, b)
        z_hi = _zeros(lam_hi, N, a, b)
        if z_hi - z_lo > 1 and step > 1e-6:
            step *= 0.5
            continue
        scan.append((lam_hi, f_hi, z_hi))
        if f_lo == 0.0:
            lams.append(lam_lo)
        elif np.sign(f_hi) != np.sign(f_lo):
            root = brentq(_end_slope, lam_lo, lam_hi, args=(N, a, b), xtol=EIG_XTOL, rtol=4 * np.finfo(float).eps)
            lams.append(float(root))
        lam_lo, f_lo, z_lo = lam_hi, f_hi, z_hi
        step = SCAN_STEP
    return tuple(lams[:count])


def _pair(index: int, lam: float, params: Params) -> EigenPair:
    N, a, b = params.N, params.a, params.b
    if index == 1:
        grid = np.linspace(a, b, 3)
        prof = Profile(grid, np.ones(3), np.zeros(3), params, np.zeros(3))
    else:
        prof = _shoot(lam, N, a, b)
    norm2 = params.omega * profile_integral(prof, lambda r, u, du: u * u, N - 1)
    prof = prof.scaled(1.0 / np.sqrt(norm2))
    if prof.u[0] < 0:
        prof = prof.scaled(-1.0)
    return EigenPair(index, float(lam), Profile(prof.grid, prof.u, prof.du, params, prof.ddu), params)


def cubic_integral(e: EigenPair) -> float:
    """``omega * int phi^3 r^(N-1) dr``."""
    p = e.params
    return p.omega * profile_integral(e.phi, lambda r, u, du: u**3, p.N - 1)


def transcritical_coefficient(e: EigenPair) -> float:
    """Coefficient ``-lam^2/2 * int phi^3`` governing the branch direction."""
    return -0.5 * e.lam**2 * cubic_integral(e)


def second_eigenvalue(N: int, a: float, b: float) -> float:
    """Existence threshold for monotone solutions on ``(a, b)``."""
    return _eigenvalues(int(N), float(a), float(b), 2)[1]


def count_below(N: int, a: float, b: float, lam: float) -> int:
    """Number of radial Neumann eigenvalues strictly below ``lam`` (``lam > 1``).

    Prufer-angle count from one shooting solution: with ``m`` interior
    zeros of ``phi(.; lam)`` the angle at ``b`` lies in ``(m pi, (m+1) pi)``,
    and it has passed the next Neumann level exactly when
    ``phi(b) phi'(b) < 0``.
    """
    if lam <= 1.0:
        return 0
    prof = _shoot(lam, N, a, b, 1e-10, 1e-13)
    m = count_sign_changes(prof.u)
    return m + (1 if prof.u[-1] * prof.du[-1] < 0.0 else 0)
