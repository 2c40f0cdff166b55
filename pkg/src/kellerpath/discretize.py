"""Conservative finite-volume discretization of the radial operator.

Nodes ``r_0 = a < ... < r_n = b`` are uniform; node ``i`` owns the cell
between the neighbouring face midpoints (clipped at the ends).  With face
fluxes ``r_f^(N-1) (u_{i+1} - u_i) / h`` and zero flux at both ends,

    (A u)_i = -(F_{i+1/2} - F_{i-1/2}),   M = diag(cell volumes),

so ``A u + M (u - g(u)) = 0`` is the discrete Neumann problem.  ``A`` is
symmetric tridiagonal and ``M`` diagonal; every linearization is a
symmetric-definite tridiagonal pencil.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.linalg import solve_banded

from .errors import EigSolverFailure

DEFAULT_NODES = 4001


@dataclass(frozen=True)
class RadialFV:
    N: int
    a: float
    b: float
    n: int  # number of nodes

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n - 1)

    @property
    def r(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.n)

    @property
    def faces(self) -> np.ndarray:
        r = self.r
        return 0.5 * (r[1:] + r[:-1])

    @property
    def volumes(self) -> np.ndarray:
        return _volumes(self.N, self.a, self.b, self.n)

    @property
    def stiffness(self):
        """``(diag, off)`` of the symmetric tridiagonal ``A``."""
        return _stiffness(self.N, self.a, self.b, self.n)

    def apply_stiffness(self, u: np.ndarray) -> np.ndarray:
        d, o = self.stiffness
        out = d * u
        out[:-1] += o * u[1:]
        out[1:] += o * u[:-1]
        return out

    def residual(self, u: np.ndarray, mu: float) -> np.ndarray:
        """``M^-1 (A u) + u - e^{mu(u-1)}``: pointwise discrete equation."""
        return self.apply_stiffness(u) / self.volumes + u - np.exp(mu * (u - 1.0))

    def linearization(self, u: np.ndarray, mu: float):
        """Symmetrically scaled tridiagonal ``M^-1/2 (A + M q) M^-1/2``.

        ``q = 1 - mu e^{mu(u-1)}``; its eigenvalues are those of the
        linearized operator ``-Lap + 1 - mu e^{mu(u-1)}``.
        """
        d, o = self.stiffness
        v = self.volumes
        q = 1.0 - mu * np.exp(mu * (u - 1.0))
        s = 1.0 / np.sqrt(v)
        return d * s * s + q, o * s[:-1] * s[1:]

    def jacobian(self, u: np.ndarray, mu: float) -> sp.csc_matrix:
        """Sparse Jacobian of ``M^-1 A u + u - g(u)`` in ``u``."""
        d, o = self.stiffness
        v = self.volumes
        q = 1.0 - mu * np.exp(mu * (u - 1.0))
        main = d / v + q
        up = o / v[:-1]
        lo = o / v[1:]
        return sp.diags([lo, main, up], [-1, 0, 1], format="csc")


@lru_cache(maxsize=64)
def _volumes(N, a, b, n):
    r = np.linspace(a, b, n)
    f = np.concatenate([[a], 0.5 * (r[1:] + r[:-1]), [b]])
    return (f[1:] ** N - f[:-1] ** N) / N


@lru_cache(maxsize=64)
def _stiffness(N, a, b, n):
    r = np.linspace(a, b, n)
    h = r[1] - r[0]
    f = 0.5 * (r[1:] + r[:-1])
    k = f ** (N - 1) / h
    d = np.zeros(n)
    d[:-1] += k
    d[1:] += k
    return d, -k


def negative_count(diag: np.ndarray, off: np.ndarray, shift: float = 0.0) -> int:
    """Number of eigenvalues below ``shift`` of a symmetric tridiagonal (Sturm count)."""
    return int(_sturm(np.ascontiguousarray(diag, dtype=np.float64), np.ascontiguousarray(off, dtype=np.float64), float(shift)))


@njit(cache=True)
def _sturm(diag, off, shift):
    cnt = 0
    p = diag[0] - shift
    if p < 0:
        cnt += 1
    tiny = 2.2250738585072014e-308
    for i in range(1, diag.size):
        if p == 0.0:
            p = tiny
        p = diag[i] - shift - off[i - 1] ** 2 / p
        if p < 0:
            cnt += 1
    return cnt


def _banded(diag, off, shift):
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = off
    ab[1] = diag - shift
    ab[2, :-1] = off
    return ab


def inverse_iteration(diag, off, shift: float = 0.0, tol: float = 1e-13, max_iter: int = 500, seed: int = 0):
    """Eigenpair of a symmetric tridiagonal closest to ``shift``.

    Plain inverse iteration with Rayleigh-quotient estimates.

    Raises
    ------
    EigSolverFailure
        If the Rayleigh quotient does not settle.
    """
    n = diag.size
    ab = _banded(diag, off, shift)
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    lam_old = np.inf
    scale = float(np.max(np.abs(diag)) + 2.0 * np.max(np.abs(off), initial=0.0))
    for it in range(max_iter):
        try:
            y = solve_banded((1, 1), ab, x)
        except np.linalg.LinAlgError:
            return shift, x
        x = y / np.linalg.norm(y)
        tx = diag * x
        tx[:-1] += off * x[1:]
        tx[1:] += off * x[:-1]
        lam = float(x @ tx)
        res = np.linalg.norm(tx - lam * x)
        # eigenvalue error is bounded by res^2 / gap; roundoff floors res near eps * scale
        if it >= 2 and (res <= 1e-12 * scale or abs(lam - lam_old) <= tol * max(1.0, abs(lam))):
            return lam, x
        lam_old = lam
    raise EigSolverFailure("inverse iteration did not converge", last=lam_old, iterations=max_iter)


def smallest_magnitude_eig(fv: RadialFV, u: np.ndarray, mu: float) -> float:
    d, o = fv.linearization(u, mu)
    lam, _ = inverse_iteration(d, o, 0.0)
    return lam


def eig_negative_count(fv: RadialFV, u: np.ndarray, mu: float) -> int:
    d, o = fv.linearization(u, mu)
    return negative_count(d, o, 0.0)


def richardson(coarse: float, fine: float, order: int = 2) -> float:
    """Extrapolate ``h`` and ``h/2`` values assuming error ``C h^order``."""
    f = 2.0**order
    return (f * fine - coarse) / (f - 1.0)
