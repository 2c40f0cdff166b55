"""Compiled Dormand-Prince 5(4) kernel for the radial operator.

State is ``(u, v)`` with ``v = u'`` and

    u' = v
    v' = u - g(u) - (N - 1) v / r

The source ``g`` is selected by an integer code so the kernel stays a
single cacheable compiled function:

    SOURCE_AFFINE       g(u) = p0 * u + p1
    SOURCE_EXPONENTIAL  g(u) = exp(p0 * (u - 1))
"""

import math

import numpy as np
from numba import njit

SOURCE_AFFINE = 0
SOURCE_EXPONENTIAL = 1

STATUS_OK = 0
STATUS_TURN = 1
STATUS_BLOWUP = 2
STATUS_UNDERFLOW = 3
STATUS_MAXSTEPS = 4

# Dormand-Prince tableau
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)


@njit(cache=True)
def source(kind, p0, p1, u):
    if kind == SOURCE_AFFINE:
        return p0 * u + p1
    return math.exp(p0 * (u - 1.0))


@njit(cache=True)
def dsource(kind, p0, p1, u):
    if kind == SOURCE_AFFINE:
        return p0
    return p0 * math.exp(p0 * (u - 1.0))


@njit(cache=True)
def accel(kind, p0, p1, dim, r, u, v):
    """Second derivative u'' from the ODE (removable limit at r = 0)."""
    if r == 0.0:
        return (u - source(kind, p0, p1, u)) / dim
    return u - source(kind, p0, p1, u) - (dim - 1.0) * v / r


@njit(cache=True)
def _grow(arr, n):
    out = np.empty(2 * n)
    out[:n] = arr[:n]
    return out


@njit(cache=True)
def _hermite_root(r0, r1, v0, v1, a0, a1):
    # root of the cubic Hermite interpolant of v on [r0, r1]
    h = r1 - r0
    lo, hi = 0.0, 1.0
    flo = v0
    for _ in range(80):
        t = 0.5 * (lo + hi)
        t2 = t * t
        t3 = t2 * t
        val = (
            (2 * t3 - 3 * t2 + 1) * v0
            + (t3 - 2 * t2 + t) * h * a0
            + (-2 * t3 + 3 * t2) * v1
            + (t3 - t2) * h * a1
        )
        if (val > 0.0) == (flo > 0.0):
            lo = t
            flo = val
        else:
            hi = t
    return r0 + 0.5 * (lo + hi) * h


@njit(cache=True)
def integrate_kernel(
    kind,
    p0,
    p1,
    dim,
    r0,
    u0,
    v0,
    r1,
    rtol,
    atol,
    h_max,
    series_h,
    stops,
    turn_sign,
    u_cap,
    max_steps,
):
    """Integrate from ``r0`` to ``r1`` (either direction).

    ``stops`` is a strictly monotone array (in the direction of travel) of
    radii the integrator must land on exactly; pass an empty array for none.
    ``turn_sign`` != 0 stops the integration when ``turn_sign * v`` falls
    from positive to non-positive.

    Returns (r, u, v, a, is_stop, status, r_event, max_err).
    """
    direction = 1.0 if r1 > r0 else -1.0
    cap = 1024
    rs = np.empty(cap)
    us = np.empty(cap)
    vs = np.empty(cap)
    acc = np.empty(cap)
    flag = np.empty(cap)
    n = 0

    r = r0
    u = u0
    v = v0
    rs[0] = r
    us[0] = u
    vs[0] = v
    acc[0] = accel(kind, p0, p1, dim, r, u, v)
    flag[0] = 1.0 if (stops.size > 0 and stops[0] == r0) else 0.0
    n = 1
    k_stop = 0
    while k_stop < stops.size and (stops[k_stop] - r) * direction <= 0.0:
        k_stop += 1

    span = abs(r1 - r0)
    max_err = 0.0

    # series start off the singular point r = 0
    if r0 == 0.0 and dim > 1.0:
        h0 = min(series_h, span)
        if k_stop < stops.size:
            h0 = min(h0, stops[k_stop] - r0)
        # u = u0 + A r^2 + B r^4 with A = (u0 - g0) / (2N)
        c_a = 0.5 * (u0 - source(kind, p0, p1, u0)) / dim
        c_b = (1.0 - dsource(kind, p0, p1, u0)) * c_a / (4.0 * (dim + 2.0))
        r = h0
        u = u0 + c_a * h0 * h0 + c_b * h0**4
        v = 2.0 * c_a * h0 + 4.0 * c_b * h0**3
        rs[1] = r
        us[1] = u
        vs[1] = v
        acc[1] = accel(kind, p0, p1, dim, r, u, v)
        flag[1] = 1.0 if (k_stop < stops.size and stops[k_stop] == r) else 0.0
        if flag[1] == 1.0:
            k_stop += 1
        n = 2

    h = min(h_max, max(span * 1e-3, 1e-8))
    if r0 == 0.0:
        h = min(h, max(series_h, 1e-8))
    k1u = v
    k1v = accel(kind, p0, p1, dim, r, u, v)
    status = STATUS_OK
    r_event = r1
    steps = 0
    while (r1 - r) * direction > 0.0:
        if steps >= max_steps:
            status = STATUS_MAXSTEPS
            r_event = r
            break
        target = r1
        if k_stop < stops.size:
            target = stops[k_stop]
        hit = False
        h_free = h
        if h >= abs(target - r):
            h = abs(target - r)
            hit = True
        if h < 1e-14 * max(1.0, abs(r)):
            status = STATUS_UNDERFLOW
            r_event = r
            break
        hs = h * direction
        r2 = r + _C2 * hs
        u2 = u + hs * (_A21 * k1u)
        v2 = v + hs * (_A21 * k1v)
        k2u = v2
        k2v = u2 - source(kind, p0, p1, u2) - (dim - 1.0) * v2 / r2
        r3 = r + _C3 * hs
        u3 = u + hs * (_A31 * k1u + _A32 * k2u)
        v3 = v + hs * (_A31 * k1v + _A32 * k2v)
        k3u = v3
        k3v = u3 - source(kind, p0, p1, u3) - (dim - 1.0) * v3 / r3
        r4 = r + _C4 * hs
        u4 = u + hs * (_A41 * k1u + _A42 * k2u + _A43 * k3u)
        v4 = v + hs * (_A41 * k1v + _A42 * k2v + _A43 * k3v)
        k4u = v4
        k4v = u4 - source(kind, p0, p1, u4) - (dim - 1.0) * v4 / r4
        r5 = r + _C5 * hs
        u5 = u + hs * (_A51 * k1u + _A52 * k2u + _A53 * k3u + _A54 * k4u)
        v5 = v + hs * (_A51 * k1v + _A52 * k2v + _A53 * k3v + _A54 * k4v)
        k5u = v5
        k5v = u5 - source(kind, p0, p1, u5) - (dim - 1.0) * v5 / r5
        r6 = r + hs
        u6 = u + hs * (_A61 * k1u + _A62 * k2u + _A63 * k3u + _A64 * k4u + _A65 * k5u)
        v6 = v + hs * (_A61 * k1v + _A62 * k2v + _A63 * k3v + _A64 * k4v + _A65 * k5v)
        k6u = v6
        k6v = u6 - source(kind, p0, p1, u6) - (dim - 1.0) * v6 / r6
        un = u + hs * (_B1 * k1u + _B3 * k3u + _B4 * k4u + _B5 * k5u + _B6 * k6u)
        vn = v + hs * (_B1 * k1v + _B3 * k3v + _B4 * k4v + _B5 * k5v + _B6 * k6v)
        rn = r6
        if hit:
            rn = target
        k7u = vn
        k7v = un - source(kind, p0, p1, un) - (dim - 1.0) * vn / rn
        eu = hs * (_E1 * k1u + _E3 * k3u + _E4 * k4u + _E5 * k5u + _E6 * k6u + _E7 * k7u)
        ev = hs * (_E1 * k1v + _E3 * k3v + _E4 * k4v + _E5 * k5v + _E6 * k6v + _E7 * k7v)
        su = atol + rtol * max(abs(u), abs(un))
        sv = atol + rtol * max(abs(v), abs(vn))
        err = max(abs(eu) / su, abs(ev) / sv)
        if not (err == err):
            err = 1e10
        if err <= 1.0:
            steps += 1
            if err > max_err:
                max_err = err
            if n >= rs.size:
                rs = _grow(rs, n)
                us = _grow(us, n)
                vs = _grow(vs, n)
                acc = _grow(acc, n)
                flag = _grow(flag, n)
            if turn_sign != 0.0 and turn_sign * v > 0.0 and turn_sign * vn <= 0.0:
                r_event = _hermite_root(r, rn, v, vn, k1v, k7v)
                rs[n] = rn
                us[n] = un
                vs[n] = vn
                acc[n] = k7v
                flag[n] = 0.0
                n += 1
                status = STATUS_TURN
                break
            rs[n] = rn
            us[n] = un
            vs[n] = vn
            acc[n] = k7v
            flag[n] = 1.0 if hit and k_stop < stops.size else 0.0
            n += 1
            if hit and k_stop < stops.size:
                k_stop += 1
            r = rn
            u = un
            v = vn
            k1u = k7u
            k1v = k7v
            if abs(u) > u_cap or not (u == u):
                status = STATUS_BLOWUP
                r_event = r
                break
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            if not hit:
                h = min(h_max, h * fac)
            else:
                h = min(h_max, max(h_free, h * fac))
        else:
            h = h * max(0.2, 0.9 * err ** -0.2)
    return rs[:n], us[:n], vs[:n], acc[:n], flag[:n], status, r_event, max_err
