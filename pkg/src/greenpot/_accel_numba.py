"""Numba-compiled implementations of the hot evaluation kernels.

The rectangle-kernel cores share the trigonometric factors among the
eight image terms and advance the correction series by multiplicative
recurrences, so each evaluation needs only a handful of transcendental
calls.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

_JIT = dict(cache=True, nogil=True, fastmath=False)


@njit(**_JIT)
def log_potential_matrix(x, xi):
    n, m = x.shape[0], xi.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            dx = x[i, 0] - xi[j, 0]
            dy = x[i, 1] - xi[j, 1]
            out[i, j] = -math.log(dx * dx + dy * dy) / (2.0 * TWO_PI)
    return out


@njit(**_JIT)
def log_potential_pairs(x, xi):
    n = x.shape[0]
    out = np.empty(n)
    for i in range(n):
        dx = x[i, 0] - xi[i, 0]
        dy = x[i, 1] - xi[i, 1]
        out[i] = -math.log(dx * dx + dy * dy) / (2.0 * TWO_PI)
    return out


@njit(**_JIT)
def log_potential_gradient(x, xi):
    # coincident pairs yield 0; assembly overwrites those diagonals
    n, m = x.shape[0], xi.shape[0]
    out = np.empty((n, m, 2))
    for i in range(n):
        for j in range(m):
            dx = x[i, 0] - xi[j, 0]
            dy = x[i, 1] - xi[j, 1]
            r2 = dx * dx + dy * dy
            if r2 == 0.0:
                out[i, j, 0] = 0.0
                out[i, j, 1] = 0.0
            else:
                out[i, j, 0] = -dx / (TWO_PI * r2)
                out[i, j, 1] = -dy / (TWO_PI * r2)
    return out


@njit(**_JIT)
def _ln_ratio(s_re, c_num, s_num, c_den, s_den):
    # ln |e^{s_re + i a_num} - 1| - ln |e^{s_re + i a_den} - 1|, overflow-safe
    if s_re > 0.0:
        e = math.exp(-s_re)
        num = (1.0 - e * c_num) ** 2 + (e * s_num) ** 2
        den = (1.0 - e * c_den) ** 2 + (e * s_den) ** 2
    else:
        e = math.exp(s_re)
        num = (e * c_num - 1.0) ** 2 + (e * s_num) ** 2
        den = (e * c_den - 1.0) ** 2 + (e * s_den) ** 2
    return 0.5 * math.log(num / den)


@njit(**_JIT)
def _rect_value_scalar(a, b, m_terms, x1, x2, xi1, xi2):
    pb = math.pi / b
    r0 = x1 - xi1
    r1 = x1 + xi1
    cp = math.cos(pb * (x2 + xi2))
    sp = math.sin(pb * (x2 + xi2))
    cm = math.cos(pb * (x2 - xi2))
    sm = math.sin(pb * (x2 - xi2))
    # reflected (x2 + xi2) terms over direct (x2 - xi2) terms
    acc = _ln_ratio(pb * r0, cp, sp, cm, sm)
    acc -= _ln_ratio(pb * r1, cp, sp, cm, sm)
    acc -= _ln_ratio(pb * (r1 + 2.0 * a), cp, sp, cm, sm)
    acc -= _ln_ratio(pb * (r1 - 2.0 * a), cp, sp, cm, sm)

    # correction series via multiplicative recurrences in n
    q1 = math.exp(pb * (r1 - 4.0 * a))
    q2 = math.exp(pb * (r0 - 2.0 * a))
    q3 = math.exp(pb * (-r0 - 2.0 * a))
    q4 = math.exp(-pb * (r1 + 4.0 * a))
    qd = math.exp(-2.0 * pb * a)
    e1, e2, e3, e4, ed = q1, q2, q3, q4, qd
    cx = math.cos(pb * x2)
    sx = math.sin(pb * x2)
    ci = math.cos(pb * xi2)
    si = math.sin(pb * xi2)
    sxn, cxn = sx, cx
    sin_, cin = si, ci
    series = 0.0
    for n in range(1, m_terms + 1):
        nu = n * pb
        s_n = 0.5 * (e1 - e2 - e3 + e4) / (nu * (1.0 - ed))
        series += s_n * sin_ * sxn
        e1 *= q1
        e2 *= q2
        e3 *= q3
        e4 *= q4
        ed *= qd
        sxn, cxn = sxn * cx + cxn * sx, cxn * cx - sxn * sx
        sin_, cin = sin_ * ci + cin * si, cin * ci - sin_ * si
    return acc / TWO_PI - (2.0 / b) * series


@njit(**_JIT)
def _d_ln_e(pb, s_re, c, s):
    # d/dw ln(e^{pi w / b} - 1) = pb / (1 - e^{-s}); returns (re, im)
    if s_re > 0.0:
        e = math.exp(-s_re)
        dre = 1.0 - e * c
        dim = e * s
    else:
        # pb e^s / (e^s - 1) = pb (e^{s_re}(c+is)) conj(e^s-1) / |e^s-1|^2
        e = math.exp(s_re)
        tre = e * c - 1.0
        tim = e * s
        rho = tre * tre + tim * tim
        re = (e * c * tre + e * s * tim) / rho
        im = (e * s * tre - e * c * tim) / rho
        return pb * re, pb * im
    rho = dre * dre + dim * dim
    return pb * dre / rho, -pb * dim / rho


@njit(**_JIT)
def _rect_grad_scalar(a, b, m_terms, x1, x2, xi1, xi2):
    pb = math.pi / b
    r0 = x1 - xi1
    r1 = x1 + xi1
    cp = math.cos(pb * (x2 + xi2))
    sp = math.sin(pb * (x2 + xi2))
    cm = math.cos(pb * (x2 - xi2))
    sm = math.sin(pb * (x2 - xi2))
    ar, ai = _d_ln_e(pb, pb * r0, cp, sp)
    br, bi = _d_ln_e(pb, pb * r0, cm, sm)
    ar -= br
    ai -= bi
    for rr in (r1, r1 + 2.0 * a, r1 - 2.0 * a):
        nr, ni = _d_ln_e(pb, pb * rr, cm, sm)
        dr, di = _d_ln_e(pb, pb * rr, cp, sp)
        ar += nr - dr
        ai += ni - di

    q1 = math.exp(pb * (r1 - 4.0 * a))
    q2 = math.exp(pb * (r0 - 2.0 * a))
    q3 = math.exp(pb * (-r0 - 2.0 * a))
    q4 = math.exp(-pb * (r1 + 4.0 * a))
    qd = math.exp(-2.0 * pb * a)
    e1, e2, e3, e4, ed = q1, q2, q3, q4, qd
    cx = math.cos(pb * x2)
    sx = math.sin(pb * x2)
    ci = math.cos(pb * xi2)
    si = math.sin(pb * xi2)
    sxn, cxn = sx, cx
    sin_, cin = si, ci
    s1 = 0.0
    s2 = 0.0
    for n in range(1, m_terms + 1):
        nu = n * pb
        den = 1.0 - ed
        s_n = 0.5 * (e1 - e2 - e3 + e4) / (nu * den)
        ds_n = 0.5 * (e1 - e2 + e3 - e4) / den
        s1 += ds_n * sin_ * sxn
        s2 += s_n * sin_ * nu * cxn
        e1 *= q1
        e2 *= q2
        e3 *= q3
        e4 *= q4
        ed *= qd
        sxn, cxn = sxn * cx + cxn * sx, cxn * cx - sxn * sx
        sin_, cin = sin_ * ci + cin * si, cin * ci - sin_ * si
    # d/dx1 = Re(d/dw), d/dx2 = -Im(d/dw) since dw/dx2 = i
    gx = ar / TWO_PI - (2.0 / b) * s1
    gy = -ai / TWO_PI - (2.0 / b) * s2
    return gx, gy


@njit(**_JIT)
def rect_green_matrix(a, b, m_terms, x, xi):
    n, m = x.shape[0], xi.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = _rect_value_scalar(a, b, m_terms, x[i, 0], x[i, 1], xi[j, 0], xi[j, 1])
    return out


@njit(**_JIT)
def rect_green_pairs(a, b, m_terms, x, xi):
    n = x.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = _rect_value_scalar(a, b, m_terms, x[i, 0], x[i, 1], xi[i, 0], xi[i, 1])
    return out


@njit(**_JIT)
def rect_green_gradient(a, b, m_terms, x, xi):
    # coincident pairs yield 0; assembly overwrites those diagonals
    n, m = x.shape[0], xi.shape[0]
    out = np.empty((n, m, 2))
    for i in range(n):
        for j in range(m):
            if x[i, 0] == xi[j, 0] and x[i, 1] == xi[j, 1]:
                out[i, j, 0] = 0.0
                out[i, j, 1] = 0.0
            else:
                gx, gy = _rect_grad_scalar(a, b, m_terms, x[i, 0], x[i, 1], xi[j, 0], xi[j, 1])
                out[i, j, 0] = gx
                out[i, j, 1] = gy
    return out


@njit(**_JIT)
def rect_green_gradient_pairs(a, b, m_terms, x, xi):
    n = x.shape[0]
    out = np.empty((n, 2))
    for i in range(n):
        gx, gy = _rect_grad_scalar(a, b, m_terms, x[i, 0], x[i, 1], xi[i, 0], xi[i, 1])
        out[i, 0] = gx
        out[i, 1] = gy
    return out


# regular part: the kernel minus the free-space singularity, smooth in both
# arguments; evaluable at coincident points

@njit(**_JIT)
def _ln_e(s_re, c, s):
    if s_re > 0.0:
        e = math.exp(-s_re)
        return s_re + 0.5 * math.log((1.0 - e * c) ** 2 + (e * s) ** 2)
    e = math.exp(s_re)
    return 0.5 * math.log((e * c - 1.0) ** 2 + (e * s) ** 2)


@njit(**_JIT)
def _ln_e_over_w(pb, s_re, s_im, c, s):
    # ln( |e^{s} - 1| / |w| ) with s = pb * w; finite at w = 0
    mag = math.hypot(s_re, s_im)
    if mag < 1e-4:
        z = complex(s_re, s_im)
        g = 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
        return math.log(pb) + 0.5 * math.log(g.real**2 + g.imag**2)
    return _ln_e(s_re, c, s) - math.log(mag / pb)


@njit(**_JIT)
def _d_reg(pb, s_re, s_im, c, s):
    # d/dw [ ln(e^{pb w} - 1) - ln w ]; finite at w = 0; returns (re, im)
    mag = math.hypot(s_re, s_im)
    if mag < 1e-4:
        z = complex(s_re, s_im)
        g = pb * (0.5 + z / 12.0 - z * z * z / 720.0)
        return g.real, g.imag
    dre, dim = _d_ln_e(pb, s_re, c, s)
    rho = s_re * s_re + s_im * s_im
    return dre - pb * s_re / rho, dim + pb * s_im / rho


@njit(**_JIT)
def _rect_regular_scalar(a, b, m_terms, x1, x2, xi1, xi2):
    pb = math.pi / b
    r0 = x1 - xi1
    r1 = x1 + xi1
    dm = x2 - xi2
    cp = math.cos(pb * (x2 + xi2))
    sp = math.sin(pb * (x2 + xi2))
    cm = math.cos(pb * dm)
    sm = math.sin(pb * dm)
    acc = _ln_e(pb * r0, cp, sp) - _ln_e_over_w(pb, pb * r0, pb * dm, cm, sm)
    acc -= _ln_ratio(pb * r1, cp, sp, cm, sm)
    acc -= _ln_ratio(pb * (r1 + 2.0 * a), cp, sp, cm, sm)
    acc -= _ln_ratio(pb * (r1 - 2.0 * a), cp, sp, cm, sm)

    q1 = math.exp(pb * (r1 - 4.0 * a))
    q2 = math.exp(pb * (r0 - 2.0 * a))
    q3 = math.exp(pb * (-r0 - 2.0 * a))
    q4 = math.exp(-pb * (r1 + 4.0 * a))
    qd = math.exp(-2.0 * pb * a)
    e1, e2, e3, e4, ed = q1, q2, q3, q4, qd
    cx = math.cos(pb * x2)
    sx = math.sin(pb * x2)
    ci = math.cos(pb * xi2)
    si = math.sin(pb * xi2)
    sxn, cxn = sx, cx
    sin_, cin = si, ci
    series = 0.0
    for n in range(1, m_terms + 1):
        nu = n * pb
        s_n = 0.5 * (e1 - e2 - e3 + e4) / (nu * (1.0 - ed))
        series += s_n * sin_ * sxn
        e1 *= q1
        e2 *= q2
        e3 *= q3
        e4 *= q4
        ed *= qd
        sxn, cxn = sxn * cx + cxn * sx, cxn * cx - sxn * sx
        sin_, cin = sin_ * ci + cin * si, cin * ci - sin_ * si
    return acc / TWO_PI - (2.0 / b) * series


@njit(**_JIT)
def _rect_regular_grad_scalar(a, b, m_terms, x1, x2, xi1, xi2):
    pb = math.pi / b
    r0 = x1 - xi1
    r1 = x1 + xi1
    dm = x2 - xi2
    cp = math.cos(pb * (x2 + xi2))
    sp = math.sin(pb * (x2 + xi2))
    cm = math.cos(pb * dm)
    sm = math.sin(pb * dm)
    ar, ai = _d_ln_e(pb, pb * r0, cp, sp)
    br, bi = _d_reg(pb, pb * r0, pb * dm, cm, sm)
    ar -= br
    ai -= bi
    for rr in (r1, r1 + 2.0 * a, r1 - 2.0 * a):
        nr, ni = _d_ln_e(pb, pb * rr, cm, sm)
        dr, di = _d_ln_e(pb, pb * rr, cp, sp)
        ar += nr - dr
        ai += ni - di

    q1 = math.exp(pb * (r1 - 4.0 * a))
    q2 = math.exp(pb * (r0 - 2.0 * a))
    q3 = math.exp(pb * (-r0 - 2.0 * a))
    q4 = math.exp(-pb * (r1 + 4.0 * a))
    qd = math.exp(-2.0 * pb * a)
    e1, e2, e3, e4, ed = q1, q2, q3, q4, qd
    cx = math.cos(pb * x2)
    sx = math.sin(pb * x2)
    ci = math.cos(pb * xi2)
    si = math.sin(pb * xi2)
    sxn, cxn = sx, cx
    sin_, cin = si, ci
    s1 = 0.0
    s2 = 0.0
    for n in range(1, m_terms + 1):
        nu = n * pb
        den = 1.0 - ed
        s_n = 0.5 * (e1 - e2 - e3 + e4) / (nu * den)
        ds_n = 0.5 * (e1 - e2 + e3 - e4) / den
        s1 += ds_n * sin_ * sxn
        s2 += s_n * sin_ * nu * cxn
        e1 *= q1
        e2 *= q2
        e3 *= q3
        e4 *= q4
        ed *= qd
        sxn, cxn = sxn * cx + cxn * sx, cxn * cx - sxn * sx
        sin_, cin = sin_ * ci + cin * si, cin * ci - sin_ * si
    gx = ar / TWO_PI - (2.0 / b) * s1
    gy = -ai / TWO_PI - (2.0 / b) * s2
    return gx, gy


@njit(**_JIT)
def rect_green_regular_matrix(a, b, m_terms, x, xi):
    n, m = x.shape[0], xi.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = _rect_regular_scalar(a, b, m_terms, x[i, 0], x[i, 1], xi[j, 0], xi[j, 1])
    return out


@njit(**_JIT)
def rect_green_regular_gradient(a, b, m_terms, x, xi):
    n, m = x.shape[0], xi.shape[0]
    out = np.empty((n, m, 2))
    for i in range(n):
        for j in range(m):
            gx, gy = _rect_regular_grad_scalar(
                a, b, m_terms, x[i, 0], x[i, 1], xi[j, 0], xi[j, 1]
            )
            out[i, j, 0] = gx
            out[i, j, 1] = gy
    return out


@njit(**_JIT)
def rect_green_regular_gradient_pairs(a, b, m_terms, x, xi):
    n = x.shape[0]
    out = np.empty((n, 2))
    for i in range(n):
        gx, gy = _rect_regular_grad_scalar(a, b, m_terms, x[i, 0], x[i, 1], xi[i, 0], xi[i, 1])
        out[i, 0] = gx
        out[i, 1] = gy
    return out
