"""Pure-numpy implementations of the hot evaluation kernels.

Same function surface as ``_accel_numba``; selected via the
``GREENPOT_NUMBA`` environment variable (see ``_accel``).
"""

import math

import numpy as np

TWO_PI = 2.0 * np.pi


def log_potential_matrix(x, xi):
    """-(1/2pi) ln|x - xi| for all pairs; shape (len(x), len(xi))."""
    d = x[:, None, :] - xi[None, :, :]
    r2 = d[..., 0] ** 2 + d[..., 1] ** 2
    return -np.log(r2) / (2.0 * TWO_PI)


def log_potential_pairs(x, xi):
    d = x - xi
    r2 = d[:, 0] ** 2 + d[:, 1] ** 2
    return -np.log(r2) / (2.0 * TWO_PI)


def log_potential_gradient(x, xi):
    """Gradient in the first argument; shape (len(x), len(xi), 2).

    Coincident pairs yield 0; assembly overwrites those diagonals.
    """
    d = x[:, None, :] - xi[None, :, :]
    r2 = d[..., 0] ** 2 + d[..., 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        g = -d / (TWO_PI * r2[..., None])
    g[r2 == 0.0] = 0.0
    return g


def _log_e_terms(w_re, w_im, b):
    # ln|exp(pi w / b) - 1|, stable against overflow for large Re(w).
    s_re = np.pi * w_re / b
    s_im = np.pi * w_im / b
    out = np.empty_like(s_re)
    big = s_re > 0.0
    # Re(s) > 0: ln|e^s - 1| = Re(s) + ln|1 - e^{-s}|
    es = np.exp(-s_re[big])
    re1 = 1.0 - es * np.cos(s_im[big])
    im1 = es * np.sin(s_im[big])
    out[big] = s_re[big] + 0.5 * np.log(re1 * re1 + im1 * im1)
    sm = ~big
    es = np.exp(s_re[sm])
    re1 = es * np.cos(s_im[sm]) - 1.0
    im1 = es * np.sin(s_im[sm])
    out[sm] = 0.5 * np.log(re1 * re1 + im1 * im1)
    return out


def _d_log_e_terms(w_re, w_im, b):
    # d/dw ln(exp(pi w / b) - 1) as a complex array, overflow-safe.
    # Coincident pairs (w = 0) yield 0; assembly overwrites those diagonals.
    s = (np.pi / b) * (w_re + 1j * w_im)
    out = np.zeros(np.broadcast(w_re, w_im).shape, dtype=np.complex128)
    big = s.real > 0.0
    out[big] = (np.pi / b) / (1.0 - np.exp(-s[big]))
    small = ~big & (s != 0.0)
    es = np.exp(s[small])
    out[small] = (np.pi / b) * es / (es - 1.0)
    return out


def _image_args(x1, x2, xi1, xi2, a):
    # Real/imag parts of the eight image-term arguments: four "reflected"
    # (numerator) followed by four "direct" (denominator) terms.
    re = (
        (x1 - xi1, x1 + xi1, x1 + xi1 + 2.0 * a, x1 + xi1 - 2.0 * a),
        (x1 - xi1, x1 + xi1, x1 + xi1 + 2.0 * a, x1 + xi1 - 2.0 * a),
    )
    im_plus = x2 + xi2
    im_minus = x2 - xi2
    im = (
        (im_plus, im_minus, im_minus, im_minus),
        (im_minus, im_plus, im_plus, im_plus),
    )
    return re, im


def _rect_series(a, b, m_terms, x1, x2, xi1, xi2, want_grad):
    val = np.zeros(np.broadcast(x1, xi1).shape)
    g1 = np.zeros_like(val) if want_grad else None
    g2 = np.zeros_like(val) if want_grad else None
    for n in range(1, m_terms + 1):
        nu = n * np.pi / b
        e1 = np.exp(nu * (x1 + xi1 - 4.0 * a))
        e2 = np.exp(nu * (x1 - xi1 - 2.0 * a))
        e3 = np.exp(nu * (xi1 - x1 - 2.0 * a))
        e4 = np.exp(-nu * (x1 + xi1 + 4.0 * a))
        den = 1.0 - np.exp(-2.0 * nu * a)
        s_n = 0.5 * (e1 - e2 - e3 + e4) / (nu * den)
        sx = np.sin(nu * x2)
        si = np.sin(nu * xi2)
        val += s_n * si * sx
        if want_grad:
            ds_n = 0.5 * (e1 - e2 + e3 - e4) / den
            g1 += ds_n * si * sx
            g2 += s_n * si * nu * np.cos(nu * x2)
    return val, g1, g2


def _rect_value(a, b, m_terms, x1, x2, xi1, xi2):
    re, im = _image_args(x1, x2, xi1, xi2, a)
    acc = np.zeros(np.broadcast(x1, xi1).shape)
    for k in range(4):
        acc += _log_e_terms(re[0][k], im[0][k], b)
        acc -= _log_e_terms(re[1][k], im[1][k], b)
    series, _, _ = _rect_series(a, b, m_terms, x1, x2, xi1, xi2, False)
    return acc / TWO_PI - (2.0 / b) * series


def _rect_grad(a, b, m_terms, x1, x2, xi1, xi2):
    re, im = _image_args(x1, x2, xi1, xi2, a)
    acc = np.zeros(np.broadcast(x1, xi1).shape, dtype=np.complex128)
    for k in range(4):
        acc += _d_log_e_terms(re[0][k], im[0][k], b)
        acc -= _d_log_e_terms(re[1][k], im[1][k], b)
    # d/dx1 = Re(d/dw), d/dx2 = -Im(d/dw) since dw/dx2 = i
    _, s1, s2 = _rect_series(a, b, m_terms, x1, x2, xi1, xi2, True)
    gx = acc.real / TWO_PI - (2.0 / b) * s1
    gy = -acc.imag / TWO_PI - (2.0 / b) * s2
    coincident = np.broadcast_to((x1 == xi1) & (x2 == xi2), gx.shape)
    gx = np.where(coincident, 0.0, gx)
    gy = np.where(coincident, 0.0, gy)
    return gx, gy


def rect_green_matrix(a, b, m_terms, x, xi):
    x1 = x[:, 0][:, None]
    x2 = x[:, 1][:, None]
    xi1 = xi[:, 0][None, :]
    xi2 = xi[:, 1][None, :]
    return _rect_value(a, b, m_terms, x1, x2, xi1, xi2)


def rect_green_pairs(a, b, m_terms, x, xi):
    return _rect_value(a, b, m_terms, x[:, 0], x[:, 1], xi[:, 0], xi[:, 1])


def rect_green_gradient(a, b, m_terms, x, xi):
    x1 = x[:, 0][:, None]
    x2 = x[:, 1][:, None]
    xi1 = xi[:, 0][None, :]
    xi2 = xi[:, 1][None, :]
    gx, gy = _rect_grad(a, b, m_terms, x1, x2, xi1, xi2)
    return np.stack([gx, gy], axis=-1)


def rect_green_gradient_pairs(a, b, m_terms, x, xi):
    gx, gy = _rect_grad(a, b, m_terms, x[:, 0], x[:, 1], xi[:, 0], xi[:, 1])
    return np.stack([gx, gy], axis=-1)


# regular part: the kernel minus the free-space singularity, smooth in both
# arguments; evaluable at coincident points

def _ln_e_over_w(w_re, w_im, b):
    s_re = np.pi * np.asarray(w_re, dtype=float) / b
    s_im = np.pi * np.asarray(w_im, dtype=float) / b
    s_re, s_im = np.broadcast_arrays(s_re, s_im)
    mag = np.hypot(s_re, s_im)
    out = np.empty(mag.shape)
    small = mag < 1e-4
    z = s_re[small] + 1j * s_im[small]
    g = 1.0 + z / 2.0 + z**2 / 6.0 + z**3 / 24.0
    out[small] = math.log(np.pi / b) + np.log(np.abs(g))
    big = ~small
    out[big] = _log_e_terms(s_re[big] * b / np.pi, s_im[big] * b / np.pi, b) - np.log(
        mag[big] * b / np.pi
    )
    return out


def _d_reg_terms(w_re, w_im, b):
    pb = np.pi / b
    s_re = pb * np.asarray(w_re, dtype=float)
    s_im = pb * np.asarray(w_im, dtype=float)
    s_re, s_im = np.broadcast_arrays(s_re, s_im)
    s = s_re + 1j * s_im
    mag = np.abs(s)
    out = np.empty(mag.shape, dtype=np.complex128)
    small = mag < 1e-4
    z = s[small]
    out[small] = pb * (0.5 + z / 12.0 - z**3 / 720.0)
    big = ~small
    out[big] = _d_log_e_terms(s_re[big] * b / np.pi, s_im[big] * b / np.pi, b) - pb / s[big]
    return out


def _rect_regular(a, b, m_terms, x1, x2, xi1, xi2, want_grad):
    r0 = x1 - xi1
    r1 = x1 + xi1
    ip = x2 + xi2
    im = x2 - xi2
    if not want_grad:
        acc = _log_e_terms(r0, ip, b) - _ln_e_over_w(r0, im, b)
        for rr in (r1, r1 + 2.0 * a, r1 - 2.0 * a):
            acc += _log_e_terms(rr, im, b) - _log_e_terms(rr, ip, b)
        series, _, _ = _rect_series(a, b, m_terms, x1, x2, xi1, xi2, False)
        return acc / TWO_PI - (2.0 / b) * series
    acc = _d_log_e_terms(r0, ip, b) - _d_reg_terms(r0, im, b)
    for rr in (r1, r1 + 2.0 * a, r1 - 2.0 * a):
        acc += _d_log_e_terms(rr, im, b) - _d_log_e_terms(rr, ip, b)
    _, s1, s2 = _rect_series(a, b, m_terms, x1, x2, xi1, xi2, True)
    gx = acc.real / TWO_PI - (2.0 / b) * s1
    gy = -acc.imag / TWO_PI - (2.0 / b) * s2
    return gx, gy


def rect_green_regular_matrix(a, b, m_terms, x, xi):
    return _rect_regular(
        a, b, m_terms,
        x[:, 0][:, None], x[:, 1][:, None], xi[:, 0][None, :], xi[:, 1][None, :], False,
    )


def rect_green_regular_gradient(a, b, m_terms, x, xi):
    gx, gy = _rect_regular(
        a, b, m_terms,
        x[:, 0][:, None], x[:, 1][:, None], xi[:, 0][None, :], xi[:, 1][None, :], True,
    )
    return np.stack([gx, gy], axis=-1)


def rect_green_regular_gradient_pairs(a, b, m_terms, x, xi):
    gx, gy = _rect_regular(a, b, m_terms, x[:, 0], x[:, 1], xi[:, 0], xi[:, 1], True)
    return np.stack([gx, gy], axis=-1)
