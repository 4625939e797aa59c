"""Hot inner loops, each in a numba flavour and a pure-numpy flavour.

The public names at the bottom dispatch on ``_accel.USE_NUMBA``. Both
flavours are importable under their suffixed names so the test-suite and
the benchmark can compare them directly.
"""

import math

import numpy as np
from scipy.special import gammaln, gammasgn, rgamma

from . import _accel
from ._accel import njit

if _accel.HAVE_NUMBA:
    from numba import prange
else:  # pragma: no cover
    prange = range

# Parabolic contour: s(u) = CONTOUR_MU * (1 + i u)^2, u_k = k * CONTOUR_H.
CONTOUR_N = 20
CONTOUR_H = 3.0 / CONTOUR_N
CONTOUR_MU = math.pi * CONTOUR_N / 12.0

SERIES_MAX_TERMS = 200_000
_TINY = 1e-300


# ---------------------------------------------------------------------------
# Mittag-Leffler power series  sum_n (n+1)^p z^n / Gamma(alpha n + beta)
# ---------------------------------------------------------------------------


@njit
def _rgamma_scalar(x):
    if x <= 0.0 and x == math.floor(x):
        return 0.0
    if x > 171.0:
        return 0.0
    return 1.0 / math.gamma(x)


@njit
def _series_term(n, alpha, beta, logz, zsign):
    x = alpha * n + beta
    if x <= 0.0 and x == math.floor(x):
        return 0.0
    if x < 170.0 and n * logz < 600.0:
        return zsign**n * math.exp(n * logz) * _rgamma_scalar(x)
    sg = 1.0
    if x < 0.0 and (math.floor(x) % 2) != 0:
        sg = -1.0
    return sg * zsign**n * math.exp(n * logz - math.lgamma(x))


@njit(parallel=True)
def ml_series_numba(alpha, beta, z, deriv):
    """Compensated series; returns (sum, sum of |terms|, last |term|)."""
    m = z.shape[0]
    out = np.empty(m)
    mag = np.empty(m)
    tail = np.empty(m)
    for k in prange(m):
        zk = z[k]
        if zk == 0.0:
            out[k] = _rgamma_scalar(beta)
            mag[k] = abs(out[k])
            tail[k] = 0.0
            continue
        logz = math.log(abs(zk))
        zsign = 1.0 if zk > 0.0 else -1.0
        s = 0.0
        c = 0.0
        a = 0.0
        last = 0.0
        prev = np.inf
        for n in range(SERIES_MAX_TERMS):
            t = _series_term(n, alpha, beta, logz, zsign)
            if deriv:
                t *= n + 1.0
            u = s + t
            if abs(s) >= abs(t):
                c += (s - u) + t
            else:
                c += (t - u) + s
            s = u
            a += abs(t)
            last = abs(t)
            if alpha * n + beta > 2.0 and last <= prev and last <= 1e-17 * abs(s + c) + _TINY:
                break
            prev = last
        out[k] = s + c
        mag[k] = a
        tail[k] = last
    return out, mag, tail


def ml_series_numpy(alpha, beta, z, deriv):
    z = np.asarray(z, dtype=float)
    m = z.shape[0]
    s = np.zeros(m)
    c = np.zeros(m)
    a = np.zeros(m)
    last = np.zeros(m)
    prev = np.full(m, np.inf)
    active = np.ones(m, dtype=bool)
    zero = z == 0.0
    with np.errstate(divide="ignore"):
        logz = np.where(zero, 0.0, np.log(np.abs(z)))
    zsign = np.where(z > 0.0, 1.0, -1.0)
    for n in range(SERIES_MAX_TERMS):
        x = alpha * n + beta
        if n == 0:
            t = np.full(m, rgamma(x))
        elif x < 170.0 and np.all(n * logz < 600.0):
            t = zsign**n * np.exp(n * logz) * rgamma(x)
        elif x <= 0.0 and x == math.floor(x):
            t = np.zeros(m)
        else:
            t = gammasgn(x) * zsign**n * np.exp(n * logz - gammaln(x))
        if n > 0:
            t = np.where(zero, 0.0, t)
        if deriv:
            t = t * (n + 1.0)
        t = np.where(active, t, 0.0)
        u = s + t
        c += np.where(np.abs(s) >= np.abs(t), (s - u) + t, (t - u) + s)
        s = u
        a += np.abs(t)
        at = np.abs(t)
        last = np.where(active, at, last)
        if x > 2.0:
            done = (at <= prev) & (at <= 1e-17 * np.abs(s + c) + _TINY)
            active &= ~done
        prev = np.where(active, at, prev)
        if not active.any():
            break
    return s + c, a, last


# ---------------------------------------------------------------------------
# Trapezoid rule on the parabolic Hankel contour
#   E(z) = z^{-K} (1/2 pi i) \int e^s s^{alpha(K+1)-beta} / (s^alpha - z) ds
#          - sum_{k=1}^{K} z^{-k} / Gamma(beta - alpha k)
# The caller adds the subtracted terms back and any pole residues.
# ---------------------------------------------------------------------------


@njit(parallel=True)
def ml_contour_numba(alpha, beta, z, nsub):
    m = z.shape[0]
    out = np.empty(m)
    mag = np.empty(m)
    expo = alpha * (nsub + 1) - beta
    # the nodes do not depend on z
    num = np.empty(CONTOUR_N + 1, dtype=np.complex128)
    sa = np.empty(CONTOUR_N + 1, dtype=np.complex128)
    for j in range(CONTOUR_N + 1):
        q = complex(1.0, j * CONTOUR_H)
        s = CONTOUR_MU * q * q
        num[j] = (1.0 if j == 0 else 2.0) * np.exp(s) * s**expo * q
        sa[j] = s**alpha
    for k in prange(m):
        zk = z[k]
        acc = 0.0
        amag = 0.0
        for j in range(CONTOUR_N + 1):
            f = num[j] / (sa[j] - zk)
            acc += f.real
            amag += abs(f)
        scale = CONTOUR_MU * CONTOUR_H / math.pi / zk**nsub
        out[k] = acc * scale
        mag[k] = amag * abs(scale)
    return out, mag


def ml_contour_numpy(alpha, beta, z, nsub):
    z = np.asarray(z, dtype=float)
    u = np.arange(CONTOUR_N + 1) * CONTOUR_H
    q = 1.0 + 1j * u
    s = CONTOUR_MU * q * q
    w = np.full(CONTOUR_N + 1, 2.0)
    w[0] = 1.0
    num = np.exp(s) * s ** (alpha * (nsub + 1) - beta) * q * w
    sa = s**alpha
    f = num[None, :] / (sa[None, :] - z[:, None])
    scale = CONTOUR_MU * CONTOUR_H / math.pi / z**nsub
    return f.real.sum(axis=1) * scale, np.abs(f).sum(axis=1) * np.abs(scale)


# ---------------------------------------------------------------------------
# Product integration against sigma^{alpha-1} on a non-uniform grid.
# Cell j = [t_j, t_{j+1}]; at output node i, sigma runs over
# [s_a, s_b] = [t_i - t_{j+1}, t_i - t_j].
# ---------------------------------------------------------------------------


@njit
def _pdiff(sa, h, p):
    """(sa + h)^p - sa^p without cancellation."""
    if sa == 0.0:
        return h**p
    return sa**p * math.expm1(p * math.log1p(h / sa))


@njit(parallel=True)
def rl_linear_numba(t, f, alpha, start):
    """sum over cells j >= start of int (t_i - tau)^{alpha-1} f_lin(tau) dtau."""
    n = t.shape[0]
    m = f.shape[1]
    out = np.zeros((n, m))
    for i in prange(1, n):
        ti = t[i]
        for j in range(start, i):
            sa = ti - t[j + 1]
            h = t[j + 1] - t[j]
            a_ = _pdiff(sa, h, alpha) / alpha
            b_ = _pdiff(sa, h, alpha + 1.0) / (alpha + 1.0) - sa * a_
            w1 = b_ / h
            w0 = a_ - w1
            for c in range(m):
                out[i, c] += w0 * f[j + 1, c] + w1 * f[j, c]
    return out


def _pdiff_np(sa, h, p):
    with np.errstate(divide="ignore", invalid="ignore"):
        d = sa**p * np.expm1(p * np.log1p(h / np.where(sa > 0, sa, 1.0)))
    return np.where(sa > 0, d, h**p)


def rl_linear_numpy(t, f, alpha, start):
    n = t.shape[0]
    out = np.zeros((n, f.shape[1]))
    h_all = np.diff(t)
    for i in range(1, n):
        if i <= start:
            continue
        j = np.arange(start, i)
        h = h_all[j]
        sa = t[i] - t[j + 1]
        a_ = _pdiff_np(sa, h, alpha) / alpha
        b_ = _pdiff_np(sa, h, alpha + 1.0) / (alpha + 1.0) - sa * a_
        w1 = b_ / h
        w0 = a_ - w1
        out[i] = w0 @ f[j + 1] + w1 @ f[j]
    return out


@njit(parallel=True)
def rl_cellwise_numba(t, c, alpha):
    """sum over cells of c_j * int_cell (t_i - tau)^{alpha-1} dtau."""
    n = t.shape[0]
    m = c.shape[1]
    out = np.zeros((n, m))
    for i in prange(1, n):
        ti = t[i]
        for j in range(i):
            sa = ti - t[j + 1]
            w = _pdiff(sa, t[j + 1] - t[j], alpha) / alpha
            for k in range(m):
                out[i, k] += w * c[j, k]
    return out


def rl_cellwise_numpy(t, c, alpha):
    n = t.shape[0]
    out = np.zeros((n, c.shape[1]))
    h_all = np.diff(t)
    for i in range(1, n):
        j = np.arange(i)
        w = _pdiff_np(t[i] - t[j + 1], h_all[j], alpha) / alpha
        out[i] = w @ c[j]
    return out


if _accel.USE_NUMBA:
    ml_series = ml_series_numba
    ml_contour = ml_contour_numba
    rl_linear = rl_linear_numba
    rl_cellwise = rl_cellwise_numba
else:
    ml_series = ml_series_numpy
    ml_contour = ml_contour_numpy
    rl_linear = rl_linear_numpy
    rl_cellwise = rl_cellwise_numpy
