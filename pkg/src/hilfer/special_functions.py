"""Gamma and two-parameter Mittag-Leffler functions on the real line.

``E_{a,b}(z) = sum_n z^n / Gamma(a n + b)`` is evaluated by one of four
deterministic regimes chosen from ``(a, b, z)``:

``series``
    compensated Taylor sum, used for ``|z| <= 1`` and for every ``z > 0``;
``contour``
    trapezoid rule on a parabolic Hankel contour for ``-Z_ASYM < z < -1``;
``asymptotic``
    the algebraic expansion ``-sum_k z^{-k} / Gamma(b - a k)`` for
    ``z <= -Z_ASYM``;
``closed_form``
    ``a = 1`` with integer ``b``, where the function is elementary.

All routines are pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special as sps

from . import _kernels
from ._kernels import CONTOUR_MU
from .errors import EvaluationOverflowError, ParameterError, PoleError, SingularEvaluationError

__all__ = [
    "Z_ASYM",
    "EvalReport",
    "MLQuery",
    "Regime",
    "gamma",
    "ml_eval",
    "ml_eval_deriv",
    "ml_mode_deriv",
    "ml_mode_deriv_scaled",
    "ml_time_integral",
    "mittag_leffler",
    "asymptotic_threshold",
    "positive_z_limit",
]

Regime = Literal["series", "contour", "asymptotic", "closed_form"]
REGIMES: tuple[str, ...] = ("series", "contour", "asymptotic", "closed_form")

#: Switch-over point between the contour and the asymptotic expansion.
Z_ASYM = 50.0
#: Above this |z| the contour subtracts three asymptotic terms first.
_Z_SUBTRACT = 8.0
#: Largest admissible value of ``z^(1/alpha)`` for positive arguments.
_POS_EXP_LIMIT = 700.0

_EPS = np.finfo(float).eps


def gamma(x: float) -> float:
    """Euler's Gamma function.

    :raises PoleError: at ``x = 0, -1, -2, ...``.
    :raises EvaluationOverflowError: if the result exceeds double range.
    """
    x = float(x)
    if x <= 0.0 and x == math.floor(x):
        raise PoleError(f"Gamma has a pole at x={x:g}")
    try:
        return math.gamma(x)
    except OverflowError as exc:
        raise EvaluationOverflowError(f"Gamma({x:g}) overflows") from exc


def asymptotic_threshold(alpha: float) -> float:
    """``|z|`` beyond which negative arguments use the asymptotic expansion.

    This is :data:`Z_ASYM` for ``alpha <= 1``. For larger orders the smallest
    term of the expansion only drops like ``exp(-|z|^(1/alpha))``, so the
    switch moves out to ``40^alpha``.
    """
    return max(Z_ASYM, 40.0**alpha)


def positive_z_limit(alpha: float) -> float:
    """Largest positive argument accepted for order ``alpha``."""
    return _POS_EXP_LIMIT**alpha


@dataclass(frozen=True)
class MLQuery:
    """A single point ``E_{alpha,beta}(z)``."""

    alpha: float
    beta: float
    z: float

    def __post_init__(self) -> None:
        _check_params(self.alpha, self.beta)
        if not (-1.0 < self.beta <= 2.0):
            raise ParameterError(f"beta={self.beta} outside (-1, 2]")
        if not math.isfinite(self.z):
            raise ParameterError("z must be finite")


@dataclass(frozen=True)
class EvalReport:
    value: float
    regime: str
    est_rel_err: float


def mittag_leffler(q: MLQuery, regime: str | None = None) -> EvalReport:
    """Evaluate ``E_{q.alpha, q.beta}(q.z)`` and report how it was done."""
    val, reg, err = _evaluate(q.alpha, q.beta, np.array([float(q.z)]), regime)
    return EvalReport(float(val[0]), REGIMES[reg[0]], float(err[0]))


def ml_eval(alpha, beta, z, regime: str | None = None, *, report: bool = False):
    """Vectorised ``E_{alpha,beta}(z)`` for scalar orders and array ``z``.

    ``beta`` may be any real number here (internal callers need shifted
    parameters such as ``beta + 2``). With ``report=True`` the regime codes
    (indices into :data:`REGIMES`) and error estimates are returned too.
    ``regime`` forces one method; the estimate then says whether it can be
    trusted at that point.
    """
    _check_params(alpha, None)
    z = np.asarray(z, dtype=float)
    flat = np.ascontiguousarray(z.ravel())
    val, reg, err = _evaluate(float(alpha), float(beta), flat, regime)
    val = val.reshape(z.shape)
    if report:
        return val, reg.reshape(z.shape), err.reshape(z.shape)
    return val[()] if val.ndim == 0 else val


def ml_eval_deriv(alpha, beta, z):
    """``d/dz E_{alpha,beta}(z)``, vectorised over ``z``.

    Near the origin the differentiated series is summed directly; elsewhere
    ``E' = (E_{a,b-1} - (b-1) E_{a,b}) / (a z)`` is used.
    """
    _check_params(alpha, None)
    alpha = float(alpha)
    beta = float(beta)
    z = np.asarray(z, dtype=float)
    flat = np.ascontiguousarray(z.ravel())
    out = np.empty_like(flat)
    small = np.abs(flat) <= 1.0
    if small.any():
        zs = np.ascontiguousarray(flat[small])
        out[small] = _kernels.ml_series(alpha, alpha + beta, zs, True)[0]
    big = ~small
    if big.any():
        zb = flat[big]
        e1 = ml_eval(alpha, beta - 1.0, zb)
        e0 = ml_eval(alpha, beta, zb)
        out[big] = (e1 - (beta - 1.0) * e0) / (alpha * zb)
    out = out.reshape(z.shape)
    return out[()] if out.ndim == 0 else out


def ml_mode_deriv(mu: float, lam: float, t):
    """``d/dt E_{mu,mu}(-lam t^mu)`` for ``t > 0``.

    Equals ``(E_{mu,mu-1}(z) + (1-mu) E_{mu,mu}(z)) / t`` with
    ``z = -lam t^mu``; evaluated as ``-lam mu t^(mu-1) E'_{mu,mu}(z)`` so
    small ``t`` does not cancel.

    :raises SingularEvaluationError: if any ``t <= 0``.
    """
    _check_mode(mu, lam)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise SingularEvaluationError("ml_mode_deriv is singular at t=0")
    return t ** (mu - 1.0) * ml_mode_deriv_scaled(mu, lam, t)


def ml_mode_deriv_scaled(mu: float, lam: float, s):
    """``s^(1-mu) d/ds E_{mu,mu}(-lam s^mu)``, finite down to ``s = 0``."""
    _check_mode(mu, lam)
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise ParameterError("s must be non-negative")
    return -lam * mu * ml_eval_deriv(mu, mu, -lam * s**mu)


def ml_time_integral(alpha: float, lam: float, T: float) -> float:
    """``int_0^T t^(alpha-1) E_{alpha,alpha}(-lam t^alpha) dt``.

    The closed form is ``(1 - E_{alpha,1}(-lam T^alpha)) / lam``, computed
    without cancellation as ``T^alpha E_{alpha,alpha+1}(-lam T^alpha)``.
    """
    if not (0.0 < alpha < 2.0):
        raise ParameterError(f"alpha={alpha} outside (0, 2)")
    if not lam > 0.0:
        raise ParameterError("lambda must be positive")
    if not T >= 0.0:
        raise ParameterError("T must be non-negative")
    if T == 0.0:
        return 0.0
    ta = T**alpha
    return float(ta * ml_eval(alpha, alpha + 1.0, -lam * ta))


# ---------------------------------------------------------------------------
# internals
# ---------------------------------------------------------------------------


def _check_params(alpha, beta) -> None:
    if not (0.0 < alpha < 2.0):
        raise ParameterError(f"alpha={alpha} outside (0, 2)")
    if beta is not None and not math.isfinite(beta):
        raise ParameterError("beta must be finite")


def _check_mode(mu: float, lam: float) -> None:
    if not (0.0 < mu <= 1.0):
        raise ParameterError(f"mu={mu} outside (0, 1]")
    if not lam > 0.0:
        raise ParameterError("lambda must be positive")


def _is_int(x: float) -> bool:
    return x == math.floor(x)


def _select(alpha: float, beta: float, z: np.ndarray) -> np.ndarray:
    reg = np.full(z.shape, 1, dtype=np.int8)
    reg[(np.abs(z) <= 1.0) | (z > 0.0)] = 0
    reg[z <= -asymptotic_threshold(alpha)] = 2
    if alpha == 1.0 and _is_int(beta):
        reg[:] = 3
    return reg


def _evaluate(alpha, beta, z, regime):
    if regime is not None and regime not in REGIMES:
        raise ParameterError(f"unknown regime {regime!r}")
    pos_lim = positive_z_limit(alpha)
    if np.any(z > pos_lim) and regime is None:
        raise EvaluationOverflowError(
            f"E_{{{alpha},{beta}}}(z) overflows for z > {pos_lim:.6g}"
        )
    if regime is None:
        reg = _select(alpha, beta, z)
    else:
        if regime == "closed_form" and not (alpha == 1.0 and _is_int(beta)):
            raise ParameterError("closed_form needs alpha=1 and integer beta")
        reg = np.full(z.shape, REGIMES.index(regime), dtype=np.int8)
    val = np.full(z.shape, np.nan)
    err = np.full(z.shape, np.inf)
    for code, fn in enumerate((_series, _contour, _asymptotic, _closed_form)):
        m = reg == code
        if m.any():
            v, e = fn(alpha, beta, np.ascontiguousarray(z[m]))
            val[m] = v
            err[m] = e
    return val, reg, err


def _series(alpha, beta, z):
    # Terms grow like exp(|z|^(1/alpha)); beyond the overflow bound the sum
    # is meaningless, so refuse rather than spin.
    out = np.full(z.shape, np.nan)
    err = np.full(z.shape, np.inf)
    ok = np.abs(z) ** (1.0 / alpha) <= _POS_EXP_LIMIT
    if ok.any():
        zz = np.ascontiguousarray(z[ok])
        s, mag, tail = _kernels.ml_series(alpha, beta, zz, False)
        with np.errstate(divide="ignore", invalid="ignore"):
            e = (4.0 * _EPS * mag + tail) / np.abs(s)
            # exp(n log z - lgamma) loses about n log z ulps at the peak term
            e = e + _EPS * np.maximum(zz, 0.0) ** (1.0 / alpha)
        e = np.where(s == 0.0, np.where(mag == 0.0, 0.0, np.inf), e)
        out[ok] = s
        err[ok] = np.maximum(e, _EPS)
    return out, err


def _asym_terms(alpha, beta, z, kmax):
    """Partial sums of ``-sum_{k=1}^{kmax} z^{-k}/Gamma(beta - alpha k)``."""
    k = np.arange(1, kmax + 1)
    rg = sps.rgamma(beta - alpha * k)
    return -(z[:, None] ** (-k[None, :].astype(float)) * rg[None, :]).sum(axis=1)


def _poles(alpha, beta, z):
    """Upper pole ``s*`` of ``1/(s^alpha - z)`` and its residue factor.

    Only present on the principal sheet when ``1 < alpha < 2``; the lower
    pole is the conjugate. The residue of ``e^s s^(alpha-beta)/(s^alpha-z)``
    at ``s*`` is ``e^{s*} s*^(1-beta) / alpha``.
    """
    r = np.abs(z) ** (1.0 / alpha)
    sstar = r * np.exp(1j * math.pi / alpha)
    return sstar, sstar ** (1.0 - beta) / alpha


def _contour(alpha, beta, z):
    out = np.empty(z.shape)
    err = np.empty(z.shape)
    big = np.abs(z) >= _Z_SUBTRACT
    for nsub, m in ((0, ~big), (3, big)):
        if not m.any():
            continue
        zz = np.ascontiguousarray(z[m])
        if alpha > 1.0:
            v, mag = _contour_with_poles(alpha, beta, zz, nsub)
        else:
            v, mag = _kernels.ml_contour(alpha, beta, zz, nsub)
        if nsub:
            v = v + _asym_terms(alpha, beta, zz, nsub)
        with np.errstate(divide="ignore"):
            e = 8.0 * _EPS * mag / np.abs(v) + 1e-14
        out[m] = v
        err[m] = e
    return out, err


def _contour_with_poles(alpha, beta, z, nsub):
    # Subtracting c e^s/(s - s*) for both poles leaves a smooth integrand;
    # the subtracted pieces invert exactly to c e^{s*}, which is added back
    # whether or not the parabola encloses the pole.
    u = np.arange(_kernels.CONTOUR_N + 1) * _kernels.CONTOUR_H
    q = 1.0 + 1j * u
    s = CONTOUR_MU * q * q
    w = np.full(u.size, 2.0)
    w[0] = 1.0
    zc = z[:, None]
    g = np.exp(s) * s ** (alpha * (nsub + 1) - beta) / (s**alpha - zc) / zc**nsub
    sstar, c = _poles(alpha, beta, z)
    for sp, cp in ((sstar, c), (np.conj(sstar), np.conj(c))):
        g = g - cp[:, None] * np.exp(s) / (s - sp[:, None])
    f = g * q * w
    scale = CONTOUR_MU * _kernels.CONTOUR_H / math.pi
    v = scale * f.real.sum(axis=1) + 2.0 * np.real(c * np.exp(sstar))
    mag = scale * np.abs(f).sum(axis=1) + 2.0 * np.abs(c * np.exp(sstar))
    return v, mag


def _asymptotic(alpha, beta, z):
    kmax = 400
    k = np.arange(1, kmax + 1)
    x = beta - alpha * k
    pole = (x <= 0.0) & (x == np.floor(x))
    # log|1/Gamma(x)| and its sign; direct rgamma overflows for x << 0.
    lrg = np.where(pole, -np.inf, -sps.gammaln(np.where(pole, 0.5, x)))
    sg = np.where(pole, 0.0, sps.gammasgn(np.where(pole, 0.5, x)))
    # |1/Gamma(x)| oscillates through zeros for x < 0; truncate on the smooth
    # envelope Gamma(1-x)/pi instead so a near-zero term is not mistaken
    # for the smallest one.
    env = np.where(x > 0.0, lrg, sps.gammaln(1.0 - x) - math.log(math.pi))
    logz = np.log(np.abs(z))
    lenv = -np.outer(logz, k) + env[None, :]
    kstop = np.argmin(lenv, axis=1)
    keep = k[None, :] <= (kstop[:, None] + 1)
    sign = np.where(z[:, None] < 0, (-1.0) ** k[None, :], 1.0) * sg[None, :]
    lt = np.where(keep, -np.outer(logz, k) + lrg[None, :], -np.inf)
    terms = sign * np.exp(lt)
    v = -terms.sum(axis=1)
    tmin = np.exp(lenv[np.arange(z.size), kstop])
    if alpha > 1.0:
        sstar, c = _poles(alpha, beta, z)
        v = v + 2.0 * np.real(c * np.exp(sstar))
    with np.errstate(divide="ignore"):
        e = (tmin + 4.0 * _EPS * np.abs(terms).sum(axis=1)) / np.abs(v)
    return v, np.maximum(e, 32.0 * _EPS)


def _closed_form(alpha, beta, z):
    m = int(beta)
    if m <= 1:
        with np.errstate(over="ignore"):
            v = z ** (1 - m) * np.exp(z)
        return v, np.full(z.shape, 4.0 * _EPS)
    # E_{1,2}(z) = expm1(z)/z, then E_{1,k+1} = (E_{1,k} - 1/Gamma(k)) / z.
    v = np.empty(z.shape)
    small = np.abs(z) <= 1.0
    if small.any():
        v[small] = _kernels.ml_series(1.0, float(m), np.ascontiguousarray(z[small]), False)[0]
    big = ~small
    if big.any():
        zb = z[big]
        with np.errstate(over="ignore"):
            e = np.expm1(zb) / zb
        for kk in range(2, m):
            e = (e - 1.0 / math.factorial(kk - 1)) / zb
        v[big] = e
    return v, np.full(z.shape, 16.0 * _EPS * max(1, m))
