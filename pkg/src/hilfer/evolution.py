"""Forward, forced and adjoint Hilfer evolutions by eigenfunction expansion.

Every mode obeys a scalar fractional ODE whose homogeneous solution is a
Mittag-Leffler function, so states are closed forms wherever possible.
Forcing enters through the Duhamel convolution with the kernel family

    K_b(s) = s^(b-1) E_{mu,b}(-lam s^mu),

``b = mu`` for the state and ``b = mu + gamma`` for its fractional mean.
The convolution is integrated by product integration: the forcing is
interpolated (piecewise linear, or piecewise constant for cellwise
controls) and each cell is integrated against the kernel exactly, using
the antiderivatives ``K_{b+1}`` and ``K_{b+2}`` near the singular end and
Gauss-Legendre rules on cells where the kernel is smooth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi

from .errors import GridMismatchError, ParameterError, SingularEvaluationError
from .fractional_calculus import SampledFunction, TimeGrid
from .order import HilferOrder
from .special_functions import ml_eval, ml_mode_deriv
from .spectral_operator import SpectralOperator

__all__ = [
    "HilferOrder",
    "ModalState",
    "Trajectory",
    "adjoint_mean",
    "adjoint_state",
    "convolve",
    "convolve_function",
    "duhamel_weights",
    "kernel",
    "default_grid",
    "homogeneous_state",
    "mean_state",
    "ml_bound_constant",
    "s_mu_apply",
    "s_mu_deriv_apply",
    "solve_adjoint",
    "solve_forced",
    "solve_homogeneous",
    "tail_estimate",
    "terminal_state",
]

# A cell [a, b] with (b - a) <= _FAR * (t - b) is integrated by Gauss-Legendre.
_FAR = 0.5
_VERY_FAR = 0.1
_GL8 = np.polynomial.legendre.leggauss(8)
_GL4 = np.polynomial.legendre.leggauss(4)
_GL16 = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True, eq=False)
class ModalState:
    """Coefficients ``(u, phi_n)`` in an operator's eigenbasis."""

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ParameterError("a modal state is a non-empty 1D coefficient vector")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, modes: int) -> ModalState:
        return cls(np.zeros(modes))

    @classmethod
    def unit(cls, modes: int, k: int) -> ModalState:
        """The ``k``-th eigenfunction (zero based)."""
        if not 0 <= k < modes:
            raise ParameterError(f"mode index {k} outside [0, {modes})")
        c = np.zeros(modes)
        c[k] = 1.0
        return cls(c)

    @property
    def size(self) -> int:
        return self.coeffs.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def check(self, op: SpectralOperator) -> None:
        if self.size != op.modes:
            raise GridMismatchError(f"state has {self.size} modes, operator has {op.modes}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Modal states at every node of a time grid.

    ``states`` has shape ``(J+1, M)``. Samples at a singular end (``t = 0``
    forward with ``gamma > 0``, ``t = T`` backward with ``nu (1-mu) > 0``)
    are NaN for every mode with non-zero data. ``u0`` and ``forcing`` are
    kept so fractional means can be recomputed at any time.
    """

    grid: TimeGrid
    states: np.ndarray
    order: HilferOrder
    operator: SpectralOperator = field(repr=False)
    u0: ModalState | None = None
    forcing: object = field(default=None, repr=False)
    kind: str = "forward"

    def __post_init__(self) -> None:
        s = np.array(self.states, dtype=float)
        if s.shape != (self.grid.size, self.operator.modes):
            raise ParameterError(
                f"states shape {s.shape} != ({self.grid.size}, {self.operator.modes})"
            )
        s.setflags(write=False)
        object.__setattr__(self, "states", s)

    def state(self, j: int) -> ModalState:
        return ModalState(self.states[j])

    def as_sampled(self) -> SampledFunction:
        """The trajectory as a vector-valued :class:`SampledFunction`."""
        if self.kind == "forward":
            return SampledFunction(self.grid, self.states, left_exponent=-self.order.gamma)
        return SampledFunction(self.grid, self.states, right_exponent=-self.order.outer)

    def to_csv(self, path) -> None:
        """Rows ``t,mode_index,coefficient`` with 17 significant digits."""
        t = self.grid.nodes
        with open(path, "w", newline="\n") as fh:
            fh.write("t,mode_index,coefficient\n")
            for j in range(t.size):
                for n in range(self.states.shape[1]):
                    fh.write(f"{t[j]:.17g},{n + 1},{self.states[j, n]:.17g}\n")

    def metadata(self) -> dict:
        return {
            "kind": self.kind,
            "order": {"mu": self.order.mu, "nu": self.order.nu},
            "operator": _jsonable(self.operator.domain),
            "modes": self.operator.modes,
            "grid": {
                "T": self.grid.T,
                "nodes": self.grid.size,
                "grading": self.grid.grading,
                "toward": self.grid.toward,
            },
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def default_grid(T: float, cells: int, mu: float, toward: str = "left") -> TimeGrid:
    """Grid graded with exponent ``max(1, 1/mu)`` toward the given end."""
    return TimeGrid.graded(T, cells, max(1.0, 1.0 / mu), toward)


# ---------------------------------------------------------------------------
# the operator family S_mu
# ---------------------------------------------------------------------------


def s_mu_apply(op: SpectralOperator, mu: float, t: float, c: ModalState) -> ModalState:
    """``S_mu(t) c``: multiply mode ``n`` by ``E_{mu,mu}(-lam_n t^mu)``."""
    _check_mu(mu)
    c.check(op)
    if t < 0.0:
        raise ParameterError("S_mu(t) needs t >= 0")
    return ModalState(ml_eval(mu, mu, -op.eigenvalues * t**mu) * c.coeffs)


def s_mu_deriv_apply(op: SpectralOperator, mu: float, t: float, c: ModalState) -> ModalState:
    """``d/dt S_mu(t) c`` for ``t > 0``."""
    _check_mu(mu)
    c.check(op)
    if t <= 0.0:
        raise SingularEvaluationError("dS_mu/dt is singular at t=0")
    return ModalState(
        np.array([ml_mode_deriv(mu, lam, t) for lam in op.eigenvalues]) * c.coeffs
    )


# ---------------------------------------------------------------------------
# forward problem
# ---------------------------------------------------------------------------


def homogeneous_state(
    op: SpectralOperator, order: HilferOrder, u0: ModalState, t: float
) -> ModalState:
    """``t^(beta-1) E_{mu,beta}(-lam_n t^mu) u0_n`` at a single time.

    :raises SingularEvaluationError: at ``t = 0`` when ``gamma > 0``.
    """
    u0.check(op)
    if t < 0.0:
        raise ParameterError("t must be non-negative")
    if t == 0.0 and order.gamma > 0.0:
        raise SingularEvaluationError("the state blows up like t^-gamma at t=0")
    return ModalState(_homogeneous(op, order, u0.coeffs, np.array([t]))[0])


def solve_homogeneous(
    op: SpectralOperator, order: HilferOrder, u0: ModalState, grid: TimeGrid
) -> Trajectory:
    """Closed-form weak solution with ``I^gamma u(0) = u0`` and no forcing."""
    u0.check(op)
    states = _homogeneous(op, order, u0.coeffs, grid.nodes)
    return Trajectory(grid, states, order, op, u0, None, "forward")


def solve_forced(
    op: SpectralOperator,
    order: HilferOrder,
    u0: ModalState,
    f,
    grid: TimeGrid,
) -> Trajectory:
    """Homogeneous part plus the Duhamel convolution of the modal forcing.

    ``f`` is a control signal or a :class:`SampledFunction` whose values are
    modal samples of shape ``(J+1, M)`` on ``grid``. The cost is quadratic
    in the node count; use :func:`terminal_state` when only ``u(T)`` is
    needed.
    """
    u0.check(op)
    F = _forcing_samples(op, f, grid)
    interp = _interp(f)
    states = _homogeneous(op, order, u0.coeffs, grid.nodes)
    t = grid.nodes
    for i in range(1, t.size):
        states[i] += convolve(order.mu, order.mu, op.eigenvalues, t[: i + 1], F[: i + 1], interp)
    return Trajectory(grid, states, order, op, u0, f, "forward")


def terminal_state(
    op: SpectralOperator,
    order: HilferOrder,
    u0: ModalState,
    f,
    grid: TimeGrid,
    mean: bool = False,
    quadrature: str = "samples",
) -> ModalState:
    """``u(T)`` (or ``I^gamma u(T)`` with ``mean=True``) in linear time.

    ``quadrature="analytic"`` integrates ``f.evaluator`` (see
    :func:`convolve_function`) instead of the interpolated samples.
    """
    u0.check(op)
    T = grid.T
    lam = op.eigenvalues
    if mean:
        hom = ml_eval(order.mu, 1.0, -lam * T**order.mu) * u0.coeffs
        b = order.mu + order.gamma
    else:
        hom = _homogeneous(op, order, u0.coeffs, np.array([T]))[0]
        b = order.mu
    if quadrature == "analytic":
        fn = getattr(f, "evaluator", None)
        if fn is None:
            raise ParameterError("analytic quadrature needs a forcing with an evaluator")
        return ModalState(hom + convolve_function(order.mu, b, lam, T, fn, T))
    if quadrature != "samples":
        raise ParameterError(f"unknown quadrature {quadrature!r}")
    F = _forcing_samples(op, f, grid)
    return ModalState(hom + convolve(order.mu, b, lam, grid.nodes, F, _interp(f)))


def mean_state(traj: Trajectory, t: float) -> ModalState:
    """``I^gamma u(t)`` for a forward trajectory.

    The homogeneous part is ``E_{mu,1}(-lam_n t^mu) u0_n`` (exactly ``u0``
    at ``t = 0``); the forced part is the convolution with
    ``K_{mu+gamma}``.
    """
    if traj.kind != "forward":
        raise ParameterError("mean_state needs a forward trajectory")
    grid = traj.grid
    if not 0.0 <= t <= grid.T:
        raise ParameterError(f"t={t} outside [0, {grid.T}]")
    op, order = traj.operator, traj.order
    u0 = traj.u0.coeffs if traj.u0 is not None else np.zeros(op.modes)
    if t == 0.0:
        return ModalState(u0.copy())
    lam = op.eigenvalues
    out = ml_eval(order.mu, 1.0, -lam * t**order.mu) * u0
    if traj.forcing is not None:
        F = _forcing_samples(op, traj.forcing, grid)
        tn, Fn = _truncate(grid.nodes, F, t, _interp(traj.forcing))
        out = out + convolve(order.mu, order.mu + order.gamma, lam, tn, Fn, _interp(traj.forcing))
    return ModalState(out)


# ---------------------------------------------------------------------------
# backward (adjoint) problem
# ---------------------------------------------------------------------------


def adjoint_state(
    op: SpectralOperator, order: HilferOrder, v0: ModalState, T: float, t: float
) -> ModalState:
    """``(T-t)^(-nu(1-mu)) E_{mu,1-nu(1-mu)}(-lam_n (T-t)^mu) v0_n``.

    :raises SingularEvaluationError: at ``t = T`` when ``nu (1-mu) > 0``.
    """
    v0.check(op)
    if not 0.0 <= t <= T:
        raise ParameterError(f"t={t} outside [0, {T}]")
    if t == T and order.outer > 0.0:
        raise SingularEvaluationError("the adjoint state blows up at t=T")
    return ModalState(_backward(op, order, v0.coeffs, T, np.array([t]))[0])


def solve_adjoint(
    op: SpectralOperator, order: HilferOrder, v0: ModalState, grid: TimeGrid
) -> Trajectory:
    """Backward solution with ``I_{t,T}^{nu(1-mu)} v(T) = v0``.

    ``order`` is the forward order ``(mu, nu)``; the backward equation
    carries the dual type ``1 - nu``.
    """
    v0.check(op)
    states = _backward(op, order, v0.coeffs, grid.T, grid.nodes)
    return Trajectory(grid, states, order, op, v0, None, "adjoint")


def adjoint_mean(
    op: SpectralOperator, order: HilferOrder, v0: ModalState, t: float, T: float
) -> ModalState:
    """``I_{t,T}^{nu(1-mu)} v(t) = E_{mu,1}(-lam_n (T-t)^mu) v0_n``."""
    v0.check(op)
    if not 0.0 <= t <= T:
        raise ParameterError(f"t={t} outside [0, {T}]")
    if t == T:
        return ModalState(v0.coeffs.copy())
    return ModalState(ml_eval(order.mu, 1.0, -op.eigenvalues * (T - t) ** order.mu) * v0.coeffs)


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def ml_bound_constant(mu: float, beta: float, xmax: float = 1e8, points: int = 2000) -> float:
    """Empirical ``sup_{x >= 0} |E_{mu,beta}(-x)| (1 + x)`` on a log grid."""
    x = np.concatenate([[0.0], np.logspace(-6, math.log10(xmax), points)])
    return float(np.max(np.abs(ml_eval(mu, beta, -x)) * (1.0 + x)))


def tail_estimate(
    op: SpectralOperator, order: HilferOrder, tail_mass: float, t: float
) -> float:
    """Bound on ``sum_{n>M} |u_n(t)|^2`` from the discarded data mass.

    ``tail_mass`` is ``sum_{n>M} |c_n|^2``. Modes beyond ``M`` have
    ``lam_n >= lam_M``, so each amplitude is at most
    ``t^(beta-1) C / (1 + lam_M t^mu)`` with ``C`` from
    :func:`ml_bound_constant`.
    """
    if tail_mass < 0.0:
        raise ParameterError("tail_mass must be non-negative")
    if t <= 0.0:
        raise SingularEvaluationError("the tail estimate needs t > 0")
    C = ml_bound_constant(order.mu, order.beta)
    amp = t ** (order.beta - 1.0) * C / (1.0 + op.eigenvalues[-1] * t**order.mu)
    return float(tail_mass * amp * amp)


# ---------------------------------------------------------------------------
# Duhamel quadrature
# ---------------------------------------------------------------------------


def kernel(mu: float, b: float, lam: np.ndarray, s: np.ndarray) -> np.ndarray:
    """``K_b(s) = s^(b-1) E_{mu,b}(-lam s^mu)``; shape ``(M, len(s))``."""
    s = np.asarray(s, dtype=float)
    lam = np.asarray(lam, dtype=float)
    z = -lam[:, None] * s[None, :] ** mu
    e = ml_eval(mu, b, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(s > 0.0, s ** (b - 1.0), 0.0 if b > 1.0 else (1.0 if b == 1.0 else np.inf))
    return p[None, :] * e


def convolve(
    mu: float,
    b: float,
    lam: np.ndarray,
    tn: np.ndarray,
    F: np.ndarray,
    interp: str = "linear",
) -> np.ndarray:
    """``int_0^t K_b(t - tau) f_n(tau) dtau`` with ``t = tn[-1]``, per mode.

    ``F`` holds modal samples at ``tn`` (shape ``(len(tn), M)``). With
    ``interp="constant"`` row ``j`` is the value on ``[tn[j], tn[j+1])``.
    """
    W = duhamel_weights(mu, b, lam, tn, interp)
    return np.einsum("mj,jm->m", W, F)


def convolve_function(
    mu: float, b: float, lam: np.ndarray, t: float, fn, T: float | None = None
):
    """``int_0^t K_b(s) f(t - s) ds`` for a callable modal forcing ``fn``.

    ``fn(tau, rem)`` returns modal values of shape ``(len(tau), M)``; when
    the horizon ``T`` is given, ``rem = T - tau`` is passed accurately so
    forcings singular at ``T`` keep full precision.

    ``[0, t]`` is split geometrically toward ``s = 0``; each piece gets
    16-point Gauss-Legendre and the innermost piece Gauss-Jacobi with the
    weight ``s^(b-1)``. Halving continues until that piece is shorter than
    ``t 10^(-20/min(b, mu))``, so forcings that are only smooth in ``s^mu``
    at the singular end are resolved.
    """
    lam = np.asarray(lam, dtype=float)
    if t <= 0.0:
        return np.zeros(lam.size)
    levels = min(1000, math.ceil(20.0 / min(b, mu) * math.log2(10.0)))
    x, w = _GL16
    edges = t * 0.5 ** np.arange(levels + 1)
    lo, hi = edges[1:], edges[:-1]
    s = (lo[:, None] + (hi - lo)[:, None] * 0.5 * (x + 1.0)[None, :]).ravel()
    ws = (0.5 * (hi - lo)[:, None] * w[None, :]).ravel()
    xj, wj = _gauss_jacobi(b)
    eps = edges[-1]
    s = np.concatenate([s, eps * 0.5 * (xj + 1.0)])
    # Gauss-Jacobi absorbs s^(b-1); divide it back out of the kernel below
    ws = np.concatenate([ws, wj * (0.5 * eps) ** b])
    K = kernel(mu, b, lam, s)
    K[:, -xj.size :] /= s[-xj.size :] ** (b - 1.0)
    rem = None if T is None else (T - t) + s
    Fv = np.asarray(fn(t - s, rem), dtype=float).reshape(s.size, lam.size)
    return np.einsum("ms,s,sm->m", K, ws, Fv)


def duhamel_weights(
    mu: float, b: float, lam: np.ndarray, tn: np.ndarray, interp: str = "linear"
) -> np.ndarray:
    """Weights ``W`` (shape ``(M, len(tn))``) with ``sum_j W[:, j] f_j``
    equal to the convolution of the interpolated samples at ``tn[-1]``."""
    lam = np.asarray(lam, dtype=float)
    tn = np.asarray(tn, dtype=float)
    if interp not in ("linear", "constant"):
        raise ParameterError(f"unknown interpolation {interp!r}")
    t = tn[-1]
    a, c = tn[:-1], tn[1:]
    h = c - a
    sa, sc = t - a, t - c
    W = np.zeros((lam.size, tn.size))
    near = h > _FAR * sc
    idx = np.nonzero(near)[0]
    if idx.size:
        A1a = kernel(mu, b + 1.0, lam, sa[idx])
        A1c = kernel(mu, b + 1.0, lam, sc[idx])
        I0 = A1a - A1c
        if interp == "constant":
            np.add.at(W.T, idx, I0.T)
        else:
            A2a = kernel(mu, b + 2.0, lam, sa[idx])
            A2c = kernel(mu, b + 2.0, lam, sc[idx])
            I1 = (A2a - A2c - h[idx] * A1c) / h[idx]
            np.add.at(W.T, idx, (I0 - I1).T)
            np.add.at(W.T, idx + 1, I1.T)
    for sel, (x, w) in (
        ((~near) & (h > _VERY_FAR * sc), _GL8),
        (h <= _VERY_FAR * sc, _GL4),
    ):
        idx = np.nonzero(sel)[0]
        if not idx.size:
            continue
        # nodes tau = a + h (x+1)/2 for every selected cell, flattened
        frac = 0.5 * (x + 1.0)
        tau = a[idx, None] + h[idx, None] * frac[None, :]
        K = kernel(mu, b, lam, (t - tau).ravel()).reshape(lam.size, idx.size, x.size)
        K *= 0.5 * h[idx][None, :, None] * w[None, None, :]
        if interp == "constant":
            np.add.at(W.T, idx, K.sum(axis=2).T)
        else:
            right = (K * frac[None, None, :]).sum(axis=2)
            np.add.at(W.T, idx, (K.sum(axis=2) - right).T)
            np.add.at(W.T, idx + 1, right.T)
    return W


# ---------------------------------------------------------------------------
# internals
# ---------------------------------------------------------------------------


def _gauss_jacobi(b: float):
    """16-point rule on ``[-1, 1]`` for the weight ``(1 + x)^(b-1)``."""
    return roots_jacobi(16, 0.0, b - 1.0)


def _check_mu(mu: float) -> None:
    if not 0.0 < mu <= 1.0:
        raise ParameterError(f"mu={mu} outside (0, 1]")


def _homogeneous(op, order: HilferOrder, c: np.ndarray, t: np.ndarray) -> np.ndarray:
    mu, beta = order.mu, order.beta
    out = np.empty((t.size, op.modes))
    pos = t > 0.0
    if pos.any():
        tp = t[pos]
        e = ml_eval(mu, beta, -op.eigenvalues[None, :] * tp[:, None] ** mu)
        out[pos] = (tp[:, None] ** (beta - 1.0)) * e * c[None, :]
    if (~pos).any():
        if order.gamma > 0.0:
            out[~pos] = np.where(c == 0.0, 0.0, np.nan)
        else:
            out[~pos] = c / math.gamma(beta)
    return out


def _backward(op, order: HilferOrder, c: np.ndarray, T: float, t: np.ndarray) -> np.ndarray:
    dual = order.dual()
    s = T - t
    mu, beta = dual.mu, dual.beta
    out = np.empty((t.size, op.modes))
    pos = s > 0.0
    if pos.any():
        sp = s[pos]
        e = ml_eval(mu, beta, -op.eigenvalues[None, :] * sp[:, None] ** mu)
        out[pos] = (sp[:, None] ** (beta - 1.0)) * e * c[None, :]
    if (~pos).any():
        if order.outer > 0.0:
            out[~pos] = np.where(c == 0.0, 0.0, np.nan)
        else:
            out[~pos] = c / math.gamma(beta)
    return out


def _interp(f) -> str:
    return getattr(f, "interp", "linear")


def _forcing_samples(op: SpectralOperator, f, grid: TimeGrid) -> np.ndarray:
    if f is None:
        return np.zeros((grid.size, op.modes))
    if not f.grid.same_as(grid):
        raise GridMismatchError("forcing and solver use different time grids")
    F = np.asarray(f.values, dtype=float)
    if F.ndim == 1 and op.modes == 1:
        F = F[:, None]
    if F.shape != (grid.size, op.modes):
        raise GridMismatchError(f"forcing has shape {F.shape}, expected ({grid.size}, {op.modes})")
    if not np.all(np.isfinite(F)):
        raise ParameterError("forcing samples must be finite")
    return F


def _truncate(t: np.ndarray, F: np.ndarray, at: float, interp: str):
    """Nodes and samples of the forcing on ``[0, at]``."""
    k = int(np.searchsorted(t, at, side="left"))
    if t[k] == at:
        return t[: k + 1], F[: k + 1]
    w = (at - t[k - 1]) / (t[k] - t[k - 1])
    edge = F[k - 1] if interp == "constant" else (1.0 - w) * F[k - 1] + w * F[k]
    return np.append(t[:k], at), np.vstack([F[:k], edge])


def _jsonable(d):
    if isinstance(d, dict):
        return {k: _jsonable(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_jsonable(v) for v in d]
    if isinstance(d, np.generic):
        return d.item()
    return d
