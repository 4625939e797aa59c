"""Steering controls: the constructive control, windowed least squares,
verification, the duality identity and the adjoint observation maps.

Controls are stored by their modal samples ``f_n(t_j)``. A windowed
control ``f(x, t) = chi_omega(x) sum_k c_k(t) phi_k(x)`` is first built in
physical space and then projected, so its modal samples are
``sum_k G_nk c_k(t)`` with ``G`` the window Gram matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import GridMismatchError, NumericalFailure, ParameterError
from .evolution import ModalState, _backward, duhamel_weights, terminal_state
from .fractional_calculus import SampledFunction, TimeGrid, integrate
from .order import HilferOrder
from .special_functions import ml_eval, ml_mode_deriv_scaled
from .spectral_operator import SpectralOperator, window_gram, window_mask

__all__ = [
    "ControlSignal",
    "SteeringReport",
    "adjoint_observation",
    "duality_residual",
    "duality_sides",
    "observation_norm",
    "reachability_matrix",
    "synthesize_exact_control",
    "synthesize_localized_control",
    "verify_steering",
]

DEFAULT_TIME_CELLS = 32
# window-basis directions with Gram eigenvalue below this (relative) are dropped
_GRAM_RTOL = 1e-13
# the constructive control needs the last cell to resolve (T - t)^(1-mu)
_MAX_LAST_CELL = 0.05


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Modal samples of a control on a time grid.

    ``values`` has shape ``(J+1, M)``. With ``interp="constant"`` row ``j``
    is the value on ``[t_j, t_{j+1})`` and the last row is ignored.
    ``window`` is ``None`` for the whole domain, an interval/box, or a
    boolean node mask. ``spatial`` optionally holds the coefficients of the
    windowed eigenfunctions per node (shape ``(J+1, K)``) together with
    their Gram matrix ``spatial_gram``, which makes the energy exact.
    ``evaluator``, when present, is ``fn(tau, rem=None)`` returning modal
    values of shape ``(len(tau), M)``, where ``rem`` optionally carries
    ``T - tau`` exactly; it enables analytic quadrature.
    """

    grid: TimeGrid
    values: np.ndarray
    window: object = None
    interp: str = "linear"
    spatial: np.ndarray | None = field(default=None, repr=False)
    spatial_gram: np.ndarray | None = field(default=None, repr=False)
    info: dict = field(default_factory=dict)
    evaluator: object = field(default=None, repr=False)

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.grid.size:
            raise GridMismatchError(f"control samples have shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NumericalFailure("control samples must be finite at every node")
        if self.interp not in ("linear", "constant"):
            raise ParameterError(f"unknown interpolation {self.interp!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def modes(self) -> int:
        return self.values.shape[1]

    def energy(self) -> float:
        """``||f||^2`` in ``L^2(Omega x (0, T))`` of the interpolated control."""
        h = np.diff(self.grid.nodes)
        if self.spatial is not None:
            C, G = self.spatial, self.spatial_gram
            q = np.einsum("jk,kl,jl->j", C, G, C)
            if self.interp == "constant":
                return float(np.sum(h * q[:-1]))
            cross = np.einsum("jk,kl,jl->j", C[:-1], G, C[1:])
            return float(np.sum(h * (q[:-1] + cross + q[1:]) / 3.0))
        V = self.values
        if self.interp == "constant":
            return float(np.sum(h[:, None] * V[:-1] ** 2))
        a, b = V[:-1], V[1:]
        return float(np.sum(h[:, None] * (a * a + a * b + b * b) / 3.0))

    def to_csv(self, path) -> None:
        t = self.grid.nodes
        with open(path, "w", newline="\n") as fh:
            fh.write("t,mode,value\n")
            for j in range(t.size):
                for n in range(self.modes):
                    fh.write(f"{t[j]:.17g},{n + 1},{self.values[j, n]:.17g}\n")

    def window_descriptor(self) -> dict:
        w = self.window
        if w is None:
            return {"kind": "full"}
        arr = np.asarray(w)
        if arr.dtype == bool:
            return {"kind": "mask", "nodes": int(arr.sum())}
        return {"kind": "box", "bounds": arr.astype(float).tolist()}


@dataclass(frozen=True)
class SteeringReport:
    """How close a control steers the zero state to a target at time ``T``."""

    achieved: np.ndarray
    target: np.ndarray
    abs_error: float
    rel_error: float
    control_energy: float
    modes: int
    grid_size: int
    mean_mode: bool = False

    def to_dict(self) -> dict:
        return {
            "terminal_error": self.abs_error,
            "relative_error": self.rel_error,
            "control_energy": self.control_energy,
            "modes": self.modes,
            "grid": self.grid_size,
            "mean_mode": self.mean_mode,
            "achieved": self.achieved.tolist(),
            "target": self.target.tolist(),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def synthesize_exact_control(
    op: SpectralOperator, mu: float, target: ModalState, grid: TimeGrid
) -> ControlSignal:
    """The constructive control of the approximate-controllability proof.

    ``psi(t) = Gamma(mu)^2 / T (T-t)^(1-mu) [S_mu(T-t) + 2t d/dt S_mu(T-t)] phi``,
    so that ``(T-tau)^(mu-1) S_mu(T-tau) psi(tau)`` is the derivative of
    ``Gamma(mu)^2 / T tau S_mu(T-tau)^2 phi`` and the Duhamel integral
    telescopes to ``Gamma(mu)^2 S_mu(0)^2 phi = phi``. In terms of
    ``s = T - t`` the bracket is ``S(s) - 2t S'(s)``. The control acts on
    the whole domain.
    """
    if not 0.0 < mu <= 1.0:
        raise ParameterError(f"mu={mu} outside (0, 1]")
    target.check(op)
    T = grid.T
    t = grid.nodes
    if t[-1] - t[-2] > _MAX_LAST_CELL * T:
        raise ParameterError("grid is too coarse near t=T to resolve the control")
    scale = math.gamma(mu) ** 2 / T
    lams = op.eigenvalues.copy()
    phi = target.coeffs.copy()

    def evaluator(tau, rem=None):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        s = np.clip(T - tau if rem is None else np.atleast_1d(rem), 0.0, None)
        out = np.empty((tau.size, lams.size))
        for n, lam in enumerate(lams):
            e = ml_eval(mu, mu, -lam * s**mu)
            d = ml_mode_deriv_scaled(mu, lam, s)
            out[:, n] = scale * (s ** (1.0 - mu) * e - 2.0 * tau * d) * phi[n]
        return out

    return ControlSignal(
        grid, evaluator(t), None, "linear", info={"method": "constructive"}, evaluator=evaluator
    )


def verify_steering(
    op: SpectralOperator,
    order: HilferOrder,
    f: ControlSignal,
    target: ModalState,
    grid: TimeGrid,
    mean_mode: bool = False,
    quadrature: str = "samples",
) -> SteeringReport:
    """Run the forced solver from ``u0 = 0`` and compare with ``target``.

    Steering from a non-zero ``u0`` reduces to this case: pass the target
    minus the free terminal state. ``quadrature="analytic"`` integrates the
    control's evaluator instead of its samples.
    """
    target.check(op)
    if f.modes != op.modes:
        raise GridMismatchError("control and operator have different mode counts")
    zero = ModalState.zeros(op.modes)
    got = terminal_state(op, order, zero, f, grid, mean_mode, quadrature).coeffs
    err = float(np.linalg.norm(got - target.coeffs))
    ref = float(np.linalg.norm(target.coeffs))
    return SteeringReport(
        got,
        target.coeffs.copy(),
        err,
        err / ref if ref > 0.0 else err,
        f.energy(),
        op.modes,
        grid.size,
        mean_mode,
    )


def reachability_matrix(
    op: SpectralOperator,
    order: HilferOrder,
    grid: TimeGrid,
    gram: np.ndarray,
    time_cells: int = DEFAULT_TIME_CELLS,
    mean_mode: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal map of piecewise-constant windowed controls.

    Column ``(k, s)`` is the terminal state for the control equal to the
    ``s``-th spatial basis function (modal coefficients ``gram[:, s]``) on
    time cell ``k``, as :func:`terminal_state` would compute it. Returns ``L`` of
    shape ``(M, time_cells * K)`` and the cell index of every grid cell.
    """
    cell_of = _cell_index(grid, time_cells)
    M, K = gram.shape
    b = order.mu + order.gamma if mean_mode else order.mu
    # the solver's own Duhamel weights; summing them over a control cell is
    # the terminal response to the unit control on that cell
    W = duhamel_weights(order.mu, b, op.eigenvalues, grid.nodes, "constant")[:, :-1]
    resp = np.zeros((M, time_cells))
    np.add.at(resp.T, cell_of, W.T)
    L = resp[:, :, None] * gram[:, None, :]
    return L.reshape(M, time_cells * K), cell_of


def synthesize_localized_control(
    op: SpectralOperator,
    order: HilferOrder,
    window,
    target: ModalState,
    grid: TimeGrid,
    ridge: float | None = None,
    mean_mode: bool = False,
    time_cells: int = DEFAULT_TIME_CELLS,
    window_modes: int | None = None,
) -> ControlSignal:
    """Tikhonov least-squares control supported in ``window``.

    Minimises ``||L c - target||^2 + ridge ||f||^2`` over piecewise-constant
    controls built from the first ``window_modes`` eigenfunctions restricted
    to the window. Those restrictions are orthonormalised in ``L^2(omega)``
    first, dropping directions whose Gram eigenvalue is below
    ``_GRAM_RTOL`` times the largest (they are invisible in double
    precision). ``ridge`` defaults to ``1e-8 ||L||^2``; ``ridge = 0``
    returns the minimum-norm least-squares solution. The achieved residual
    is stored in ``info``.
    """
    target.check(op)
    K = op.modes if window_modes is None else window_modes
    if not 1 <= K <= op.modes:
        raise ParameterError(f"window_modes must lie in [1, {op.modes}]")
    if time_cells < 1 or time_cells > grid.size - 1:
        raise ParameterError("time_cells must lie between 1 and the grid cell count")
    G, gmin = window_gram(op, window, op.modes)
    if op.domain.get("kind") == "dirichlet_1d" and _is_interval(window):
        gmin = window_gram(op, window, op.modes, precision="extended")[1]
    if gmin <= 0.0:
        raise ParameterError("window Gram matrix is singular for the active modes")
    # orthonormalise the windowed eigenfunctions; directions the double
    # precision Gram cannot resolve carry no measurable control anyway
    w_eig, w_vec = np.linalg.eigh(G[:K, :K])
    keep = w_eig > _GRAM_RTOL * w_eig[-1]
    B = w_vec[:, keep] / np.sqrt(w_eig[keep])
    cross = G[:, :K] @ B
    nb = cross.shape[1]
    L, cell_of = reachability_matrix(op, order, grid, cross, time_cells, mean_mode)
    h = np.diff(grid.nodes)
    width = np.bincount(cell_of, weights=h, minlength=time_cells)
    if ridge is None:
        ridge = 1e-8 * float(np.linalg.norm(L, 2)) ** 2
    if ridge < 0.0:
        raise ParameterError("ridge must be non-negative")
    if ridge == 0.0:
        rank = np.linalg.matrix_rank(L)
        if rank < op.modes:
            raise NumericalFailure(f"reachability matrix has rank {rank} < {op.modes}")
        c = sla.lstsq(L, target.coeffs)[0]
    else:
        # ||f||^2 = sum_k width_k |d_k|^2 in the orthonormal window basis
        R = np.repeat(np.sqrt(width), nb)
        A = np.vstack([L, math.sqrt(ridge) * np.diag(R)])
        rhs = np.concatenate([target.coeffs, np.zeros(R.size)])
        c = sla.lstsq(A, rhs)[0]
    C = c.reshape(time_cells, nb)
    spatial = np.zeros((grid.size, nb))
    spatial[:-1] = C[cell_of]
    spatial[-1] = spatial[-2]
    info = {
        "method": "least_squares",
        "ridge": ridge,
        "time_cells": time_cells,
        "window_modes": K,
        "window_basis": nb,
    }
    signal = ControlSignal(
        grid, spatial @ cross.T, window, "constant", spatial, np.eye(nb), info
    )
    rep = verify_steering(op, order, signal, target, grid, mean_mode)
    signal.info.update(residual=rep.abs_error, relative_residual=rep.rel_error)
    return signal


def duality_sides(
    op: SpectralOperator,
    order: HilferOrder,
    f: ControlSignal,
    v0: ModalState,
    grid: TimeGrid,
) -> tuple[float, float]:
    """Both sides of ``(I^gamma u(T), v0) = int_0^T (f, v) dt`` with ``u0 = 0``.

    The left side uses the product-integration Duhamel weights; the right
    side samples the adjoint solution and integrates ``(f, v)`` with the
    trapezoid rule and a power-law last cell, so the two share no
    quadrature.
    """
    v0.check(op)
    if not f.grid.same_as(grid):
        raise GridMismatchError("control and duality check use different grids")
    mean_T = terminal_state(op, order, ModalState.zeros(op.modes), f, grid, mean=True)
    lhs = float(mean_T.coeffs @ v0.coeffs)
    V = _backward(op, order, v0.coeffs, grid.T, grid.nodes)
    q = -order.outer
    if f.interp == "linear":
        pair = SampledFunction(
            grid, np.sum(f.values * V, axis=1), right_exponent=q if q < 0.0 else None
        )
        rhs = float(integrate(pair))
    else:
        h = np.diff(grid.nodes)
        cells = 0.5 * (V[1:] + V[:-1]) * h[:, None]
        if q < 0.0:
            cells[-1] = V[-2] * h[-1] / (q + 1.0)
        rhs = float(np.sum(cells * f.values[:-1]))
    return lhs, rhs


def duality_residual(
    op: SpectralOperator,
    order: HilferOrder,
    f: ControlSignal,
    v0: ModalState,
    grid: TimeGrid,
) -> float:
    """``|LHS - RHS|`` of the duality identity; see :func:`duality_sides`."""
    lhs, rhs = duality_sides(op, order, f, v0, grid)
    return abs(lhs - rhs)


def adjoint_observation(
    op: SpectralOperator,
    order: HilferOrder,
    v0: ModalState,
    window,
    grid: TimeGrid,
    kind: str = "F",
) -> SampledFunction:
    """Physical samples of an adjoint map on ``window x (0, T)``.

    ``kind="F"``: the adjoint solution ``v`` restricted to the window.
    ``kind="G"``: ``(T-t)^(mu-1) sum_n (phi_n, psi) E_{mu,mu}(-lam_n (T-t)^mu) phi_n``
    with ``psi`` given by the coefficients ``v0``.
    Values have shape ``(J+1, P)`` over the window nodes; the sample at
    ``t = T`` is NaN when the map is singular there.
    """
    v0.check(op)
    mask = window_mask(op, window)
    if not mask.any():
        raise ParameterError("window contains no quadrature nodes")
    s = grid.T - grid.nodes
    if kind == "F":
        modal = _backward(op, order, v0.coeffs, grid.T, grid.nodes)
        q = -order.outer
    elif kind == "G":
        mu = order.mu
        modal = np.empty((grid.size, op.modes))
        pos = s > 0.0
        e = ml_eval(mu, mu, -op.eigenvalues[None, :] * s[pos, None] ** mu)
        modal[pos] = s[pos, None] ** (mu - 1.0) * e * v0.coeffs
        if mu < 1.0:
            modal[~pos] = np.where(v0.coeffs == 0.0, 0.0, np.nan)
        else:
            modal[~pos] = v0.coeffs
        q = mu - 1.0
    else:
        raise ParameterError(f"unknown adjoint map {kind!r}")
    phys = modal @ op.basis[:, mask]
    return SampledFunction(grid, phys, right_exponent=q if q < 0.0 else None)


def observation_norm(obs: SampledFunction, op: SpectralOperator, window) -> float:
    """``L^2(omega x (0, T))`` norm of an observation from :func:`adjoint_observation`."""
    mask = window_mask(op, window)
    w = op.weights[mask]
    V = obs.values
    sq = np.where(np.isfinite(V), V, np.nan) ** 2 @ w
    q = obs.right_exponent
    f = SampledFunction(obs.grid, sq, right_exponent=None if q is None else 2.0 * q)
    if q is not None and 2.0 * q <= -1.0:
        raise ParameterError("observation is not square integrable in time")
    return math.sqrt(max(float(integrate(f)), 0.0))


def _is_interval(window) -> bool:
    return window is None or (np.asarray(window).dtype != bool and np.size(window) == 2)


def _cell_index(grid: TimeGrid, time_cells: int) -> np.ndarray:
    """Control cell of every grid cell, by midpoint."""
    t = grid.nodes
    mid = 0.5 * (t[1:] + t[:-1])
    k = np.floor(mid / grid.T * time_cells).astype(int)
    k = np.clip(k, 0, time_cells - 1)
    if np.unique(k).size != time_cells:
        raise ParameterError("every control cell must contain at least one grid cell")
    return k
