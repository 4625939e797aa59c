"""Eigen-data of self-adjoint operators with compact resolvent.

A :class:`SpectralOperator` stores the first ``M`` eigenvalues in ascending
order together with an eigenbasis. Closed-form operators (Dirichlet
Laplacians) evaluate their eigenfunctions anywhere; matrix-based ones only
live on their nodes. Every operator carries a spatial quadrature (nodes and
weights) in which its basis is orthonormal and through which fields are
projected.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from pathlib import Path

import mpmath
import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .errors import GridMismatchError, ParameterError

__all__ = [
    "Field",
    "SpectralOperator",
    "dirichlet_laplacian_1d",
    "dirichlet_laplacian_rect",
    "from_matrix",
    "group_eigenvalues",
    "load_matrix",
    "project",
    "robin_dispersion",
    "robin_laplacian_1d_fd",
    "robin_eigenvalues",
    "spectral_power",
    "synthesize",
    "window_gram",
]

DEFAULT_POINTS = 1024
GROUP_TOL = 1e-9
#: Decimal digits used by ``window_gram(..., precision="extended")``.
EXTENDED_DPS = 60


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """First ``M`` eigenpairs of an operator ``A_B`` with ``lambda_1 > 0``.

    ``points`` (shape ``(P, d)``) and ``weights`` (shape ``(P,)``) form the
    quadrature used for inner products; ``basis`` (shape ``(M, P)``) holds
    the eigenfunctions sampled there. ``evaluator`` maps ``(modes, x)`` to
    samples at arbitrary points when a closed form exists.
    """

    eigenvalues: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    basis: np.ndarray
    domain: dict
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ParameterError("need at least one eigenvalue")
        if lam[0] <= 0.0:
            raise ParameterError("the first eigenvalue must be positive")
        if np.any(np.diff(lam) < 0.0):
            raise ParameterError("eigenvalues must be ascending")
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.basis, dtype=float)
        if b.shape != (lam.size, pts.shape[0]) or w.shape != (pts.shape[0],):
            raise ParameterError("basis, points and weights have inconsistent shapes")
        for name, arr in (("eigenvalues", lam), ("points", pts), ("weights", w), ("basis", b)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def modes(self) -> int:
        return self.eigenvalues.size

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def gram(self) -> np.ndarray:
        """Discrete Gram matrix of the stored basis over the whole domain."""
        return (self.basis * self.weights) @ self.basis.T

    def eval_modes(self, x) -> np.ndarray:
        """Eigenfunctions at points ``x``; shape ``(M, len(x))``."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 and self.dim == 1:
            x = x[:, None]
        if self.evaluator is None:
            if x.shape == self.points.shape and np.array_equal(x, self.points):
                return self.basis.copy()
            raise ParameterError("this operator is only known on its own nodes")
        return self.evaluator(np.arange(self.modes), x)

    def truncated(self, modes: int) -> SpectralOperator:
        if not 1 <= modes <= self.modes:
            raise ParameterError(f"modes must lie in [1, {self.modes}]")
        return replace(self, eigenvalues=self.eigenvalues[:modes], basis=self.basis[:modes])


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of a spatial function on an operator's quadrature nodes."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, op: SpectralOperator, fn: Callable) -> Field:
        pts = op.points
        return cls(fn(pts[:, 0]) if op.dim == 1 else fn(*pts.T))


def _trapezoid_weights(n: int, length: float) -> tuple[np.ndarray, np.ndarray]:
    x = np.linspace(0.0, length, n)
    w = np.full(n, length / (n - 1))
    w[0] = w[-1] = 0.5 * length / (n - 1)
    return x, w


def _check_modes(modes: int) -> None:
    if int(modes) != modes or modes < 1:
        raise ParameterError("modes must be a positive integer")


def dirichlet_laplacian_1d(length: float, modes: int, points: int = DEFAULT_POINTS) -> SpectralOperator:
    """``-d^2/dx^2`` on ``(0, L)`` with Dirichlet ends.

    ``lambda_n = (n pi / L)^2`` and ``phi_n = sqrt(2/L) sin(n pi x / L)``.
    The trapezoid rule on ``points`` uniform nodes is exact for the Gram
    matrix of the first ``points - 2`` modes.
    """
    _check_modes(modes)
    if not length > 0.0:
        raise ParameterError("length must be positive")
    if points < modes + 2:
        raise ParameterError("need more quadrature points than modes")
    x, w = _trapezoid_weights(points, length)

    def evaluator(idx, xx):
        n = np.asarray(idx)[:, None] + 1
        return math.sqrt(2.0 / length) * np.sin(n * math.pi * xx[:, 0][None, :] / length)

    n = np.arange(1, modes + 1)
    lam = (n * math.pi / length) ** 2
    pts = x[:, None]
    return SpectralOperator(
        lam, pts, w, evaluator(n - 1, pts), {"kind": "dirichlet_1d", "length": length}, evaluator
    )


def dirichlet_laplacian_rect(
    lx: float, ly: float, modes: int, points: int = 128
) -> SpectralOperator:
    """Dirichlet Laplacian on ``(0, lx) x (0, ly)``.

    Eigenvalues ``(m pi/lx)^2 + (n pi/ly)^2`` are sorted ascending; ties are
    ordered lexicographically in ``(m, n)``. ``points`` is the node count per
    side of the tensor trapezoid rule.
    """
    _check_modes(modes)
    if not (lx > 0.0 and ly > 0.0):
        raise ParameterError("side lengths must be positive")
    kmax = modes
    pairs = [(m, n) for m in range(1, kmax + 1) for n in range(1, kmax + 1)]
    pairs.sort(key=lambda mn: ((mn[0] * math.pi / lx) ** 2 + (mn[1] * math.pi / ly) ** 2, mn))
    pairs = np.array(pairs[:modes])
    if points < pairs.max() + 2:
        raise ParameterError("need more quadrature points than the highest frequency")
    lam = (pairs[:, 0] * math.pi / lx) ** 2 + (pairs[:, 1] * math.pi / ly) ** 2
    xs, wx = _trapezoid_weights(points, lx)
    ys, wy = _trapezoid_weights(points, ly)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    w = np.outer(wx, wy).ravel()
    norm = 2.0 / math.sqrt(lx * ly)

    def evaluator(idx, xy):
        mn = pairs[np.asarray(idx)]
        return (
            norm
            * np.sin(mn[:, :1] * math.pi * xy[:, 0][None, :] / lx)
            * np.sin(mn[:, 1:] * math.pi * xy[:, 1][None, :] / ly)
        )

    domain = {"kind": "dirichlet_rect", "lx": lx, "ly": ly, "pairs": pairs.tolist()}
    return SpectralOperator(lam, pts, w, evaluator(np.arange(modes), pts), domain, evaluator)


def robin_laplacian_1d_fd(
    length: float, beta_coef: float, grid_size: int, modes: int
) -> SpectralOperator:
    """Finite-difference ``-u''`` on ``(0, L)`` with ``u' = beta u`` at 0 and
    ``-u' = beta u`` at ``L`` (outward normal derivative plus ``beta u`` is 0).

    Piecewise-linear finite elements with a lumped mass matrix on
    ``grid_size`` uniform nodes; the boundary rows pick up ``beta``.
    """
    _check_modes(modes)
    if not beta_coef > 0.0:
        raise ParameterError("the Robin coefficient must be positive")
    if not length > 0.0:
        raise ParameterError("length must be positive")
    if grid_size < modes + 2:
        raise ParameterError("grid_size must be at least modes + 2")
    x, w = _trapezoid_weights(grid_size, length)
    h = length / (grid_size - 1)
    main = np.full(grid_size, 2.0 / h)
    main[0] = main[-1] = 1.0 / h + beta_coef
    off = np.full(grid_size - 1, -1.0 / h)
    K = np.diag(main) + np.diag(off, 1) + np.diag(off, -1)
    op = from_matrix(K, w, modes, points=x[:, None])
    domain = {"kind": "robin_1d_fd", "length": length, "beta": beta_coef, "grid_size": grid_size}
    return replace(op, domain=domain)


def robin_dispersion(k, length: float, beta_coef: float):
    """Zero exactly at ``k = sqrt(lambda)`` of the continuous Robin problem."""
    k = np.asarray(k, dtype=float)
    return (k * k - beta_coef**2) * np.sin(k * length) - 2.0 * beta_coef * k * np.cos(k * length)


def robin_eigenvalues(length: float, beta_coef: float, modes: int) -> np.ndarray:
    """Roots of :func:`robin_dispersion` by bracketing; returns ``k^2``."""
    _check_modes(modes)
    roots = []
    # one root in each ((n-1) pi/L, n pi/L]; the endpoints bracket it
    for n in range(1, modes + 1):
        a = (n - 1) * math.pi / length + 1e-12
        b = n * math.pi / length
        roots.append(brentq(robin_dispersion, a, b, args=(length, beta_coef), xtol=1e-15))
    return np.asarray(roots) ** 2


def from_matrix(stiffness, weights, modes: int, points=None) -> SpectralOperator:
    """Generalised eigenpairs of ``K v = lambda W v`` with ``W = diag(weights)``.

    Eigenvectors are ``W``-orthonormal. ``points`` defaults to node indices.
    """
    _check_modes(modes)
    K = np.asarray(stiffness, dtype=float)
    w = np.asarray(weights, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ParameterError("stiffness must be a square matrix")
    if w.shape != (K.shape[0],) or np.any(w <= 0.0):
        raise ParameterError("weights must be positive and match the matrix size")
    if modes > K.shape[0]:
        raise ParameterError("more modes requested than the matrix dimension")
    scale = max(1.0, float(np.max(np.abs(K))))
    if np.max(np.abs(K - K.T)) > 1e-12 * scale:
        raise ParameterError("stiffness matrix is not symmetric")
    lam, vec = sla.eigh(0.5 * (K + K.T), np.diag(w), subset_by_index=[0, modes - 1])
    if lam[0] <= 1e-12 * scale:
        raise ParameterError(f"smallest eigenvalue {lam[0]:.3e} is not positive")
    # fix the sign so each eigenvector starts positive, for reproducibility
    lead = vec[np.argmax(np.abs(vec) > 1e-8 * np.abs(vec).max(axis=0), axis=0), np.arange(modes)]
    vec = vec * np.where(lead < 0.0, -1.0, 1.0)
    pts = np.arange(K.shape[0], dtype=float)[:, None] if points is None else np.asarray(points, float)
    return SpectralOperator(lam, pts, w, vec.T, {"kind": "matrix", "n": K.shape[0]})


def load_matrix(path: str | Path) -> np.ndarray:
    """Read a dense matrix written as CSV rows after a ``n=<dim>`` header."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParameterError(f"cannot read matrix file {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].strip().startswith("n="):
        raise ParameterError(f"{path}: first line must be 'n=<dim>'")
    try:
        n = int(lines[0].strip()[2:])
        rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    except ValueError as exc:
        raise ParameterError(f"{path}: malformed matrix entry") from exc
    M = np.asarray(rows)
    if M.shape != (n, n):
        raise ParameterError(f"{path}: expected {n}x{n} entries, found {M.shape}")
    return M


def spectral_power(op: SpectralOperator, s: float) -> SpectralOperator:
    """``A^s`` in the spectral sense: eigenvalues ``lambda^s``, same basis."""
    if not 0.0 < s < 1.0:
        raise ParameterError("s must lie in (0, 1)")
    domain = dict(op.domain, power=s * op.domain.get("power", 1.0))
    return replace(op, eigenvalues=op.eigenvalues**s, domain=domain)


def project(op: SpectralOperator, f: Field | np.ndarray) -> np.ndarray:
    """Coefficients ``(f, phi_n)`` in the operator's quadrature."""
    v = f.values if isinstance(f, Field) else np.asarray(f, dtype=float)
    if v.shape[0] != op.points.shape[0]:
        raise GridMismatchError("field and operator use different spatial grids")
    return op.basis @ (op.weights[:, None] * v.reshape(v.shape[0], -1)).reshape(v.shape) if v.ndim > 1 else op.basis @ (op.weights * v)


def synthesize(op: SpectralOperator, coeffs, points=None) -> Field:
    """``sum_n c_n phi_n`` on the operator nodes or at ``points``."""
    c = np.asarray(coeffs, dtype=float)
    if c.shape[0] != op.modes:
        raise ParameterError(f"expected {op.modes} coefficients, got {c.shape[0]}")
    basis = op.basis if points is None else op.eval_modes(points)
    return Field(c @ basis if c.ndim == 1 else basis.T @ c)


def window_mask(op: SpectralOperator, window) -> np.ndarray:
    """Boolean mask over the operator nodes for ``window``.

    ``window`` is ``None`` (whole domain), an interval ``(a, b)`` for 1D,
    a box ``((ax, bx), (ay, by))`` for 2D, or an explicit boolean mask.
    """
    pts = op.points
    if window is None:
        return np.ones(pts.shape[0], dtype=bool)
    w = np.asarray(window)
    if w.dtype == bool:
        if w.shape != (pts.shape[0],):
            raise GridMismatchError("mask length does not match the operator nodes")
        return w
    box = np.asarray(window, dtype=float).reshape(-1, 2)
    if box.shape[0] != op.dim:
        raise ParameterError("window dimension does not match the domain")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ParameterError("window is empty")
    m = np.ones(pts.shape[0], dtype=bool)
    for d in range(op.dim):
        m &= (pts[:, d] >= box[d, 0]) & (pts[:, d] <= box[d, 1])
    return m


def window_gram(
    op: SpectralOperator,
    window,
    modes: int | None = None,
    points: int = DEFAULT_POINTS,
    precision: str = "double",
):
    """``G_mn = int_omega phi_m phi_n`` and its smallest eigenvalue.

    For operators with closed-form eigenfunctions and a 1D interval window,
    the integral uses the trapezoid rule on ``points`` uniform nodes spanning
    the window itself; otherwise the operator's own quadrature restricted to
    the window is used.

    Windowed sine Grams are violently ill-conditioned (about ``1e-25`` for
    eight modes on a tenth of the interval), far below double precision.
    ``precision="extended"`` assembles and diagonalises the 1D Dirichlet
    Gram with ``EXTENDED_DPS`` decimal digits; the matrix is returned
    rounded to double.
    """
    m = op.modes if modes is None else modes
    if not 1 <= m <= op.modes:
        raise ParameterError(f"modes must lie in [1, {op.modes}]")
    if precision == "extended":
        return _window_gram_extended(op, window, m, points)
    if precision != "double":
        raise ParameterError(f"unknown precision {precision!r}")
    if window is None:
        G = op.gram()[:m, :m]
    elif op.evaluator is not None and op.dim == 1 and np.asarray(window).dtype != bool:
        a, b = map(float, np.asarray(window, dtype=float).ravel())
        if b <= a:
            raise ParameterError("window is empty")
        x, w = _trapezoid_weights(points, b - a)
        phi = op.evaluator(np.arange(m), (x + a)[:, None])
        G = (phi * w) @ phi.T
    else:
        mask = window_mask(op, window)
        if not mask.any():
            raise ParameterError("window contains no quadrature nodes")
        B = op.basis[:m][:, mask]
        G = (B * op.weights[mask]) @ B.T
    G = 0.5 * (G + G.T)
    return G, float(np.linalg.eigvalsh(G)[0])


def _window_gram_extended(op: SpectralOperator, window, m: int, points: int):
    if op.domain.get("kind") != "dirichlet_1d":
        raise ParameterError("extended precision is available for the 1D Dirichlet operator")
    if window is None:
        a, b = 0.0, float(op.domain["length"])
    else:
        a, b = map(float, np.asarray(window, dtype=float).ravel())
    if b <= a:
        raise ParameterError("window is empty")
    with mpmath.workdps(EXTENDED_DPS):
        L = mpmath.mpf(op.domain["length"])
        lo, hi = mpmath.mpf(a), mpmath.mpf(b)
        h = (hi - lo) / (points - 1)
        k = mpmath.pi / L
        norm = 2 / L
        rows = []
        for i in range(points):
            x = lo + i * h
            w = h / 2 if i in (0, points - 1) else h
            rows.append((w, [mpmath.sin((n + 1) * k * x) for n in range(m)]))
        G = mpmath.matrix(m, m)
        for p in range(m):
            for q in range(p, m):
                g = norm * mpmath.fsum(w * v[p] * v[q] for w, v in rows)
                G[p, q] = G[q, p] = g
        lam_min = min(mpmath.eigsy(G, eigvals_only=True))
        out = np.array([[float(G[p, q]) for q in range(m)] for p in range(m)])
    return out, float(lam_min)


def group_eigenvalues(op: SpectralOperator, tol: float = GROUP_TOL) -> list[tuple[float, list[int]]]:
    """Distinct eigenvalues with the indices sharing them (relative ``tol``)."""
    groups: list[tuple[float, list[int]]] = []
    for i, lam in enumerate(op.eigenvalues):
        if groups and abs(lam - groups[-1][0]) <= tol * max(1.0, abs(lam)):
            groups[-1][1].append(i)
        else:
            groups.append((float(lam), [i]))
    return groups
