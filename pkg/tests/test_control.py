import json
import math

import mpmath as mp
import numpy as np
import pytest
from oracles import E_HALF_175_M1, rel

from hilfer.control import (
    ControlSignal,
    adjoint_observation,
    duality_residual,
    duality_sides,
    observation_norm,
    reachability_matrix,
    synthesize_exact_control,
    synthesize_localized_control,
    verify_steering,
)
from hilfer.errors import GridMismatchError, NumericalFailure, ParameterError
from hilfer.evolution import ModalState, default_grid, terminal_state
from hilfer.fractional_calculus import HilferOrder, TimeGrid
from hilfer.spectral_operator import from_matrix, window_gram

HALF = HilferOrder(0.5, 0.5)
WINDOW = (0.3, 0.6)


@pytest.fixture(scope="module")
def op3():
    return from_matrix(np.diag([1.0, 10.0, 100.0]), np.ones(3), 3)


# constructive control -------------------------------------------------------------


def test_classical_control_closed_form():
    # mu = 1, lam = 1, T = 1: psi(t) = (1 + 2t) e^{-(1-t)}
    op = from_matrix(np.array([[1.0]]), np.ones(1), 1)
    g = TimeGrid.uniform(1.0, 32)
    f = synthesize_exact_control(op, 1.0, ModalState([1.0]), g)
    t = g.nodes
    assert np.allclose(f.values[:, 0], (1.0 + 2.0 * t) * np.exp(-(1.0 - t)), rtol=1e-14)
    rep = verify_steering(op, HilferOrder(1.0, 0.0), f, ModalState([1.0]), g, quadrature="analytic")
    assert rep.rel_error <= 1e-10


@pytest.mark.parametrize("mu", [0.25, 0.5, 0.75, 1.0])
def test_telescoping_identity(op3, mu):
    target = ModalState([1.0, 1.0, 1.0])
    g = default_grid(1.0, 1024, mu, "right")
    f = synthesize_exact_control(op3, mu, target, g)
    got = terminal_state(op3, HilferOrder(mu, 0.5), ModalState.zeros(3), f, g, quadrature="analytic")
    assert np.max(np.abs(got.coeffs - 1.0)) <= 1e-6


@pytest.mark.parametrize("mu", [0.25, 0.5, 0.75])
def test_sampled_steering_converges(op3, mu):
    target = ModalState([1.0, 1.0, 1.0])
    errs = []
    for J in (512, 1024, 2048):
        g = TimeGrid.graded(1.0, J, min(2.0 / mu, 4.0), "right")
        f = synthesize_exact_control(op3, mu, target, g)
        errs.append(verify_steering(op3, HilferOrder(mu, 0.5), f, target, g).abs_error)
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("mu", [0.3, 0.5, 0.8])
def test_dropping_the_gamma_factor_misses_by_gamma_squared(op3, mu):
    # the construction relies on S_mu(0) = 1/Gamma(mu); assuming S_mu(0) = 1
    # drops Gamma(mu)^2 and lands exactly that factor short
    target = ModalState([1.0, -2.0, 0.5])
    g = default_grid(1.0, 256, mu, "right")
    f = synthesize_exact_control(op3, mu, target, g)
    k = 1.0 / math.gamma(mu) ** 2
    mutant = ControlSignal(g, f.values * k, evaluator=lambda tau, rem=None: k * f.evaluator(tau, rem))
    order = HilferOrder(mu, 0.2)
    good = terminal_state(op3, order, ModalState.zeros(3), f, g, quadrature="analytic").coeffs
    bad = terminal_state(op3, order, ModalState.zeros(3), mutant, g, quadrature="analytic").coeffs
    assert np.allclose(good, target.coeffs, rtol=1e-10)
    assert np.allclose(bad * math.gamma(mu) ** 2, target.coeffs, rtol=1e-10)
    assert not np.allclose(bad, target.coeffs, rtol=1e-3)


def test_exact_control_is_linear_in_the_target(op3):
    g = default_grid(1.0, 128, 0.5, "right")
    a, b = ModalState([1.0, 0.0, 2.0]), ModalState([0.0, 3.0, -1.0])
    fa = synthesize_exact_control(op3, 0.5, a, g).values
    fb = synthesize_exact_control(op3, 0.5, b, g).values
    fab = synthesize_exact_control(op3, 0.5, ModalState(2.0 * a.coeffs - b.coeffs), g).values
    assert np.allclose(fab, 2.0 * fa - fb, rtol=1e-13, atol=1e-13)


def test_exact_control_needs_a_fine_last_cell(op3):
    with pytest.raises(ParameterError):
        synthesize_exact_control(op3, 0.5, ModalState.unit(3, 0), TimeGrid.uniform(1.0, 8))
    with pytest.raises(ParameterError):
        synthesize_exact_control(op3, 1.5, ModalState.unit(3, 0), TimeGrid.uniform(1.0, 64))


def test_steering_report_serialises(tmp_path, op3):
    g = default_grid(1.0, 256, 0.5, "right")
    target = ModalState([1.0, 0.5, 0.25])
    rep = verify_steering(op3, HALF, synthesize_exact_control(op3, 0.5, target, g), target, g)
    rep.to_json(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["terminal_error"] == rep.abs_error and d["modes"] == 3 and d["control_energy"] > 0.0
    with pytest.raises(GridMismatchError):
        verify_steering(op3, HALF, ControlSignal(g, np.zeros((g.size, 2))), target, g)


def test_control_signal_validation_and_export(tmp_path):
    g = TimeGrid.uniform(1.0, 2)
    with pytest.raises(GridMismatchError):
        ControlSignal(g, np.zeros((2, 1)))
    with pytest.raises(NumericalFailure):
        ControlSignal(g, np.array([[0.0], [np.nan], [0.0]]))
    with pytest.raises(ParameterError):
        ControlSignal(g, np.zeros((3, 1)), interp="cubic")
    f = ControlSignal(g, np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 1.0]]), window=(0.1, 0.2))
    f.to_csv(tmp_path / "c.csv")
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "t,mode,value" and rows[-1] == "1,2,1"
    assert f.window_descriptor() == {"kind": "box", "bounds": [0.1, 0.2]}
    assert ControlSignal(g, np.zeros((3, 1))).window_descriptor() == {"kind": "full"}


def test_energy_of_linear_and_constant_controls():
    g = TimeGrid.uniform(2.0, 4)
    t = g.nodes
    lin = ControlSignal(g, t[:, None])
    assert lin.energy() == pytest.approx(8.0 / 3.0, rel=1e-14)
    const = ControlSignal(g, np.tile([1.0, 2.0], (g.size, 1)), interp="constant")
    assert const.energy() == pytest.approx(10.0, rel=1e-14)


# localized least-squares control -------------------------------------------------------


@pytest.fixture(scope="module")
def setting(dirichlet8):
    return dirichlet8, TimeGrid.uniform(1.0, 256), ModalState.unit(8, 0)


def test_reachability_columns_match_the_solver(setting):
    op, g, _ = setting
    G, _ = window_gram(op, WINDOW)
    L, cell_of = reachability_matrix(op, HALF, g, G[:, :3], time_cells=8)
    assert L.shape == (8, 24)
    for col in (0, 5, 13, 23):
        k, s = divmod(col, 3)
        values = np.zeros((g.size, 8))
        values[:-1][cell_of == k] = G[:, s]
        f = ControlSignal(g, values, interp="constant")
        got = terminal_state(op, HALF, ModalState.zeros(8), f, g).coeffs
        assert np.allclose(L[:, col], got, rtol=1e-13, atol=1e-16)


def test_reachability_is_linear(setting, rng):
    op, g, _ = setting
    G, _ = window_gram(op, WINDOW)
    L, cell_of = reachability_matrix(op, HALF, g, G[:, :2], time_cells=4)
    c = rng.standard_normal(8)
    C = c.reshape(4, 2)
    values = np.zeros((g.size, 8))
    values[:-1] = C[cell_of] @ G[:, :2].T
    f = ControlSignal(g, values, interp="constant")
    assert np.allclose(L @ c, terminal_state(op, HALF, ModalState.zeros(8), f, g).coeffs, rtol=1e-12)


@pytest.mark.parametrize("mean_mode", [False, True])
def test_localized_control_reaches_the_target(setting, mean_mode):
    op, g, target = setting
    f = synthesize_localized_control(op, HALF, WINDOW, target, g, mean_mode=mean_mode)
    rep = verify_steering(op, HALF, f, target, g, mean_mode)
    assert rep.abs_error <= 1e-3
    assert rep.abs_error == pytest.approx(f.info["residual"])
    assert f.info["window_basis"] == 5 and f.energy() > 0.0
    assert f.window_descriptor()["kind"] == "box"


def _objective(f, ridge):
    return f.info["residual"] ** 2 + ridge * f.energy()


def test_objective_is_monotone_in_control_resolution(setting):
    # nested control spaces can only lower the Tikhonov objective
    op, g, target = setting
    ridge = 1e-6
    by_cells = [
        _objective(synthesize_localized_control(op, HALF, WINDOW, target, g, ridge, time_cells=k), ridge)
        for k in (4, 8, 16, 32, 64)
    ]
    assert np.all(np.diff(by_cells) <= 1e-12)
    by_modes = [
        _objective(synthesize_localized_control(op, HALF, WINDOW, target, g, ridge, window_modes=k), ridge)
        for k in (1, 2, 4, 8)
    ]
    assert np.all(np.diff(by_modes) <= 1e-12)


def test_residual_shrinks_as_the_window_grows(setting):
    op, g, target = setting
    res = [
        synthesize_localized_control(op, HALF, w, target, g, ridge=1e-8).info["residual"]
        for w in ((0.3, 0.6), (0.2, 0.7), (0.1, 0.9), (0.0, math.pi))
    ]
    assert np.all(np.diff(res) < 0.0)


def test_residual_grows_with_the_ridge(setting):
    op, g, target = setting
    res = [
        synthesize_localized_control(op, HALF, WINDOW, target, g, ridge=r).info["residual"]
        for r in (0.0, 1e-6, 1e-4, 1e-2)
    ]
    assert res[0] < 1e-10 and np.all(np.diff(res) > 0.0)


def test_localized_control_validation(setting):
    op, g, target = setting
    with pytest.raises(ParameterError):
        synthesize_localized_control(op, HALF, WINDOW, target, g, ridge=-1.0)
    with pytest.raises(ParameterError):
        synthesize_localized_control(op, HALF, WINDOW, target, g, time_cells=512)
    with pytest.raises(ParameterError):
        synthesize_localized_control(op, HALF, WINDOW, target, g, window_modes=9)
    with pytest.raises(NumericalFailure):
        # two constant-in-time cells of one shape cannot span eight modes
        synthesize_localized_control(op, HALF, WINDOW, target, g, ridge=0.0, time_cells=2, window_modes=1)


# duality ---------------------------------------------------------------------------


def test_duality_single_mode_reference():
    op = from_matrix(np.array([[1.0]]), np.ones(1), 1)
    g = TimeGrid.graded(1.0, 2048, 4.0, "right")
    f = ControlSignal(g, np.ones((g.size, 1)))
    lhs, rhs = duality_sides(op, HALF, f, ModalState([1.0]), g)
    # both sides equal int_0^1 K_{3/4}(s) ds = E_{1/2,7/4}(-1)
    assert rel(lhs, E_HALF_175_M1) < 1e-13
    assert abs(rhs - E_HALF_175_M1) < 1e-6


@pytest.mark.parametrize("interp", ["linear", "constant"])
def test_duality_residual_converges(dirichlet8, interp):
    res = []
    for J in (512, 1024, 2048):
        rng = np.random.default_rng(3)
        g = TimeGrid.graded(1.0, J, 2.0, "right")
        basis = np.stack([np.cos(k * math.pi * g.nodes) for k in range(3)], axis=1)
        f = ControlSignal(g, basis @ rng.standard_normal((3, 8)), interp=interp)
        res.append(duality_residual(dirichlet8, HALF, f, ModalState(rng.standard_normal(8)), g))
    assert res[0] > res[1] > res[2] and res[2] < 1e-5


def test_duality_grid_mismatch(dirichlet8):
    f = ControlSignal(TimeGrid.uniform(1.0, 8), np.zeros((9, 8)))
    with pytest.raises(GridMismatchError):
        duality_sides(dirichlet8, HALF, f, ModalState.unit(8, 0), TimeGrid.uniform(1.0, 16))


# adjoint observations ---------------------------------------------------------------


def test_observation_norm_against_quadrature(dirichlet8):
    # ||v||^2 over (0,pi) x (0,1) for v0 = phi_1: int_0^1 (s^{-1/4} E_{1/2,3/4}(-s^{1/2}))^2 ds
    g = TimeGrid.graded(1.0, 4096, 4.0, "right")
    obs = adjoint_observation(dirichlet8, HALF, ModalState.unit(8, 0), None, g)
    assert obs.values.shape == (g.size, dirichlet8.points.shape[0])
    assert np.all(np.isnan(obs.values[-1, 1:-1]))

    def integrand(u):
        # s = u^2 removes the endpoint singularity
        s = u * u
        e = mp.nsum(lambda k: (-mp.sqrt(s)) ** k / mp.gamma(0.5 * k + 0.75), [0, mp.inf])
        return (s ** -0.25 * e) ** 2 * 2 * u

    ref = math.sqrt(float(mp.quad(integrand, [0, 1])))
    assert observation_norm(obs, dirichlet8, None) == pytest.approx(ref, rel=1e-4)


def test_observation_of_the_control_map(dirichlet8):
    g = TimeGrid.graded(1.0, 256, 2.0, "right")
    v0 = ModalState.unit(8, 1)
    obs = adjoint_observation(dirichlet8, HilferOrder(0.75, 0.5), v0, WINDOW, g, kind="G")
    assert observation_norm(obs, dirichlet8, WINDOW) > 0.0
    obs = adjoint_observation(dirichlet8, HALF, v0, WINDOW, g, kind="G")
    with pytest.raises(ParameterError):
        # (T-t)^{-1/2} squared is not integrable
        observation_norm(obs, dirichlet8, WINDOW)
    with pytest.raises(ParameterError):
        adjoint_observation(dirichlet8, HALF, v0, WINDOW, g, kind="H")
