import math

import numpy as np
import pytest
from oracles import POWER_RULE_HALF

from hilfer.errors import GridMismatchError, ParameterError
from hilfer.fractional_calculus import (
    NEAR_CELLS,
    HilferOrder,
    SampledFunction,
    TimeGrid,
    hilfer_deriv_left,
    hilfer_deriv_right,
    integrate,
    integration_by_parts_residual,
    power_rule,
    rl_integral_left,
    rl_integral_right,
)
from hilfer.special_functions import ml_eval


def sampled(g, fn, **kw):
    return SampledFunction(g, fn(g.nodes), **kw)


# grids ---------------------------------------------------------------------


def test_graded_grid_clusters_toward_requested_end():
    left = TimeGrid.graded(2.0, 64, 3.0)
    right = TimeGrid.graded(2.0, 64, 3.0, "right")
    both = TimeGrid.graded(2.0, 64, 3.0, "both")
    assert left.nodes[1] < 1e-4 and left.nodes[-1] == 2.0
    assert np.allclose(right.nodes, 2.0 - left.nodes[::-1])
    h = np.diff(both.nodes)
    assert np.allclose(h, h[::-1]) and h[0] < h[32]


def test_reflected_grid_round_trips():
    g = TimeGrid.graded(1.0, 10, 2.0)
    assert g.reflected().reflected() is g
    assert g.reflected().toward == "right"


@pytest.mark.parametrize(
    "make",
    [
        lambda: TimeGrid(1.0, np.array([0.0, 0.6, 0.5, 1.0])),
        lambda: TimeGrid(1.0, np.array([0.0, 0.5])),
        lambda: TimeGrid.graded(1.0, 8, 0.5),
        lambda: TimeGrid.graded(1.0, 7, 2.0, "both"),
        lambda: TimeGrid.graded(1.0, 8, 2.0, "middle"),
        lambda: TimeGrid.uniform(0.0, 8),
    ],
)
def test_invalid_grids_are_rejected(make):
    with pytest.raises(ParameterError):
        make()


def test_sampled_function_checks_shape_and_exponent():
    g = TimeGrid.uniform(1.0, 4)
    with pytest.raises(GridMismatchError):
        SampledFunction(g, np.ones(4))
    with pytest.raises(ParameterError):
        SampledFunction(g, np.ones(5), left_exponent=-1.0)
    other = TimeGrid.uniform(1.0, 4)
    a = SampledFunction(g, np.ones(5))
    b = SampledFunction(TimeGrid.uniform(1.0, 8), np.ones(9))
    assert np.all((a * SampledFunction(other, np.ones(5))).values == 1.0)
    with pytest.raises(GridMismatchError):
        a * b


# power rule and integrals --------------------------------------------------


def test_power_rule_value():
    assert power_rule(0.5, 1.0, 1.0) == pytest.approx(POWER_RULE_HALF, rel=1e-15)
    with pytest.raises(ParameterError):
        power_rule(0.5, -1.0, 1.0)
    with pytest.raises(ParameterError):
        power_rule(0.5, 1.0, 0.0)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0, 1.7])
def test_integral_of_linear_data_is_exact(alpha):
    g = TimeGrid.graded(1.0, 50, 1.5)
    f = sampled(g, lambda t: 2.0 - 3.0 * t)
    I = rl_integral_left(f, alpha).values
    t = g.nodes[1:]
    ref = 2.0 * power_rule(alpha, 0.0, t) - 3.0 * power_rule(alpha, 1.0, t)
    assert np.max(np.abs(I[1:] - ref)) < 1e-13
    assert I[0] == 0.0


def test_integral_order_zero_is_identity():
    g = TimeGrid.uniform(1.0, 8)
    f = sampled(g, np.cos)
    assert rl_integral_left(f, 0.0) is f
    with pytest.raises(ParameterError):
        rl_integral_left(f, -0.5)


def test_integral_of_singular_power_uses_its_exponent():
    # I^{1/2} t^{-1/2} = Gamma(1/2) exactly
    g = TimeGrid.graded(1.0, 256, 2.0)
    with np.errstate(divide="ignore"):
        f = sampled(g, lambda t: t**-0.5, left_exponent=-0.5, left_coef=1.0)
    I = rl_integral_left(f, 0.5).values
    err = np.abs(I - math.sqrt(math.pi))
    # exact while the whole history lies in the power-law cells
    assert np.max(err[: NEAR_CELLS + 1]) < 1e-13
    assert np.max(err) < 1e-5


def test_right_integral_mirrors_left():
    g = TimeGrid.uniform(2.0, 40)
    f = sampled(g, lambda t: 1.0 + 0.0 * t)
    I = rl_integral_right(f, 0.5).values
    s = 2.0 - g.nodes
    assert np.max(np.abs(I - s**0.5 / math.gamma(1.5))) < 1e-13


def test_integral_of_smooth_data_converges_at_second_order():
    errs = []
    for J in (64, 128, 256):
        g = TimeGrid.uniform(1.0, J)
        I = rl_integral_left(sampled(g, lambda t: t * t), 0.5).values
        errs.append(np.max(np.abs(I[1:] - power_rule(0.5, 2.0, g.nodes[1:]))))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 1.8)


def test_semigroup_error_is_first_order_in_h():
    for J in (256, 512, 1024):
        g = TimeGrid.uniform(1.0, J)
        f = sampled(g, np.cos)
        for a in (0.25, 0.5, 0.75):
            for b in (0.25, 0.5, 0.75):
                lhs = rl_integral_left(rl_integral_left(f, a), b).values
                rhs = rl_integral_left(f, a + b).values
                assert np.max(np.abs(lhs - rhs)) <= 1e-3 * g.h


def test_fractional_integral_commutes_with_convolution():
    # ((I^a f) * g)(T) = (f * (I^a g))(T), convolutions by the trapezoid rule
    g = TimeGrid.uniform(1.0, 2048)
    f = sampled(g, np.cos)
    h = sampled(g, lambda t: np.exp(-t))
    for a in (0.3, 0.5, 0.8):
        Ia_f = rl_integral_left(f, a).values
        Ia_h = rl_integral_left(h, a).values
        lhs = integrate(SampledFunction(g, Ia_f[::-1] * h.values))
        rhs = integrate(SampledFunction(g, f.values[::-1] * Ia_h))
        assert abs(lhs - rhs) < 1e-5


def test_vector_valued_integral_matches_columns():
    g = TimeGrid.graded(1.0, 64, 2.0)
    F = np.stack([np.cos(g.nodes), g.nodes**2, np.ones(g.size)], axis=1)
    I = rl_integral_left(SampledFunction(g, F), 0.4).values
    for k in range(3):
        Ik = rl_integral_left(SampledFunction(g, F[:, k]), 0.4).values
        assert np.allclose(I[:, k], Ik, rtol=1e-14, atol=1e-16)


def test_integrate_handles_singular_ends():
    errs = []
    for J in (1000, 2000, 4000):
        g = TimeGrid.graded(1.0, J, 4.0, "both")
        with np.errstate(divide="ignore"):
            f = sampled(
                g, lambda t: t**-0.5 + (1.0 - t) ** -0.25, left_exponent=-0.5, right_exponent=-0.25
            )
        errs.append(abs(integrate(f) - (2.0 + 4.0 / 3.0)))
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-5
    smooth = sampled(TimeGrid.uniform(1.0, 100), lambda t: 3.0 * t + 1.0)
    assert integrate(smooth) == pytest.approx(2.5, abs=1e-14)


# Hilfer derivatives ----------------------------------------------------------


def test_caputo_derivative_of_constant_vanishes():
    g = TimeGrid.uniform(1.0, 64)
    D = hilfer_deriv_left(sampled(g, lambda t: 0.0 * t + 3.0), HilferOrder(0.5, 1.0)).values
    assert np.max(np.abs(D[1:])) < 1e-13


def test_riemann_liouville_derivative_of_constant():
    # D^{mu,0} 1 = t^{-mu} / Gamma(1 - mu)
    g = TimeGrid.graded(1.0, 1024, 2.0)
    mu = 0.4
    D = hilfer_deriv_left(sampled(g, lambda t: 0.0 * t + 1.0), HilferOrder(mu, 0.0)).values
    t = g.nodes
    ref = t[1:] ** -mu / math.gamma(1.0 - mu)
    inner = t[1:] > 0.05
    assert np.isnan(D[0])
    assert np.max(np.abs(D[1:] - ref)[inner] / ref[inner]) < 1e-3


def test_first_order_derivative_is_classical():
    g = TimeGrid.uniform(1.0, 400)
    D = hilfer_deriv_left(sampled(g, np.sin), HilferOrder(1.0, 0.3)).values
    assert np.max(np.abs(D - np.cos(g.nodes))) < 1e-4


def test_right_derivative_of_reflected_mode():
    # D_{t,T}^{mu,nu} of (T-t)^(beta-1) E_{mu,beta}(-lam (T-t)^mu) is -lam times it
    mu, nu, lam = 0.5, 0.5, 2.0
    o = HilferOrder(mu, nu)
    b = o.beta
    g = TimeGrid.graded(1.0, 2048, 4.0, "right")
    s = 1.0 - g.nodes
    with np.errstate(divide="ignore"):
        v = s ** (b - 1.0) * ml_eval(mu, b, -lam * s**mu)
    f = SampledFunction(g, v, right_exponent=b - 1.0, right_coef=1.0 / math.gamma(b))
    D = hilfer_deriv_right(f, o).values
    inner = s >= 0.01
    assert np.max(np.abs(D + lam * v)[inner]) / np.max(np.abs(lam * v[inner])) < 1e-3


def test_eigenrelation_residual_shrinks():
    mu, nu, lam = 0.75, 0.5, 10.0
    o = HilferOrder(mu, nu)
    res = []
    for J in (256, 512, 1024):
        g = TimeGrid.graded(1.0, J, 2.0 / mu)
        t = g.nodes
        with np.errstate(divide="ignore"):
            v = t ** (o.beta - 1.0) * ml_eval(mu, o.beta, -lam * t**mu)
        f = SampledFunction(g, v, left_exponent=o.beta - 1.0, left_coef=1.0 / math.gamma(o.beta))
        D = hilfer_deriv_left(f, o).values
        m = (t >= 0.01) & (t < 1.0)
        res.append(np.max(np.abs(D + lam * v)[m]))
    assert res[0] > res[1] > res[2]


def test_derivative_needs_three_nodes():
    g = TimeGrid.uniform(1.0, 1)
    with pytest.raises(ParameterError):
        hilfer_deriv_left(sampled(g, np.cos), HilferOrder(0.5, 0.5))


# integration by parts ----------------------------------------------------------


def _ibp_modes(g, o, lu, lv):
    mu, d = o.mu, o.dual()
    t, s = g.nodes, g.T - g.nodes
    with np.errstate(divide="ignore"):
        u = t ** (o.beta - 1.0) * ml_eval(mu, o.beta, -lu * t**mu)
        v = s ** (d.beta - 1.0) * ml_eval(mu, d.beta, -lv * s**mu)
    U = SampledFunction(g, u, left_exponent=o.beta - 1.0, left_coef=1.0 / math.gamma(o.beta))
    V = SampledFunction(g, v, right_exponent=d.beta - 1.0, right_coef=1.0 / math.gamma(d.beta))
    return U, V


@pytest.mark.parametrize("mu,nu", [(0.5, 0.5), (0.5, 0.3), (0.75, 0.2)])
def test_integration_by_parts_residual_converges(mu, nu):
    o = HilferOrder(mu, nu)
    res = []
    for J in (512, 1024, 2048):
        g = TimeGrid.graded(1.0, J, 2.0 / mu, "both")
        res.append(integration_by_parts_residual(*_ibp_modes(g, o, 1.0, 3.0), o))
    assert res[0] > res[1] > res[2]
    assert res[-1] < 1e-4


def test_integration_by_parts_classical_case():
    # mu = 1 is ordinary integration by parts; the defect is O(h^2)
    res = []
    for J in (200, 400):
        g = TimeGrid.uniform(1.0, J)
        t = g.nodes
        U = SampledFunction(g, 1.0 + t**2)
        V = SampledFunction(g, 2.0 - t + t**3)
        res.append(integration_by_parts_residual(U, V, HilferOrder(1.0, 0.3)))
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.05)
    g = TimeGrid.uniform(1.0, 40000)
    t = g.nodes
    U, V = SampledFunction(g, 1.0 + t**2), SampledFunction(g, 2.0 - t + t**3)
    assert integration_by_parts_residual(U, V, HilferOrder(1.0, 0.3)) <= 1e-8
