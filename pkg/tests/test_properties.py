import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from hilfer.evolution import ModalState, solve_homogeneous
from hilfer.fractional_calculus import HilferOrder, TimeGrid
from hilfer.spectral_operator import from_matrix
from hilfer.special_functions import ml_eval, ml_time_integral

alphas = st.floats(0.05, 1.0)
betas = st.floats(0.1, 2.0)
xs = st.floats(0.0, 1e4)


@settings(max_examples=200, deadline=None)
@given(alphas, betas, xs)
def test_completely_monotone_values_are_positive_and_bounded(a, b, x):
    # for 0 < a <= 1 and b >= a, E_{a,b}(-x) is completely monotone
    b = max(a, b)
    v = float(ml_eval(a, b, -x))
    assert 0.0 < v <= 1.0 / math.gamma(b) * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(alphas, st.floats(0.1, 2.0), xs)
def test_three_term_recurrence(a, b, x):
    # E_{a,b}(z) = 1/Gamma(b) + z E_{a,a+b}(z)
    z = -x
    lhs = float(ml_eval(a, b, z))
    rhs = 1.0 / math.gamma(b) + z * float(ml_eval(a, a + b, z))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(z * float(ml_eval(a, a + b, z))))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 1.0), st.floats(0.1, 100.0), st.floats(0.01, 3.0))
def test_time_integral_is_bounded_by_its_limit(a, lam, T):
    # int_0^T t^{a-1} E_{a,a}(-lam t^a) dt = (1 - E_a(-lam T^a)) / lam < 1/lam
    v = ml_time_integral(a, lam, T)
    assert 0.0 < v < 1.0 / lam * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 1.0), st.floats(0.0, 1.0), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_homogeneous_solution_is_linear(mu, nu, c):
    op = from_matrix(np.diag([1.0, 4.0, 9.0]), np.ones(3), 3)
    g = TimeGrid.graded(1.0, 16, 2.0, "left")
    order = HilferOrder(mu, nu)
    one = solve_homogeneous(op, order, ModalState([1.0, 1.0, 1.0]), g).states
    got = solve_homogeneous(op, order, ModalState(c), g).states
    assert np.allclose(got[1:], one[1:] * np.asarray(c), rtol=1e-13, atol=1e-300)
