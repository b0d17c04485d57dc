from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unisde.boundary import (
    PowerBoundary,
    RationalBoundary,
    SaturatingExpBoundary,
)
from unisde.moments import (
    MomentQuery,
    alpha_matrix,
    conditional_moment,
    conditional_moment_closed_form,
    conditional_moment_via_ode,
    conic_moment,
    uniform_moment,
)

LIN = PowerBoundary(k=1, alpha=1)

GOLDEN = {
    1: [[F(1)]],
    2: [[F(1)]],
    3: [[F(3, 5), F(0)], [F(3, 5), F(1)]],
    4: [[F(6, 7), F(0)], [F(6, 7), F(1)]],
    5: [[F(3, 7), F(0), F(0)],
        [F(2, 3), F(10, 9), F(0)],
        [F(5, 21), F(10, 9), F(1)]],
    6: [[F(5, 7), F(0), F(0)],
        [F(90, 77), F(15, 11), F(0)],
        [F(35, 77), F(15, 11), F(1)]],
}


def test_uniform_moments():
    assert uniform_moment(0) == 1
    assert uniform_moment(2) == F(1, 3)
    assert uniform_moment(5) == 0
    assert uniform_moment(6) == F(1, 7)
    with pytest.raises(ValueError):
        uniform_moment(-1)


@pytest.mark.parametrize("n", sorted(GOLDEN))
def test_golden_coefficient_matrices(n):
    assert alpha_matrix(n).rows() == GOLDEN[n]


def test_matrix_shape_and_triangularity():
    for n in range(1, 16):
        m = alpha_matrix(n)
        assert m.dim == (n + (n % 2)) // 2
        for j in range(1, m.dim + 1):
            for k in range(j + 1, m.dim + 1):
                assert m.entry(j, k) == 0
        assert m.entry(m.dim, m.dim) == 1


def test_last_row_alternating_sum_identity_exact():
    # the bottom row cancels the alternating column sums exactly
    for n in range(1, 13):
        m = alpha_matrix(n)
        dim = m.dim
        for k in range(1, dim):
            acc = sum(m.entry(i, k) * (-1 if i % 2 else 1)
                      for i in range(k, dim))
            assert m.entry(dim, k) == -((-1) ** dim) * acc


def test_order_one_is_support_ratio():
    for s, t, z in ((1.0, 2.0, 0.3), (0.5, 8.0, -0.9), (2.0, 2.0, 1.0)):
        q = MomentQuery(1, s, t, z, LIN)
        assert conditional_moment(q) == pytest.approx(z * s / t, rel=1e-14)


def test_hand_value_order_two():
    q = MomentQuery(2, 1.0, 2.0, 0.5, LIN)
    assert conditional_moment(q) == pytest.approx(31.0 / 96.0, rel=1e-14)


def test_initial_condition_collapse_is_exact():
    for n in (1, 2, 3, 7, 12):
        for z in (-1.0, -0.37, 0.0, 0.62, 1.0):
            q = MomentQuery(n, 2.0, 2.0, z, LIN)
            assert conditional_moment(q) == z ** n


def test_relaxation_to_uniform_moments():
    # r -> 0: every conditional moment tends to the uniform one (the
    # residual is O(r), so push r to 1e-14)
    for n in range(1, 13):
        for z in (-1.0, -0.5, 0.0, 0.5, 1.0):
            q = MomentQuery(n, 1.0, 1e14, z, LIN)
            assert conditional_moment(q) == pytest.approx(
                float(uniform_moment(n)), abs=1e-12)


def test_closed_form_matches_general_evaluator():
    rs = np.linspace(0.05, 1.0, 5)
    zs = np.linspace(-1.0, 1.0, 5)
    for n in range(1, 7):
        for r in rs:
            for z in zs:
                general = conditional_moment(MomentQuery(n, 1.0, 1.0 / r, z, LIN))
                closed = conditional_moment_closed_form(n, r, z)
                assert general == pytest.approx(closed, rel=1e-12, abs=1e-15)


def test_closed_form_examples():
    r, z = 0.6, -0.4
    assert conditional_moment_closed_form(3, r, z) == pytest.approx(
        0.6 * z * (r - r ** 6) + z ** 3 * r ** 6, rel=1e-15)
    assert conditional_moment_closed_form(4, 1.0, 0.7) == pytest.approx(0.7 ** 4)
    assert conditional_moment_closed_form(6, 1e-9, 0.9) == pytest.approx(
        1.0 / 7.0, abs=1e-12)
    with pytest.raises(ValueError):
        conditional_moment_closed_form(7, 0.5, 0.0)


def test_ode_oracle_order_one_closed_solution():
    q = MomentQuery(1, 2.0, 10.0, -0.5, LIN)
    assert conditional_moment_via_ode(q, 1000) == pytest.approx(
        -0.5 * 2.0 / 10.0, rel=1e-8)


def test_ode_oracle_initial_condition():
    q = MomentQuery(2, 3.0, 3.0, 0.4, LIN)
    assert conditional_moment_via_ode(q, 100) == 0.4 ** 2


def test_ode_oracle_agrees_with_closed_form_high_order():
    q = MomentQuery(6, 2.0, 10.0, -0.5, LIN)
    assert conditional_moment_via_ode(q, 1000) == pytest.approx(
        conditional_moment(q), rel=1e-6)


def test_cross_oracle_across_boundaries():
    boundaries = [
        PowerBoundary(1, 0.5),
        PowerBoundary(1, 1.0),
        PowerBoundary(1.3, 1.5),
        SaturatingExpBoundary(B=1, beta=3),
        RationalBoundary(B=2, beta=1),
    ]
    for b in boundaries:
        for s, t in ((0.8, 1.6), (1.5, 4.0)):
            for z in (-0.9, 0.6):
                for n in range(1, 9):
                    q = MomentQuery(n, s, t, z, b)
                    exact = conditional_moment(q)
                    ode = conditional_moment_via_ode(q, 3000)
                    assert ode == pytest.approx(exact, rel=1e-6), (b, s, t, z, n)


def test_order_cap_suggests_ode():
    with pytest.raises(ValueError, match="ode"):
        conditional_moment(MomentQuery(26, 1.0, 2.0, 0.5, LIN))
    # but the cap is adjustable
    val = conditional_moment(MomentQuery(26, 1.0, 2.0, 0.5, LIN), max_order=30)
    assert -1.0 <= val <= 1.0


def test_conic_moments():
    assert conic_moment(2, 3.0, LIN) == pytest.approx(3.0)
    b2 = PowerBoundary(k=2, alpha=0.0 + 1.0)  # b(t) = 2t; b(1) = 2
    assert conic_moment(4, 1.0, b2) == pytest.approx(16.0 / 5.0)
    assert conic_moment(7, 2.0, LIN) == 0.0
    assert conic_moment(0, 1.0, LIN) == 1.0
    with pytest.raises(ValueError):
        conic_moment(2, 0.0, LIN)
    with pytest.raises(ValueError):
        conic_moment(-2, 1.0, LIN)


def test_query_validation():
    with pytest.raises(ValueError):
        MomentQuery(0, 1.0, 2.0, 0.0, LIN)
    with pytest.raises(ValueError):
        MomentQuery(2, 2.0, 1.0, 0.0, LIN)
    with pytest.raises(ValueError):
        MomentQuery(2, 0.0, 1.0, 0.0, LIN)
    with pytest.raises(ValueError):
        MomentQuery(2, 1.0, 2.0, 1.5, LIN)
    with pytest.raises(ValueError):
        conditional_moment_via_ode(MomentQuery(2, 1.0, 2.0, 0.5, LIN), 50)


@settings(max_examples=150, deadline=None)
@given(st.integers(min_value=1, max_value=10),
       st.floats(min_value=0.2, max_value=5.0),
       st.floats(min_value=1.0, max_value=20.0),
       st.floats(min_value=-1.0, max_value=1.0))
def test_moments_stay_in_unit_interval(n, s, factor, z):
    # E[Z_t^n | Z_s = z] is a moment of a law on [-1, 1]
    q = MomentQuery(n, s, s * factor, z, LIN)
    val = conditional_moment(q)
    assert -1.0 - 1e-12 <= val <= 1.0 + 1e-12
    if n % 2 == 0:
        assert val >= -1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=1, max_value=8),
       st.floats(min_value=-1.0, max_value=1.0),
       st.floats(min_value=1.0, max_value=30.0))
def test_even_moments_decrease_toward_stationary(n, z, factor):
    # even conditional moments started from |z| = 1 decrease monotonically
    # in t toward the stationary value
    q1 = MomentQuery(2 * ((n + 1) // 2), 1.0, factor, 1.0, LIN)
    q2 = MomentQuery(q1.order, 1.0, factor * 1.5, 1.0, LIN)
    m_inf = float(uniform_moment(q1.order))
    v1, v2 = conditional_moment(q1), conditional_moment(q2)
    assert v1 >= v2 - 1e-12
    assert v2 >= m_inf - 1e-12
