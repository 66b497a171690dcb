import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from conftest import ALPHA_STATED, ALPHA_TABLE, EX1_BETA, EX2_BETA, INFL
from gompertz_msig import (CurveParams, DomainError, NumericError, Polynomial, carrying_capacity,
                           curve_value, find_inflections, growth_rate, inflection_residual,
                           poly_derivative, poly_eval, shift_time_origin)
from gompertz_msig.polycurve import curve_second_derivative, locate_sign_changes

EX1_Q = Polynomial.from_beta(EX1_BETA)


class TestPolynomial:
    def test_eval_zero_constant_term(self):
        assert poly_eval(EX1_Q, 0.0) == 0.0

    def test_eval_square(self):
        assert poly_eval(Polynomial.from_beta((0, 1)), 1.0) == 1.0

    def test_eval_hand_value(self):
        assert poly_eval(EX1_Q, 10.0) == pytest.approx(1.225 - 0.75 + 0.17, abs=1e-14)

    def test_eval_vectorised_matches_scalar(self):
        t = np.linspace(-3, 3, 7)
        assert np.allclose(poly_eval(EX1_Q, t), [poly_eval(EX1_Q, x) for x in t])

    def test_call_is_eval(self):
        assert EX1_Q(2.5) == poly_eval(EX1_Q, 2.5)

    @pytest.mark.parametrize("beta, expected", [
        ((0, 1), (0, 2)),
        (EX1_BETA, (0.1225, -0.015, 0.00051)),
        ((1, 1), (1, 2)),
    ])
    def test_derivative(self, beta, expected):
        d = poly_derivative(Polynomial.from_beta(beta))
        assert d.coeffs == pytest.approx(expected, abs=1e-15)
        assert d.degree == len(beta) - 1

    def test_derivative_of_constant(self):
        with pytest.raises(DomainError, match="constant polynomial"):
            poly_derivative(Polynomial((3.0,)))

    def test_from_beta_forces_zero_constant(self):
        q = Polynomial.from_beta((2.0, 3.0))
        assert q.coeffs == (0.0, 2.0, 3.0)
        assert q.leading == 3.0
        assert list(q.beta) == [2.0, 3.0]


class TestCurveParams:
    def test_rejects_nonzero_constant(self):
        with pytest.raises(ValueError):
            CurveParams(1.0, Polynomial((1.0, 1.0)))

    def test_rejects_nonpositive_alpha(self):
        with pytest.raises(ValueError, match="alpha"):
            CurveParams.from_beta(-0.5, (1.0,))

    def test_rejects_negative_leading(self):
        with pytest.raises(ValueError, match="leading"):
            CurveParams.from_beta(1.0, (1.0, -0.1))

    def test_unvalidated_only_warns(self):
        with pytest.warns(RuntimeWarning):
            cp = CurveParams.from_beta(-0.04, (1.0, -0.1), validate=False)
        assert cp.alpha == -0.04


class TestCurve:
    def test_initial_condition(self):
        cp = CurveParams.from_beta(ALPHA_STATED, EX1_BETA)
        assert curve_value(cp, 5.0, 3.0, 3.0) == pytest.approx(5.0, rel=1e-15)

    def test_limit_at_large_t(self):
        cp = CurveParams.from_beta(ALPHA_STATED, EX1_BETA)
        assert curve_value(cp, 5.0, 0.0, 200.0) == pytest.approx(5 * math.exp(math.exp(-1)), rel=1e-14)
        assert curve_value(cp, 5.0, 0.0, 200.0) == pytest.approx(7.2233, abs=1e-4)

    def test_direct_substitution(self):
        cp = CurveParams.from_beta(1.0, (0, 1))
        assert curve_value(cp, 1.0, 0.0, 1.0) == pytest.approx(math.exp(1 - math.exp(-1)), rel=1e-14)
        assert curve_value(cp, 1.0, 0.0, 1.0) == pytest.approx(1.8816, abs=1e-4)

    def test_before_origin_raises(self):
        cp = CurveParams.from_beta(1.0, (1.0,))
        with pytest.raises(DomainError):
            curve_value(cp, 1.0, 1.0, 0.5)

    @pytest.mark.parametrize("f0, t0, alpha, beta, expected", [
        (5.0, 0.0, ALPHA_STATED, EX1_BETA, 5 * math.exp(math.exp(-1))),
        (5.0, 0.0, ALPHA_STATED, (0.3, 0.1), 5 * math.exp(math.exp(-1))),
        (1.0, 0.0, 1.0, (2.0,), math.e),
        (2.0, 0.0, 1e-300, (1.0,), 2.0),
    ])
    def test_carrying_capacity(self, f0, t0, alpha, beta, expected):
        assert carrying_capacity(CurveParams.from_beta(alpha, beta), f0, t0) == pytest.approx(expected, rel=1e-14)

    def test_growth_rate_examples(self):
        assert growth_rate(CurveParams.from_beta(1.0, (0, 1)), 0.0) == 0.0
        cp = CurveParams.from_beta(ALPHA_STATED, EX1_BETA)
        assert growth_rate(cp, 0.0) == pytest.approx(math.exp(-1) * 0.1225, rel=1e-14)
        assert growth_rate(cp, 0.0) == pytest.approx(0.045062, abs=1e-5)
        assert abs(growth_rate(cp, 500.0)) < 1e-100

    def test_second_derivative_matches_finite_difference(self):
        cp = CurveParams.from_beta(ALPHA_TABLE, EX1_BETA)
        t, h = np.array([3.0, 14.0, 22.0, 40.0]), 1e-4
        fd = (curve_value(cp, 5, 0, t + h) - 2 * curve_value(cp, 5, 0, t) + curve_value(cp, 5, 0, t - h)) / h ** 2
        assert np.allclose(curve_second_derivative(cp, 5, 0, t), fd, rtol=1e-4, atol=1e-8)


def _random_curve(draw_alpha, draw_beta):
    beta = list(draw_beta)
    beta[-1] = abs(beta[-1]) + 0.05
    return CurveParams.from_beta(draw_alpha, beta)


curves = st.builds(
    _random_curve,
    st.floats(0.05, 5.0),
    st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=4),
)


@settings(max_examples=60, deadline=None)
@given(cp=curves, t=st.floats(0.1, 4.0), f0=st.floats(0.1, 50.0))
def test_growth_rate_is_log_derivative(cp, t, f0):
    h = 1e-5
    fd = (curve_value(cp, f0, 0.0, t + h) - curve_value(cp, f0, 0.0, t - h)) / (2 * h)
    assert fd == pytest.approx(curve_value(cp, f0, 0.0, t) * growth_rate(cp, t), rel=1e-4, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(cp=curves, t0=st.floats(-2.0, 2.0), f0=st.floats(0.1, 50.0))
def test_limit_is_carrying_capacity(cp, t0, f0):
    # Q dominated by its positive leading term far enough out
    t_far = t0 + 1e5
    assert curve_value(cp, f0, t0, t_far) == pytest.approx(carrying_capacity(cp, f0, t0), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(cp=curves, t=st.floats(0.0, 6.0))
def test_residual_sign_matches_second_derivative(cp, t):
    g = inflection_residual(cp, t)
    d2 = curve_second_derivative(cp, 1.0, 0.0, t)
    if abs(g) > 1e-9 and abs(d2) > 1e-12:
        assert np.sign(g) == np.sign(d2)


class TestInflections:
    def test_classical_gompertz_residual(self):
        cp = CurveParams.from_beta(math.e, (1.0,))
        assert inflection_residual(cp, 1.0) == pytest.approx(0.0, abs=1e-15)
        t = 2.5
        assert inflection_residual(cp, t) == pytest.approx(-(1 - math.e * math.exp(-t)), rel=1e-14)

    def test_classical_gompertz_roots(self):
        res = find_inflections(CurveParams.from_beta(math.e, (1.0,)), 0.0, 10.0)
        assert res.instants == pytest.approx((1.0,), abs=1e-7)

    @pytest.mark.parametrize("example, beta", [("ex1", EX1_BETA), ("ex2", EX2_BETA)])
    @pytest.mark.parametrize("label, alpha", [("stated", ALPHA_STATED), ("table", ALPHA_TABLE)])
    def test_against_frozen_high_precision_roots(self, example, beta, label, alpha):
        res = find_inflections(CurveParams.from_beta(alpha, beta), 0.0, 50.0)
        assert res.instants == pytest.approx(INFL[(example, label)], abs=1e-7)
        assert all(abs(r) < 1e-6 for r in res.residuals)

    @pytest.mark.parametrize("beta, expected", [
        (EX1_BETA, (14.787, 30.589)),
        (EX2_BETA, (13.888, 38.403)),
    ])
    def test_tabulated_instants_reached_at_table_alpha(self, beta, expected):
        res = find_inflections(CurveParams.from_beta(ALPHA_TABLE, beta), 0.0, 50.0)
        assert res.instants == pytest.approx(expected, abs=1e-3)

    @pytest.mark.parametrize("beta", [EX1_BETA, EX2_BETA])
    def test_residual_vanishes_at_roots(self, beta):
        cp = CurveParams.from_beta(ALPHA_TABLE, beta)
        for t in find_inflections(cp, 0, 50):
            assert abs(inflection_residual(cp, t)) < 1e-6

    def test_independent_finite_difference_route(self):
        # roots of a finite-difference second derivative of the curve itself
        cp = CurveParams.from_beta(ALPHA_STATED, EX1_BETA)
        h = 1e-3

        def d2(t):
            return (curve_value(cp, 5, 0, t + h) - 2 * curve_value(cp, 5, 0, t)
                    + curve_value(cp, 5, 0, t - h)) / h ** 2

        grid = np.linspace(0.5, 49.5, 500)
        vals = d2(grid)
        roots = [brentq(d2, a, b) for a, b, u, v in zip(grid, grid[1:], vals, vals[1:]) if u * v < 0]
        res = find_inflections(cp, 0, 50)
        assert res.instants == pytest.approx(roots, abs=1e-4)

    def test_second_derivative_changes_sign(self):
        cp = CurveParams.from_beta(ALPHA_TABLE, EX1_BETA)
        res = find_inflections(cp, 0, 50)
        assert len(res) == 2
        for t in res:
            assert curve_second_derivative(cp, 5, 0, t - 1e-3) * curve_second_derivative(cp, 5, 0, t + 1e-3) < 0

    def test_instants_ascending_and_inside(self):
        cp = CurveParams.from_beta(ALPHA_TABLE, EX2_BETA)
        res = find_inflections(cp, 10.0, 40.0, grid_n=50)
        assert list(res.instants) == sorted(res.instants)
        assert all(10 <= t <= 40 for t in res)

    def test_empty_window(self):
        cp = CurveParams.from_beta(ALPHA_TABLE, EX1_BETA)
        assert len(find_inflections(cp, 18.0, 25.0)) == 0

    def test_tangential_zero_excluded(self):
        assert len(locate_sign_changes(lambda t: (t - 1.0) ** 2, 0.0, 3.0, 101)) == 0
        roots = locate_sign_changes(lambda t: (t - 1.0) ** 3, 0.0, 3.0, 101)
        assert roots == pytest.approx([1.0], abs=1e-8)

    def test_non_finite_residual(self):
        with pytest.raises(NumericError):
            locate_sign_changes(lambda t: np.where(t > 1, np.nan, t), 0.0, 2.0, 11)

    def test_bad_window(self):
        cp = CurveParams.from_beta(1.0, (1.0,))
        with pytest.raises(DomainError):
            find_inflections(cp, 2.0, 1.0)


class TestShift:
    def test_square_shift(self):
        cp = shift_time_origin(Polynomial.from_beta((0, 1)), 1.0, 2.0)
        assert list(cp.beta) == pytest.approx([-4.0, 1.0])
        assert cp.alpha == pytest.approx(math.exp(-4.0), rel=1e-15)

    def test_identity_shift(self):
        g = Polynomial.from_beta((0.3, -0.02, 0.001))
        cp = shift_time_origin(g, 0.7, 0.0)
        assert list(cp.beta) == list(g.beta)
        assert cp.alpha == 0.7

    def test_linear_shift(self):
        cp = shift_time_origin(Polynomial.from_beta((1.0,)), 1.0, 3.0)
        assert list(cp.beta) == pytest.approx([1.0])
        assert cp.alpha == pytest.approx(math.exp(3.0), rel=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(gamma=st.lists(st.floats(-1, 1), min_size=1, max_size=4),
           eta=st.floats(0.1, 3.0), t0=st.floats(-5, 5))
    def test_round_trip_identity(self, gamma, eta, t0):
        g = Polynomial.from_beta(gamma)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cp = shift_time_origin(g, eta, t0)
        t = np.linspace(t0 - 3, t0 + 3, 100)
        beta0 = math.log(eta / cp.alpha)
        assert np.allclose(poly_eval(g, t - t0), beta0 + poly_eval(cp.q, t), atol=1e-10, rtol=0)
