"""Tests for the one-dimensional Hadamard finite parts and their identities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import FinitePartError
from core.finite_part import (
    BivariateDensity,
    PfIntegrand,
    fubini_pf1_residual,
    fubini_pf2_residual,
    pf1_derivative,
    pf1_derivative_fd,
    pf1_log_form,
    pf1_lower,
    pf1_upper,
    pf2_lower,
    pf2_to_pf1_identity,
    pf2_to_pf1_identity_lower,
    pf2_upper,
    pf_batch,
    pf_epsilon_limit,
    pf_nodes,
)
from core.quadrature import QuadratureSpec


def square() -> PfIntegrand:
    return PfIntegrand(lambda t: t * t, lambda t: 2.0 * t)


def smooth_density() -> BivariateDensity:
    """f(E', E) = exp(-E') (1 + E) with both partials."""
    return BivariateDensity(
        lambda p, q: np.exp(-p) * (1.0 + q),
        lambda p, q: -np.exp(-p) * (1.0 + q),
        lambda p, q: np.exp(-p) + 0.0 * q,
    )


class TestClosedForms:
    """Finite parts of t^2 against their closed forms."""

    def test_pf1_upper_square(self) -> None:
        """pf1 of t^2 over [x, x+L] is L^2/2 + 2xL + x^2 ln L."""
        x, length = 1.3, 0.7
        expected = length**2 / 2 + 2 * x * length + x * x * math.log(length)
        assert pf1_upper(square(), x, x + length) == pytest.approx(expected, abs=1e-10)

    def test_pf2_upper_square(self) -> None:
        """pf2 of t^2 over [x, x+L] is L + 2x ln L - x^2/L."""
        x, length = 1.3, 0.7
        expected = length + 2 * x * math.log(length) - x * x / length
        assert pf2_upper(square(), x, x + length) == pytest.approx(expected, abs=1e-10)

    def test_pf1_lower_square(self) -> None:
        """pf1 of t^2 over [x-L, x] is -L^2/2 + 2xL - x^2 ln L."""
        x, length = 2.0, 1.5
        expected = -(length**2) / 2 + 2 * x * length - x * x * math.log(length)
        assert pf1_lower(square(), x, x - length) == pytest.approx(expected, abs=1e-10)

    def test_pf2_lower_square(self) -> None:
        """pf2 of t^2 over [x-L, x] is L - 2x ln L - x^2/L."""
        x, length = 2.0, 1.5
        expected = length - 2 * x * math.log(length) - x * x / length
        assert pf2_lower(square(), x, x - length) == pytest.approx(expected, abs=1e-10)

    def test_sqrt_substitution_keeps_closed_form(self) -> None:
        """The square-root substituted rule reproduces the same values."""
        q = QuadratureSpec(panel_count=8, nodes_per_panel=8, sqrt_substitution=True)
        x, length = 0.5, 2.0
        expected = length + 2 * x * math.log(length) - x * x / length
        assert pf2_upper(square(), x, x + length, q) == pytest.approx(expected, abs=1e-10)

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(min_value=-5.0, max_value=5.0),
        st.floats(min_value=1e-3, max_value=20.0),
    )
    def test_unit_density_on_random_intervals(self, x: float, length: float) -> None:
        """pf1(1) = ln(b-x) and pf2(1) = -1/(b-x) on either side of x."""
        one = PfIntegrand.constant(1.0)
        b, a = x + length, x - length
        assert pf1_upper(one, x, b) == pytest.approx(math.log(b - x), rel=1e-10)
        assert pf2_upper(one, x, b) == pytest.approx(-1.0 / (b - x), rel=1e-10)
        assert pf1_lower(one, x, a) == pytest.approx(-math.log(x - a), rel=1e-10)
        assert pf2_lower(one, x, a) == pytest.approx(-1.0 / (x - a), rel=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(
        st.floats(min_value=-5.0, max_value=5.0),
        st.floats(min_value=0.05, max_value=10.0),
        st.floats(min_value=-3.0, max_value=3.0),
    )
    def test_constant_density(self, x: float, length: float, c: float) -> None:
        """For a constant c: pf1 = c ln L and pf2 = -c / L."""
        f = PfIntegrand.constant(c)
        assert pf1_upper(f, x, x + length) == pytest.approx(c * math.log(length), abs=1e-9)
        assert pf2_upper(f, x, x + length) == pytest.approx(-c / length, rel=1e-9, abs=1e-9)


def wave_density(a: float, c: float) -> BivariateDensity:
    """f(x, t) = cos(a x + c t) + a c x t with both partials."""
    return BivariateDensity(
        lambda p, t: np.cos(a * p + c * t) + a * c * p * t,
        lambda p, t: -a * np.sin(a * p + c * t) + a * c * t,
        lambda p, t: -c * np.sin(a * p + c * t) + a * c * p,
    )


class TestPfDerivative:
    """d/dx of p.f. int_x^b f(x,t)/(t-x) dt against central differences."""

    @pytest.mark.parametrize(
        "density, x, b",
        [
            (BivariateDensity(lambda p, t: t + 0.0 * p, lambda p, t: 0.0 * t,
                              lambda p, t: 1.0 + 0.0 * t), 0.3, 1.0),
            (BivariateDensity(lambda p, t: np.sin(t) + 0.0 * p, lambda p, t: 0.0 * t,
                              lambda p, t: np.cos(t) + 0.0 * p), 0.5, 1.5),
            (BivariateDensity(lambda p, t: np.exp(p * t), lambda p, t: t * np.exp(p * t),
                              lambda p, t: p * np.exp(p * t)), 0.2, 1.3),
        ],
    )
    def test_known_densities(self, density: BivariateDensity, x: float, b: float) -> None:
        assert pf1_derivative(density, x, b) == pytest.approx(
            pf1_derivative_fd(density, x, b), abs=1e-6
        )

    def test_section_independent_of_x(self) -> None:
        """For f(x,t) = 1 the derivative of ln(b-x) is -1/(b-x)."""
        one = BivariateDensity(lambda p, t: 1.0 + 0.0 * t, lambda p, t: 0.0 * t,
                               lambda p, t: 0.0 * t)
        assert pf1_derivative(one, 0.5, 2.0) == pytest.approx(-1.0 / 1.5, rel=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(
        st.floats(min_value=-1.0, max_value=1.0),
        st.floats(min_value=-1.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.5, max_value=2.0),
    )
    def test_smooth_densities(self, a: float, c: float, x: float, length: float) -> None:
        density = wave_density(a, c)
        exact = pf1_derivative(density, x, x + length)
        assert exact == pytest.approx(pf1_derivative_fd(density, x, x + length), abs=1e-6)

    def test_needs_both_partials(self) -> None:
        with pytest.raises(FinitePartError):
            pf1_derivative(BivariateDensity(lambda p, t: p * t), 0.0, 1.0)

    def test_step_must_fit(self) -> None:
        with pytest.raises(FinitePartError):
            pf1_derivative_fd(wave_density(0.5, 0.5), 0.0, 1.0, step=2.0)


class TestEpsilonLimit:
    """Quadrature finite parts agree with the truncated-integral definition."""

    @pytest.mark.parametrize("order", [1, 2])
    def test_upper_matches_limit(self, order: int) -> None:
        f = PfIntegrand(np.exp, np.exp)
        x, b = 0.2, 1.1
        direct = pf1_upper(f, x, b) if order == 1 else pf2_upper(f, x, b)
        assert direct == pytest.approx(pf_epsilon_limit(f, x, b, order), abs=1e-6)

    @pytest.mark.parametrize("order", [1, 2])
    def test_lower_matches_limit(self, order: int) -> None:
        f = PfIntegrand(np.cos, lambda t: -np.sin(t))
        x, a = 1.0, 0.1
        direct = pf1_lower(f, x, a) if order == 1 else pf2_lower(f, x, a)
        assert direct == pytest.approx(pf_epsilon_limit(f, x, a, order), abs=1e-6)

    def test_epsilon_limit_rejects_bad_order(self) -> None:
        with pytest.raises(FinitePartError):
            pf_epsilon_limit(square(), 0.0, 1.0, 3)


class TestIdentities:
    """Order lowering, the logarithmic form and Fubini swaps."""

    def test_order_lowering_upper(self) -> None:
        left, right = pf2_to_pf1_identity(smooth_density(), 1.2, 3.0)
        assert left == pytest.approx(right, abs=1e-8)

    def test_order_lowering_lower(self) -> None:
        left, right = pf2_to_pf1_identity_lower(smooth_density(), 2.4, 1.0)
        assert left == pytest.approx(right, abs=1e-8)

    def test_log_form(self) -> None:
        left, right = pf1_log_form(smooth_density(), 1.5, 4.0)
        assert left == pytest.approx(right, abs=1e-8)

    def test_fubini_pf1(self) -> None:
        assert fubini_pf1_residual(smooth_density(), 1.0, 2.5) < 1e-8

    def test_fubini_pf2(self) -> None:
        density = BivariateDensity(
            lambda p, q: (p - 1.0) * (2.5 - q),
            lambda p, q: (2.5 - q) + 0.0 * p,
            lambda p, q: -(p - 1.0) + 0.0 * q,
        )
        assert fubini_pf2_residual(density, 1.0, 2.5) < 1e-6

    def test_fubini_pf2_needs_vanishing_corners(self) -> None:
        with pytest.raises(FinitePartError):
            fubini_pf2_residual(smooth_density(), 1.0, 2.5)

    def test_fubini_on_empty_interval_is_zero(self) -> None:
        assert fubini_pf1_residual(smooth_density(), 2.0, 2.0) == 0.0

    def test_order_lowering_needs_partial(self) -> None:
        density = BivariateDensity(lambda p, q: p * q)
        with pytest.raises(FinitePartError):
            pf2_to_pf1_identity(density, 1.0, 2.0)


class TestBatch:
    """Vectorised finite parts on shared nodes."""

    def test_batch_matches_scalar(self) -> None:
        x, b = 1.0, 2.5
        nodes = pf_nodes(x, b)
        funcs = [square(), PfIntegrand(np.exp, np.exp)]
        values = np.stack([f.value(nodes) for f in funcs])
        fx = [f.at(x) for f in funcs]
        dfx = [f.derivative_at(x) for f in funcs]
        batch = pf_batch(values, fx, dfx, x, b, 2)
        for got, f in zip(batch, funcs):
            assert got == pytest.approx(pf2_upper(f, x, b), abs=1e-12)

    def test_batch_lower_orientation(self) -> None:
        x, a = 2.0, 0.5
        nodes = pf_nodes(x, a)
        batch = pf_batch(square().value(nodes)[None, :], [x * x], [2 * x], x, a, 1)
        assert batch[0] == pytest.approx(pf1_lower(square(), x, a), abs=1e-12)

    def test_batch_rejects_wrong_node_count(self) -> None:
        with pytest.raises(FinitePartError):
            pf_batch(np.zeros((2, 3)), [0.0, 0.0], [0.0, 0.0], 0.0, 1.0, 1)


class TestErrors:
    """Invalid input is reported, never silently integrated."""

    def test_empty_interval(self) -> None:
        with pytest.raises(FinitePartError):
            pf1_upper(square(), 1.0, 1.0)

    def test_reversed_interval(self) -> None:
        with pytest.raises(FinitePartError):
            pf2_lower(square(), 1.0, 2.0)

    def test_pf2_needs_derivative(self) -> None:
        with pytest.raises(FinitePartError):
            pf2_upper(PfIntegrand(lambda t: t), 0.0, 1.0)

    def test_non_finite_sample(self) -> None:
        f = PfIntegrand(lambda t: np.where(t > 0.5, np.nan, t))
        with pytest.raises(FinitePartError):
            pf1_upper(f, 0.0, 1.0)

    def test_bad_holder_exponent(self) -> None:
        with pytest.raises(FinitePartError):
            PfIntegrand(lambda t: t, holder_exponent=0.0)

    def test_bad_quadrature(self) -> None:
        with pytest.raises(FinitePartError):
            QuadratureSpec(panel_count=0)
