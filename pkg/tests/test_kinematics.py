"""Tests for Moller kinematics and the built-in cross-section families."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import ConfigError, KinematicsError
from core.kinematics import (
    builtin_xs,
    check_schur,
    mu,
    mu_dE,
    mu_dEp,
    mu_sum_identity,
    one_minus_mu_sq,
    parse_xs_config,
)
from core.phase import PhaseSpace

X = np.array([0.2, -0.1, 0.3])


class TestMu:
    """Scattering cosine and its partials."""

    def test_forward_on_diagonal(self) -> None:
        assert float(mu(1.7, 1.7)) == pytest.approx(1.0, abs=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(min_value=0.05, max_value=20.0), st.floats(min_value=0.0, max_value=20.0))
    def test_one_minus_mu_squared(self, e: float, gap: float) -> None:
        ep = e + gap
        m = float(mu(ep, e))
        assert 0.0 < m <= 1.0
        assert 1.0 - m * m == pytest.approx(float(one_minus_mu_sq(ep, e)), abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(min_value=0.05, max_value=50.0))
    def test_partials_cancel_on_diagonal(self, e: float) -> None:
        assert abs(float(mu_sum_identity(e))) < 1e-14

    def test_partials_match_finite_differences(self) -> None:
        ep, e, h = 2.3, 1.1, 1e-6
        d_ep = (float(mu(ep + h, e)) - float(mu(ep - h, e))) / (2 * h)
        d_e = (float(mu(ep, e + h)) - float(mu(ep, e - h))) / (2 * h)
        assert float(mu_dEp(ep, e)) == pytest.approx(d_ep, rel=1e-7)
        assert float(mu_dE(ep, e)) == pytest.approx(d_e, rel=1e-7)

    def test_rejects_primary_below_secondary(self) -> None:
        with pytest.raises(KinematicsError):
            mu(1.0, 1.5)

    def test_rejects_non_positive_energy(self) -> None:
        with pytest.raises(KinematicsError):
            mu(1.0, 0.0)


class TestBuiltinFamilies:
    """Analytic cross-section families and their parameters."""

    def test_synthetic_partials(self) -> None:
        xs = builtin_xs()
        ep, e, h = 1.8, 1.2, 1e-6
        sigma2 = xs.sigma_hat[2]
        d_ep = (float(sigma2(X, ep + h, e)) - float(sigma2(X, ep - h, e))) / (2 * h)
        d_e = (float(sigma2(X, ep, e + h)) - float(sigma2(X, ep, e - h))) / (2 * h)
        assert float(xs.sigma2_dEp(X, ep, e)) == pytest.approx(d_ep, rel=1e-6)
        assert float(xs.sigma2_dE(X, ep, e)) == pytest.approx(d_e, rel=1e-6)

    def test_restricted_energy_kernel_is_one_sided(self) -> None:
        xs = builtin_xs()
        assert float(xs.sigma_hat3(X, 1.0, 1.5)) == 0.0
        assert float(xs.sigma_hat3(X, 1.5, 1.0)) > 0.0

    def test_zero_family_vanishes(self) -> None:
        xs = builtin_xs("zero")
        w = np.array([0.0, 0.0, 1.0])
        for sigma in xs.sigma_hat:
            assert float(sigma(X, 1.5, 1.2)) == 0.0
        assert float(xs.sigma_r1(X, w, w, 1.5, 1.2)) == 0.0
        assert float(xs.sigma_r2(X, w, w, 1.2)) == 0.0
        assert float(xs.total(X, w, 1.2)) == 0.0

    def test_advection_family_keeps_absorption(self) -> None:
        xs = builtin_xs("advection")
        w = np.array([1.0, 0.0, 0.0])
        assert float(xs.sigma_hat[2](X, 1.5, 1.2)) == 0.0
        assert float(xs.total(X, w, 1.2)) == pytest.approx(1.0)

    def test_constant_family_is_energy_independent(self) -> None:
        xs = builtin_xs("constant")
        a = float(xs.sigma_hat[1](X, 1.9, 1.1))
        b = float(xs.sigma_hat[1](np.zeros(3), 1.3, 1.2))
        assert a == pytest.approx(b)
        assert float(xs.sigma1_dEp(X, 1.9, 1.1)) == 0.0

    def test_parameter_override(self) -> None:
        xs = builtin_xs("synthetic", {"Sigma": 2.5})
        assert float(xs.total(X, np.array([0.0, 1.0, 0.0]), 1.5)) == 2.5

    def test_unknown_family(self) -> None:
        with pytest.raises(ConfigError):
            builtin_xs("moller-exact")

    def test_non_numeric_parameter(self) -> None:
        with pytest.raises(ConfigError):
            builtin_xs("synthetic", {"c0": "big"})

    def test_negative_coefficient(self) -> None:
        with pytest.raises(ConfigError):
            builtin_xs("synthetic", {"r1": -1.0})


class TestConfigAndSchur:
    """cross_sections block parsing and the Schur bound check."""

    def test_parse_defaults(self) -> None:
        assert parse_xs_config(None).family == "synthetic"

    def test_parse_family(self) -> None:
        xs = parse_xs_config({"family": "constant", "c2": 0.3})
        assert xs.family == "constant"
        assert xs.params["c2"] == 0.3

    def test_parse_rejects_non_object(self) -> None:
        with pytest.raises(ConfigError):
            parse_xs_config([1, 2, 3])  # type: ignore[arg-type]

    def test_default_family_meets_bounds(self) -> None:
        report = check_schur(builtin_xs(), PhaseSpace())
        assert report["ok"]
        assert 0.0 < report["row_sup"] <= report["M1"]
        assert 0.0 < report["col_sup"] <= report["M2"]

    def test_tight_bounds_fail(self) -> None:
        report = check_schur(builtin_xs("synthetic", {"M1": 1e-3}), PhaseSpace())
        assert not report["ok"]
