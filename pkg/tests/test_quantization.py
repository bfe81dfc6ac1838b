"""Tests for Cartesian fields, the dilation, Wigner pairings and the dense Weyl oracle."""

import math

import numpy as np
import pytest

from numerics.cutoffs import j_step, make_cutoff
from experiments.garding import oracle_states, oracle_symbols
from numerics.errors import ResolutionError, SupportEscapeError
from numerics.quantization import (
    CartesianField,
    calderon_vaillancourt_check,
    dense_weyl_apply,
    dense_weyl_operator,
    dilate,
    garding_check,
    polar_symbol_eval,
    weyl_pairing,
    wigner_transform,
)
from numerics.symbols import bump, constant, linear_combination


def packet(L, N, h, center, momentum=(0.0, 0.0), sigma=0.2, dilated=True):
    """Unit-norm Gaussian wave packet."""

    def func(X, Y):
        envelope = np.exp(-((X - center[0]) ** 2 + (Y - center[1]) ** 2) / (2.0 * sigma**2))
        return envelope * np.exp(1j * (momentum[0] * X + momentum[1] * Y) / h)

    return CartesianField.from_function(L, N, h, func, dilated=dilated).normalized()


@pytest.fixture
def j_cutoff():
    return make_cutoff("j-step")


@pytest.fixture(scope="module")
def tilted_oracle():
    """Dense Weyl matrix of a tilted bump on the 64 x 64 dilated grid at h = 0.1."""
    tilted = next(s for s in oracle_symbols() if s.name == "tilted")
    return tilted, dense_weyl_operator(2.4, 64, 0.1, tilted, make_cutoff("j-step"))


class TestPolarSymbol:
    def test_radial_momentum(self, j_cutoff):
        a = bump("radial", (3.0, 0.0, 0.0), 0.5)
        assert polar_symbol_eval(a, j_cutoff, 0.1, (1.0, 0.0), (3.0, 0.0)) == pytest.approx(1.0)

    def test_tangential_momentum(self, j_cutoff):
        a = bump("tangential", (0.0, math.pi / 2, 1.0), 0.5)
        assert polar_symbol_eval(a, j_cutoff, 0.1, (0.0, 2.0), (-1.0, 0.0)) == pytest.approx(1.0)

    def test_vanishes_inside_epsilon(self):
        cutoff = make_cutoff("custom-smooth", epsilon=0.25)
        assert polar_symbol_eval(constant("one"), cutoff, 0.1, (0.1, 0.0), (0.0, 0.0)) == 0.0


class TestDilation:
    def test_identity_at_unit_h(self):
        u = packet(4.0, 32, 1.0, (0.0, 0.0), sigma=0.5, dilated=False)
        v = dilate(u, "forward")

        assert v.dilated
        assert np.allclose(v.samples, u.samples)
        assert v.L == pytest.approx(u.L)

    def test_unitary_round_trip(self):
        u = packet(20.0, 64, 0.1, (3.0, -2.0), sigma=1.5, dilated=False)
        v = dilate(u, "forward")
        back = dilate(v, "inverse")

        assert v.L == pytest.approx(2.0)
        assert v.norm() == pytest.approx(u.norm(), abs=1e-6)
        assert np.allclose(back.samples, u.samples, atol=1e-6)

    def test_escaped_mass_rejected(self):
        u = CartesianField(L=1.0, N=16, h=0.5, samples=np.ones((16, 16), dtype=complex))
        with pytest.raises(SupportEscapeError):
            dilate(u, "forward")

    def test_direction_checked(self):
        with pytest.raises(ValueError):
            dilate(CartesianField.zeros(1.0, 8, 0.5), "sideways")


class TestWigner:
    def test_coherent_state_peak(self):
        u = packet(2.4, 32, 0.2, (0.5, -0.3), momentum=(0.4, 0.2), sigma=0.3)
        W = wigner_transform(u, stride=1)

        x, xi = W.peak()

        assert np.all(np.abs(x - [0.5, -0.3]) <= W.dx + 1e-12)
        assert np.all(np.abs(xi - [0.4, 0.2]) <= W.dxi + 1e-12)

    def test_mass_is_norm(self):
        u = packet(2.4, 32, 0.2, (0.0, 0.0), sigma=0.3)
        assert wigner_transform(u, stride=1).mass() == pytest.approx(1.0, abs=1e-6)

    def test_rejects_bad_input(self):
        u = packet(2.4, 32, 0.2, (0.0, 0.0), sigma=0.3)
        with pytest.raises(ValueError):
            wigner_transform(u, stride=3)
        with pytest.raises(ValueError):
            wigner_transform(CartesianField.zeros(2.4, 32, 0.2, dilated=True))


class TestPairing:
    def test_identity_symbol(self, j_cutoff):
        u = packet(3.2, 64, 0.2, (1.5, 0.0), sigma=0.3)
        value = weyl_pairing(u, constant("one"), j_cutoff, stride=1)

        assert value.value == pytest.approx(1.0, abs=2e-3)

    def test_disjoint_symbol(self, j_cutoff):
        u = packet(3.2, 64, 0.2, (1.5, 0.0), sigma=0.3)
        value = weyl_pairing(u, bump("far", (0.0, math.pi, 0.0), 0.5), j_cutoff, stride=1)

        assert abs(value.value) <= 1e-3

    def test_unresolved_state_rejected(self, j_cutoff):
        u = packet(3.2, 64, 0.2, (1.5, 0.0), sigma=0.2)

        assert u.spectral_tail(0.5) > 1e-6
        with pytest.raises(ResolutionError, match="not resolved"):
            weyl_pairing(u, constant("one"), j_cutoff, stride=1)

    def test_linear_in_symbol(self, j_cutoff):
        u = packet(2.4, 32, 0.2, (0.9, 0.3), momentum=(0.4, 0.2), sigma=0.3)
        W = wigner_transform(u, stride=1)
        a = bump("a", (0.5, 0.0, 0.4), 1.0)
        b = bump("b", (0.6, -0.5, 0.2), (0.8, 1.2, 0.8))
        combined = linear_combination("ab", [2.0, -0.7], [a, b])

        pa = weyl_pairing(u, a, j_cutoff, wigner=W).value
        pb = weyl_pairing(u, b, j_cutoff, wigner=W).value

        assert weyl_pairing(u, combined, j_cutoff, wigner=W).value == pytest.approx(2.0 * pa - 0.7 * pb, abs=1e-8)


class TestDenseOperator:
    def test_position_symbol_is_multiplication(self, j_cutoff):
        L, N = 2.4, 16
        operator = dense_weyl_operator(L, N, 0.2, constant("one"), j_cutoff)

        X, Y = CartesianField.zeros(L, N, 0.2).mesh()
        r = np.hypot(X, Y)
        expected = np.where(r > j_cutoff.epsilon, j_step(r), 0.0).reshape(-1)
        assert np.allclose(operator.matrix, np.diag(expected), atol=1e-10)

    def test_real_symbol_is_hermitian(self, j_cutoff):
        operator = dense_weyl_operator(2.4, 16, 0.2, bump("b", (0.0, 0.0, 0.0), 1.0), j_cutoff)
        assert np.allclose(operator.matrix, operator.matrix.conj().T, atol=1e-12)

    def test_apply_on_dilated_state(self, j_cutoff):
        u = packet(2.4, 16, 0.2, (1.2, 0.0), sigma=0.4)
        out = dense_weyl_apply(u, constant("one"), j_cutoff)

        X, Y = u.mesh()
        assert np.allclose(out.samples, j_step(np.hypot(X, Y)) * u.samples * (np.hypot(X, Y) > 0.5), atol=1e-10)

    def test_quadrature_matches_dense_matrix(self, j_cutoff, tilted_oracle):
        tilted, operator = tilted_oracle

        for name, state in oracle_states(2.4, 64, 0.1):
            dense = operator.expectation(state.samples)
            wigner = weyl_pairing(state, tilted, j_cutoff, stride=1).value

            assert abs(dense.imag) <= 1e-8, name
            assert abs(wigner - dense.real) <= 1e-3, name

    def test_garding_on_coherent_states(self, j_cutoff):
        h = 0.2
        operator = dense_weyl_operator(2.4, 32, h, bump("origin", (0.0, 0.0, 0.0), 1.0), j_cutoff)

        for name, state in oracle_states(2.4, 32, h):
            assert operator.expectation(state.samples).real >= -3.0 * h, name

    def test_refuses_large_grids(self, j_cutoff):
        with pytest.raises(ValueError):
            dense_weyl_operator(2.4, 128, 0.2, constant("one"), j_cutoff)


class TestOperatorBounds:
    def test_zero_symbol_has_zero_norm(self, j_cutoff):
        report = calderon_vaillancourt_check(
            constant("zero", 0.0), j_cutoff, [0.2, 0.1], 20, np.random.default_rng(0), N=16
        )
        assert report.norm_estimates == [0.0, 0.0]
        assert report.bound_holds

    def test_bump_norm_bound_holds(self, j_cutoff):
        report = calderon_vaillancourt_check(
            bump("b", (0.0, 0.0, 0.0), 1.0), j_cutoff, [0.2, 0.1], 20, np.random.default_rng(1), N=16
        )
        assert report.bound_holds
        assert all(e <= s + 1.0 for e, s in zip(report.norm_estimates, report.sup_symbol))

    def test_fitted_constant_above_limit_fails(self, j_cutoff):
        report = calderon_vaillancourt_check(
            constant("one"), j_cutoff, [0.2, 0.1], 20, np.random.default_rng(2), N=16, C_limit=0.5
        )

        assert report.C > 0.5
        assert report.excess <= 0.1
        assert not report.bound_holds

    def test_constant_symbol_fits_unit_constant(self, j_cutoff):
        report = calderon_vaillancourt_check(
            constant("one"), j_cutoff, [0.2, 0.1], 20, np.random.default_rng(2), N=16, C_limit=2.0
        )

        assert report.C == pytest.approx(1.0, abs=0.1)
        assert report.bound_holds

    def test_doubling_symbol_doubles_bound(self, j_cutoff):
        b = bump("b", (0.0, 0.0, 0.0), 1.0)
        double = linear_combination("double", [2.0], [b])

        single = calderon_vaillancourt_check(b, j_cutoff, [0.2, 0.1], 20, np.random.default_rng(4), N=16)
        doubled = calderon_vaillancourt_check(double, j_cutoff, [0.2, 0.1], 20, np.random.default_rng(4), N=16)

        assert doubled.norm_estimates == pytest.approx([2.0 * e for e in single.norm_estimates], rel=1e-9)
        assert doubled.C == pytest.approx(single.C, rel=1e-6, abs=1e-12)
        assert doubled.c == pytest.approx(2.0 * single.c, rel=1e-6, abs=1e-12)

    def test_too_few_trials(self, j_cutoff):
        with pytest.raises(ValueError):
            calderon_vaillancourt_check(constant("one"), j_cutoff, [0.2], 5, np.random.default_rng(0), N=16)

    def test_zero_symbol_lower_bound(self, j_cutoff):
        report = garding_check(constant("zero", 0.0), j_cutoff, [0.2, 0.1], 5, np.random.default_rng(0), N=16)
        assert report.C == 0.0
        assert report.violations == []

    def test_negative_symbol_rejected(self, j_cutoff):
        negative = linear_combination("negative", [-1.0], [bump("b", (0.0, 0.0, 0.0), 1.0)])
        with pytest.raises(ValueError):
            garding_check(negative, j_cutoff, [0.2], 5, np.random.default_rng(0), N=16)
