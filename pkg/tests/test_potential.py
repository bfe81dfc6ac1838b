"""Tests for the angular potential model and its critical directions."""

import math

import pytest
from pydantic import ValidationError

from numerics.potential import (
    PotentialModel,
    ShortRange,
    _polish,
    catalog_potential,
    eval_potential,
    find_critical_points,
    potential_derivatives,
)


@pytest.fixture
def cosine():
    return PotentialModel.from_coefficients(cos={1: 1.0})


@pytest.fixture
def quartic_well():
    # (1 - cos theta)^2
    return PotentialModel.from_coefficients(cos={0: 1.5, 1: -2.0, 2: 0.5})


class TestEvalPotential:
    def test_angular_part(self, cosine):
        assert eval_potential(cosine, 5.0, 0.0) == pytest.approx(1.0)
        assert eval_potential(cosine, 5.0, math.pi / 2) == pytest.approx(0.0, abs=1e-15)

    def test_short_range_added(self):
        model = PotentialModel.from_coefficients(
            cos={1: 1.0}, short_range=ShortRange(amplitude=1.0, decay_exponent=2.0)
        )
        assert eval_potential(model, 3.0, 0.0) == pytest.approx(1.0625)

    def test_negative_radius_rejected(self, cosine):
        with pytest.raises(ValueError):
            eval_potential(cosine, -1.0, 0.0)

    def test_slow_decay_rejected(self):
        with pytest.raises(ValidationError):
            ShortRange(amplitude=1.0, decay_exponent=1.0)

    def test_sup_norm_includes_short_range(self):
        model = PotentialModel.from_coefficients(
            cos={1: 2.0}, short_range=ShortRange(amplitude=-0.5, decay_exponent=3.0)
        )
        assert model.sup_norm() == pytest.approx(2.5)


class TestDerivatives:
    def test_cosine(self, cosine):
        assert potential_derivatives(cosine, 0.0, 2) == pytest.approx([0.0, -1.0], abs=1e-15)

    def test_sine(self):
        model = PotentialModel.from_coefficients(sin={1: 1.0})
        assert potential_derivatives(model, 0.0, 1) == pytest.approx([1.0])

    def test_quartic_well_vanishes_to_third_order(self, quartic_well):
        assert potential_derivatives(quartic_well, 0.0, 4) == pytest.approx([0.0, 0.0, 0.0, 6.0], abs=1e-12)

    def test_order_range(self, cosine):
        with pytest.raises(ValueError):
            potential_derivatives(cosine, 0.0, 0)
        with pytest.raises(ValueError):
            potential_derivatives(cosine, 0.0, 9)


class TestCriticalPoints:
    def test_cosine_extrema(self, cosine):
        catalog = find_critical_points(cosine)

        assert not catalog.degenerate
        assert len(catalog) == 2
        assert catalog[0].theta0 == pytest.approx(0.0, abs=1e-9)
        assert catalog[0].k == 1
        assert catalog[0].value == pytest.approx(1.0)
        assert catalog[1].theta0 == pytest.approx(math.pi, abs=1e-9)
        assert catalog[1].value == pytest.approx(-1.0)

    def test_degenerate_minimum(self, quartic_well):
        catalog = find_critical_points(quartic_well)

        at_zero = [p for p in catalog if min(p.theta0, 2 * math.pi - p.theta0) < 1e-6]
        assert len(at_zero) == 1
        assert at_zero[0].k == 3
        assert at_zero[0].value == pytest.approx(0.0, abs=1e-12)
        assert [p.k for p in catalog.at_energy(0.0)] == [3]

    def test_constant_potential_is_degenerate(self):
        catalog = find_critical_points(PotentialModel.from_coefficients(cos={0: 0.0}))

        assert catalog.degenerate
        assert len(catalog) == 0

    def test_tolerance_must_be_positive(self, cosine):
        with pytest.raises(ValueError):
            find_critical_points(cosine, tol=0.0)


class TestNewtonPolish:
    def test_simple_root(self, cosine):
        assert _polish(cosine, 3.1) == pytest.approx(math.pi, abs=1e-12)

    def test_degenerate_root_uses_third_derivative(self, quartic_well):
        # V_inf' and V_inf'' both vanish at 0; the simple root of V_inf''' is polished instead
        assert abs(_polish(quartic_well, 1e-5)) < 1e-12


class TestCatalog:
    def test_shipped_potentials(self):
        assert len(find_critical_points(catalog_potential("cosine"))) == 2
        assert find_critical_points(catalog_potential("quartic"))[0].k == 3

    def test_energy_carried(self):
        assert catalog_potential("cosine", energy=0.5).energy == 0.5

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            catalog_potential("sextic")
