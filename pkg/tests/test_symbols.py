"""Tests for polar phase-space symbols."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from numerics.potential import PotentialModel
from numerics.symbols import (
    SymbolSpec,
    bump,
    constant,
    eval_symbol,
    linear_combination,
    product,
    shell_probe,
    wrap_angle,
)


class TestBump:
    def test_peak_and_support(self):
        a = bump("probe", (0.0, 1.0, 0.0), 0.3)

        assert a(0.0, 1.0, 0.0) == pytest.approx(1.0)
        assert a(2.0, 1.0, 0.0) == 0.0
        assert a(0.0, 1.0, 0.29) > 0.0

    def test_wraps_around_the_circle(self):
        a = bump("probe", (0.0, 0.1, 0.0), 0.3)

        assert a(0.0, 2 * math.pi - 0.1, 0.0) > 0.0
        assert a(0.0, 2 * math.pi - 0.1, 0.0) == pytest.approx(a(0.0, 0.3, 0.0))

    def test_unbounded_axis(self):
        a = bump("radial", (0.0, 0.0, 0.0), (1.0, None, None))

        assert a(0.0, 2.0, 50.0) == pytest.approx(1.0)
        assert a.support_box[1] == (-math.inf, math.inf)

    def test_invalid_radii(self):
        with pytest.raises(ValidationError):
            bump("bad", (0.0, 0.0, 0.0), (None, None, None))
        with pytest.raises(ValidationError):
            bump("bad", (0.0, 0.0, 0.0), -1.0)
        with pytest.raises(ValidationError):
            bump("bad", (0.0, 0.0, 0.0), (1.0, 4.0, 1.0))

    def test_vectorized(self):
        a = bump("probe", (0.0, 0.0, 0.0), 1.0)
        rho = np.linspace(-2.0, 2.0, 9)

        values = a(rho, 0.0, 0.0)

        assert values.shape == (9,)
        assert values[4] == pytest.approx(1.0)
        assert values[0] == 0.0 and values[-1] == 0.0


class TestCompositeSymbols:
    def test_product_peak(self):
        a = product(
            "window",
            bump("left", (0.0, 0.0, 0.0), 0.5),
            bump("right", (0.0, 0.0, 0.0), 1.0),
        )
        assert a(0.0, 0.0, 0.0) == pytest.approx(1.0)

    def test_disjoint_product_is_zero(self):
        a = product(
            "disjoint",
            bump("left", (-2.0, 0.0, 0.0), 0.5),
            bump("right", (2.0, 0.0, 0.0), 0.5),
        )
        assert a.support_box is None
        assert a(0.0, 0.0, 0.0) == 0.0

    def test_zero_constant(self):
        zero = constant("zero", 0.0)

        assert zero.support_box is None
        assert eval_symbol(zero, 1.0, 2.0, 3.0) == 0.0

    def test_linear_combination_and_scaling(self):
        a = bump("a", (0.0, 0.0, 0.0), 1.0)
        b = constant("one", 1.0)

        combined = linear_combination("mix", [2.0, -1.0], [a, b])
        assert combined(0.0, 0.0, 0.0) == pytest.approx(1.0)
        assert a.scaled(3.0)(0.0, 0.0, 0.0) == pytest.approx(3.0)

    def test_shell_probe_vanishes_on_the_shell(self):
        model = PotentialModel.from_coefficients(cos={1: 1.0})
        carrier = bump("carrier", (0.0, 0.0, 0.0), 2.0)
        probe = shell_probe("shell", carrier, model, energy=1.0)

        assert probe.tag == "shell_probe"
        assert probe(0.0, 0.0, 0.0) == pytest.approx(0.0)
        assert probe(0.5, 0.0, 0.0) == pytest.approx(0.25 * carrier(0.5, 0.0, 0.0))

    def test_serializes(self):
        a = product("window", bump("left", (0.0, 1.0, 0.0), 0.5), constant("c", 2.0))

        restored = SymbolSpec.model_validate(a.model_dump())

        assert restored(0.0, 1.0, 0.0) == pytest.approx(a(0.0, 1.0, 0.0))


def test_wrap_angle_range():
    values = wrap_angle(np.array([0.0, math.pi, -math.pi, 3 * math.pi, 0.5]))
    assert np.all(values >= -math.pi) and np.all(values < math.pi)
    assert values[4] == pytest.approx(0.5)
