"""Tests for the induced flow, its asymptotics and the lift to the full flow."""

import math

import numpy as np
import pytest

from numerics.errors import FlowBreakdown
from numerics.flow import (
    PhasePoint,
    asymptotic_diagnostics,
    bridge_deviation,
    check_energy_conservation,
    closed_form_radial,
    flow_rhs,
    integrate_flow,
    lift_full_flow,
    random_initial_conditions,
)
from numerics.potential import PotentialModel


@pytest.fixture
def cosine():
    return PotentialModel.from_coefficients(cos={1: 1.0})


@pytest.fixture
def free():
    return PotentialModel.from_coefficients(cos={0: 0.0})


@pytest.fixture(scope="module")
def cosine_orbit():
    model = PotentialModel.from_coefficients(cos={1: 1.0})
    start = PhasePoint(rho=0.0, theta=math.pi / 2, eta=1.0)
    return model, integrate_flow(start, model, 50.0, tol=1e-10)


class TestVectorField:
    def test_fixed_point(self, cosine):
        assert flow_rhs(PhasePoint(rho=0.0, theta=0.0, eta=0.0), cosine) == pytest.approx((0.0, 0.0, 0.0))

    def test_cosine_potential(self, cosine):
        assert flow_rhs(PhasePoint(rho=0.0, theta=math.pi / 2, eta=1.0), cosine) == pytest.approx((2.0, 2.0, 1.0))

    def test_free_motion(self, free):
        assert flow_rhs(PhasePoint(rho=1.0, theta=0.0, eta=1.0), free) == pytest.approx((2.0, 2.0, -2.0))

    def test_energy_is_first_integral(self, cosine):
        """d/dtau (rho^2 + eta^2 + V) vanishes for random states."""
        rng = np.random.default_rng(3)
        for p in random_initial_conditions(rng, 10):
            d_rho, d_theta, d_eta = flow_rhs(p, cosine)
            dv = -math.sin(p.theta)
            assert 2 * p.rho * d_rho + 2 * p.eta * d_eta + dv * d_theta == pytest.approx(0.0, abs=1e-12)


class TestIntegration:
    def test_fixed_point_is_constant(self, cosine):
        traj = integrate_flow(PhasePoint(rho=0.3, theta=0.0, eta=0.0), cosine, 10.0, samples=201)

        assert traj.fixed_point
        assert np.all(traj.rho == 0.3)
        assert check_energy_conservation(traj) == 0.0

    def test_cosine_orbit_converges(self, cosine_orbit):
        model, traj = cosine_orbit
        diagnostics = asymptotic_diagnostics(traj, model)

        assert diagnostics.energy_drift <= 1e-8
        assert diagnostics.rho_monotone
        assert diagnostics.converged
        assert abs(traj.eta[-1]) < 1e-3
        assert abs(math.sin(traj.theta[-1])) < 1e-3

    def test_rho_limit_matches_energy(self, cosine_orbit):
        model, traj = cosine_orbit
        energy = traj.energy_series[0]
        theta_inf = traj.theta[-1]

        expected = math.sqrt(energy - math.cos(theta_inf))
        assert traj.rho[-1] == pytest.approx(expected, abs=1e-3)

    def test_free_orbit_conserves_energy(self, free):
        traj = integrate_flow(PhasePoint(rho=0.0, theta=1.0, eta=1.0), free, 1.0, samples=101)

        assert check_energy_conservation(traj) <= 1e-8
        assert np.all(np.diff(traj.rho) >= 0.0)

    def test_backward_run_is_ordered(self, cosine):
        traj = integrate_flow(PhasePoint(rho=0.1, theta=1.0, eta=0.5), cosine, -5.0, samples=501)

        assert traj.backward
        assert traj.times[0] == pytest.approx(-5.0)
        assert traj.times[-1] == 0.0
        assert np.all(np.diff(traj.rho) >= -1e-9)

    def test_rejects_bad_arguments(self, cosine):
        start = PhasePoint(rho=0.0, theta=1.0, eta=1.0)
        with pytest.raises(ValueError):
            integrate_flow(start, cosine, 0.0)
        with pytest.raises(ValueError):
            integrate_flow(start, cosine, 1.0, tol=0.0)

    def test_short_window_rejected_by_diagnostics(self, cosine):
        traj = integrate_flow(PhasePoint(rho=0.0, theta=1.0, eta=1.0), cosine, 1.0, samples=50)
        with pytest.raises(ValueError):
            asymptotic_diagnostics(traj, cosine)

    def test_rows_match_columns(self, cosine_orbit):
        _, traj = cosine_orbit
        assert traj.to_rows().shape == (len(traj), 8)


class TestFullFlow:
    def test_radial_closed_form(self, free):
        full = lift_full_flow(1.0, PhasePoint(rho=1.0, theta=0.0, eta=0.0), free, t_end=3.0)
        r, tau = closed_form_radial(1.0, 1.0, full.times)

        assert np.allclose(full.r, r, atol=1e-8)
        assert np.allclose(full.tau, tau, atol=1e-8)
        assert full.hamiltonian_drift <= 1e-10

    def test_origin_crossing_reported(self, free):
        with pytest.raises(FlowBreakdown) as excinfo:
            lift_full_flow(1.0, PhasePoint(rho=-1.0, theta=0.0, eta=0.0), free, t_end=1.0)
        assert excinfo.value.time == pytest.approx(0.5, abs=1e-5)

    def test_pullback_matches_induced_flow(self, cosine):
        deviation = bridge_deviation(PhasePoint(rho=0.5, theta=1.0, eta=0.4), cosine, tau_end=1.0, points=21)
        assert deviation <= 1e-6

    def test_rejects_nonpositive_radius(self, cosine):
        with pytest.raises(ValueError):
            lift_full_flow(0.0, PhasePoint(rho=0.0, theta=0.0, eta=0.0), cosine, t_end=1.0)
