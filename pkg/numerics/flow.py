"""Induced dynamical system on R x T*S^1 and its lift to the full Hamiltonian flow.

The induced field is the Hamiltonian flow of rho^2 + eta^2/r^2 + V(theta) written in
the variables (rho, theta, w = eta/r) and reparametrized by d(tau) = dt / r:

    rho'   = 2 w^2
    theta' = 2 w
    w'     = -(dV/dtheta + 2 rho w)

which conserves rho^2 + w^2 + V(theta) and keeps rho nondecreasing.
"""

import math
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from numerics.errors import FlowBreakdown, IntegrationFailure
from numerics.potential import PotentialModel
from utils.logging_config import get_logger, log_performance

logger = get_logger("flow")

FIXED_POINT_THRESHOLD = 1e-12
TAIL_FRACTION = 0.2
MIN_TAIL_SAMPLES = 100
DEFAULT_METHOD = "DOP853"


class PhasePoint(BaseModel):
    """State (rho, theta, eta) of the induced flow; theta is kept unwrapped."""

    model_config = ConfigDict(frozen=True)

    rho: float = Field(..., description="Radial momentum")
    theta: float = Field(..., description="Direction angle (unwrapped)")
    eta: float = Field(..., description="Rescaled angular momentum eta/r")

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.theta, self.eta], dtype=float)

    def energy(self, model: PotentialModel) -> float:
        return self.rho**2 + self.eta**2 + float(model.v_inf(self.theta))


def flow_rhs(p: PhasePoint, model: PotentialModel) -> Tuple[float, float, float]:
    """(d rho, d theta, d eta) / d tau at p."""
    dv = float(model.derivative(p.theta, 1))
    return (2.0 * p.eta**2, 2.0 * p.eta, -(dv + 2.0 * p.rho * p.eta))


class Trajectory(BaseModel):
    """Sampled orbit of the induced flow with its diagnostic series."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    times: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    energy_series: np.ndarray
    lyapunov_F: np.ndarray
    lyapunov_G: np.ndarray
    q_integral: np.ndarray
    g_integral: np.ndarray
    backward: bool = False
    fixed_point: bool = False

    @classmethod
    def from_samples(
        cls, model: PotentialModel, times, states, backward: bool = False, fixed_point: bool = False
    ) -> "Trajectory":
        """Build from solver samples; states rows are (rho, theta, eta, int q, int G)."""
        times = np.asarray(times, dtype=float)
        states = np.asarray(states, dtype=float)
        if backward:
            times = times[::-1]
            states = states[:, ::-1]
        rho, theta, eta, q_int, g_int = states
        dv = model.derivative(theta, 1)
        return cls(
            times=times,
            rho=rho,
            theta=theta,
            eta=eta,
            energy_series=rho**2 + eta**2 + model.v_inf(theta),
            lyapunov_F=-dv * eta,
            lyapunov_G=dv**2,
            q_integral=q_int,
            g_integral=g_int,
            backward=backward,
            fixed_point=fixed_point,
        )

    def __len__(self) -> int:
        return len(self.times)

    @property
    def origin_index(self) -> int:
        """Index of the sample at t = 0."""
        return len(self.times) - 1 if self.backward else 0

    @property
    def far_index(self) -> int:
        return 0 if self.backward else len(self.times) - 1

    @property
    def states(self) -> List[PhasePoint]:
        return [
            PhasePoint(rho=r, theta=t, eta=e)
            for r, t, e in zip(self.rho, self.theta, self.eta)
        ]

    def tail_slice(self, fraction: float = TAIL_FRACTION) -> slice:
        """Samples in the final `fraction` of the window, measured away from t = 0."""
        span = abs(self.times[self.far_index] - self.times[self.origin_index])
        distance = np.abs(self.times - self.times[self.origin_index])
        mask = distance >= (1.0 - fraction) * span
        indices = np.flatnonzero(mask)
        return slice(int(indices[0]), int(indices[-1]) + 1)

    def to_rows(self) -> np.ndarray:
        """Columns t, rho, theta, eta, E, F, G, q_integral."""
        return np.column_stack(
            [
                self.times,
                self.rho,
                self.theta,
                self.eta,
                self.energy_series,
                self.lyapunov_F,
                self.lyapunov_G,
                self.q_integral,
            ]
        )


TRAJECTORY_COLUMNS = ["t", "rho", "theta", "eta", "E", "F", "G", "q_integral"]


def _augmented_rhs(model: PotentialModel):
    def rhs(_, y):
        rho, theta, eta = y[0], y[1], y[2]
        dv = float(model.derivative(theta, 1))
        return [
            2.0 * eta * eta,
            2.0 * eta,
            -(dv + 2.0 * rho * eta),
            eta * eta,
            dv * dv,
        ]

    return rhs


def integrate_flow(
    p0: PhasePoint,
    model: PotentialModel,
    t_end: float,
    tol: float = 1e-10,
    samples: int = 4001,
    method: str = DEFAULT_METHOD,
) -> Trajectory:
    """Adaptive Runge-Kutta integration of the induced flow from p0 to t_end."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t_end == 0:
        raise ValueError("t_end must be nonzero")

    backward = t_end < 0
    t_eval = np.linspace(0.0, t_end, samples)
    y0 = np.array([p0.rho, p0.theta, p0.eta, 0.0, 0.0])

    if max(abs(c) for c in flow_rhs(p0, model)) < FIXED_POINT_THRESHOLD:
        logger.debug(f"Fixed point at {p0}, skipping integration")
        states = np.repeat(y0[:, None], samples, axis=1)
        states[3:] = 0.0
        return Trajectory.from_samples(model, t_eval, states, backward, fixed_point=True)

    start = time.time()
    solution = solve_ivp(
        _augmented_rhs(model),
        (0.0, t_end),
        y0,
        method=method,
        t_eval=t_eval,
        rtol=tol,
        atol=tol,
    )
    duration = time.time() - start

    if not solution.success:
        partial = None
        if solution.t.size:
            partial = Trajectory.from_samples(model, solution.t, solution.y, backward)
        logger.error(f"Induced flow integration failed: {solution.message}")
        raise IntegrationFailure(f"integration failed: {solution.message}", partial)

    log_performance("integrate_flow", duration, t_end=t_end, steps=solution.nfev)
    return Trajectory.from_samples(model, solution.t, solution.y, backward)


def check_energy_conservation(traj: Trajectory) -> float:
    """max_t |E(t) - E(0)|."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    reference = traj.energy_series[traj.origin_index]
    return float(np.max(np.abs(traj.energy_series - reference)))


class FlowDiagnostics(BaseModel):
    """Asymptotic laws of an induced-flow trajectory."""

    rho_monotone: bool = Field(..., description="rho nondecreasing within tolerance")
    rho_limit: float = Field(..., description="rho at the far end of the window")
    tail_max_eta: float
    tail_max_dV: float
    q_integral_tail_increase: float
    g_integral_tail_increase: float
    integrals_bounded: bool
    tail_samples: int
    energy_drift: float

    @property
    def converged(self) -> bool:
        return self.tail_max_eta < 1e-3 and self.tail_max_dV < 1e-3


def asymptotic_diagnostics(
    traj: Trajectory,
    model: PotentialModel,
    monotone_tol: float = 1e-9,
    integral_tol: float = 1e-4,
) -> FlowDiagnostics:
    """Monotonicity of rho, tail decay of eta and dV, and boundedness of the running integrals."""
    tail = traj.tail_slice()
    tail_samples = tail.stop - tail.start
    if tail_samples < MIN_TAIL_SAMPLES:
        raise ValueError(
            f"tail window holds {tail_samples} samples, need {MIN_TAIL_SAMPLES}"
        )

    dv_tail = np.abs(model.derivative(traj.theta[tail], 1))
    q_increase = float(np.ptp(traj.q_integral[tail]))
    g_increase = float(np.ptp(traj.g_integral[tail]))
    return FlowDiagnostics(
        rho_monotone=bool(np.all(np.diff(traj.rho) >= -monotone_tol)),
        rho_limit=float(traj.rho[traj.far_index]),
        tail_max_eta=float(np.max(np.abs(traj.eta[tail]))),
        tail_max_dV=float(np.max(dv_tail)),
        q_integral_tail_increase=q_increase,
        g_integral_tail_increase=g_increase,
        integrals_bounded=q_increase < integral_tol and g_increase < integral_tol,
        tail_samples=tail_samples,
        energy_drift=check_energy_conservation(traj),
    )


class FullTrajectory(BaseModel):
    """Orbit of the full Hamiltonian flow in polar variables with tau(t) = int dt / r."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    r: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    tau: np.ndarray
    hamiltonian: np.ndarray

    _solution = PrivateAttr(default=None)

    @property
    def hamiltonian_drift(self) -> float:
        return float(np.max(np.abs(self.hamiltonian - self.hamiltonian[0])))

    def time_at_tau(self, tau: float) -> float:
        """Invert tau(t) using the dense output of the solver."""
        if self.tau[-1] < tau <= self.tau[-1] + 1e-9:
            return float(self.times[-1])
        if not self.tau[0] <= tau <= self.tau[-1]:
            raise ValueError(f"tau={tau} outside [{self.tau[0]}, {self.tau[-1]}]")
        index = int(np.searchsorted(self.tau, tau))
        if self.tau[min(index, len(self.tau) - 1)] == tau:
            return float(self.times[min(index, len(self.tau) - 1)])
        low, high = self.times[max(index - 1, 0)], self.times[index]
        return brentq(lambda t: self._solution.sol(t)[4] - tau, low, high, xtol=1e-14, rtol=1e-14)

    def pullback(self, tau_values: Sequence[float]) -> np.ndarray:
        """Rows (rho, theta, eta/r) of the full flow at the given tau."""
        rows = []
        for tau in tau_values:
            state = self._solution.sol(self.time_at_tau(float(tau)))
            rows.append([state[1], state[2], state[3] / state[0]])
        return np.array(rows)


def lift_full_flow(
    r0: float,
    p0: PhasePoint,
    model: PotentialModel,
    t_end: float,
    tol: float = 1e-10,
    tau_end: Optional[float] = None,
    method: str = DEFAULT_METHOD,
) -> FullTrajectory:
    """Integrate r' = 2 rho, rho' = 2 eta^2/r^3, theta' = 2 eta/r^2, eta' = -dV/dtheta.

    p0 holds the induced variables, so the full angular momentum starts at r0 * p0.eta.
    """
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    r_floor = 1e-6 * r0

    def rhs(_, z):
        r, rho, theta, eta = z[0], z[1], z[2], z[3]
        return [
            2.0 * rho,
            2.0 * eta * eta / r**3,
            2.0 * eta / (r * r),
            -float(model.derivative(theta, 1)),
            1.0 / r,
        ]

    def hits_origin(_, z):
        return z[0] - r_floor

    hits_origin.terminal = True
    hits_origin.direction = -1
    events = [hits_origin]

    if tau_end is not None:

        def reaches_tau(_, z):
            return z[4] - tau_end

        reaches_tau.terminal = True
        reaches_tau.direction = 1
        events.append(reaches_tau)

    z0 = [r0, p0.rho, p0.theta, r0 * p0.eta, 0.0]
    start = time.time()
    solution = solve_ivp(
        rhs,
        (0.0, t_end),
        z0,
        method=method,
        rtol=tol,
        atol=tol,
        dense_output=True,
        events=events,
    )
    log_performance("lift_full_flow", time.time() - start, steps=solution.nfev)

    if solution.t_events[0].size:
        crossing = float(solution.t_events[0][0])
        raise FlowBreakdown(f"radial variable reached 0 at t={crossing:.6g}", crossing)
    if not solution.success:
        raise IntegrationFailure(f"full flow integration failed: {solution.message}")

    r, rho, theta, eta, tau = solution.y
    hamiltonian = rho**2 + (eta / r) ** 2 + model.v_inf(theta)
    trajectory = FullTrajectory(
        times=solution.t, r=r, rho=rho, theta=theta, eta=eta, tau=tau, hamiltonian=hamiltonian
    )
    trajectory._solution = solution
    return trajectory


def closed_form_radial(r0: float, rho0: float, t) -> Tuple[np.ndarray, np.ndarray]:
    """Free purely radial motion: r = r0 + 2 rho0 t and tau = log(r / r0) / (2 rho0)."""
    t = np.asarray(t, dtype=float)
    r = r0 + 2.0 * rho0 * t
    if rho0 == 0:
        return r, t / r0
    return r, np.log(r / r0) / (2.0 * rho0)


def random_initial_conditions(
    rng: np.random.Generator, count: int, rho_range=(-1.0, 1.0), eta_range=(-1.0, 1.0)
) -> List[PhasePoint]:
    """Uniform random phase points for conservation sweeps."""
    return [
        PhasePoint(
            rho=float(rng.uniform(*rho_range)),
            theta=float(rng.uniform(0.0, 2.0 * math.pi)),
            eta=float(rng.uniform(*eta_range)),
        )
        for _ in range(count)
    ]


def bridge_deviation(
    p0: PhasePoint,
    model: PotentialModel,
    tau_end: float = 5.0,
    tol: float = 1e-10,
    r0: float = 1.0,
    points: int = 101,
    method: str = DEFAULT_METHOD,
) -> float:
    """Sup-norm gap between the induced flow and the pulled-back full flow over tau in [0, tau_end]."""
    induced = integrate_flow(p0, model, tau_end, tol=tol, samples=points, method=method)
    full = lift_full_flow(r0, p0, model, t_end=1e12, tol=tol, tau_end=tau_end, method=method)
    pulled = full.pullback(induced.times)
    reference = np.column_stack([induced.rho, induced.theta, induced.eta])
    return float(np.max(np.abs(pulled - reference)))
