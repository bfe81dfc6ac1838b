"""Time evolution e^{-itP} on a Cartesian grid and the observability functional F_m(t)."""

import math
import time
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import fft as sfft
from scipy.interpolate import RectBivariateSpline

from numerics.cutoffs import j_step, smoothstep
from numerics.errors import BoundaryMassAlarm, EnclosureError, ResolutionError
from numerics.potential import PotentialModel
from numerics.quantization import FRAME_FRACTION, CartesianField
from numerics.quasimodes import PolarField, circle_distance
from utils.logging_config import get_logger, log_performance

logger = get_logger("propagation")

BOUNDARY_ALARM = 1e-4
NORM_DEFICIT_WARNING = 1e-4
UNITARITY_RATE = 1e-8


class TransportResult(BaseModel):
    """Cartesian image of a polar field and the relative norm lost in interpolation."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    field: CartesianField
    norm_deficit: float


def polar_to_cartesian(u: PolarField, L: float, N: int, spline_padding: int = 3) -> TransportResult:
    """Bicubic (r, theta) interpolation onto [-L, L)^2, renormalized to the polar norm."""
    target = CartesianField.zeros(L, N, u.h)
    rows = np.flatnonzero(np.any(u.samples != 0, axis=1))
    if rows.size == 0:
        return TransportResult(field=target, norm_deficit=0.0)

    grid = u.grid
    cols = np.flatnonzero(np.any(u.samples != 0, axis=0))
    r_lo, r_hi = grid.r[rows[0]], grid.r[rows[-1]]
    support_r = grid.r[rows][:, None]
    support_t = grid.theta[cols][None, :]
    extent = max(
        float(np.max(np.abs(support_r * np.cos(support_t)))),
        float(np.max(np.abs(support_r * np.sin(support_t)))),
    )
    if extent > (1.0 - FRAME_FRACTION) * L:
        raise EnclosureError(
            f"polar support reaches |x| = {extent:.4g}, box interior ends at {(1 - FRAME_FRACTION) * L:.4g}"
        )
    dx = target.dx
    arc = r_lo * grid.dtheta * cols.size
    if (r_hi - r_lo) < 4 * dx or arc < 4 * dx:
        raise ResolutionError(
            f"polar support ({r_hi - r_lo:.4g} x {arc:.4g}) spans fewer than 4 Cartesian cells of {dx:.4g}"
        )

    pad = spline_padding
    theta_ext = np.concatenate([grid.theta[-pad:] - 2 * math.pi, grid.theta, grid.theta[:pad] + 2 * math.pi])
    samples_ext = np.concatenate([u.samples[:, -pad:], u.samples, u.samples[:, :pad]], axis=1)
    real = RectBivariateSpline(grid.r, theta_ext, samples_ext.real, kx=3, ky=3)
    imag = RectBivariateSpline(grid.r, theta_ext, samples_ext.imag, kx=3, ky=3)

    X, Y = target.mesh()
    r = np.hypot(X, Y)
    theta = np.mod(np.arctan2(Y, X), 2 * math.pi)
    active_cols = np.zeros(grid.N_theta, dtype=bool)
    for shift in range(-2, 3):
        active_cols[np.mod(cols + shift, grid.N_theta)] = True
    nearest = np.mod(np.rint(theta / grid.dtheta).astype(int), grid.N_theta)
    inside = (r >= r_lo - grid.dr) & (r <= r_hi + grid.dr) & active_cols[nearest]

    samples = np.zeros((N, N), dtype=complex)
    samples[inside] = real.ev(r[inside], theta[inside]) + 1j * imag.ev(r[inside], theta[inside])
    field = target.with_samples(samples)

    polar_norm = u.norm()
    cart_norm = field.norm()
    deficit = 1.0 - cart_norm / polar_norm if polar_norm else 0.0
    if abs(deficit) > NORM_DEFICIT_WARNING:
        logger.warning(f"Polar to Cartesian transport lost {deficit:.2e} of the norm")
    if cart_norm > 0:
        field = field.with_samples(field.samples * (polar_norm / cart_norm))
    return TransportResult(field=field, norm_deficit=float(deficit))


def cartesian_potential(model: PotentialModel, L: float, N: int) -> np.ndarray:
    """j(|x|) V_inf(theta) + V_s(|x|): the angular part is switched off inside |x| < 1/2."""
    X, Y = CartesianField.zeros(L, N, 1.0).mesh()
    r = np.hypot(X, Y)
    value = j_step(r) * model.v_inf(np.arctan2(Y, X))
    if model.short_range is not None:
        value = value + model.short_range(r)
    return value


def absorbing_mask(L: float, N: int, fraction: float = FRAME_FRACTION) -> np.ndarray:
    """1 in the interior, smoothly decaying to 0 across the outer `fraction` of the box."""
    axis = -L + (2.0 * L / N) * np.arange(N)
    depth = (np.abs(axis) - (1.0 - fraction) * L) / (fraction * L)
    profile = 1.0 - smoothstep(depth)
    return np.outer(profile, profile)


class SplitStepPropagator:
    """Strang splitting exp(-i dt V/2) exp(i dt Laplacian) exp(-i dt V/2)."""

    def __init__(
        self,
        potential: np.ndarray,
        L: float,
        dt: float,
        absorb: bool = True,
        alarm: float = BOUNDARY_ALARM,
    ):
        N = potential.shape[0]
        sup = float(np.max(np.abs(potential)))
        if dt * sup >= 0.5:
            raise ValueError(f"dt * |V|_inf = {dt * sup:.3g} must stay below 0.5")
        self.L = L
        self.N = N
        self.dt = dt
        self.alarm = alarm
        k = 2.0 * math.pi * sfft.fftfreq(N, d=2.0 * L / N)
        k2 = k[:, None] ** 2 + k[None, :] ** 2
        self._half_potential = np.exp(-0.5j * dt * potential)
        self._kinetic = np.exp(-1j * dt * k2)
        self._mask = absorbing_mask(L, N) if absorb else None
        interior = (1.0 - FRAME_FRACTION) * L
        axis = -L + (2.0 * L / N) * np.arange(N)
        self._frame = (np.abs(axis)[:, None] > interior) | (np.abs(axis)[None, :] > interior)

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        psi = psi * self._half_potential
        psi = sfft.ifft2(sfft.fft2(psi) * self._kinetic)
        psi = psi * self._half_potential
        if self._mask is not None:
            psi = psi * self._mask
        return psi

    def frame_mass(self, psi: np.ndarray) -> float:
        dx = 2.0 * self.L / self.N
        return float(np.sum(np.abs(psi[self._frame]) ** 2)) * dx * dx


def split_step_evolve(
    u: CartesianField,
    model: Optional[PotentialModel],
    dt: float,
    steps: int,
    observer: Optional[Callable[[int, float, np.ndarray], None]] = None,
    absorb: bool = True,
    check_every: int = 10,
) -> Tuple[CartesianField, np.ndarray]:
    """Evolve u for `steps` steps; returns the final field and the norm after each step (index 0 = start)."""
    u.require_resolved()
    potential = (
        cartesian_potential(model, u.L, u.N) if model is not None else np.zeros((u.N, u.N))
    )
    stepper = SplitStepPropagator(potential, u.L, dt, absorb=absorb)
    psi = u.samples.astype(complex)
    dx2 = u.dx**2
    norms = np.empty(steps + 1)
    norms[0] = math.sqrt(float(np.sum(np.abs(psi) ** 2)) * dx2)
    if observer is not None:
        observer(0, 0.0, psi)

    start = time.time()
    for step in range(1, steps + 1):
        psi = stepper(psi)
        norms[step] = math.sqrt(float(np.sum(np.abs(psi) ** 2)) * dx2)
        if observer is not None:
            observer(step, step * dt, psi)
        if step % check_every == 0 or step == steps:
            frame = stepper.frame_mass(psi)
            if frame > stepper.alarm:
                raise BoundaryMassAlarm(
                    f"{frame:.2e} of the mass entered the absorbing frame at t={step * dt:.4g}", frame
                )
    log_performance("split_step_evolve", time.time() - start, steps=steps, N=u.N)
    return u.with_samples(psi), norms


class RefinementReport(BaseModel):
    dt: float
    steps: int
    error_dt: float
    error_half: float
    ratio: float
    bounds: Tuple[float, float] = (3.5, 5.0)

    @property
    def passed(self) -> bool:
        return self.bounds[0] <= self.ratio <= self.bounds[1]


def strang_refinement(
    u: CartesianField,
    model: Optional[PotentialModel],
    dt: float,
    steps: int,
    reference_factor: int = 8,
    bounds: Tuple[float, float] = (3.5, 5.0),
) -> RefinementReport:
    """Errors of the dt and dt/2 runs against a dt/reference_factor run over the same horizon.

    Second-order splitting gives a ratio near (1 - 1/64) / (1/4 - 1/64) = 4.2 for the default reference.
    """
    finals = {}
    for factor in (1, 2, reference_factor):
        field, _ = split_step_evolve(u, model, dt / factor, steps * factor, absorb=False)
        finals[factor] = field.samples
    reference = finals[reference_factor]
    dx = u.dx
    error_dt = float(np.sqrt(np.sum(np.abs(finals[1] - reference) ** 2)) * dx)
    error_half = float(np.sqrt(np.sum(np.abs(finals[2] - reference) ** 2)) * dx)
    ratio = error_dt / error_half if error_half > 0 else math.inf
    logger.info(f"Strang refinement over {steps} steps of {dt}: errors {error_dt:.3e}, {error_half:.3e}")
    return RefinementReport(
        dt=dt, steps=steps, error_dt=error_dt, error_half=error_half, ratio=ratio, bounds=bounds
    )


def free_gaussian(sigma: float, t: float, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Closed-form solution of i u_t = -Laplacian u from (2 pi sigma^2)^(-1/2) e^(-|x|^2 / 4 sigma^2)."""
    a = sigma**2 + 1j * t
    return (2.0 * math.pi * sigma**2) ** -0.5 * (sigma**2 / a) * np.exp(-(X**2 + Y**2) / (4.0 * a))


class ObservabilityConfig(BaseModel):
    """Observation region Omega and the time window."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    theta0: float = Field(default=0.0, description="Direction of the excluded collar")
    C: float = Field(default=1.5, gt=0.0, description="Collar constant")
    exponent: float = Field(default=0.5, ge=0.0, description="Collar exponent")
    R: float = Field(default=1.0, ge=0.0, description="Inner radius")
    T: float = Field(default=1.0, gt=0.0, description="Horizon")
    dt: float = Field(default=0.005, gt=0.0, description="Time step")
    include_inner_ball: bool = Field(default=False)
    region: Literal["collar_complement", "everything", "half_plane"] = "collar_complement"
    half_plane_angle: float = Field(default=0.0, description="Normal direction of the half plane")
    half_plane_offset: float = Field(default=0.0)

    @model_validator(mode="after")
    def validate_steps(self) -> "ObservabilityConfig":
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("T / dt must be an integer")
        return self

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def indicator(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """chi_Omega at cell centers."""
        if self.region == "everything":
            return np.ones_like(X, dtype=bool)
        if self.region == "half_plane":
            normal = (math.cos(self.half_plane_angle), math.sin(self.half_plane_angle))
            return X * normal[0] + Y * normal[1] > self.half_plane_offset
        r = np.hypot(X, Y)
        with np.errstate(divide="ignore"):
            collar_width = self.C * np.where(r > 0, r, 1.0) ** (-self.exponent)
        collar = (r > self.R) & (circle_distance(np.arctan2(Y, X), self.theta0) < collar_width)
        omega = (r > self.R) & ~collar
        if self.include_inner_ball:
            omega |= r <= self.R
        return omega


def region_mass(u: CartesianField, cfg: ObservabilityConfig) -> float:
    """Sharp-indicator quadrature of |u|^2 over Omega."""
    X, Y = u.mesh()
    omega = cfg.indicator(X, Y)
    return float(np.sum(np.abs(u.samples[omega]) ** 2)) * u.dx * u.dx


class EvolutionReport(BaseModel):
    """F_m(t) along one evolution."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    h: float
    times: np.ndarray
    region_mass: np.ndarray
    cumulative: np.ndarray
    norms: np.ndarray
    residual_norm: Optional[float] = None
    bound_constant: Optional[float] = None

    @property
    def integral(self) -> float:
        return float(self.cumulative[-1])

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.norms - self.norms[0])))

    @property
    def drift_rate(self) -> float:
        """Norm drift per unit time over the horizon."""
        horizon = float(self.times[-1] - self.times[0])
        return self.norm_drift / horizon if horizon > 0 else self.norm_drift

    def to_rows(self) -> np.ndarray:
        """Columns t, F_m, cumulative integral, norm."""
        return np.column_stack([self.times, self.region_mass, self.cumulative, self.norms])


EVOLUTION_COLUMNS = ["t", "F_m", "cumulative", "norm"]


def unitarity_violations(reports: List[EvolutionReport], rate: float = UNITARITY_RATE) -> List[str]:
    """One message per evolution whose norm drifted faster than `rate` per unit time."""
    return [
        f"h={r.h:g}: norm drift {r.drift_rate:.3e} per unit time exceeds {rate:.0e}"
        for r in reports
        if r.drift_rate > rate
    ]


def evolve_region_mass(
    u: CartesianField, model: Optional[PotentialModel], cfg: ObservabilityConfig, absorb: bool = True
) -> Tuple[CartesianField, EvolutionReport]:
    """Evolve u over [0, T] recording F(t) = |u(t)|^2_{L^2(Omega)} at every step."""
    X, Y = u.mesh()
    omega = cfg.indicator(X, Y)
    dx2 = u.dx**2
    values = np.empty(cfg.steps + 1)

    def observe(step: int, _: float, psi: np.ndarray) -> None:
        values[step] = float(np.sum(np.abs(psi[omega]) ** 2)) * dx2

    final, norms = split_step_evolve(u, model, cfg.dt, cfg.steps, observer=observe, absorb=absorb)
    times = cfg.dt * np.arange(cfg.steps + 1)
    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * cfg.dt * (values[1:] + values[:-1]))])
    report = EvolutionReport(
        h=u.h, times=times, region_mass=values, cumulative=cumulative, norms=norms
    )
    return final, report


class ObservabilityReport(BaseModel):
    """Integrals of F_m over [0, T] for a decreasing h sweep."""

    h_values: List[float]
    integrals: List[float]
    initial_mass: List[float]
    nonincreasing: bool
    final_fraction: float
    threshold: float
    passed: bool


def summarize_observability(
    reports: List[EvolutionReport], cfg: ObservabilityConfig, threshold: float = 0.1, atol: float = 1e-6
) -> ObservabilityReport:
    """Check the integral sequence is nonincreasing and ends below threshold * T."""
    ordered = sorted(reports, key=lambda r: -r.h)
    integrals = [r.integral for r in ordered]
    nonincreasing = all(b <= a + atol for a, b in zip(integrals, integrals[1:]))
    final_fraction = integrals[-1] / cfg.T
    return ObservabilityReport(
        h_values=[r.h for r in ordered],
        integrals=integrals,
        initial_mass=[float(r.region_mass[0]) for r in ordered],
        nonincreasing=nonincreasing,
        final_fraction=final_fraction,
        threshold=threshold,
        passed=nonincreasing and final_fraction <= threshold,
    )


def observability_experiment(
    states: List[CartesianField],
    model: Optional[PotentialModel],
    cfg: ObservabilityConfig,
    threshold: float = 0.1,
) -> Tuple[List[EvolutionReport], ObservabilityReport]:
    """Evolve each transported quasimode and integrate its mass in Omega over [0, T]."""
    reports = []
    for state in states:
        _, report = evolve_region_mass(state, model, cfg)
        logger.info(f"h={state.h}: integral of F over [0, {cfg.T}] = {report.integral:.4e}")
        reports.append(report)
    return reports, summarize_observability(reports, cfg, threshold)


class FmBoundReport(BaseModel):
    """max_t F(t) <= F(0) + C |(P - E) u| t with the smallest C valid over the sweep."""

    constants: List[Optional[float]]
    C: float
    stable: bool
    passed: bool
    limit: float = 10.0


def fm_bound_check(
    reports: List[EvolutionReport], residual_norms: List[float], limit: float = 10.0, atol: float = 1e-6
) -> FmBoundReport:
    """Fit the Lipschitz constant of F_m against the residual and compare with `limit`."""
    constants: List[Optional[float]] = []
    for report, residual in zip(reports, residual_norms):
        t = report.times[1:]
        excess = report.region_mass[1:] - report.region_mass[0]
        if residual <= 0.0:
            constants.append(0.0 if np.all(excess <= atol) else math.inf)
            continue
        ratios = np.maximum(excess, 0.0) / (residual * t)
        constants.append(float(ratios.max()))
        report.bound_constant = constants[-1]
    C = max(constants) if constants else 0.0
    positive = [c for c in constants if c and math.isfinite(c)]
    stable = not positive or max(positive) <= 2.0 * min(positive) or max(positive) < 1e-6
    return FmBoundReport(
        constants=constants, C=float(C), stable=stable, passed=math.isfinite(C) and C <= limit, limit=limit
    )
