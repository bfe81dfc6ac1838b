"""Quasimodes u_h = f_h(r) g_h(theta) concentrating on a critical direction, and their residuals."""

import math
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import fft as sfft
from scipy.ndimage import correlate1d

from numerics.cutoffs import angular_bump, j_step, radial_bump
from numerics.errors import AliasingError, ResolutionError
from numerics.potential import PotentialModel, eval_potential, find_critical_points
from utils.logging_config import get_logger

logger = get_logger("quasimodes")

TWO_PI = 2.0 * math.pi

# 8th-order central differences
FIRST_DERIVATIVE = np.array(
    [1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280]
)
SECOND_DERIVATIVE = np.array(
    [-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560]
)


def ell(k: int) -> float:
    """Collar exponent: 2/3 for k = 0, k + 1 otherwise."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return 2.0 / 3.0 if k == 0 else float(k + 1)


def circle_distance(theta, theta0: float):
    delta = np.abs(np.mod(np.asarray(theta, dtype=float) - theta0, TWO_PI))
    return np.minimum(delta, TWO_PI - delta)


class PolarGrid(BaseModel):
    """Uniform grid r_min..r_max (inclusive) times N_theta points on [0, 2pi)."""

    model_config = ConfigDict(frozen=True)

    r_min: float = Field(..., gt=0.0)
    r_max: float
    N_r: int = Field(..., ge=16)
    N_theta: int = Field(..., ge=8)

    @model_validator(mode="after")
    def validate_range(self) -> "PolarGrid":
        if self.r_max <= self.r_min:
            raise ValueError("r_max must exceed r_min")
        return self

    @property
    def r(self) -> np.ndarray:
        return np.linspace(self.r_min, self.r_max, self.N_r)

    @property
    def dr(self) -> float:
        return (self.r_max - self.r_min) / (self.N_r - 1)

    @property
    def theta(self) -> np.ndarray:
        return TWO_PI * np.arange(self.N_theta) / self.N_theta

    @property
    def dtheta(self) -> float:
        return TWO_PI / self.N_theta


class PolarField(BaseModel):
    """Samples on a PolarGrid with the r dr dtheta norm."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: PolarGrid
    h: float
    samples: np.ndarray

    def weights(self) -> np.ndarray:
        return (self.grid.r * self.grid.dr)[:, None] * self.grid.dtheta

    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.samples) ** 2 * self.weights())))

    def inner(self, other: "PolarField") -> complex:
        return complex(np.sum(np.conj(self.samples) * other.samples * self.weights()))

    def with_samples(self, samples: np.ndarray) -> "PolarField":
        return self.model_copy(update={"samples": samples})

    def boundary_mass(self, fraction: float = 0.05) -> float:
        """Mass in the outer `fraction` of the radial range at either end."""
        n = max(1, int(math.ceil(fraction * self.grid.N_r)))
        density = np.abs(self.samples) ** 2 * self.weights()
        return float(density[:n].sum() + density[-n:].sum())

    def radial_support(self) -> Optional[tuple]:
        rows = np.flatnonzero(np.any(self.samples != 0, axis=1))
        if rows.size == 0:
            return None
        r = self.grid.r
        return float(r[rows[0]]), float(r[rows[-1]])


class QuasimodeSpec(BaseModel):
    """Build parameters of a quasimode family concentrating at theta0."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    case: int = Field(default=1, ge=1, le=2, description="1: E critical value, 2: E above max V")
    k: int = Field(..., ge=0, description="Critical order of theta0")
    epsilon_exp: float = Field(default=0.1, gt=0.0, description="Exponent parameter of the angular width")
    theta0: float = Field(..., description="Critical direction")
    support_constant: float = Field(default=1.0, gt=0.0, description="Collar constant C")
    energy: float = Field(default=0.0, description="E = E1 + E2")
    e1: float = Field(default=0.0, description="Radial kinetic energy E1")
    e2: float = Field(default=0.0, description="V(theta0)")
    points_per_wavelength: int = Field(default=16, ge=8)

    @model_validator(mode="after")
    def validate_energies(self) -> "QuasimodeSpec":
        if abs(self.e1 + self.e2 - self.energy) > 1e-12:
            raise ValueError("energy must equal e1 + e2")
        if self.case == 1 and self.e1 != 0.0:
            raise ValueError("case 1 quasimodes carry no radial energy (e1 = 0)")
        if self.case == 2 and self.e1 <= 0.0:
            raise ValueError("case 2 quasimodes need e1 > 0")
        return self

    @classmethod
    def for_potential(
        cls, model: PotentialModel, theta0: float, case: int = 1, energy: Optional[float] = None, **kwargs
    ) -> "QuasimodeSpec":
        """Derive k and the energy split from the potential's critical point at theta0."""
        catalog = find_critical_points(model)
        matches = [p for p in catalog if circle_distance(p.theta0, theta0) < 1e-6]
        if not matches:
            raise ValueError(f"theta0={theta0} is not a critical direction")
        point = matches[0]
        energy = point.value if energy is None and case == 1 else energy
        if energy is None:
            raise ValueError("case 2 needs an explicit energy")
        e2 = point.value
        k = kwargs.pop("k", point.k)
        spec = cls(
            case=case,
            k=k,
            theta0=point.theta0,
            energy=energy,
            e1=energy - e2 if case == 2 else 0.0,
            e2=e2 if case == 2 else energy,
            **kwargs,
        )
        spec.check_against(model)
        return spec

    def check_against(self, model: PotentialModel, tol: float = 1e-8) -> None:
        """Raise ValueError when the potential does not admit this quasimode."""
        low, high = model.bounds()
        value = float(model.v_inf(self.theta0))
        if self.case == 1:
            if not low - tol <= self.energy <= high + tol:
                raise ValueError(f"case 1 needs E in [{low:.6g}, {high:.6g}]")
            if abs(value - self.energy) > tol:
                raise ValueError(f"V(theta0)={value:.6g} differs from E={self.energy:.6g}")
        else:
            if self.energy <= high:
                raise ValueError(f"case 2 needs E above max V = {high:.6g}")
            if abs(value - self.e2) > tol:
                raise ValueError(f"V(theta0)={value:.6g} differs from e2={self.e2:.6g}")
        for order in range(1, self.k + 1):
            if abs(float(model.derivative(self.theta0, order))) > tol:
                raise ValueError(f"derivative of order {order} does not vanish at theta0")

    @property
    def slow_radial(self) -> bool:
        """Profile lives at r ~ h^(-3/2) instead of r ~ h^(-1)."""
        return self.case == 2 or self.k == 0

    def radial_scale(self, h: float) -> float:
        return h**1.5 if self.slow_radial else h

    def width_exponent(self) -> float:
        return (1.0 + self.k * self.epsilon_exp) / (self.k + 1)

    def angular_width(self, h: float) -> float:
        return h ** self.width_exponent()


def default_polar_grid(
    spec: QuasimodeSpec, h: float, points_across: int = 128, points_per_width: float = 1200.0
) -> PolarGrid:
    """Grid enclosing the profile support with a vanishing outer 5% band."""
    scale = spec.radial_scale(h)
    r_min, r_max = 0.9 / scale, 2.2 / scale
    dr = (1.0 / scale) / points_across
    if spec.case == 2:
        wavelength = TWO_PI / math.sqrt(spec.e1)
        dr = min(dr, wavelength / spec.points_per_wavelength)
    n_r = int(math.ceil((r_max - r_min) / dr)) + 1
    n_theta = sfft.next_fast_len(int(math.ceil(points_per_width / spec.angular_width(h))))
    return PolarGrid(r_min=r_min, r_max=r_max, N_r=n_r, N_theta=max(n_theta, 64))


def radial_profile(spec: QuasimodeSpec, h: float, grid: PolarGrid) -> np.ndarray:
    """C h^-2 f(h r) (or f(h^{3/2} r), times e^{i sqrt(E1) r} in case 2) with unit r dr norm."""
    scale = spec.radial_scale(h)
    r = grid.r
    lo, hi = 1.0 / scale, 2.0 / scale
    if grid.r_min > lo or grid.r_max < hi:
        raise ResolutionError(
            f"radial grid [{grid.r_min:.4g}, {grid.r_max:.4g}] misses support ({lo:.4g}, {hi:.4g})"
        )
    across = (hi - lo) / grid.dr
    if across < 32:
        raise ResolutionError(
            f"only {across:.1f} radial points across the bump", hint="need at least 32"
        )
    profile = radial_bump(scale * r).astype(complex)
    if spec.case == 2:
        k_r = math.sqrt(spec.e1)
        per_wavelength = (TWO_PI / k_r) / grid.dr
        if per_wavelength < 8:
            raise ResolutionError(
                f"phase e^(i sqrt(E1) r) sampled with {per_wavelength:.1f} points per wavelength",
                hint=f"dr must be below {TWO_PI / k_r / 8:.4g}",
            )
        profile = profile * np.exp(1j * k_r * r)
    norm = math.sqrt(float(np.sum(np.abs(profile) ** 2 * r)) * grid.dr)
    return profile / norm


def angular_profile(spec: QuasimodeSpec, h: float, grid: PolarGrid) -> np.ndarray:
    """C2 phi(dist(theta, theta0) / h^((1+k eps)/(k+1))) with unit L2(S^1) norm."""
    width = spec.angular_width(h)
    if width / grid.dtheta < 16:
        required = int(math.ceil(16 * TWO_PI / width))
        raise ResolutionError(
            f"angular width {width:.4g} spans {width / grid.dtheta:.1f} grid points",
            hint=f"N_theta >= {required}",
        )
    profile = angular_bump(circle_distance(grid.theta, spec.theta0) / width)
    norm = math.sqrt(float(np.sum(profile**2)) * grid.dtheta)
    return profile / norm


def build_quasimode(spec: QuasimodeSpec, h: float, grid: Optional[PolarGrid] = None) -> PolarField:
    """Tensor product of the radial and angular profiles, unit norm on the polar grid."""
    grid = grid or default_polar_grid(spec, h)
    samples = np.outer(radial_profile(spec, h, grid), angular_profile(spec, h, grid))
    field = PolarField(grid=grid, h=h, samples=samples)
    if field.boundary_mass() > 0.0:
        raise ResolutionError("quasimode support reaches the outer 5% of the radial grid")
    logger.debug(
        f"Built quasimode k={spec.k} case={spec.case} h={h} on {grid.N_r}x{grid.N_theta} grid"
    )
    return field


def check_cutoff_invariance(u: PolarField) -> float:
    """max |j(h r) u - u|, zero when u lives in h r >= 1."""
    factor = j_step(u.h * u.grid.r)[:, None]
    return float(np.max(np.abs(factor * u.samples - u.samples)))


def _radial_derivative(samples: np.ndarray, weights: np.ndarray, dr: float, order: int) -> np.ndarray:
    def apply(part):
        return correlate1d(part, weights, axis=0, mode="constant", cval=0.0)

    return (apply(samples.real) + 1j * apply(samples.imag)) / dr**order


def angular_alias_level(samples: np.ndarray) -> float:
    """Relative size of the angular spectrum in the outer 5% of modes."""
    spectrum = np.abs(sfft.fft(samples, axis=1))
    peak = spectrum.max()
    if peak == 0.0:
        return 0.0
    n = samples.shape[1]
    modes = np.abs(sfft.fftfreq(n)) * 2.0
    return float(spectrum[:, modes >= 0.95].max() / peak)


def apply_P_minus_E(
    u: PolarField, model: PotentialModel, energy: float, alias_tol: float = 1e-10
) -> PolarField:
    """(-d_r^2 - r^-1 d_r - r^-2 d_theta^2 + V - E) u, spectral in theta, 8th-order differences in r."""
    level = angular_alias_level(u.samples)
    if level > alias_tol:
        raise AliasingError(
            f"angular spectrum at Nyquist is {level:.2e} of its peak (tolerance {alias_tol:.0e})"
        )
    grid = u.grid
    r = grid.r[:, None]
    d1 = _radial_derivative(u.samples, FIRST_DERIVATIVE, grid.dr, 1)
    d2 = _radial_derivative(u.samples, SECOND_DERIVATIVE, grid.dr, 2)
    m = sfft.fftfreq(grid.N_theta, d=1.0 / grid.N_theta)
    angular = sfft.ifft(sfft.fft(u.samples, axis=1) * (m**2)[None, :], axis=1)
    potential = eval_potential(model, grid.r[:, None], grid.theta[None, :])
    out = -d2 - d1 / r + angular / r**2 + (potential - energy) * u.samples
    return u.with_samples(out)


class ResidualRow(BaseModel):
    h: float
    residual_norm: float
    slope_so_far: Optional[float] = None


class ResidualTable(BaseModel):
    """|(P - E) u_h| over an h sweep with the fitted log-log slope."""

    rows: List[ResidualRow]
    slope: float

    def as_pairs(self) -> List[tuple]:
        return [(row.h, row.residual_norm) for row in self.rows]


def fit_slope(h_values, norms) -> float:
    """Least-squares slope of log norm against log h."""
    design = np.column_stack([np.log(h_values), np.ones(len(h_values))])
    coeffs, *_ = np.linalg.lstsq(design, np.log(norms), rcond=None)
    return float(coeffs[0])


def residual_scaling(
    spec: QuasimodeSpec,
    model: PotentialModel,
    h_list: List[float],
    grids: Optional[List[PolarGrid]] = None,
) -> ResidualTable:
    """Residual norms |(P - E) u_h| and their fitted power of h."""
    if len(h_list) < 4:
        raise ValueError("residual scaling needs at least 4 values of h")
    grids = grids or [default_polar_grid(spec, h) for h in h_list]
    rows: List[ResidualRow] = []
    norms: List[float] = []
    for h, grid in zip(h_list, grids):
        u = build_quasimode(spec, h, grid)
        norms.append(apply_P_minus_E(u, model, spec.energy).norm())
        slope = fit_slope(h_list[: len(norms)], norms) if len(norms) >= 2 else None
        rows.append(ResidualRow(h=h, residual_norm=norms[-1], slope_so_far=slope))
        logger.info(f"h={h}: residual {norms[-1]:.4e}")
    return ResidualTable(rows=rows, slope=fit_slope(h_list, norms))


class SupportReport(BaseModel):
    holds: bool
    mass_outside: float


def support_report(
    u: PolarField, theta0: float, C: float, exponent: float, tol: float = 1e-10
) -> SupportReport:
    """Mass of u outside {r > 1, dist(theta, theta0) < C r^-exponent}."""
    r = u.grid.r[:, None]
    inside = (r > 1.0) & (circle_distance(u.grid.theta, theta0)[None, :] < C * r ** (-exponent))
    density = np.abs(u.samples) ** 2 * u.weights()
    outside = float(density[~inside].sum())
    return SupportReport(holds=outside < tol, mass_outside=outside)
