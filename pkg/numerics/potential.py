"""Order-zero homogeneous potentials V = V_inf(theta) + V_s(r) and their critical directions."""

import math
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.optimize import brentq

from utils.logging_config import get_logger

logger = get_logger("potential")

TWO_PI = 2.0 * math.pi
MAX_DERIVATIVE_ORDER = 8
CRITICAL_SAMPLES = 4096
BISECTION_XTOL = 1e-12


class FourierTerm(BaseModel):
    """One harmonic c*cos(m theta) + s*sin(m theta) of V_inf."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: int = Field(..., ge=0, description="Angular mode m")
    cos: float = Field(default=0.0, description="Cosine coefficient c_m")
    sin: float = Field(default=0.0, description="Sine coefficient s_m")


class ShortRange(BaseModel):
    """V_s(r) = amplitude * (1 + r/radial_scale)^(-decay_exponent)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    amplitude: float = Field(..., description="Amplitude of the short-range part")
    decay_exponent: float = Field(..., description="Decay exponent, must exceed 1")
    radial_scale: float = Field(default=1.0, gt=0.0, description="Radial length scale")

    @field_validator("decay_exponent")
    def validate_decay(cls, value: float) -> float:
        """r*V_s(r) must vanish at infinity."""
        if value <= 1.0:
            raise ValueError("decay_exponent must be > 1 so that r*V_s -> 0")
        return value

    def __call__(self, r):
        return self.amplitude * (1.0 + np.asarray(r, dtype=float) / self.radial_scale) ** (
            -self.decay_exponent
        )


class PotentialModel(BaseModel):
    """Potential V_inf(theta) + V_s(r) together with the working energy E."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    fourier: List[FourierTerm] = Field(
        default_factory=list, description="Harmonics of the angular part"
    )
    short_range: Optional[ShortRange] = Field(
        None, description="Optional short-range perturbation"
    )
    energy: float = Field(default=0.0, description="Energy level E")

    @classmethod
    def from_coefficients(
        cls, cos: Optional[dict] = None, sin: Optional[dict] = None, **kwargs
    ) -> "PotentialModel":
        """Build from {mode: coefficient} maps."""
        cos = cos or {}
        sin = sin or {}
        modes = sorted(set(cos) | set(sin))
        terms = [
            FourierTerm(mode=m, cos=cos.get(m, 0.0), sin=sin.get(m, 0.0)) for m in modes
        ]
        return cls(fourier=terms, **kwargs)

    def v_inf(self, theta):
        """Angular part V_inf, vectorized over theta."""
        theta = np.asarray(theta, dtype=float)
        value = np.zeros_like(theta)
        for term in self.fourier:
            value = value + term.cos * np.cos(term.mode * theta) + term.sin * np.sin(
                term.mode * theta
            )
        return value

    def derivative(self, theta, order: int):
        """Exact order-th angular derivative of V_inf."""
        theta = np.asarray(theta, dtype=float)
        value = np.zeros_like(theta)
        if order == 0:
            return self.v_inf(theta)
        shift = order * math.pi / 2.0
        for term in self.fourier:
            if term.mode == 0:
                continue
            scale = float(term.mode) ** order
            phase = term.mode * theta + shift
            value = value + scale * (term.cos * np.cos(phase) + term.sin * np.sin(phase))
        return value

    def bounds(self, samples: int = CRITICAL_SAMPLES) -> tuple:
        """(min V_inf, max V_inf) over a dense angular sample."""
        values = self.v_inf(np.linspace(0.0, TWO_PI, samples, endpoint=False))
        return float(values.min()), float(values.max())

    def sup_norm(self) -> float:
        low, high = self.bounds()
        extra = abs(self.short_range.amplitude) if self.short_range else 0.0
        return max(abs(low), abs(high)) + extra


class CriticalPoint(BaseModel):
    """Critical direction theta0 of V_inf with vanishing order k."""

    model_config = ConfigDict(frozen=True)

    theta0: float = Field(..., ge=0.0, lt=TWO_PI, description="Critical angle")
    k: int = Field(..., ge=0, description="Derivatives of orders 1..k vanish")
    value: float = Field(..., description="V_inf(theta0)")


class CriticalPointCatalog(BaseModel):
    """Result of a critical point search."""

    model_config = ConfigDict(frozen=True)

    points: List[CriticalPoint] = Field(default_factory=list)
    degenerate: bool = Field(
        default=False, description="V_inf is constant, every direction is critical"
    )

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, index: int) -> CriticalPoint:
        return self.points[index]

    def at_energy(self, energy: float, tol: float = 1e-8) -> List[CriticalPoint]:
        """Critical points on the level set V_inf = energy."""
        return [p for p in self.points if abs(p.value - energy) <= tol]


# cosine: nondegenerate extrema at 0 and pi; quartic: (1 - cos theta)^2, a k=3 minimum at 0
CATALOG_COEFFICIENTS = {
    "cosine": {1: 1.0},
    "quartic": {0: 1.5, 1: -2.0, 2: 0.5},
}


def catalog_potential(name: str, energy: float = 0.0) -> PotentialModel:
    """One of the shipped test potentials by name."""
    if name not in CATALOG_COEFFICIENTS:
        raise ValueError(f"unknown catalog potential {name!r}, expected one of {sorted(CATALOG_COEFFICIENTS)}")
    return PotentialModel.from_coefficients(cos=CATALOG_COEFFICIENTS[name], energy=energy)


def eval_potential(model: PotentialModel, r, theta):
    """V_inf(theta) + V_s(r); r must be nonnegative."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("radius must be nonnegative")
    value = model.v_inf(theta)
    if model.short_range is not None:
        value = value + model.short_range(r_arr)
    if np.ndim(value) == 0:
        return float(value)
    return value


def potential_derivatives(model: PotentialModel, theta: float, max_order: int) -> List[float]:
    """[d/dtheta V_inf, ..., d^max_order/dtheta^max_order V_inf] at theta."""
    if not 1 <= max_order <= MAX_DERIVATIVE_ORDER:
        raise ValueError(f"max_order must lie in [1, {MAX_DERIVATIVE_ORDER}]")
    return [float(model.derivative(theta, m)) for m in range(1, max_order + 1)]


def _vanishing_order(model: PotentialModel, theta: float, tol: float) -> int:
    order = 0
    for m in range(1, MAX_DERIVATIVE_ORDER + 1):
        if abs(float(model.derivative(theta, m))) > tol:
            break
        order = m
    return order


def _polish(model: PotentialModel, theta: float) -> float:
    """Newton-polish theta on the lowest derivative whose root there is simple."""
    scale = max(1.0, max(abs(t.cos) + abs(t.sin) for t in model.fourier))
    for j in range(1, MAX_DERIVATIVE_ORDER):
        if abs(float(model.derivative(theta, j + 1))) > 1e-4 * scale:
            for _ in range(20):
                step = float(model.derivative(theta, j)) / float(
                    model.derivative(theta, j + 1)
                )
                theta -= step
                if abs(step) < BISECTION_XTOL:
                    break
            return theta
    return theta


def find_critical_points(model: PotentialModel, tol: float = 1e-8) -> CriticalPointCatalog:
    """All roots of d/dtheta V_inf on [0, 2pi) annotated with their order k."""
    if tol <= 0:
        raise ValueError("tol must be positive")

    grid = np.linspace(0.0, TWO_PI, CRITICAL_SAMPLES, endpoint=False)
    step = grid[1] - grid[0]
    dv = model.derivative(grid, 1)
    if np.max(np.abs(dv)) <= tol:
        logger.debug("V_inf is constant, returning degenerate catalog")
        return CriticalPointCatalog(points=[], degenerate=True)

    def first_derivative(theta: float) -> float:
        return float(model.derivative(theta, 1))

    candidates = []
    for i in range(CRITICAL_SAMPLES):
        left, right = grid[i], grid[i] + step
        f_left, f_right = dv[i], dv[(i + 1) % CRITICAL_SAMPLES]
        if f_left == 0.0:
            candidates.append(left)
        elif f_left * f_right < 0.0:
            candidates.append(brentq(first_derivative, left, right, xtol=BISECTION_XTOL))

    # roots of even multiplicity do not change sign: local minima of |V'|
    magnitude = np.abs(dv)
    threshold = 1e-3 * magnitude.max()
    for i in range(CRITICAL_SAMPLES):
        prev_m = magnitude[i - 1]
        next_m = magnitude[(i + 1) % CRITICAL_SAMPLES]
        if magnitude[i] <= prev_m and magnitude[i] < next_m and magnitude[i] < threshold:
            candidates.append(grid[i])

    points: List[CriticalPoint] = []
    for candidate in candidates:
        theta = _polish(model, float(candidate)) % TWO_PI
        k = _vanishing_order(model, theta, tol)
        if k == 0:
            continue
        duplicate = any(
            min(abs(theta - p.theta0), TWO_PI - abs(theta - p.theta0)) < 1e-6
            for p in points
        )
        if duplicate:
            continue
        if theta >= TWO_PI - BISECTION_XTOL:
            theta = 0.0
        points.append(
            CriticalPoint(theta0=theta, k=k, value=float(model.v_inf(theta)))
        )

    points.sort(key=lambda p: p.theta0)
    logger.debug(f"Found {len(points)} critical points")
    return CriticalPointCatalog(points=points, degenerate=False)
