"""Test symbols a(rho, theta, w) on R x T*S^1 built as small expression trees."""

import math
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from numerics.cutoffs import smoothstep
from numerics.potential import FourierTerm, PotentialModel

TWO_PI = 2.0 * math.pi
AXES = ("rho", "theta", "w")
UNBOUNDED = (-math.inf, math.inf)

Interval = Tuple[float, float]
Box = Tuple[Interval, Interval, Interval]


def wrap_angle(delta):
    """Signed angular difference in [-pi, pi)."""
    return (np.asarray(delta, dtype=float) + math.pi) % TWO_PI - math.pi


def unit_bump(t):
    """exp(1 - 1/(1 - t^2)) on |t| < 1, zero elsewhere; peak 1 at t = 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def _offsets(center: Tuple[float, float, float], rho, theta, w):
    return (
        np.asarray(rho, dtype=float) - center[0],
        wrap_angle(np.asarray(theta, dtype=float) - center[1]),
        np.asarray(w, dtype=float) - center[2],
    )


def _expand_radii(value):
    if value is None or isinstance(value, (int, float)):
        return (value, value, value)
    return tuple(value)


class _Node(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class BumpSymbol(_Node):
    """Product of 1D bumps; an axis with radius None is left unconstrained."""

    kind: Literal["bump"] = "bump"
    center: Tuple[float, float, float] = Field(..., description="(rho, theta, w) center")
    radius: Tuple[Optional[float], Optional[float], Optional[float]] = Field(
        ..., description="Half-widths per axis"
    )

    @field_validator("radius", mode="before")
    def expand_radius(cls, value):
        radii = _expand_radii(value)
        if all(r is None for r in radii):
            raise ValueError("bump needs at least one bounded axis")
        if any(r is not None and r <= 0 for r in radii):
            raise ValueError("bump radii must be positive")
        if radii[1] is not None and radii[1] >= math.pi:
            raise ValueError("angular radius must be below pi")
        return radii

    def evaluate(self, rho, theta, w):
        value = np.ones(np.broadcast(rho, theta, w).shape)
        for offset, radius in zip(_offsets(self.center, rho, theta, w), self.radius):
            if radius is not None:
                value = value * unit_bump(offset / radius)
        return value

    def box(self) -> Box:
        return tuple(
            UNBOUNDED if r is None else (c - r, c + r) for c, r in zip(self.center, self.radius)
        )


class PlateauSymbol(_Node):
    """Equal to 1 on |offset| <= inner per axis, vanishing beyond outer."""

    kind: Literal["plateau"] = "plateau"
    center: Tuple[float, float, float]
    inner: Tuple[Optional[float], Optional[float], Optional[float]]
    outer: Tuple[Optional[float], Optional[float], Optional[float]]

    @field_validator("inner", "outer", mode="before")
    def expand(cls, value):
        return _expand_radii(value)

    def evaluate(self, rho, theta, w):
        value = np.ones(np.broadcast(rho, theta, w).shape)
        for offset, inner, outer in zip(
            _offsets(self.center, rho, theta, w), self.inner, self.outer
        ):
            if outer is None:
                continue
            value = value * smoothstep((outer - np.abs(offset)) / (outer - inner))
        return value

    def box(self) -> Box:
        return tuple(
            UNBOUNDED if r is None else (c - r, c + r) for c, r in zip(self.center, self.outer)
        )


class ConstantSymbol(_Node):
    kind: Literal["constant"] = "constant"
    value: float = 1.0

    def evaluate(self, rho, theta, w):
        return np.full(np.broadcast(rho, theta, w).shape, self.value)

    def box(self) -> Optional[Box]:
        return None if self.value == 0.0 else (UNBOUNDED, UNBOUNDED, UNBOUNDED)


class ShellSymbol(_Node):
    """Energy shell functional rho^2 + w^2 + V_inf(theta) - E."""

    kind: Literal["shell"] = "shell"
    fourier: List[FourierTerm] = Field(default_factory=list)
    energy: float = 0.0

    @classmethod
    def from_potential(cls, model: PotentialModel, energy: Optional[float] = None) -> "ShellSymbol":
        return cls(
            fourier=list(model.fourier),
            energy=model.energy if energy is None else energy,
        )

    def evaluate(self, rho, theta, w):
        potential = PotentialModel(fourier=self.fourier)
        rho = np.asarray(rho, dtype=float)
        w = np.asarray(w, dtype=float)
        return rho**2 + w**2 + potential.v_inf(theta) - self.energy

    def box(self) -> Box:
        return (UNBOUNDED, UNBOUNDED, UNBOUNDED)


class ProductSymbol(_Node):
    kind: Literal["product"] = "product"
    factors: List["SymbolExpr"]

    def evaluate(self, rho, theta, w):
        value = np.ones(np.broadcast(rho, theta, w).shape)
        for factor in self.factors:
            value = value * factor.evaluate(rho, theta, w)
        return value

    def box(self) -> Optional[Box]:
        boxes = [factor.box() for factor in self.factors]
        if any(b is None for b in boxes):
            return None
        result = []
        for axis in range(3):
            low = max(b[axis][0] for b in boxes)
            high = min(b[axis][1] for b in boxes)
            if low >= high:
                return None
            result.append((low, high))
        return tuple(result)


class SumSymbol(_Node):
    kind: Literal["sum"] = "sum"
    terms: List["SymbolExpr"]
    weights: Optional[List[float]] = None

    def _weights(self) -> List[float]:
        return self.weights if self.weights is not None else [1.0] * len(self.terms)

    def evaluate(self, rho, theta, w):
        value = np.zeros(np.broadcast(rho, theta, w).shape)
        for weight, term in zip(self._weights(), self.terms):
            value = value + weight * term.evaluate(rho, theta, w)
        return value

    def box(self) -> Optional[Box]:
        boxes = [t.box() for weight, t in zip(self._weights(), self.terms) if weight != 0.0]
        boxes = [b for b in boxes if b is not None]
        if not boxes:
            return None
        return tuple(
            (min(b[axis][0] for b in boxes), max(b[axis][1] for b in boxes)) for axis in range(3)
        )


SymbolExpr = Annotated[
    Union[BumpSymbol, PlateauSymbol, ConstantSymbol, ShellSymbol, ProductSymbol, SumSymbol],
    Field(discriminator="kind"),
]
ProductSymbol.model_rebuild()
SumSymbol.model_rebuild()


class SymbolSpec(BaseModel):
    """Named test observable with a classification tag."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(..., description="Unique symbol identifier")
    tag: str = Field(default="probe", description="on_support / off_support / shell_probe / identity / probe")
    expr: SymbolExpr

    @property
    def support_box(self) -> Optional[Box]:
        """Box outside of which the symbol vanishes; None for the zero symbol."""
        return self.expr.box()

    def scaled(self, factor: float, name: Optional[str] = None) -> "SymbolSpec":
        return SymbolSpec(
            name=name or f"{factor:g}*{self.name}",
            tag=self.tag,
            expr=SumSymbol(terms=[self.expr], weights=[factor]),
        )

    def __call__(self, rho, theta, w):
        return eval_symbol(self, rho, theta, w)


def _inside_box(box: Box, rho, theta, w):
    inside = np.ones(np.broadcast(rho, theta, w).shape, dtype=bool)
    for axis, values in enumerate((rho, theta, w)):
        low, high = box[axis]
        if not (math.isfinite(low) and math.isfinite(high)):
            continue
        values = np.asarray(values, dtype=float)
        if axis == 1:
            if high - low >= TWO_PI:
                continue
            mid = 0.5 * (low + high)
            inside &= np.abs(wrap_angle(values - mid)) <= 0.5 * (high - low)
        else:
            inside &= (values >= low) & (values <= high)
    return inside


def eval_symbol(a: SymbolSpec, rho, theta, w):
    """Vectorized evaluation of a at (rho, theta, w); exactly 0 outside support_box."""
    box = a.support_box
    shape = np.broadcast(rho, theta, w).shape
    if box is None:
        value = np.zeros(shape)
    else:
        value = np.where(_inside_box(box, rho, theta, w), a.expr.evaluate(rho, theta, w), 0.0)
    if value.ndim == 0:
        return float(value)
    return value


def bump(name: str, center, radius, tag: str = "probe") -> SymbolSpec:
    return SymbolSpec(name=name, tag=tag, expr=BumpSymbol(center=tuple(center), radius=radius))


def constant(name: str, value: float = 1.0, tag: str = "probe") -> SymbolSpec:
    return SymbolSpec(name=name, tag=tag, expr=ConstantSymbol(value=value))


def product(name: str, *parts: SymbolSpec, tag: str = "probe") -> SymbolSpec:
    return SymbolSpec(name=name, tag=tag, expr=ProductSymbol(factors=[p.expr for p in parts]))


def linear_combination(name: str, weights: List[float], parts: List[SymbolSpec]) -> SymbolSpec:
    return SymbolSpec(name=name, expr=SumSymbol(terms=[p.expr for p in parts], weights=list(weights)))


def shell_probe(name: str, carrier: SymbolSpec, model: PotentialModel, energy: Optional[float] = None) -> SymbolSpec:
    """carrier * (rho^2 + w^2 + V_inf - E)."""
    shell = ShellSymbol.from_potential(model, energy)
    return SymbolSpec(
        name=name, tag="shell_probe", expr=ProductSymbol(factors=[carrier.expr, shell])
    )
