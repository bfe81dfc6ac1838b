"""Admissible cutoff families f_h(r) and the smooth profiles they are built from."""

import math
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils.logging_config import get_logger

logger = get_logger("cutoffs")


def _psi(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    positive = x > 0
    out[positive] = np.exp(-1.0 / x[positive])
    return out


def smoothstep(x):
    """C-infinity transition: 0 for x <= 0, 1 for x >= 1."""
    left = _psi(x)
    right = _psi(1.0 - np.asarray(x, dtype=float))
    return left / (left + right)


def j_step(r):
    """j(r) = 0 for r <= 1/2 and j(r) = 1 for r >= 1."""
    return smoothstep(2.0 * np.asarray(r, dtype=float) - 1.0)


def angular_bump(t):
    """phi: equal to 1 on [-1/2, 1/2], supported in (-1, 1)."""
    return 1.0 - j_step(np.abs(np.asarray(t, dtype=float)))


def radial_bump(s):
    """f: smooth bump supported in (1, 2), peak value 1 at s = 3/2."""
    t = 2.0 * (np.asarray(s, dtype=float) - 1.5)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def c_of_h(residual_table: List[Tuple[float, float]], delta: float, h: float) -> float:
    """Running envelope c(h) = max over h' <= h of max(h'^delta, (|R_h'|/h')^delta)."""
    if not residual_table:
        raise ValueError("residual_table is empty")
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    covered = [(hh, rr) for hh, rr in residual_table if 0.0 < hh <= h * (1.0 + 1e-12)]
    if not covered:
        raise ValueError(f"residual_table has no entry at or below h={h}")
    return max(max(hh**delta, (rr / hh) ** delta) for hh, rr in covered)


class CutoffKind(str, Enum):
    J_STEP = "j-step"
    J_LOG = "J-log"
    CHI_LOG_WINDOW = "chi-log-window"
    R_WEIGHTED = "r-weighted"
    CUSTOM_SMOOTH = "custom-smooth"


# largest radius at which each kind is guaranteed to vanish
_INTRINSIC_ZERO = {
    CutoffKind.J_STEP: 0.5,
    CutoffKind.J_LOG: 1.0,
    CutoffKind.CHI_LOG_WINDOW: 1.0,
    CutoffKind.R_WEIGHTED: 0.5,
}


class CParams(BaseModel):
    """Data for the log-scale envelope c(h)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    delta: float = Field(..., gt=0.0, le=1.0, description="Envelope exponent")
    residual_table: List[Tuple[float, float]] = Field(
        ..., description="(h, |R_h|) pairs covering the h range of interest"
    )

    @field_validator("residual_table")
    def validate_table(cls, value):
        if not value:
            raise ValueError("residual_table must not be empty")
        return sorted(value)


class CutoffFamily(BaseModel):
    """An h-family of radial cutoffs vanishing for r <= epsilon."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(default="", description="Identifier used in pairing tables")
    kind: CutoffKind = Field(..., description="Family constructor")
    epsilon: float = Field(default=0.5, description="Vanishing threshold")
    width: float = Field(default=1.0, gt=0.0, description="Transition width (custom-smooth)")
    window_scale: float = Field(
        default=4.0, gt=0.5, description="Outer scale C of the r-weighted window"
    )
    c_params: Optional[CParams] = Field(None, description="Envelope data for log kinds")

    @model_validator(mode="before")
    @classmethod
    def default_name(cls, data):
        if isinstance(data, dict) and not data.get("name") and "kind" in data:
            kind = data["kind"]
            data = {**data, "name": getattr(kind, "value", kind)}
        return data

    @field_validator("epsilon")
    def validate_epsilon(cls, value: float) -> float:
        if value <= 0.0:
            raise ValueError("epsilon must be positive")
        return value

    @model_validator(mode="after")
    def validate_kind(self) -> "CutoffFamily":
        if self.kind in (CutoffKind.J_LOG, CutoffKind.CHI_LOG_WINDOW) and self.c_params is None:
            raise ValueError(f"{self.kind.value} cutoffs require c_params")
        intrinsic = _INTRINSIC_ZERO.get(self.kind)
        if intrinsic is not None and self.epsilon > intrinsic:
            raise ValueError(
                f"{self.kind.value} only vanishes for r <= {intrinsic}, epsilon={self.epsilon}"
            )
        return self

    def c(self, h: float) -> float:
        if self.c_params is None:
            raise ValueError("cutoff has no c_params")
        return c_of_h(self.c_params.residual_table, self.c_params.delta, h)

    def log_scale(self, h: float, r):
        """log r / log(1/c(h)); -inf at r = 0."""
        r = np.asarray(r, dtype=float)
        c = self.c(h)
        if not 0.0 < c < 1.0:
            raise ValueError(f"c(h)={c} must lie in (0, 1) for log-scale cutoffs")
        with np.errstate(divide="ignore"):
            return np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), -np.inf) / math.log(1.0 / c)

    def evaluate(self, h: float, r):
        """f_h(r), vectorized over r."""
        r = np.asarray(r, dtype=float)
        if self.kind is CutoffKind.J_STEP:
            value = j_step(r)
        elif self.kind is CutoffKind.CUSTOM_SMOOTH:
            value = smoothstep((r - self.epsilon) / self.width)
        elif self.kind is CutoffKind.R_WEIGHTED:
            value = r * j_step(r) * (1.0 - j_step(r / (2.0 * self.window_scale)))
        else:
            s = np.nan_to_num(self.log_scale(h, r), neginf=-1.0)
            if self.kind is CutoffKind.J_LOG:
                value = j_step(s)
            else:
                value = j_step(s / 2.0) * (1.0 - j_step(s / 4.0))
        value = np.where(r <= self.epsilon, 0.0, value)
        if value.ndim == 0:
            return float(value)
        return value

    def evaluate_tilde(self, h: float, r):
        """J~_h(r) = j(4 log r / log(1/c(h)))."""
        s = np.nan_to_num(self.log_scale(h, r), neginf=-1.0)
        value = j_step(4.0 * s)
        return float(value) if np.ndim(value) == 0 else value


def make_cutoff(kind, **params) -> CutoffFamily:
    """Build a cutoff family; raises ValueError on inconsistent parameters."""
    kind = CutoffKind(kind)
    if "c_params" in params and isinstance(params["c_params"], dict):
        params["c_params"] = CParams(**params["c_params"])
    if kind is CutoffKind.J_STEP:
        params.setdefault("epsilon", 0.5)
    elif kind in (CutoffKind.J_LOG, CutoffKind.CHI_LOG_WINDOW):
        params.setdefault("epsilon", 1.0)
    elif kind is CutoffKind.R_WEIGHTED:
        params.setdefault("epsilon", 0.5)
    family = CutoffFamily(kind=kind, **params)
    logger.debug(f"Built cutoff {family.name} (epsilon={family.epsilon})")
    return family


def derivative_bounds(
    family: CutoffFamily,
    h_list: List[float],
    r_max: float = 10.0,
    samples: int = 20001,
    max_order: int = 4,
) -> np.ndarray:
    """Finite-difference sup |d^m f_h / dr^m| for m = 1..max_order, one row per h."""
    r = np.linspace(0.0, r_max, samples)
    dr = r[1] - r[0]
    rows = []
    for h in h_list:
        values = np.asarray(family.evaluate(h, r))
        row = []
        current = values
        for _ in range(max_order):
            current = np.gradient(current, dr)
            row.append(float(np.max(np.abs(current))))
        rows.append(row)
    return np.array(rows)
