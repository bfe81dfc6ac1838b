"""Pairing sweeps over h and the localization verdicts drawn from their limits."""

import math
import time
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from numerics.cutoffs import CParams, CutoffFamily, CutoffKind, make_cutoff
from numerics.errors import LabError
from numerics.potential import PotentialModel, find_critical_points
from numerics.propagation import polar_to_cartesian
from numerics.quantization import CartesianField, WignerGrid, dilate, weyl_pairing, wigner_transform
from numerics.quasimodes import PolarField, QuasimodeSpec, build_quasimode, residual_scaling
from numerics.symbols import (
    PlateauSymbol,
    SymbolSpec,
    bump,
    constant,
    shell_probe,
)
from utils.logging_config import get_logger, log_performance

logger = get_logger("measure")

SYMBOL_TAGS = ("on_support", "off_support", "shell_probe", "identity", "mass", "probe")


class SymbolDictionary(BaseModel):
    """Named probes with classification tags and declared pointwise orderings."""

    symbols: List[SymbolSpec]
    nested_pairs: List[Tuple[str, str]] = Field(
        default_factory=list, description="(a, b) with a <= b pointwise"
    )

    @model_validator(mode="after")
    def validate_names(self) -> "SymbolDictionary":
        names = [s.name for s in self.symbols]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate symbol names: {duplicates}")
        unknown = [s.tag for s in self.symbols if s.tag not in SYMBOL_TAGS]
        if unknown:
            raise ValueError(f"unknown symbol tags: {unknown}")
        for a, b in self.nested_pairs:
            if a not in names or b not in names:
                raise ValueError(f"nested pair ({a}, {b}) names an unknown symbol")
        return self

    def by_tag(self, tag: str) -> List[SymbolSpec]:
        return [s for s in self.symbols if s.tag == tag]

    def __getitem__(self, name: str) -> SymbolSpec:
        for symbol in self.symbols:
            if symbol.name == name:
                return symbol
        raise KeyError(name)

    def __len__(self) -> int:
        return len(self.symbols)


def _plateau(name: str, tag: str, center, inner, outer) -> SymbolSpec:
    return SymbolSpec(name=name, tag=tag, expr=PlateauSymbol(center=center, inner=inner, outer=outer))


def default_dictionary(
    model: PotentialModel,
    theta0: float,
    energy: float,
    identity_radii: Tuple[float, ...] = (0.5, 1.0, 2.0),
) -> SymbolDictionary:
    """Probes around (0, theta0, 0), off the concentration set, on the shell and an approximate identity."""
    center = (0.0, theta0, 0.0)
    symbols: List[SymbolSpec] = [
        bump("near_critical", center, 0.5, tag="on_support"),
        _plateau("mass_near_critical", "mass", center, 0.5, 1.0),
        bump("radial_offset", (1.0, theta0, 0.0), 0.5, tag="off_support"),
        bump("off_shell", (0.0, theta0, 1.0), 0.5, tag="off_support"),
        bump("noncritical_direction", (0.0, theta0 + math.pi / 2.0, 0.0), 0.3, tag="off_support"),
    ]
    for point in find_critical_points(model):
        if abs(point.value - energy) > 1e-8:
            symbols.append(
                bump(f"critical_{point.theta0:.3f}", (0.0, point.theta0, 0.0), 0.3, tag="off_support")
            )
    carrier = _plateau("shell_carrier", "probe", center, 0.5, 1.0)
    symbols.append(shell_probe("shell_residual", carrier, model, energy))

    angular_inner = [min(0.5 * (i + 1), 1.5) for i in range(len(identity_radii))]
    angular_outer = angular_inner[1:] + [3.0]
    names = []
    for i, radius in enumerate(identity_radii):
        name = f"identity_{i}"
        names.append(name)
        symbols.append(
            _plateau(
                name,
                "identity",
                center,
                (radius, angular_inner[i], radius),
                (2.0 * radius, angular_outer[i], 2.0 * radius),
            )
        )
    symbols.append(constant("zero", 0.0, tag="probe"))
    nested = [("near_critical", "mass_near_critical")]
    nested += list(zip(names, names[1:]))
    return SymbolDictionary(symbols=symbols, nested_pairs=nested)


class PairingRow(BaseModel):
    h: float
    symbol: str
    cutoff: str
    value: float = 0.0
    error: float = 0.0
    valid: bool = True
    message: str = ""


class PairingTable(BaseModel):
    """Pairings <u_h, Op_{f_h}(a) u_h>; one row per (h, symbol, cutoff)."""

    rows: List[PairingRow] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_unique(self) -> "PairingTable":
        keys = [(r.h, r.symbol, r.cutoff) for r in self.rows]
        if len(keys) != len(set(keys)):
            raise ValueError("pairing table has duplicate (h, symbol, cutoff) rows")
        return self

    def add(self, row: PairingRow) -> None:
        if any((r.h, r.symbol, r.cutoff) == (row.h, row.symbol, row.cutoff) for r in self.rows):
            raise ValueError(f"duplicate pairing row for h={row.h}, {row.symbol}, {row.cutoff}")
        self.rows.append(row)

    def series(self, symbol: str, cutoff: Optional[str] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Valid (h, value, error) for one symbol, h decreasing."""
        rows = [
            r for r in self.rows if r.symbol == symbol and r.valid and (cutoff is None or r.cutoff == cutoff)
        ]
        rows.sort(key=lambda r: -r.h)
        return (
            np.array([r.h for r in rows]),
            np.array([r.value for r in rows]),
            np.array([r.error for r in rows]),
        )

    def symbols(self) -> List[str]:
        return list(dict.fromkeys(r.symbol for r in self.rows))

    def invalid_count(self) -> int:
        return sum(not r.valid for r in self.rows)


PAIRING_COLUMNS = ["h", "symbol", "cutoff", "value", "error", "valid", "message"]


class SweepGrid(BaseModel):
    """Cartesian grid used per h: half width box_factor / scale, N points per side."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    box_factor: float = Field(default=2.4, gt=2.0, description="Dilated half width for case 1")
    N: int = Field(default=128, ge=16)
    stride: int = Field(default=2, ge=1)


def check_sweep_inputs(h_list: List[float], cutoff: CutoffFamily) -> None:
    if len(h_list) < 4:
        raise ValueError("pairing sweeps need at least 4 values of h")
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be strictly decreasing")
    ratios = [b / a for a, b in zip(h_list, h_list[1:])]
    if max(ratios) - min(ratios) > 0.05 * max(ratios):
        logger.warning(f"h_list is not geometric (ratios {min(ratios):.3f}..{max(ratios):.3f})")
    if cutoff.kind not in (CutoffKind.J_STEP, CutoffKind.J_LOG):
        raise ValueError(f"pairing sweeps use j-step or J-log cutoffs, got {cutoff.kind.value}")


def sweep_state(spec: QuasimodeSpec, h: float, grid: SweepGrid) -> Tuple[CartesianField, WignerGrid]:
    """Build, transport and dilate u_h, then take its Wigner transform."""
    u = build_quasimode(spec, h)
    L = grid.box_factor / spec.radial_scale(h)
    transported = polar_to_cartesian(u, L, grid.N)
    v = dilate(transported.field, "forward")
    v.require_resolved(what=f"dilated state at h={h}")
    return v, wigner_transform(v, grid.stride)


class WignerSlice(BaseModel):
    """W(x, .) on the momentum grid at the spatial sample carrying the Wigner peak."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    h: float
    x: Tuple[float, float]
    xi_axis: np.ndarray
    values: np.ndarray

    def header(self) -> Dict[str, float]:
        return {
            "h": self.h,
            "x1": self.x[0],
            "x2": self.x[1],
            "xi_min": float(self.xi_axis[0]),
            "dxi": float(self.xi_axis[1] - self.xi_axis[0]),
        }


def wigner_slice(spec: QuasimodeSpec, h: float, grid: Optional[SweepGrid] = None) -> WignerSlice:
    _, wigner = sweep_state(spec, h, grid or SweepGrid())
    x, _ = wigner.peak()
    point = (float(x[0]), float(x[1]))
    return WignerSlice(h=h, x=point, xi_axis=wigner.xi_axis, values=wigner.slice_at(point))


def pairing_cell(
    spec: QuasimodeSpec,
    dictionary: SymbolDictionary,
    h: float,
    cutoff: CutoffFamily,
    grid: Optional[SweepGrid] = None,
) -> List[PairingRow]:
    """One sweep cell: build, transport and dilate u_h once, then pair it with every symbol.

    A LabError inside the cell marks all of its rows invalid instead of propagating.
    """
    grid = grid or SweepGrid()
    try:
        v, wigner = sweep_state(spec, h, grid)
    except LabError as error:
        logger.warning(f"h={h}: sweep cell failed: {error}")
        return [
            PairingRow(h=h, symbol=s.name, cutoff=cutoff.name, valid=False, message=str(error))
            for s in dictionary.symbols
        ]

    rows = []
    for symbol in dictionary.symbols:
        pairing = weyl_pairing(v, symbol, cutoff, wigner=wigner)
        rows.append(
            PairingRow(h=h, symbol=symbol.name, cutoff=cutoff.name, value=pairing.value, error=pairing.error_estimate)
        )
    logger.info(f"h={h}: paired {len(dictionary)} symbols (Wigner mass {wigner.mass():.6f})")
    return rows


def pairing_sweep(
    spec: QuasimodeSpec,
    dictionary: SymbolDictionary,
    h_list: List[float],
    cutoff: CutoffFamily,
    grid: Optional[SweepGrid] = None,
) -> PairingTable:
    """Pairings of every dictionary symbol over a decreasing h sweep."""
    check_sweep_inputs(h_list, cutoff)
    table = PairingTable()
    start = time.time()
    for h in h_list:
        for row in pairing_cell(spec, dictionary, h, cutoff, grid):
            table.add(row)
    log_performance("pairing_sweep", time.time() - start, cells=len(h_list) * len(dictionary))
    return table


class Extrapolation(BaseModel):
    """v(h) ~ limit + c h^order fitted over the sweep."""

    limit: float
    error_bar: float = Field(..., ge=0.0)
    order: Optional[float] = None
    points: int

    @property
    def converged(self) -> bool:
        return self.error_bar <= max(abs(self.limit), 1e-12)


def extrapolate(h_values, values, orders: Optional[np.ndarray] = None) -> Extrapolation:
    """Least-squares fit of limit + c h^p over p in [1/2, 2]; error bar = |last - limit| + rms residual."""
    h = np.asarray(h_values, dtype=float)
    v = np.asarray(values, dtype=float)
    if h.size == 0:
        raise ValueError("nothing to extrapolate")
    if h.size < 3:
        spread = float(v.max() - v.min())
        return Extrapolation(limit=float(v[-1]), error_bar=spread, points=int(h.size))

    orders = np.linspace(0.5, 2.0, 31) if orders is None else orders
    best = None
    for p in orders:
        design = np.column_stack([np.ones_like(h), h**p])
        coeffs, *_ = np.linalg.lstsq(design, v, rcond=None)
        rms = math.sqrt(float(np.mean((design @ coeffs - v) ** 2)))
        if best is None or rms < best[0]:
            best = (rms, float(p), coeffs)
    rms, p, coeffs = best
    limit = float(coeffs[0])
    last = float(v[np.argmin(h)])
    return Extrapolation(limit=limit, error_bar=abs(last - limit) + rms, order=p, points=int(h.size))


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


class VerdictRecord(BaseModel):
    name: str
    verdict: Verdict
    detail: str = ""


class SymbolLimit(BaseModel):
    symbol: str
    tag: str
    limit: float
    error_bar: float
    order: Optional[float] = None
    points: int


class LocalizationReport(BaseModel):
    """Extrapolated limits and the verdicts derived from them."""

    tol: float
    energy: float
    limits: List[SymbolLimit]
    verdicts: List[VerdictRecord]
    total_mass: Optional[float] = None

    @property
    def overall(self) -> Verdict:
        states = {v.verdict for v in self.verdicts}
        if Verdict.FAIL in states:
            return Verdict.FAIL
        if Verdict.INCONCLUSIVE in states or not states:
            return Verdict.INCONCLUSIVE
        return Verdict.PASS

    def limit(self, symbol: str) -> SymbolLimit:
        for entry in self.limits:
            if entry.symbol == symbol:
                return entry
        raise KeyError(symbol)


def _judge(entry: SymbolLimit, passes: bool, tol: float) -> Verdict:
    if entry.error_bar > max(abs(entry.limit), tol):
        return Verdict.INCONCLUSIVE
    return Verdict.PASS if passes else Verdict.FAIL


def _combine(name: str, records: List[Tuple[str, Verdict]]) -> VerdictRecord:
    if not records:
        return VerdictRecord(name=name, verdict=Verdict.INCONCLUSIVE, detail="no symbols")
    verdicts = [v for _, v in records]
    if Verdict.FAIL in verdicts:
        verdict = Verdict.FAIL
    elif Verdict.INCONCLUSIVE in verdicts:
        verdict = Verdict.INCONCLUSIVE
    else:
        verdict = Verdict.PASS
    detail = ", ".join(f"{symbol}={v.value}" for symbol, v in records)
    return VerdictRecord(name=name, verdict=verdict, detail=detail)


def localization_report(
    table: PairingTable,
    dictionary: SymbolDictionary,
    model: PotentialModel,
    energy: float,
    tol: float = 0.1,
) -> LocalizationReport:
    """Off-support, shell, mass, total mass and positivity verdicts from extrapolated limits."""
    limits: Dict[str, SymbolLimit] = {}
    for symbol in dictionary.symbols:
        h, values, _ = table.series(symbol.name)
        if h.size == 0:
            continue
        fit = extrapolate(h, values)
        limits[symbol.name] = SymbolLimit(
            symbol=symbol.name,
            tag=symbol.tag,
            limit=fit.limit,
            error_bar=fit.error_bar,
            order=fit.order,
            points=fit.points,
        )

    def tagged(tag: str) -> List[SymbolLimit]:
        return [limits[s.name] for s in dictionary.by_tag(tag) if s.name in limits]

    verdicts = [
        _combine(
            "off_support",
            [(e.symbol, _judge(e, abs(e.limit) <= tol, tol)) for e in tagged("off_support")],
        ),
        _combine(
            "energy_shell",
            [(e.symbol, _judge(e, abs(e.limit) <= tol, tol)) for e in tagged("shell_probe")],
        ),
        _combine(
            "mass_near_critical",
            [(e.symbol, _judge(e, e.limit >= 1.0 - tol, tol)) for e in tagged("mass")],
        ),
    ]

    identity = tagged("identity")
    total_mass = max((e.limit for e in identity), default=None)
    verdicts.append(
        _combine(
            "total_mass",
            [(e.symbol, _judge(e, e.limit <= 1.0 + tol, tol)) for e in identity],
        )
    )

    monotone = []
    for a, b in dictionary.nested_pairs:
        if a not in limits or b not in limits:
            continue
        slack = 2.0 * (limits[a].error_bar + limits[b].error_bar)
        ok = limits[a].limit <= limits[b].limit + slack
        monotone.append((f"{a}<={b}", Verdict.PASS if ok else Verdict.FAIL))
    verdicts.append(_combine("positivity", monotone))

    report = LocalizationReport(
        tol=tol,
        energy=energy,
        limits=list(limits.values()),
        verdicts=verdicts,
        total_mass=total_mass,
    )
    logger.info(
        "Localization verdicts: " + ", ".join(f"{v.name}={v.verdict.value}" for v in verdicts)
    )
    return report


class TailMassRow(BaseModel):
    h: float
    c: float
    j_norm: float
    j_tilde_norm: float


def tail_mass_norms(u: PolarField, cutoff: CutoffFamily) -> Tuple[float, float]:
    """(|J_h(h r) u|, |J~_h(h r) u|) on the polar grid."""
    if not np.any(u.samples):
        return 0.0, 0.0
    hr = u.h * u.grid.r
    weights = u.weights()
    density = np.abs(u.samples) ** 2 * weights
    j = np.asarray(cutoff.evaluate(u.h, hr))[:, None]
    j_tilde = np.asarray(cutoff.evaluate_tilde(u.h, hr))[:, None]
    return math.sqrt(float(np.sum(j**2 * density))), math.sqrt(float(np.sum(j_tilde**2 * density)))


def tail_mass_diagnostic(
    spec: QuasimodeSpec,
    h_list: List[float],
    delta: float,
    residual_table: Optional[List[Tuple[float, float]]] = None,
    model: Optional[PotentialModel] = None,
) -> List[TailMassRow]:
    """|J_h u_h| and |J~_h u_h| per h, with c(h) from the family's measured residuals."""
    if residual_table is None:
        if model is None:
            raise ValueError("either residual_table or model is required")
        residual_table = residual_scaling(spec, model, h_list).as_pairs()
    cutoff = make_cutoff(CutoffKind.J_LOG, c_params=CParams(delta=delta, residual_table=residual_table))
    rows = []
    for h in h_list:
        u = build_quasimode(spec, h)
        j_norm, j_tilde_norm = tail_mass_norms(u, cutoff)
        rows.append(TailMassRow(h=h, c=cutoff.c(h), j_norm=j_norm, j_tilde_norm=j_tilde_norm))
        logger.debug(f"h={h}: |J u|={j_norm:.4e}, |J~ u|={j_tilde_norm:.4e}")
    return rows
