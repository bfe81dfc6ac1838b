"""Polar-symbol Weyl quantization on Cartesian grids.

Op_{f_h}(a) acts as U_h^{-1} a~^w(X, h D_X) U_h with a~(X, Xi) = f_h(|X|) a(rho, theta, w),
rho = X/|X| . Xi and w the tangential component of Xi. Pairings are computed as phase
space integrals of a~ against the Wigner function of the dilated state.
"""

import math
import time
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import fft as sfft
from scipy.optimize import nnls

from numerics.cutoffs import CutoffFamily
from numerics.errors import ResolutionError, SupportEscapeError
from numerics.symbols import SymbolSpec, eval_symbol, wrap_angle
from utils.logging_config import get_logger, log_performance

logger = get_logger("quantization")

FRAME_FRACTION = 0.05
ESCAPE_TOL = 1e-8
RESOLUTION_TAIL = 1e-6
DENSE_MAX_N = 64


class CartesianField(BaseModel):
    """Complex samples on the periodic square [-L, L)^2 with N points per side."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    L: float = Field(..., gt=0.0, description="Half width of the box")
    N: int = Field(..., gt=1, description="Points per side")
    h: float = Field(..., gt=0.0, description="Semiclassical parameter")
    samples: np.ndarray
    dilated: bool = Field(default=False, description="Lives on the scale-1 side")

    @classmethod
    def zeros(cls, L: float, N: int, h: float, dilated: bool = False) -> "CartesianField":
        return cls(L=L, N=N, h=h, samples=np.zeros((N, N), dtype=complex), dilated=dilated)

    @classmethod
    def from_function(cls, L: float, N: int, h: float, func, dilated: bool = False) -> "CartesianField":
        X, Y = grid_coordinates(L, N)
        return cls(L=L, N=N, h=h, samples=np.asarray(func(X, Y), dtype=complex), dilated=dilated)

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.N)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return grid_coordinates(self.L, self.N)

    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.samples) ** 2)) * self.dx**2)

    def inner(self, other: "CartesianField") -> complex:
        """<self, other>, antilinear in self."""
        return complex(np.vdot(self.samples, other.samples) * self.dx**2)

    def with_samples(self, samples: np.ndarray) -> "CartesianField":
        return self.model_copy(update={"samples": samples})

    def normalized(self) -> "CartesianField":
        norm = self.norm()
        if norm == 0.0:
            return self
        return self.with_samples(self.samples / norm)

    def frame_mass(self, fraction: float = FRAME_FRACTION) -> float:
        """Mass in the outer `fraction` of the box on each side."""
        X, Y = self.mesh()
        inner = (1.0 - fraction) * self.L
        frame = (np.abs(X) > inner) | (np.abs(Y) > inner)
        return float(np.sum(np.abs(self.samples[frame]) ** 2)) * self.dx**2

    def support_box(self, threshold: float = 1e-14) -> Optional[Tuple[slice, slice]]:
        """Index bounding box of samples with |u|^2 above threshold * max."""
        density = np.abs(self.samples) ** 2
        peak = density.max()
        if peak == 0.0:
            return None
        rows, cols = np.nonzero(density > threshold * peak)
        return slice(rows.min(), rows.max() + 1), slice(cols.min(), cols.max() + 1)

    def spectral_tail(self, fraction: float = 0.5) -> float:
        """Share of |u^|^2 beyond `fraction` of the Nyquist wavenumber in either axis."""
        spectrum = np.abs(sfft.fft2(self.samples)) ** 2
        total = spectrum.sum()
        if total == 0.0:
            return 0.0
        k = np.abs(sfft.fftfreq(self.N)) * 2.0
        outer = (k[:, None] > fraction) | (k[None, :] > fraction)
        return float(spectrum[outer].sum() / total)

    def require_resolved(self, tol: float = RESOLUTION_TAIL, what: str = "state") -> None:
        """Raise ResolutionError unless the spectrum fits in the inner half of the Nyquist band."""
        tail = self.spectral_tail(0.5)
        if tail > tol:
            raise ResolutionError(
                f"{what} not resolved with margin 2 (spectral tail {tail:.2e} > {tol:.0e})",
                hint=f"N={self.N}, h={self.h}",
            )


def grid_coordinates(L: float, N: int) -> Tuple[np.ndarray, np.ndarray]:
    """Meshgrid (X, Y) with indexing 'ij' on [-L, L)^2."""
    axis = -L + (2.0 * L / N) * np.arange(N)
    return np.meshgrid(axis, axis, indexing="ij")


def dilate(u: CartesianField, direction: str = "forward", escape_tol: float = ESCAPE_TOL) -> CartesianField:
    """Unitary dilation v(X) = h^{-1} u(X/h) (forward) or its inverse, as an exact grid rescale."""
    if direction not in ("forward", "inverse"):
        raise ValueError("direction must be 'forward' or 'inverse'")
    escaped = u.frame_mass()
    if escaped > escape_tol:
        raise SupportEscapeError(
            f"{escaped:.3e} of the mass lies in the outer frame of the grid", escaped
        )
    if direction == "forward":
        if u.dilated:
            return u
        return u.model_copy(
            update={"L": u.L * u.h, "samples": u.samples / u.h, "dilated": True}
        )
    if not u.dilated:
        return u
    return u.model_copy(update={"L": u.L / u.h, "samples": u.samples * u.h, "dilated": False})


def polar_symbol_eval(a: SymbolSpec, f: CutoffFamily, h: float, x, xi):
    """f_h(|x|) a(rho, theta, w) at points x = (x1, x2), xi = (xi1, xi2); broadcasts."""
    x1, x2 = np.asarray(x[0], dtype=float), np.asarray(x[1], dtype=float)
    xi1, xi2 = np.asarray(xi[0], dtype=float), np.asarray(xi[1], dtype=float)
    r = np.hypot(x1, x2)
    theta = np.mod(np.arctan2(x2, x1), 2.0 * math.pi)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    rho = cos_t * xi1 + sin_t * xi2
    w = -sin_t * xi1 + cos_t * xi2
    radial = np.asarray(f.evaluate(h, r))
    value = np.where(r > f.epsilon, radial * eval_symbol(a, rho, theta, w), 0.0)
    if np.ndim(value) == 0:
        return float(value)
    return value


def spatial_mask(a: SymbolSpec, f: CutoffFamily, h: float, x1, x2) -> np.ndarray:
    """Points X where a~(X, .) can be nonzero."""
    r = np.hypot(x1, x2)
    mask = (r > f.epsilon) & (np.asarray(f.evaluate(h, r)) != 0.0)
    box = a.support_box
    if box is None:
        return np.zeros_like(mask)
    low, high = box[1]
    if math.isfinite(low) and math.isfinite(high) and high - low < 2.0 * math.pi:
        theta = np.arctan2(x2, x1)
        mid = 0.5 * (low + high)
        mask &= np.abs(wrap_angle(theta - mid)) <= 0.5 * (high - low)
    return mask


class WignerGrid(BaseModel):
    """W(X, Xi) at strided grid points of a dilated state, momenta on a lag-window FFT grid."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    h: float
    dx: float
    stride: int
    points: np.ndarray = Field(..., description="(P, 2) integer grid indices")
    x: np.ndarray = Field(..., description="(P, 2) coordinates")
    xi_axis: np.ndarray = Field(..., description="Momentum axis, ascending")
    values: np.ndarray = Field(..., description="(P, K, K) real Wigner values")
    max_imag: float = 0.0

    @property
    def dxi(self) -> float:
        return float(self.xi_axis[1] - self.xi_axis[0])

    @property
    def cell(self) -> float:
        """Phase space volume element of one sample."""
        return (self.stride * self.dx) ** 2 * self.dxi**2

    def mass(self) -> float:
        return float(self.values.sum()) * self.cell

    def sublattice(self) -> np.ndarray:
        """Mask of points on the doubled-stride sublattice."""
        return np.all(self.points % (2 * self.stride) == 0, axis=1)

    def peak(self) -> Tuple[np.ndarray, np.ndarray]:
        """(x, xi) of the largest Wigner value."""
        p, k1, k2 = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return self.x[p], np.array([self.xi_axis[k1], self.xi_axis[k2]])

    def slice_at(self, x: Tuple[float, float]) -> np.ndarray:
        """Momentum slice W(x_nearest, ., .)."""
        distance = np.sum((self.x - np.asarray(x)) ** 2, axis=1)
        return self.values[int(np.argmin(distance))]


def _lag_window(extent: int, N: int) -> int:
    half = int(math.ceil(0.625 * extent)) + 2
    return max(4, min(sfft.next_fast_len(2 * half) // 2, N // 2))


def wigner_transform(u: CartesianField, stride: int = 1, batch: int = 256) -> WignerGrid:
    """Wigner function W = (pi h)^-2 sum_s e^{-2i s.Xi/h} v(X+s) conj(v(X-s)) ds of the dilated state."""
    if stride < 1 or u.N % stride:
        raise ValueError(f"stride {stride} must divide N={u.N}")
    v = dilate(u, "forward").samples if not u.dilated else u.samples
    N = u.N
    dx = 2.0 * u.L * (u.h if not u.dilated else 1.0) / N
    box = u.support_box()
    if box is None:
        raise ValueError("cannot transform a zero field")

    extent = max(box[0].stop - box[0].start, box[1].stop - box[1].start)
    M = _lag_window(extent, N)
    lags = np.arange(-M, M)
    padded = np.pad(v, M)

    first = [int(math.ceil(s.start / stride)) * stride for s in box]
    rows = np.arange(first[0], box[0].stop, stride)
    cols = np.arange(first[1], box[1].stop, stride)
    points = np.array(np.meshgrid(rows, cols, indexing="ij")).reshape(2, -1).T

    start = time.time()
    values = np.empty((len(points), 2 * M, 2 * M))
    max_imag = 0.0
    scale = (dx / (math.pi * u.h)) ** 2
    for lo in range(0, len(points), batch):
        chunk = points[lo : lo + batch]
        i = chunk[:, 0][:, None, None] + M
        j = chunk[:, 1][:, None, None] + M
        m1 = lags[None, :, None]
        m2 = lags[None, None, :]
        corr = padded[i + m1, j + m2] * np.conj(padded[i - m1, j - m2])
        corr[:, 0, :] = 0.0
        corr[:, :, 0] = 0.0
        spectrum = sfft.fftshift(
            sfft.fft2(sfft.ifftshift(corr, axes=(1, 2)), axes=(1, 2)), axes=(1, 2)
        )
        max_imag = max(max_imag, float(np.max(np.abs(spectrum.imag))) * scale)
        values[lo : lo + batch] = spectrum.real * scale
    log_performance("wigner_transform", time.time() - start, points=len(points), window=2 * M)

    xi_axis = math.pi * u.h * lags / (2.0 * M * dx)
    coords = -u.L * (u.h if not u.dilated else 1.0) + dx * points
    return WignerGrid(
        h=u.h,
        dx=dx,
        stride=stride,
        points=points,
        x=coords,
        xi_axis=xi_axis,
        values=values,
        max_imag=max_imag,
    )


class PairingValue(BaseModel):
    """<u, Op_{f_h}(a) u> with a quadrature error estimate."""

    value: float
    error_estimate: float
    imag: float = 0.0


def _symbol_on_wigner(a: SymbolSpec, f: CutoffFamily, W: WignerGrid) -> Tuple[np.ndarray, np.ndarray]:
    active = spatial_mask(a, f, W.h, W.x[:, 0], W.x[:, 1])
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return idx, np.zeros((0,) + W.values.shape[1:])
    xi1 = W.xi_axis[None, :, None]
    xi2 = W.xi_axis[None, None, :]
    x1 = W.x[idx, 0][:, None, None]
    x2 = W.x[idx, 1][:, None, None]
    return idx, polar_symbol_eval(a, f, W.h, (x1, x2), (xi1, xi2))


def weyl_pairing(
    u: CartesianField,
    a: SymbolSpec,
    f: CutoffFamily,
    stride: int = 2,
    wigner: Optional[WignerGrid] = None,
) -> PairingValue:
    """Wigner quadrature of <u, Op_{f_h}(a) u>; error from stride-doubling comparison."""
    if wigner is None:
        if not u.dilated:
            u = dilate(u, "forward")
        u.require_resolved()
        wigner = wigner_transform(u, stride)

    idx, symbol = _symbol_on_wigner(a, f, wigner)
    if idx.size == 0:
        return PairingValue(value=0.0, error_estimate=0.0)
    integrand = np.sum(symbol * wigner.values[idx], axis=(1, 2))
    value = float(integrand.sum()) * wigner.cell
    coarse_mask = wigner.sublattice()[idx]
    coarse = float(integrand[coarse_mask].sum()) * wigner.cell * 4.0
    return PairingValue(value=value, error_estimate=abs(value - coarse))


class DenseWeylOperator(BaseModel):
    """Exact discrete Weyl matrix on an N x N dilated grid (oracle scale only)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    L: float
    N: int
    h: float
    matrix: np.ndarray
    sup_symbol: float

    def apply(self, samples: np.ndarray) -> np.ndarray:
        return (self.matrix @ samples.reshape(-1)).reshape(self.N, self.N)

    def expectation(self, samples: np.ndarray) -> complex:
        dx = 2.0 * self.L / self.N
        flat = samples.reshape(-1)
        return complex(np.vdot(flat, self.matrix @ flat) * dx * dx)


def dense_weyl_operator(L: float, N: int, h: float, a: SymbolSpec, f: CutoffFamily) -> DenseWeylOperator:
    """Assemble K[j, l] = (2N)^-2 sum_k e^{2 pi i (j-l).k / 2N} a~((X_j + X_l)/2, Xi_k) on [-L, L)^2."""
    if N > DENSE_MAX_N:
        raise ValueError(f"dense Weyl assembly refuses N={N} > {DENSE_MAX_N}")
    dx = 2.0 * L / N
    n_xi = 2 * N
    xi = sfft.fftfreq(n_xi, d=1.0) * n_xi * math.pi * h / (N * dx)
    xi1 = xi[None, :, None]
    xi2 = xi[None, None, :]
    midpoints = -L + 0.5 * dx * np.arange(2 * N - 1)

    start = time.time()
    K = np.zeros((N, N, N, N), dtype=complex)
    sup_symbol = 0.0
    j2, l2 = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    for s1 in range(2 * N - 1):
        m1 = np.full(2 * N - 1, midpoints[s1])
        active = spatial_mask(a, f, h, m1, midpoints)
        if not active.any():
            continue
        symbol = np.zeros((2 * N - 1, n_xi, n_xi))
        s2 = np.flatnonzero(active)
        symbol[s2] = polar_symbol_eval(
            a, f, h, (m1[s2][:, None, None], midpoints[s2][:, None, None]), (xi1, xi2)
        )
        sup_symbol = max(sup_symbol, float(np.max(np.abs(symbol))))
        kernel = sfft.ifft2(symbol, axes=(1, 2))
        j1 = np.arange(max(0, s1 - N + 1), min(N - 1, s1) + 1)
        l1 = s1 - j1
        d1 = (j1 - l1) % n_xi
        block = kernel[(j2 + l2)[None], d1[:, None, None], ((j2 - l2) % n_xi)[None]]
        K[j1[:, None, None], j2[None], l1[:, None, None], l2[None]] = block
    log_performance("dense_weyl_operator", time.time() - start, N=N, h=h)
    return DenseWeylOperator(L=L, N=N, h=h, matrix=K.reshape(N * N, N * N), sup_symbol=sup_symbol)


def dense_weyl_apply(u: CartesianField, a: SymbolSpec, f: CutoffFamily) -> CartesianField:
    """Op_{f_h}(a) u by direct quadrature of the Weyl integral; output on u's scale."""
    v = dilate(u, "forward") if not u.dilated else u
    operator = dense_weyl_operator(v.L, v.N, v.h, a, f)
    out = v.with_samples(operator.apply(v.samples))
    return out if u.dilated else dilate(out, "inverse", escape_tol=math.inf)


def random_trial_states(rng: np.random.Generator, N: int, count: int, band: float = 0.6) -> np.ndarray:
    """Complex white noise filtered to the inner `band` of the spectrum, unit l2 norm per state."""
    noise = rng.standard_normal((count, N, N)) + 1j * rng.standard_normal((count, N, N))
    k = np.abs(sfft.fftfreq(N)) * 2.0
    keep = (k[:, None] <= band) & (k[None, :] <= band)
    states = sfft.ifft2(sfft.fft2(noise, axes=(1, 2)) * keep, axes=(1, 2))
    norms = np.sqrt(np.sum(np.abs(states) ** 2, axis=(1, 2)))
    return states / norms[:, None, None]


def _power_norm(matrix: np.ndarray, start: np.ndarray, iterations: int = 60) -> float:
    vector = start.reshape(-1)
    vector = vector / np.linalg.norm(vector)
    estimate = 0.0
    for _ in range(iterations):
        image = matrix.conj().T @ (matrix @ vector)
        norm = np.linalg.norm(image)
        if norm == 0.0:
            return 0.0
        estimate = math.sqrt(norm)
        vector = image / norm
    return estimate


class NormBoundReport(BaseModel):
    """Operator norm estimates against C sup|a| + c h^(1/2)."""

    h_list: List[float]
    norm_estimates: List[float]
    sup_symbol: List[float]
    C: float
    c: float
    excess: float = Field(0.0, description="Largest relative overshoot of an estimate above the fitted bound")
    C_limit: Optional[float] = None
    bound_holds: bool


class GardingReport(BaseModel):
    """Lower bounds of <u, Op u> for a nonnegative symbol against -C h."""

    h_list: List[float]
    min_pairings: List[float]
    C: float
    slope: Optional[float] = None
    violations: List[float] = Field(default_factory=list)


def calderon_vaillancourt_check(
    a: SymbolSpec,
    f: CutoffFamily,
    h_list: List[float],
    trials: int,
    rng: np.random.Generator,
    L: float = 2.4,
    N: int = 32,
    C_limit: Optional[float] = None,
    rtol: float = 0.1,
) -> NormBoundReport:
    """Estimate ||Op_{f_h}(a)|| per h and fit C sup|a| + c sqrt(h) by nonnegative least squares.

    The bound holds when no estimate overshoots the fitted curve by more than `rtol`
    and, if `C_limit` is given, the fitted C does not exceed it.
    """
    if trials < 20:
        raise ValueError("norm checks need at least 20 trial states")
    estimates, sups = [], []
    for h in h_list:
        operator = dense_weyl_operator(L, N, h, a, f)
        states = random_trial_states(rng, N, 2 * trials)
        flat = states.reshape(2 * trials, -1)
        images = flat[trials:] @ operator.matrix.T
        paired = np.abs(np.sum(np.conj(flat[:trials]) * images, axis=1))
        estimate = max(float(paired.max()), _power_norm(operator.matrix, states[0]))
        estimates.append(estimate)
        sups.append(operator.sup_symbol)
        logger.debug(f"h={h}: norm estimate {estimate:.4f}, sup|a|={operator.sup_symbol:.4f}")

    design = np.column_stack([sups, np.sqrt(h_list)])
    if not np.any(design[:, 0]):
        C, c = 0.0, float(max(estimates) / math.sqrt(max(h_list))) if max(estimates) else 0.0
    else:
        (C, c), _ = nnls(design, np.asarray(estimates))
    bound = [C * s + c * math.sqrt(h) for s, h in zip(sups, h_list)]
    excess = max(
        ((e - b) / b if b > 0 else (math.inf if e > 1e-12 else 0.0)) for e, b in zip(estimates, bound)
    )
    excess = max(float(excess), 0.0)
    holds = excess <= rtol and (C_limit is None or C <= C_limit)
    if not holds:
        logger.warning(f"norm bound fails: C={C:.4g}, c={c:.4g}, overshoot {excess:.3g}")
    return NormBoundReport(
        h_list=list(h_list),
        norm_estimates=estimates,
        sup_symbol=sups,
        C=float(C),
        c=float(c),
        excess=excess,
        C_limit=C_limit,
        bound_holds=holds,
    )


def check_nonnegative(a: SymbolSpec, samples: int = 41) -> bool:
    """Sample a on its support box and report whether it is nonnegative."""
    box = a.support_box
    if box is None:
        return True
    axes = []
    for low, high in box:
        low = max(low, -10.0)
        high = min(high, 10.0)
        axes.append(np.linspace(low, high, samples))
    rho, theta, w = np.meshgrid(*axes, indexing="ij")
    return bool(np.min(eval_symbol(a, rho, theta, w)) >= 0.0)


def garding_check(
    a: SymbolSpec,
    f: CutoffFamily,
    h_list: List[float],
    trials: int,
    rng: np.random.Generator,
    L: float = 2.4,
    N: int = 32,
    C_reference: float = 3.0,
) -> GardingReport:
    """min <u, Op u> over trial states and the spectrum, compared with -C h."""
    if not check_nonnegative(a):
        raise ValueError(f"symbol {a.name} takes negative values")
    minima = []
    for h in h_list:
        operator = dense_weyl_operator(L, N, h, a, f)
        states = random_trial_states(rng, N, trials).reshape(trials, -1)
        quad = np.real(np.sum(np.conj(states) * (states @ operator.matrix.T), axis=1))
        hermitian = 0.5 * (operator.matrix + operator.matrix.conj().T)
        lowest = float(np.linalg.eigvalsh(hermitian)[0])
        minima.append(min(float(quad.min()), lowest))

    C = max(0.0, max(-m / h for m, h in zip(minima, h_list)))
    violations = [h for m, h in zip(minima, h_list) if m < -C_reference * h]
    negative = [(h, -m) for m, h in zip(minima, h_list) if m < 0]
    slope = None
    if len(negative) >= 2:
        slope = float(np.polyfit(np.log([h for h, _ in negative]), np.log([m for _, m in negative]), 1)[0])
    return GardingReport(h_list=list(h_list), min_pairings=minima, C=C, slope=slope, violations=violations)
