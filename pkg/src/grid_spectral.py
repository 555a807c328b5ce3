"""
🌐 GRID & SPECTRAL OPERATORS
============================

Periodic box discretization of R^N and every Fourier-multiplier operator
the toolkit needs: free propagator, Bessel / Riesz derivatives, Riesz
potential convolution, gradients, the Stein square-function derivative,
spectral dilation, plus the GHRT binary snapshot codec.

Fourier convention: f^(ξ) = ∫ f(x) e^{-i x·ξ} dx. Sample points are
x_j = (j - n/2) dx per axis so x = 0 is a lattice point at the box
center. Frequencies are kept in FFT order.
"""

import math
import struct
import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Annotated, Any, Callable, Dict, Hashable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field as PydField
from scipy import fft as sfft
from scipy.special import gamma as gamma_fn

from .errors import GridMismatchError, ParameterError, SnapshotFormatError
from .settings import ChirpConvention, ZeroMode, get_settings

logger = structlog.get_logger(__name__)

ComplexArray = NDArray[np.complex128]
RealArray = NDArray[np.float64]

SNAPSHOT_MAGIC = b"GHRT"
SNAPSHOT_VERSION = 1


# =================== GRID ===================

@dataclass(frozen=True)
class Grid:
    """Periodic box with per-axis extent L and point count n"""
    N: int
    L: Tuple[float, ...]
    n: Tuple[int, ...]

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def dx(self) -> Tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.L, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    @cached_property
    def axes(self) -> Tuple[RealArray, ...]:
        return tuple((np.arange(n) - n // 2) * (L / n) for L, n in zip(self.L, self.n))

    @cached_property
    def mesh(self) -> Tuple[RealArray, ...]:
        """Sparse broadcastable coordinate arrays"""
        return tuple(np.meshgrid(*self.axes, indexing="ij", sparse=True))

    @cached_property
    def r2(self) -> RealArray:
        out = np.zeros(self.shape)
        for x in self.mesh:
            out = out + x * x
        return out

    @cached_property
    def frequencies(self) -> Tuple[RealArray, ...]:
        """Per-axis angular frequencies, FFT order"""
        return tuple(2.0 * np.pi * np.fft.fftfreq(n, d=L / n) for L, n in zip(self.L, self.n))

    @cached_property
    def kmesh(self) -> Tuple[RealArray, ...]:
        return tuple(np.meshgrid(*self.frequencies, indexing="ij", sparse=True))

    @cached_property
    def k2(self) -> RealArray:
        out = np.zeros(self.shape)
        for k in self.kmesh:
            out = out + k * k
        return out

    @property
    def kmax(self) -> Tuple[float, ...]:
        return tuple(np.pi * n / L for L, n in zip(self.L, self.n))

    def frequency_lattice(self, axis: int = 0) -> RealArray:
        """Sorted lattice (2π/L)·{-n/2, ..., n/2-1} on one axis"""
        return np.fft.fftshift(self.frequencies[axis])

    def integrate(self, values: NDArray[Any]) -> Any:
        return np.sum(values) * self.cell_volume


def make_grid(N: int, L: Union[float, Sequence[float]], n: Union[int, Sequence[int]]) -> Grid:
    if N not in (1, 2, 3):
        raise ParameterError(f"N must be 1, 2 or 3, got {N}")
    Ls = tuple(float(v) for v in (L if isinstance(L, (list, tuple)) else [L] * N))
    ns = tuple(int(v) for v in (n if isinstance(n, (list, tuple)) else [n] * N))
    if len(Ls) != N or len(ns) != N:
        raise ParameterError("per-axis L and n must have N entries")
    for Lj in Ls:
        if not (Lj > 0 and math.isfinite(Lj)):
            raise ParameterError(f"box length must be positive, got {Lj}")
    for nj in ns:
        if nj < 8 or nj % 2:
            raise ParameterError(f"points per axis must be even and >= 8, got {nj}")
    return Grid(N=N, L=Ls, n=ns)


# =================== FIELD ===================

@dataclass(frozen=True, eq=False)
class Field:
    """Immutable complex samples of u(·, t) on a grid"""
    grid: Grid
    values: ComplexArray
    t: float = 0.0

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.complex128, copy=True)
        if arr.size != self.grid.size:
            raise GridMismatchError(f"expected {self.grid.size} samples, got {arr.size}")
        arr = arr.reshape(self.grid.shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def with_values(self, values: NDArray[Any], t: Optional[float] = None) -> "Field":
        return Field(self.grid, values, self.t if t is None else t)

    def with_time(self, t: float) -> "Field":
        return Field(self.grid, self.values, t)

    def scaled(self, c: complex) -> "Field":
        return Field(self.grid, c * self.values, self.t)

    @property
    def modulus(self) -> RealArray:
        return np.abs(self.values)

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.integrate(np.abs(self.values) ** 2)))


def require_same_grid(*fields: Field) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError("fields live on different grids")
    return grid


# =================== SYMBOL CACHE ===================

class SymbolCache:
    """Bounded LRU of multiplier arrays keyed by (grid, operator, params)"""

    def __init__(self, maxsize: int = 64):
        self._lock = threading.Lock()
        self._store: "OrderedDict[Hashable, NDArray[Any]]" = OrderedDict()
        self.maxsize = maxsize
        self.hits = 0
        self.misses = 0

    def get(self, key: Hashable, factory: Callable[[], NDArray[Any]]) -> NDArray[Any]:
        with self._lock:
            if key in self._store:
                self._store.move_to_end(key)
                self.hits += 1
                return self._store[key]
            self.misses += 1
        value = factory()
        value.setflags(write=False)
        with self._lock:
            self._store[key] = value
            self._store.move_to_end(key)
            while len(self._store) > self.maxsize:
                self._store.popitem(last=False)
        return value

    def clear(self) -> None:
        with self._lock:
            self._store.clear()
            self.hits = 0
            self.misses = 0

    def stats(self) -> Dict[str, int]:
        with self._lock:
            return {"entries": len(self._store), "hits": self.hits, "misses": self.misses}


_SYMBOLS = SymbolCache()


def symbol_cache() -> SymbolCache:
    return _SYMBOLS


# =================== FFT PRIMITIVES ===================

def _fftn(values: NDArray[Any]) -> ComplexArray:
    return sfft.fftn(values, workers=get_settings().fft_workers)


def _ifftn(values: NDArray[Any]) -> ComplexArray:
    return sfft.ifftn(values, workers=get_settings().fft_workers)


def spectrum(field: Field) -> ComplexArray:
    """Unnormalized DFT of the samples"""
    return _fftn(field.values)


def spectral_floor(field: Field, rel_floor: float) -> Field:
    """Drop Fourier modes below rel_floor · max|f_k|"""
    if not 0.0 <= rel_floor < 1.0:
        raise ParameterError(f"relative floor must lie in [0, 1), got {rel_floor}")
    coeffs = spectrum(field)
    magnitude = np.abs(coeffs)
    peak = float(np.max(magnitude)) if magnitude.size else 0.0
    if peak == 0.0 or rel_floor == 0.0:
        return field
    coeffs[magnitude < rel_floor * peak] = 0.0
    values = _ifftn(coeffs)
    if not np.iscomplexobj(field.values):
        values = values.real
    return field.with_values(values)


def spectral_l2_sq(field: Field) -> float:
    """‖f‖² via Parseval: dV / n^N · Σ |f_k|²"""
    coeffs = spectrum(field)
    return float(np.sum(np.abs(coeffs) ** 2) * field.grid.cell_volume / field.grid.size)


def fourier_multiplier(field: Field, symbol: NDArray[Any]) -> Field:
    """inverse-FFT(symbol · FFT(field)); symbol broadcast over the frequency lattice"""
    symbol = np.asarray(symbol)
    if not np.all(np.isfinite(symbol)):
        raise ValueError("multiplier symbol has non-finite entries")
    return field.with_values(_ifftn(symbol * _fftn(field.values)))


# =================== MULTIPLIER OPERATORS ===================

def free_symbol(grid: Grid, t: float) -> ComplexArray:
    return _SYMBOLS.get((grid, "free", float(t)), lambda: np.exp(-1j * t * grid.k2))


def free_propagate(field: Field, t: float) -> Field:
    """e^{itΔ}: multiplier e^{-it|ξ|²}"""
    if not math.isfinite(t):
        raise ValueError("propagation time must be finite")
    if t == 0.0:
        return field
    out = fourier_multiplier(field, free_symbol(field.grid, t))
    return out.with_time(field.t + t)


def bessel(field: Field, s: float) -> Field:
    """J^s with symbol <ξ>^s"""
    if s == 0.0:
        return field
    sym = _SYMBOLS.get((field.grid, "bessel", float(s)), lambda: (1.0 + field.grid.k2) ** (s / 2.0))
    return fourier_multiplier(field, sym)


def _nonzero_mean(field_values: NDArray[Any]) -> bool:
    scale = float(np.max(np.abs(field_values))) if field_values.size else 0.0
    return abs(complex(np.mean(field_values))) > 1e-12 * max(scale, 1e-300)


def riesz_derivative(field: Field, s: float, zero_mode: Optional[ZeroMode] = None) -> Field:
    """D^s with symbol |ξ|^s; for s < 0 the zero mode follows the policy"""
    policy = zero_mode or get_settings().zero_mode
    if s < 0 and policy == "strict" and _nonzero_mean(field.values):
        raise ParameterError("negative-order Riesz multiplier applied to a nonzero-mean field")

    def build() -> RealArray:
        k = np.sqrt(field.grid.k2)
        if s >= 0:
            return k ** s
        out = np.zeros_like(k)
        nz = k > 0
        out[nz] = k[nz] ** s
        return out

    sym = _SYMBOLS.get((field.grid, "riesz_derivative", float(s)), build)
    return fourier_multiplier(field, sym)


def riesz_constant(N: int, gamma: float) -> float:
    """Fourier symbol constant of |x|^{-(N-γ)}: 2^γ π^{N/2} Γ(γ/2) / Γ((N-γ)/2)"""
    return float(2.0 ** gamma * np.pi ** (N / 2.0) * gamma_fn(gamma / 2.0) / gamma_fn((N - gamma) / 2.0))


def cellavg_zero_mode(grid: Grid, gamma: float) -> float:
    """
    Box integral of |x|^{-(N-γ)}: lattice sum over x_j != 0 plus the
    analytic integral over a ball with the volume of one cell.
    """
    N = grid.N
    r2 = grid.r2
    nz = r2 > 0
    lattice = float(np.sum(r2[nz] ** ((gamma - N) / 2.0)) * grid.cell_volume)
    unit_ball = np.pi ** (N / 2.0) / gamma_fn(N / 2.0 + 1.0)
    sphere_area = 2.0 * np.pi ** (N / 2.0) / gamma_fn(N / 2.0)
    radius = (grid.cell_volume / unit_ball) ** (1.0 / N)
    return lattice + float(sphere_area * radius ** gamma / gamma)


def riesz_symbol(grid: Grid, gamma: float, zero_mode: ZeroMode = "cellavg") -> RealArray:
    def build() -> RealArray:
        k2 = grid.k2
        out = np.zeros(grid.shape)
        nz = k2 > 0
        out[nz] = riesz_constant(grid.N, gamma) * k2[nz] ** (-gamma / 2.0)
        if zero_mode == "cellavg":
            out[(0,) * grid.N] = cellavg_zero_mode(grid, gamma)
        return out

    return _SYMBOLS.get((grid, "riesz_potential", float(gamma), zero_mode), build)


def riesz_potential(field: Field, gamma: float, zero_mode: Optional[ZeroMode] = None) -> Field:
    """Convolution with |x|^{-(N-γ)} as the multiplier σ_γ(ξ)"""
    N = field.grid.N
    if not 0.0 < gamma < N:
        raise ParameterError(f"gamma must lie in (0, {N}), got {gamma}")
    policy = zero_mode or get_settings().zero_mode
    if policy == "strict" and _nonzero_mean(field.values):
        raise ParameterError("Riesz potential zero mode undefined for a nonzero-mean field (strict policy)")
    return fourier_multiplier(field, riesz_symbol(field.grid, gamma, policy))


def derivative_symbol(grid: Grid, alpha: Sequence[int]) -> ComplexArray:
    """(iξ)^α with the Nyquist mode dropped on odd-order axes"""

    def build() -> ComplexArray:
        sym: Any = np.ones((1,) * grid.N, dtype=np.complex128)
        for axis, order in enumerate(alpha):
            if order == 0:
                continue
            k = grid.kmesh[axis].astype(np.complex128)
            factor = (1j * k) ** order
            if order % 2:
                nyquist = [slice(None)] * grid.N
                nyquist[axis] = slice(grid.n[axis] // 2, grid.n[axis] // 2 + 1)
                factor = factor.copy()
                factor[tuple(nyquist)] = 0.0
            sym = sym * factor
        return np.broadcast_to(sym, grid.shape).copy()

    return _SYMBOLS.get((grid, "derivative", tuple(alpha)), build)


def partial_derivative(field: Field, alpha: Sequence[int]) -> Field:
    if not any(alpha):
        return field
    return fourier_multiplier(field, derivative_symbol(field.grid, alpha))


def gradient(field: Field) -> List[Field]:
    N = field.grid.N
    return [partial_derivative(field, tuple(int(a == j) for a in range(N))) for j in range(N)]


# =================== STEIN DERIVATIVE ===================

def _stein_kernel_spectrum(grid: Grid, b: float) -> Tuple[ComplexArray, float]:
    def build() -> ComplexArray:
        r2 = grid.r2
        kernel = np.zeros(grid.shape)
        nz = r2 > 0
        kernel[nz] = r2[nz] ** (-(grid.N + 2.0 * b) / 2.0) * grid.cell_volume
        # origin moved to index 0 so the DFT product is a periodic convolution
        return _fftn(np.fft.ifftshift(kernel))

    spec = _SYMBOLS.get((grid, "stein_kernel", float(b)), build)
    total = float(spec[(0,) * grid.N].real)
    return spec, total


def stein_derivative(field: Field, b: float) -> Field:
    """
    𝒟^b f(x) = (Σ_{y≠x} |f(x)-f(y)|² |x-y|^{-(N+2b)} dx^N)^{1/2} over the
    periodic lattice, minimum-image distances. Expanded as
    |f|² S - 2 Re(conj(f) K*f) + K*|f|² and evaluated with FFTs.
    """
    if not 0.0 < b < 1.0:
        raise ParameterError(f"Stein derivative order must lie in (0, 1), got {b}")
    spec, total = _stein_kernel_spectrum(field.grid, b)
    f = field.values
    conv_f = _ifftn(spec * _fftn(f))
    conv_mod = _ifftn(spec * _fftn(np.abs(f) ** 2)).real
    square = np.abs(f) ** 2 * total - 2.0 * np.real(np.conj(f) * conv_f) + conv_mod
    return field.with_values(np.sqrt(np.clip(square, 0.0, None)))


# =================== DILATION ===================

def _interpolation_matrix(freqs: RealArray, x0: float, targets: RealArray) -> ComplexArray:
    n = freqs.size
    phase = np.outer(targets - x0, freqs)
    mat = np.exp(1j * phase) / n
    mat[:, n // 2] = np.cos(phase[:, n // 2]) / n
    return mat


def resample_dilated(field: Field, scale: float) -> Field:
    """Trigonometric interpolant of the field evaluated at x / scale"""
    if not (scale > 0 and math.isfinite(scale)):
        raise ParameterError("dilation scale must be positive")
    grid = field.grid
    values: Any = field.values
    for axis in range(grid.N):
        x = grid.axes[axis]
        mat = _interpolation_matrix(grid.frequencies[axis], float(x[0]), x / scale)
        coeffs = sfft.fft(values, axis=axis, workers=get_settings().fft_workers)
        moved = np.moveaxis(coeffs, axis, 0)
        values = np.moveaxis(np.tensordot(mat, moved, axes=(1, 0)), 0, axis)
    return field.with_values(values)


# =================== INITIAL DATA ===================

class PowerWeightData(BaseModel):
    """a <x>^{-m}"""
    model_config = ConfigDict(frozen=True)
    kind: Literal["power_weight"] = "power_weight"
    a: complex = 1.0
    m: float = PydField(..., gt=0)


class GaussianData(BaseModel):
    """a e^{-σ|x|²}"""
    model_config = ConfigDict(frozen=True)
    kind: Literal["gaussian"] = "gaussian"
    a: complex = 1.0
    sigma: float = PydField(default=1.0, gt=0)


class BandLimitedData(BaseModel):
    """Seeded random Fourier coefficients on |ξ_j| <= bandwidth, L²-normalized to `a`"""
    model_config = ConfigDict(frozen=True)
    kind: Literal["band_limited"] = "band_limited"
    a: float = PydField(default=1.0, gt=0)
    bandwidth: float = PydField(default=2.0, gt=0)
    seed: int = 0
    zero_mean: bool = True


class ChirpData(BaseModel):
    """Chirp e^{ib|x|²/4} (quarter) or e^{ib|x|²/2} (half) applied to a base spec or Field"""
    model_config = ConfigDict(frozen=True)
    kind: Literal["chirp"] = "chirp"
    b: float
    convention: ChirpConvention = "quarter"
    base: Optional["InitialDataSpec"] = None


InitialDataSpec = Annotated[
    Union[PowerWeightData, GaussianData, BandLimitedData, ChirpData],
    PydField(discriminator="kind"),
]
ChirpData.model_rebuild()


@dataclass(frozen=True)
class CallbackData:
    """Pointwise closed form f(x_1, ..., x_N) on broadcastable coordinate arrays"""
    func: Callable[..., NDArray[Any]]
    label: str = "callback"


def effective_chirp(b: float, convention: ChirpConvention) -> float:
    """Chirp parameter in the quarter convention"""
    return 2.0 * b if convention == "half" else b


def chirp(field: Field, b: float, convention: ChirpConvention = "quarter") -> Field:
    if b == 0.0:
        return field
    beff = effective_chirp(b, convention)
    return field.with_values(np.exp(0.25j * beff * field.grid.r2) * field.values)


def _band_limited(grid: Grid, spec: BandLimitedData) -> ComplexArray:
    # coefficients are drawn per integer mode, so the field survives a change of n
    cutoffs = [int(math.floor(spec.bandwidth * L / (2.0 * np.pi))) for L in grid.L]
    for K, n in zip(cutoffs, grid.n):
        if K >= n // 2:
            raise ParameterError("bandwidth exceeds the grid's Nyquist frequency")
    rng = np.random.default_rng(spec.seed)
    local_shape = tuple(2 * K + 1 for K in cutoffs)
    coeffs = rng.standard_normal(local_shape) + 1j * rng.standard_normal(local_shape)
    if spec.zero_mean:
        coeffs[tuple(cutoffs)] = 0.0
    full = np.zeros(grid.shape, dtype=np.complex128)
    index = np.ix_(*[np.arange(-K, K + 1) % n for K, n in zip(cutoffs, grid.n)])
    full[index] = coeffs
    values = _ifftn(full)
    norm = float(np.sqrt(grid.integrate(np.abs(values) ** 2)))
    if norm == 0.0:
        raise ParameterError("band-limited spec leaves no modes on this grid")
    return values * (spec.a / norm)


def sample(
    grid: Grid,
    spec: Union[PowerWeightData, GaussianData, BandLimitedData, ChirpData, CallbackData],
    base: Optional[Field] = None,
) -> Field:
    """Sample an initial-data spec on the lattice, x measured from the box center"""
    if isinstance(spec, PowerWeightData):
        values = spec.a * (1.0 + grid.r2) ** (-spec.m / 2.0)
    elif isinstance(spec, GaussianData):
        values = spec.a * np.exp(-spec.sigma * grid.r2)
    elif isinstance(spec, BandLimitedData):
        values = _band_limited(grid, spec)
    elif isinstance(spec, ChirpData):
        if spec.base is not None:
            inner = sample(grid, spec.base)
        elif base is not None:
            inner = base
        else:
            raise ParameterError("chirp spec needs a base spec or a base field")
        if inner.grid != grid:
            raise GridMismatchError("chirp base field lives on another grid")
        return chirp(inner, spec.b, spec.convention)
    elif isinstance(spec, CallbackData):
        values = np.broadcast_to(spec.func(*grid.mesh), grid.shape)
    else:
        raise ParameterError(f"unknown initial-data spec: {type(spec).__name__}")
    return Field(grid, values)


# =================== SNAPSHOT CODEC ===================

def encode_snapshot(field: Field) -> bytes:
    grid = field.grid
    header = bytearray(SNAPSHOT_MAGIC)
    header += struct.pack("<II", SNAPSHOT_VERSION, grid.N)
    header += struct.pack(f"<{grid.N}I", *grid.n)
    header += struct.pack(f"<{grid.N}d", *grid.L)
    header += struct.pack("<d", field.t)
    body = np.ascontiguousarray(field.values, dtype="<c16").tobytes(order="C")
    return bytes(header) + body


def decode_snapshot(payload: bytes) -> Field:
    if payload[:4] != SNAPSHOT_MAGIC:
        raise SnapshotFormatError("bad magic")
    try:
        return _decode_body(payload)
    except struct.error as exc:
        raise SnapshotFormatError(f"truncated header: {exc}") from exc


def _decode_body(payload: bytes) -> Field:
    offset = 4
    version, N = struct.unpack_from("<II", payload, offset)
    offset += 8
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    if N not in (1, 2, 3):
        raise SnapshotFormatError(f"bad dimension {N}")
    n = struct.unpack_from(f"<{N}I", payload, offset)
    offset += 4 * N
    L = struct.unpack_from(f"<{N}d", payload, offset)
    offset += 8 * N
    (t,) = struct.unpack_from("<d", payload, offset)
    offset += 8
    grid = make_grid(N, list(L), list(n))
    expected = grid.size * 16
    if len(payload) - offset != expected:
        raise SnapshotFormatError(f"expected {expected} value bytes, got {len(payload) - offset}")
    values = np.frombuffer(payload, dtype="<c16", offset=offset).reshape(grid.shape)
    return Field(grid, values, t)


def write_snapshot(field: Field, path: Union[str, Path]) -> None:
    Path(path).write_bytes(encode_snapshot(field))


def read_snapshot(path: Union[str, Path]) -> Field:
    return decode_snapshot(Path(path).read_bytes())
