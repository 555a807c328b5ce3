"""
📊 OBSERVABLES
==============

Scalar functionals tracked along a trajectory: mass, energy, momentum,
variance and its virial derivatives, the weighted 𝔛-norm, the weighted
modulus lower bound, plus resolution diagnostics.

All integrals are dx^N-weighted lattice sums; derivatives are spectral.
"""

from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import structlog
from numpy.typing import NDArray

from .errors import ParameterError
from .grid_spectral import Field, gradient, partial_derivative, riesz_potential, spectral_floor, spectrum
from .params import ModelParameters, derived_constants
from .settings import ZeroMode
from .utils import japanese_bracket, multi_indices_upto

logger = structlog.get_logger(__name__)

# Fourier modes below this fraction of the peak are round-off
X_NORM_SPECTRAL_FLOOR = 1e-12


# =================== DATA MODELS ===================

@dataclass(frozen=True)
class ConservedQuantities:
    mass: float
    energy: float
    momentum: Tuple[float, ...]


@dataclass(frozen=True)
class VirialQuantities:
    variance: float
    variance_t: float
    variance_tt: float            # (k+1)-weighted energy form
    variance_tt_potential: float  # 16E - 8 s_c(p-1) μ P / p
    variance_tt_direct: float     # 8‖∇u‖² + 4μ[(2/p)Q - N(p-2)P/p] with the discrete kernel

    @property
    def forms_relative_gap(self) -> float:
        scale = max(abs(self.variance_tt), abs(self.variance_tt_potential), 1e-300)
        return abs(self.variance_tt - self.variance_tt_potential) / scale


@dataclass(frozen=True)
class XNormComponent:
    alpha: Tuple[int, ...]
    kind: str  # weighted_sup | weighted_l2 | l2
    value: float


@dataclass(frozen=True)
class XNorm:
    total: float
    components: List[XNormComponent]


@dataclass
class ObservableRecord:
    """One time-stamped row of the observables time series"""
    t: float
    mass: float
    energy: float
    momentum: Tuple[float, ...]
    variance: float
    variance_t: float
    variance_tt: float
    sup_norm: float
    grad_l2_sq: float
    x_norm: float
    min_weighted_modulus: float
    spectral_tail_fraction: float

    def as_row(self) -> Dict[str, float]:
        row: Dict[str, float] = {"t": self.t, "mass": self.mass, "energy": self.energy}
        for j, value in enumerate(self.momentum, start=1):
            row[f"momentum_{j}"] = value
        row.update(
            variance=self.variance,
            variance_t=self.variance_t,
            variance_tt=self.variance_tt,
            sup_norm=self.sup_norm,
            grad_l2_sq=self.grad_l2_sq,
            x_norm=self.x_norm,
            min_weighted_modulus=self.min_weighted_modulus,
            spectral_tail_fraction=self.spectral_tail_fraction,
        )
        return row

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def csv_columns(N: int) -> List[str]:
    return (
        ["t", "mass", "energy"]
        + [f"momentum_{j}" for j in range(1, N + 1)]
        + [
            "variance",
            "variance_t",
            "variance_tt",
            "sup_norm",
            "grad_l2_sq",
            "x_norm",
            "min_weighted_modulus",
            "spectral_tail_fraction",
        ]
    )


# =================== BUILDING BLOCKS ===================

def hartree_potential(
    field: Field, gamma: float, p: float, zero_mode: Optional[ZeroMode] = None
) -> NDArray[np.float64]:
    """W = K_γ * |u|^p as a real array"""
    density = field.with_values(np.abs(field.values) ** p)
    return riesz_potential(density, gamma, zero_mode).values.real


def _grad_pieces(field: Field) -> Tuple[List[Field], float]:
    grads = gradient(field)
    g = sum(float(field.grid.integrate(np.abs(d.values) ** 2)) for d in grads)
    return grads, g


def potential_integral(field: Field, params: ModelParameters, zero_mode: Optional[ZeroMode] = None) -> float:
    """P = ∫ (K_γ * |u|^p) |u|^p"""
    W = hartree_potential(field, params.gamma, params.p, zero_mode)
    return float(field.grid.integrate(W * np.abs(field.values) ** params.p))


def grad_l2_sq(field: Field) -> float:
    return _grad_pieces(field)[1]


def sup_norm(field: Field) -> float:
    """Lattice maximum of |u| (a lower bound on the continuum sup)"""
    return float(np.max(np.abs(field.values)))


def spectral_tail_fraction(field: Field) -> float:
    """Share of ∑|u_k|² on modes with some |ξ_j| above 2/3 of that axis' Nyquist frequency"""
    power = np.abs(spectrum(field)) ** 2
    total = float(np.sum(power))
    if total == 0.0:
        return 0.0
    grid = field.grid
    mask = np.zeros(grid.shape, dtype=bool)
    for k, kmax in zip(grid.kmesh, grid.kmax):
        mask = mask | (np.abs(k) > (2.0 / 3.0) * kmax)
    return float(np.sum(power[mask]) / total)


# =================== CONSERVED QUANTITIES ===================

def conserved_quantities(
    field: Field, params: ModelParameters, zero_mode: Optional[ZeroMode] = None
) -> ConservedQuantities:
    """Mass ∫|u|², energy ½‖∇u‖² - (μ/2p) P, momentum Im ∫ ū ∇u"""
    grid = field.grid
    u = field.values
    mass = float(grid.integrate(np.abs(u) ** 2))
    grads, G = _grad_pieces(field)
    P = potential_integral(field, params, zero_mode)
    energy = 0.5 * G - params.mu_real * P / (2.0 * params.p)
    momentum = tuple(float(grid.integrate(np.conj(u) * d.values).imag) for d in grads)
    return ConservedQuantities(mass=mass, energy=energy, momentum=momentum)


# =================== VIRIAL ===================

def _x_dot(field: Field, grads: List[Field]) -> NDArray[np.complex128]:
    out = np.zeros(field.grid.shape, dtype=np.complex128)
    for x, d in zip(field.grid.mesh, grads):
        out = out + x * d.values
    return out


def angular_term(field: Field) -> float:
    """Im ∫ ū (x·∇u)"""
    grads = gradient(field)
    return float(field.grid.integrate(np.conj(field.values) * _x_dot(field, grads)).imag)


def variance(field: Field) -> float:
    return float(field.grid.integrate(field.grid.r2 * np.abs(field.values) ** 2))


def virial_quantities(
    field: Field, params: ModelParameters, zero_mode: Optional[ZeroMode] = None
) -> VirialQuantities:
    """V = ∫|x|²|u|², V_t = 4 Im ∫ ū x·∇u, and V_tt in closed and kernel-faithful forms"""
    grid = field.grid
    u = field.values
    N, p = params.N, params.p
    mu = params.mu_real

    V = float(grid.integrate(grid.r2 * np.abs(u) ** 2))
    grads, G = _grad_pieces(field)
    V_t = 4.0 * float(grid.integrate(np.conj(u) * _x_dot(field, grads)).imag)

    W = hartree_potential(field, params.gamma, p, zero_mode)
    rho = np.abs(u) ** p
    P = float(grid.integrate(W * rho))
    E = 0.5 * G - mu * P / (2.0 * p)

    k = derived_constants(params).k_c
    line_energy = 16.0 * (k + 1.0) * E - 8.0 * k * G
    line_potential = 16.0 * E - 8.0 * k * mu * P / p

    W_grads = gradient(field.with_values(W))
    Q = float(grid.integrate(sum(x * dW.values.real for x, dW in zip(grid.mesh, W_grads)) * rho))
    direct = 8.0 * G + 4.0 * mu * ((2.0 / p) * Q - N * (p - 2.0) * P / p)

    return VirialQuantities(
        variance=V,
        variance_t=V_t,
        variance_tt=line_energy,
        variance_tt_potential=line_potential,
        variance_tt_direct=direct,
    )


# =================== WEIGHTED NORMS ===================

def min_weighted_modulus(field: Field, m: float) -> float:
    """min over the lattice of <x>^m |u(x)|"""
    if m <= 0:
        raise ParameterError("weight power must be positive")
    weight = japanese_bracket(np.sqrt(field.grid.r2)) ** m
    return float(np.min(weight * np.abs(field.values)))


def x_norm(field: Field, params: ModelParameters) -> XNorm:
    """
    ‖f‖_𝔛 = Σ_{|α|<=⌊N/2⌋} sup|<x>^m ∂^α f|
          + Σ_{⌊N/2⌋<|α|<=M} ‖<x>^m ∂^α f‖
          + Σ_{M<|α|<=M+M0-N} ‖∂^α f‖

    Modes below X_NORM_SPECTRAL_FLOOR · max|f_k| are dropped before differentiating.
    """
    top = params.order_span
    if top < 0:
        raise ParameterError(f"M + M0 - N must be >= 0, got {top}")
    grid = field.grid
    half = params.N // 2
    weight = japanese_bracket(np.sqrt(grid.r2)) ** params.m
    clean = spectral_floor(field, X_NORM_SPECTRAL_FLOOR)

    components: List[XNormComponent] = []
    for alpha in multi_indices_upto(params.N, top):
        order = sum(alpha)
        d = partial_derivative(clean, alpha).values
        if order <= half:
            value = float(np.max(weight * np.abs(d)))
            kind = "weighted_sup"
        elif order <= params.M:
            value = float(np.sqrt(grid.integrate(np.abs(weight * d) ** 2)))
            kind = "weighted_l2"
        else:
            value = float(np.sqrt(grid.integrate(np.abs(d) ** 2)))
            kind = "l2"
        components.append(XNormComponent(alpha=alpha, kind=kind, value=value))

    total = float(sum(c.value for c in components))
    return XNorm(total=total, components=components)


# =================== RECORDS ===================

def record_observables(
    field: Field,
    params: ModelParameters,
    zero_mode: Optional[ZeroMode] = None,
    track_x_norm: bool = True,
) -> ObservableRecord:
    conserved = conserved_quantities(field, params, zero_mode)
    virial = virial_quantities(field, params, zero_mode)
    return ObservableRecord(
        t=float(field.t),
        mass=conserved.mass,
        energy=conserved.energy,
        momentum=conserved.momentum,
        variance=virial.variance,
        variance_t=virial.variance_t,
        variance_tt=virial.variance_tt,
        sup_norm=sup_norm(field),
        grad_l2_sq=grad_l2_sq(field),
        x_norm=x_norm(field, params).total if track_x_norm else float("nan"),
        min_weighted_modulus=min_weighted_modulus(field, params.m),
        spectral_tail_fraction=spectral_tail_fraction(field),
    )
