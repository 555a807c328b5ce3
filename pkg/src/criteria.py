"""
🎯 BLOW-UP CRITERION & PSEUDO-CONFORMAL SCATTERING
=================================================

Closed-form blow-up test for the mass-supercritical regime, the chirped
data identities behind it, the chirp ranges that guarantee blow-up, and
the pseudo-conformal map that turns solutions of the nonautonomous
equation on [0, 1/b) into global, scattering solutions.

Chirp convention is u0 = e^{ib|x|²/4} v0 throughout; the half
convention e^{ib|x|²/2} maps to b -> 2b.
"""

import math
from dataclasses import dataclass, field as dc_field
from typing import Dict, List, Optional, Tuple

import numpy as np
import structlog
from scipy.optimize import bisect

from .errors import ParameterError, PreconditionError
from .grid_spectral import Field, bessel, chirp, effective_chirp, free_propagate, require_same_grid, resample_dilated
from .observables import (
    angular_term,
    conserved_quantities,
    grad_l2_sq,
    potential_integral,
    variance,
    virial_quantities,
)
from .params import ModelParameters, derived_constants, validate_blowup_regime
from .settings import ChirpConvention, ZeroMode, get_settings

logger = structlog.get_logger(__name__)

_RADICAND_TOL = 1e-14


# =================== DATA MODELS ===================

@dataclass(frozen=True)
class BlowupVerdict:
    x: float
    lhs: float
    rhs: float
    satisfied: bool
    mass: float
    energy: float
    V0: float
    Vt0: float
    omega_c: float
    k_c: float
    polynomial_form: Optional[str] = None  # expanding_subthreshold | contracting_superthreshold
    polynomial_lhs: Optional[float] = None
    polynomial_rhs: Optional[float] = None
    polynomial_satisfied: Optional[bool] = None
    forms_agree: Optional[bool] = None
    note: str = ""

    def to_kv(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "verdict": "satisfied" if self.satisfied else "not-satisfied",
            "x": self.x,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "mass": self.mass,
            "energy": self.energy,
            "V0": self.V0,
            "Vt0": self.Vt0,
            "omega_c": self.omega_c,
            "k_c": self.k_c,
            "polynomial_form": self.polynomial_form or "none",
        }
        if self.polynomial_form is not None:
            out["polynomial_lhs"] = self.polynomial_lhs
            out["polynomial_rhs"] = self.polynomial_rhs
            out["polynomial_satisfied"] = self.polynomial_satisfied
            out["forms_agree"] = self.forms_agree
        if self.note:
            out["note"] = self.note
        return out


@dataclass(frozen=True)
class ChirpedObservables:
    """Identities for u0 = e^{ib|x|²/4} v0 next to direct evaluation on u0"""
    b: float  # quarter convention
    mass: float
    energy_v0: float
    angular: float  # Im ∫ conj(v0) x·∇v0
    V0: float
    Vt0: float
    E_u0: float
    direct_V0: float
    direct_Vt0: float
    direct_E_u0: float
    max_relative_deviation: float


@dataclass
class ChirpBRanges:
    """Chirp parameters (quarter convention) guaranteeing the blow-up criterion"""
    positive_interval: Optional[Tuple[float, float]]
    negative_threshold: Optional[float]
    mass: float
    energy_v0: float
    variance_v0: float
    positive_hypotheses: Tuple[bool, bool]
    negative_hypothesis: bool
    notes: List[str] = dc_field(default_factory=list)

    @property
    def positive_interval_half(self) -> Optional[Tuple[float, float]]:
        """Endpoints for the e^{ib|x|²/2} convention"""
        if self.positive_interval is None:
            return None
        return (self.positive_interval[0] / 2.0, self.positive_interval[1] / 2.0)

    @property
    def negative_threshold_half(self) -> Optional[float]:
        return None if self.negative_threshold is None else self.negative_threshold / 2.0

    def to_kv(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "mass": self.mass,
            "energy_v0": self.energy_v0,
            "variance_v0": self.variance_v0,
            "positive_hypothesis_1": self.positive_hypotheses[0],
            "positive_hypothesis_2": self.positive_hypotheses[1],
            "negative_hypothesis": self.negative_hypothesis,
        }
        if self.positive_interval is None:
            out["positive_interval"] = "empty"
        else:
            out["positive_b0"], out["positive_b1"] = self.positive_interval
        out["negative_threshold"] = "none" if self.negative_threshold is None else self.negative_threshold
        for i, note in enumerate(self.notes):
            out[f"note.{i}"] = note
        return out


# =================== THRESHOLD FUNCTION ===================

def radicand(x: float, k_c: float) -> float:
    """g(x) = 1/(k x^k) + x - (1+k)/k, nonnegative with its only zero at x = 1"""
    return 1.0 / (k_c * x ** k_c) + x - (1.0 + k_c) / k_c


def F(x: float, k_c: float) -> float:
    """+sqrt(g(x)) for 0 < x < 1, -sqrt(g(x)) for x >= 1"""
    if not (x > 0.0 and k_c > 0.0):
        raise ParameterError(f"F needs x > 0 and k_c > 0, got x={x}, k_c={k_c}")
    g = radicand(x, k_c)
    if g < -_RADICAND_TOL:
        raise ValueError(f"F radicand negative: g({x}) = {g}")
    if abs(g) <= _RADICAND_TOL:
        return 0.0
    root = math.sqrt(g)
    return root if x < 1.0 else -root


# =================== BLOW-UP CRITERION ===================

def blowup_criterion(
    mass: float, energy: float, V0: float, Vt0: float, params: ModelParameters
) -> BlowupVerdict:
    """V_t(0)/(ω_c M) < 4√2 F(E V(0) / (ω_c M)²), with the equivalent polynomial form when one applies"""
    failed: List[str] = []
    report = validate_blowup_regime(params)
    if not report.ok:
        failed.append("params blow-up admissible (" + ", ".join(report.failed_ids) + ")")
    for name, value in (("mass", mass), ("energy", energy), ("V0", V0), ("Vt0", Vt0)):
        if not math.isfinite(value):
            failed.append(f"{name} finite")
    if not energy > 0.0:
        failed.append("energy > 0")
    if not mass > 0.0:
        failed.append("mass > 0")
    if not V0 > 0.0:
        failed.append("V0 > 0")
    if failed:
        raise PreconditionError(failed, "blow-up criterion")

    consts = derived_constants(params)
    omega = math.sqrt(consts.omega_c_sq)
    k = consts.k_c
    scale = omega * mass
    A = scale * scale

    x = energy * V0 / A
    lhs = Vt0 / scale
    rhs = 4.0 * math.sqrt(2.0) * F(x, k)
    satisfied = lhs < rhs

    form: Optional[str] = None
    note = ""
    if Vt0 > 0.0 and x < 1.0:
        form = "expanding_subthreshold"
    elif Vt0 < 0.0 and x >= 1.0:
        form = "contracting_superthreshold"
    elif Vt0 > 0.0:
        note = "V_t(0) > 0 with x >= 1: no equivalent polynomial form"
    else:
        note = "no equivalent polynomial form for this sign case"

    if form is None:
        return BlowupVerdict(x, lhs, rhs, satisfied, mass, energy, V0, Vt0, omega, k, note=note)

    poly_lhs = (k * Vt0 * Vt0 - 32.0 * k * energy * V0 + 32.0 * (1.0 + k) * A) / (k * A)
    poly_rhs = 32.0 * A ** k / (k * (energy * V0) ** k)
    poly_satisfied = poly_lhs < poly_rhs if form == "expanding_subthreshold" else poly_lhs > poly_rhs
    agree = poly_satisfied == satisfied
    if not agree:
        logger.warning("blow-up criterion forms disagree", form=form, x=x, lhs=lhs, rhs=rhs,
                       poly_lhs=poly_lhs, poly_rhs=poly_rhs)
    return BlowupVerdict(
        x, lhs, rhs, satisfied, mass, energy, V0, Vt0, omega, k,
        polynomial_form=form,
        polynomial_lhs=poly_lhs,
        polynomial_rhs=poly_rhs,
        polynomial_satisfied=poly_satisfied,
        forms_agree=agree,
    )


def verdict_for_field(u0: Field, params: ModelParameters, zero_mode: Optional[ZeroMode] = None) -> BlowupVerdict:
    conserved = conserved_quantities(u0, params, zero_mode)
    virial = virial_quantities(u0, params, zero_mode)
    return blowup_criterion(conserved.mass, conserved.energy, virial.variance, virial.variance_t, params)


# =================== CHIRPED DATA ===================

def _relative(a: float, b: float, scale: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), scale, 1e-300)


def chirped_observables(
    v0: Field,
    b: float,
    params: ModelParameters,
    convention: Optional[ChirpConvention] = None,
    zero_mode: Optional[ZeroMode] = None,
) -> ChirpedObservables:
    """
    V(0)   = ‖x v0‖²
    V_t(0) = 4 Im ∫ conj(v0) x·∇v0 + 2b ‖x v0‖²
    E[u0]  = E[v0] + (b/2) Im ∫ conj(v0) x·∇v0 + (b²/8) ‖x v0‖²
    """
    convention = convention or get_settings().chirp_convention
    beff = effective_chirp(b, convention)

    base = conserved_quantities(v0, params, zero_mode)
    X = variance(v0)
    A = angular_term(v0)
    V0 = X
    Vt0 = 4.0 * A + 2.0 * beff * X
    E_u0 = base.energy + 0.5 * beff * A + beff * beff * X / 8.0

    u0 = chirp(v0, b, convention)
    direct = virial_quantities(u0, params, zero_mode)
    direct_E = conserved_quantities(u0, params, zero_mode).energy

    G = grad_l2_sq(u0)
    P = potential_integral(u0, params, zero_mode)
    energy_scale = 0.5 * G + abs(params.mu_real) * P / (2.0 * params.p)
    rate_scale = 4.0 * math.sqrt(direct.variance * G)
    deviation = max(
        _relative(V0, direct.variance, 0.0),
        _relative(Vt0, direct.variance_t, rate_scale),
        _relative(E_u0, direct_E, energy_scale),
    )
    if deviation > 1e-8:
        logger.warning("chirped identities deviate from direct evaluation", b=beff, deviation=deviation)

    return ChirpedObservables(
        b=beff,
        mass=base.mass,
        energy_v0=base.energy,
        angular=A,
        V0=V0,
        Vt0=Vt0,
        E_u0=E_u0,
        direct_V0=direct.variance,
        direct_Vt0=direct.variance_t,
        direct_E_u0=direct_E,
        max_relative_deviation=deviation,
    )


def chirp_b_ranges(
    v0: Field,
    params: ModelParameters,
    zero_mode: Optional[ZeroMode] = None,
    angular_tol: float = 1e-10,
) -> ChirpBRanges:
    """Positive chirp interval from closed forms, negative threshold by bisection on the verdict"""
    report = validate_blowup_regime(params)
    if not report.ok:
        raise PreconditionError(["params blow-up admissible (" + ", ".join(report.failed_ids) + ")"],
                                "chirp ranges")

    conserved = conserved_quantities(v0, params, zero_mode)
    M, E = conserved.mass, conserved.energy
    X = variance(v0)
    A = angular_term(v0)
    scale = math.sqrt(X * grad_l2_sq(v0))
    if abs(A) > angular_tol * max(scale, 1e-300):
        raise PreconditionError(
            [f"Im ∫ conj(v0) x·∇v0 = 0 (weaker real-data hypothesis), got {A:.3e}"], "chirp ranges"
        )
    if not (M > 0 and X > 0):
        raise PreconditionError(["mass > 0", "V0 > 0"], "chirp ranges")

    consts = derived_constants(params)
    k = consts.k_c
    W2 = consts.omega_c_sq * M * M
    notes: List[str] = []

    # positive branch
    hyp1 = E * X < W2
    hyp2 = False
    positive: Optional[Tuple[float, float]] = None
    if hyp1:
        denom = (1.0 + k) * W2 - k * E * X
        Q = (W2 ** (k + 1.0) / denom) ** (1.0 / k)
        hyp2 = E * X < Q
        if hyp2:
            b_variance = (2.0 * math.sqrt(2.0) / X) * math.sqrt(W2 - E * X)
            b_poly = math.sqrt(8.0 * Q / (X * X) - 8.0 * E / X)
            b1 = min(b_variance, b_poly)
            b0 = 0.0 if E >= 0.0 else math.sqrt(-8.0 * E / X)
            if b0 < b1:
                positive = (b0, b1)
            else:
                notes.append("positive interval collapsed (b0 >= b1)")
        else:
            notes.append("positive branch: E[v0]‖xv0‖² bound fails")
    else:
        notes.append("positive branch: E[v0]‖xv0‖²/M² >= ω_c²")

    # negative branch
    neg_hyp = E * X / W2 < (1.0 + k) / k
    negative: Optional[float] = None
    if neg_hyp:
        negative = _negative_threshold(M, E, X, A, params, notes)
    else:
        notes.append("negative branch: E[v0]‖xv0‖²/(ω_c M)² >= (1+k_c)/k_c")

    logger.info("chirp ranges", positive=positive, negative=negative, energy_v0=E)
    return ChirpBRanges(
        positive_interval=positive,
        negative_threshold=negative,
        mass=M,
        energy_v0=E,
        variance_v0=X,
        positive_hypotheses=(hyp1, hyp2),
        negative_hypothesis=neg_hyp,
        notes=notes,
    )


def _criterion_holds_at(b: float, M: float, E: float, X: float, A: float, params: ModelParameters) -> bool:
    energy = E + 0.5 * b * A + b * b * X / 8.0
    if energy <= 0.0:
        return False
    return blowup_criterion(M, energy, X, 4.0 * A + 2.0 * b * X, params).satisfied


def _negative_threshold(
    M: float, E: float, X: float, A: float, params: ModelParameters, notes: List[str]
) -> Optional[float]:
    if _criterion_holds_at(0.0, M, E, X, A, params):
        return 0.0

    b_lo = -1.0
    for _ in range(200):
        if _criterion_holds_at(b_lo, M, E, X, A, params):
            break
        b_lo *= 2.0
    else:
        notes.append("negative branch: no satisfied chirp found")
        return None

    def sign(b: float) -> float:
        return -1.0 if _criterion_holds_at(b, M, E, X, A, params) else 1.0

    rtol = get_settings().bisection_rtol
    root = float(bisect(sign, b_lo, 0.0, xtol=rtol * abs(b_lo), rtol=max(rtol, 4 * np.finfo(float).eps),
                        maxiter=400))
    step = rtol * abs(b_lo)
    while not _criterion_holds_at(root, M, E, X, A, params):
        root -= step
        step *= 2.0
    return root


# =================== PSEUDO-CONFORMAL MAP ===================

def physical_time(tau: float, b: float) -> float:
    """t = τ / (1 - bτ), the inverse of τ = t / (1 + bt)"""
    denom = 1.0 - b * tau
    if denom <= 0.0:
        raise ParameterError(f"1 - b τ must be positive, got {denom}")
    return tau / denom


def internal_time(t: float, b: float) -> float:
    denom = 1.0 + b * t
    if denom <= 0.0:
        raise ParameterError(f"1 + b t must be positive, got {denom}")
    return t / denom


def pseudo_conformal_map(v: Field, tau: float, b: float) -> Field:
    """u(x,t) = (1+bt)^{-N/2} e^{ib|x|²/(4(1+bt))} v(x/(1+bt), τ)"""
    t = physical_time(tau, b)
    s = 1.0 + b * t
    grid = v.grid
    dilated = v if s == 1.0 else resample_dilated(v, s)
    phase = np.exp(0.25j * b * grid.r2 / s)
    return Field(grid, s ** (-grid.N / 2.0) * phase * dilated.values, t)


def scattering_profile(v: Field, tau: float, b: float) -> Field:
    """e^{-itΔ} u(t) expressed through v: e^{ib|x|²/4} e^{-iτΔ} v(τ)"""
    back = free_propagate(v, -tau)
    return chirp(back, b, "quarter").with_time(physical_time(tau, b))


def scattering_state(v_final: Field, b: float) -> Field:
    """u+ = e^{ib|x|²/4} e^{-i(1/b)Δ} v(1/b)"""
    if not b > 0.0:
        raise ParameterError(f"scattering state needs b > 0, got {b}")
    back = free_propagate(v_final, -1.0 / b)
    return chirp(back, b, "quarter").with_time(0.0)


def scattering_residual(u_t: Field, t: float, u_plus: Field, s: float) -> Tuple[float, float]:
    """(‖J^s (e^{-itΔ}u(t) - u+)‖, (1+t)^{N/2} sup|u(t)|)"""
    if s < 0.0:
        raise ParameterError("Sobolev index must be nonnegative")
    grid = require_same_grid(u_t, u_plus)
    diff = free_propagate(u_t, -t).values - u_plus.values
    residual = bessel(Field(grid, diff), s).l2_norm()
    decay = (1.0 + t) ** (grid.N / 2.0) * float(np.max(np.abs(u_t.values)))
    return residual, decay
