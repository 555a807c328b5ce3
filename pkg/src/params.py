"""
📐 MODEL PARAMETERS & ADMISSIBILITY
===================================

Parameters (N, p, gamma, mu, m, M, M0, b) of

    i u_t + Δu + μ (|x|^{-(N-γ)} * |u|^p) |u|^{p-2} u = 0

with the derived constants s_c, k_c, ω_c², the regime reports
(well-posedness, blow-up, scattering), minimal derivative orders, the
contraction polynomials G1, G2, J1, J2 and the existence-time estimate
built from them.

Violations are reported, never thrown. A ModelParameters value always
carries the combined report computed at construction.
"""

import math
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator
from scipy.optimize import bisect

from .errors import ParameterError
from .settings import get_settings

logger = structlog.get_logger(__name__)

Regime = Literal["wellposed", "blowup", "both", "scattering", "neither"]

_SATURATED = sys.float_info.max


# =================== DATA MODELS ===================

@dataclass(frozen=True)
class Condition:
    """One strict inequality `lhs <relation> rhs`"""
    id: str
    satisfied: bool
    lhs: float
    rhs: float
    relation: str  # "<", ">" or "!="

    def message(self) -> str:
        state = "ok" if self.satisfied else "violated"
        return f"{state}: {self.id} (lhs={self.lhs:.6g}, rhs={self.rhs:.6g})"


@dataclass(frozen=True)
class AdmissibilityReport:
    """Regime label plus every checked inequality with its numeric endpoints"""
    regime: Regime
    conditions: Tuple[Condition, ...]

    @property
    def ok(self) -> bool:
        return all(c.satisfied for c in self.conditions)

    @property
    def failed_ids(self) -> List[str]:
        return [c.id for c in self.conditions if not c.satisfied]

    @property
    def messages(self) -> List[str]:
        return [c.message() for c in self.conditions if not c.satisfied]

    def condition(self, condition_id: str) -> Condition:
        for c in self.conditions:
            if c.id == condition_id:
                return c
        raise KeyError(condition_id)

    def to_text(self) -> str:
        width = max((len(c.id) for c in self.conditions), default=10)
        lines = [f"regime: {self.regime}", ""]
        lines.append(f"{'condition'.ljust(width)}  {'status':8}  {'lhs':>14}  {'rhs':>14}")
        for c in self.conditions:
            status = "ok" if c.satisfied else "VIOLATED"
            lines.append(f"{c.id.ljust(width)}  {status:8}  {c.lhs:14.8g}  {c.rhs:14.8g}")
        return "\n".join(lines) + "\n"

    def to_kv(self, prefix: str = "") -> Dict[str, object]:
        out: Dict[str, object] = {f"{prefix}regime": self.regime}
        for i, c in enumerate(self.conditions):
            key = f"{prefix}condition.{i}"
            out[f"{key}.id"] = c.id
            out[f"{key}.satisfied"] = c.satisfied
            out[f"{key}.lhs"] = float(c.lhs)
            out[f"{key}.rhs"] = float(c.rhs)
        return out


@dataclass(frozen=True)
class DerivedConstants:
    s_c: float
    k_c: float
    omega_c_sq: float
    omega_c_sq_valid: bool  # False when N(p-2)+N-γ vanishes


@dataclass(frozen=True)
class ContractionPolynomials:
    G1: float
    G2: float
    J1: float
    J2: float
    saturated: bool = False


@dataclass(frozen=True)
class ExistenceTime:
    T: float
    feasible: bool
    R: float
    q: float
    polynomials: ContractionPolynomials
    horizon: float = 1.0
    notes: List[str] = field(default_factory=list)


# =================== PARAMETERS ===================

class ModelParameters(BaseModel):
    """Equation and weighted-space parameters"""

    model_config = ConfigDict(frozen=True)

    N: int = Field(..., ge=1, le=3, description="Spatial dimension")
    p: float = Field(..., gt=1, description="Nonlinearity power")
    gamma: float = Field(..., description="Riesz potential order, 0 < gamma < N")
    mu: Union[float, complex] = Field(default=1.0, description="Coupling")
    m: float = Field(..., gt=0, description="Weight power")
    M: int = Field(..., ge=1, description="Weighted derivative order")
    M0: int = Field(..., ge=1, description="Extra smoothness order")
    b: float = Field(default=0.0, description="Chirp / pseudo-conformal parameter")

    _report: AdmissibilityReport = PrivateAttr()

    @field_validator("p", "gamma", "m", "b")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("non-finite value")
        return value

    @field_validator("mu")
    @classmethod
    def _finite_mu(cls, value: Union[float, complex]) -> Union[float, complex]:
        c = complex(value)
        if not (math.isfinite(c.real) and math.isfinite(c.imag)):
            raise ValueError("non-finite coupling")
        if isinstance(value, complex) and c.imag == 0.0:
            return c.real
        return value

    @model_validator(mode="after")
    def _gamma_range(self) -> "ModelParameters":
        if not 0.0 < self.gamma < self.N:
            raise ValueError(f"gamma must lie in (0, N) = (0, {self.N}), got {self.gamma}")
        return self

    def model_post_init(self, __context: object) -> None:
        self._report = combined_report(self)

    @property
    def report(self) -> AdmissibilityReport:
        return self._report

    @property
    def is_real_coupling(self) -> bool:
        return complex(self.mu).imag == 0.0

    @property
    def mu_real(self) -> float:
        return complex(self.mu).real

    @property
    def order_span(self) -> int:
        """M + M0 - N, the top derivative order of the weighted space"""
        return self.M + self.M0 - self.N

    def with_updates(self, **changes: object) -> "ModelParameters":
        """Revalidated copy; the regime report is recomputed"""
        data = self.model_dump()
        data.update(changes)
        return ModelParameters(**data)


# =================== DERIVED CONSTANTS ===================

def _critical_index(N: int, p: float, gamma: float) -> float:
    return N / 2.0 - (gamma + 2.0) / (2.0 * (p - 1.0))


def derived_constants(params: ModelParameters) -> DerivedConstants:
    """s_c, k_c = s_c(p-1), and ω_c² with its validity flag"""
    N, p, gamma = params.N, params.p, params.gamma
    s_c = _critical_index(N, p, gamma)
    k_c = s_c * (p - 1.0)
    denom = N * (p - 2.0) + N - gamma
    if denom == 0.0:
        return DerivedConstants(s_c=s_c, k_c=k_c, omega_c_sq=float("nan"), omega_c_sq_valid=False)
    omega_c_sq = N * N * (N * (p - 2.0) + N - gamma - 2.0) / (8.0 * denom)
    return DerivedConstants(s_c=s_c, k_c=k_c, omega_c_sq=omega_c_sq, omega_c_sq_valid=True)


# =================== INEQUALITY BUILDING BLOCKS ===================

BOUNDARY_RTOL = 1e-12


def _on_boundary(value: float, bound: float) -> bool:
    """Equal up to float rounding; strict inequalities reject these"""
    if not (math.isfinite(value) and math.isfinite(bound)):
        return False
    return abs(value - bound) <= BOUNDARY_RTOL * max(1.0, abs(bound))


def _lt(cid: str, lhs: float, rhs: float) -> Condition:
    return Condition(cid, bool(lhs < rhs and not _on_boundary(lhs, rhs)), float(lhs), float(rhs), "<")


def _gt(cid: str, lhs: float, rhs: float) -> Condition:
    return Condition(cid, bool(lhs > rhs and not _on_boundary(lhs, rhs)), float(lhs), float(rhs), ">")


def _m_upper(N: int, p: float, gamma: float) -> float:
    if p == 2.0:
        return math.inf
    return (N - 2.0 * gamma) / (2.0 * (2.0 - p))


def _m_lower_wellposed(N: int, p: float, gamma: float) -> float:
    return max((2.0 * gamma + N) / (4.0 * (p - 1.0)), N / 2.0)


def _m0_bound(N: int, p: float, gamma: float, m: float) -> float:
    denom = 4.0 * m * (p - 1.0) - N
    first = (N - gamma) * (2.0 * m * p - N) / denom if denom > 0 else math.inf
    return max(first, N + m)


def _m_bound(N: int, m: float, M0: int) -> float:
    half = N // 2
    return max(M0 - N + 2 * half + 2, 4 * half + 5 + m)


def _shared_conditions(params: ModelParameters) -> List[Condition]:
    N, p, gamma, m = params.N, params.p, params.gamma, params.m
    return [
        _lt("p < 2", p, 2.0),
        _gt("gamma > 0", gamma, 0.0),
        _lt("m < (N-2gamma)/(2(2-p))", m, _m_upper(N, p, gamma)),
        _gt("M0 > max{(N-gamma)(2mp-N)/(4m(p-1)-N), N+m}", params.M0, _m0_bound(N, p, gamma, m)),
        _gt("M > max{M0-N+2floor(N/2)+2, 4floor(N/2)+5+m}", params.M, _m_bound(N, m, params.M0)),
    ]


def _wellposed_conditions(params: ModelParameters) -> List[Condition]:
    N, p, gamma, m = params.N, params.p, params.gamma, params.m
    shared = {c.id: c for c in _shared_conditions(params)}
    return [
        _gt("p > 4/3", p, 4.0 / 3.0),
        shared["p < 2"],
        shared["gamma > 0"],
        _lt("gamma < N(3p-4)/(2p)", gamma, N * (3.0 * p - 4.0) / (2.0 * p)),
        _gt("m > max{(2gamma+N)/(4(p-1)), N/2}", m, _m_lower_wellposed(N, p, gamma)),
        shared["m < (N-2gamma)/(2(2-p))"],
        shared["M0 > max{(N-gamma)(2mp-N)/(4m(p-1)-N), N+m}"],
        shared["M > max{M0-N+2floor(N/2)+2, 4floor(N/2)+5+m}"],
    ]


def _blowup_conditions(params: ModelParameters) -> List[Condition]:
    N, p, gamma, m = params.N, params.p, params.gamma, params.m
    shared = {c.id: c for c in _shared_conditions(params)}
    gamma_cap = min(
        N * (p - 1.0) - 2.0,
        ((N + 2.0) * (p - 1.0) - 2.0) / 2.0,
        N * (3.0 * p - 4.0) / (2.0 * p),
    )
    mu = complex(params.mu)
    mu_cond = Condition("mu > 0", bool(mu.imag == 0.0 and mu.real > 0.0), mu.real, 0.0, ">")
    return [
        _gt("p > max{(N+2)/N, 4/3}", p, max((N + 2.0) / N, 4.0 / 3.0)),
        shared["p < 2"],
        shared["gamma > 0"],
        _lt("gamma < min{N(p-1)-2, ((N+2)(p-1)-2)/2, N(3p-4)/(2p)}", gamma, gamma_cap),
        _gt("m > max{(N+2)/2, (2gamma+N)/(4(p-1))}", m,
            max((N + 2.0) / 2.0, (2.0 * gamma + N) / (4.0 * (p - 1.0)))),
        shared["m < (N-2gamma)/(2(2-p))"],
        shared["M0 > max{(N-gamma)(2mp-N)/(4m(p-1)-N), N+m}"],
        shared["M > max{M0-N+2floor(N/2)+2, 4floor(N/2)+5+m}"],
        mu_cond,
        _gt("s_c > 0", _critical_index(N, p, gamma), 0.0),
    ]


def _scattering_conditions(params: ModelParameters) -> List[Condition]:
    N, p, gamma, m = params.N, params.p, params.gamma, params.m
    shared = {c.id: c for c in _shared_conditions(params)}
    mu = complex(params.mu)
    return [
        _gt("p > 4/3", p, 4.0 / 3.0),
        shared["p < 2"],
        shared["gamma > 0"],
        _lt("gamma < min{N(3p-4)/(2p), N(p-1)-1}", gamma,
            min(N * (3.0 * p - 4.0) / (2.0 * p), N * (p - 1.0) - 1.0)),
        _gt("m > max{(2gamma+N)/(4(p-1)), N/2}", m, _m_lower_wellposed(N, p, gamma)),
        shared["m < (N-2gamma)/(2(2-p))"],
        shared["M0 > max{(N-gamma)(2mp-N)/(4m(p-1)-N), N+m}"],
        shared["M > max{M0-N+2floor(N/2)+2, 4floor(N/2)+5+m}"],
        Condition("mu != 0", bool(mu != 0), abs(mu), 0.0, "!="),
        _gt("b > 0", params.b, 0.0),
    ]


# =================== REGIME VALIDATORS ===================

def validate_wellposedness(params: ModelParameters) -> AdmissibilityReport:
    conditions = tuple(_wellposed_conditions(params))
    regime: Regime = "wellposed" if all(c.satisfied for c in conditions) else "neither"
    return AdmissibilityReport(regime=regime, conditions=conditions)


def validate_blowup_regime(params: ModelParameters) -> AdmissibilityReport:
    conditions = tuple(_blowup_conditions(params))
    regime: Regime = "blowup" if all(c.satisfied for c in conditions) else "neither"
    return AdmissibilityReport(regime=regime, conditions=conditions)


def validate_scattering_regime(params: ModelParameters) -> AdmissibilityReport:
    """Hypotheses of the global existence / scattering construction for b > 0"""
    conditions = tuple(_scattering_conditions(params))
    regime: Regime = "scattering" if all(c.satisfied for c in conditions) else "neither"
    return AdmissibilityReport(regime=regime, conditions=conditions)


def combined_report(params: ModelParameters) -> AdmissibilityReport:
    """Well-posedness and blow-up conditions merged, each id once"""
    wp = _wellposed_conditions(params)
    bu = _blowup_conditions(params)
    wp_ok = all(c.satisfied for c in wp)
    bu_ok = all(c.satisfied for c in bu)

    merged: Dict[str, Condition] = {}
    for c in wp + bu:
        merged.setdefault(c.id, c)

    regime: Regime
    if wp_ok and bu_ok:
        regime = "both"
    elif wp_ok:
        regime = "wellposed"
    elif bu_ok:
        regime = "blowup"
    else:
        regime = "neither"
    return AdmissibilityReport(regime=regime, conditions=tuple(merged.values()))


# =================== DERIVATIVE ORDERS ===================

def _smallest_int_above(x: float) -> int:
    if math.isfinite(x) and _on_boundary(x, round(x)):
        return round(x) + 1
    return int(math.floor(x)) + 1


def suggest_orders(N: int, p: float, gamma: float, m: float) -> Tuple[int, int]:
    """Minimal (M0, M) satisfying the order conditions for a weight m in range"""
    lower = _m_lower_wellposed(N, p, gamma)
    upper = _m_upper(N, p, gamma)
    if not (lower < m < upper) or _on_boundary(m, lower) or _on_boundary(m, upper):
        raise ParameterError(f"weight out of range: need {lower:.6g} < m < {upper:.6g}, got m={m}")
    M0 = _smallest_int_above(_m0_bound(N, p, gamma, m))
    M = _smallest_int_above(_m_bound(N, m, M0))
    return M0, M


# =================== CONTRACTION POLYNOMIALS ===================

def _power(base: float, exponent: float) -> float:
    if base == 0.0:
        return 0.0 if exponent > 0 else (1.0 if exponent == 0 else math.inf)
    with np.errstate(over="ignore"):
        return float(np.power(np.float64(base), np.float64(exponent)))


def contraction_polynomials(lam: float, R: float, params: ModelParameters) -> ContractionPolynomials:
    """G1, G2, J1, J2 evaluated termwise; overflow saturates with a flag"""
    if lam <= 0.0:
        raise ParameterError("lambda must be positive")
    if R < 0.0:
        raise ParameterError("R must be nonnegative")
    K = params.order_span
    if K < 1:
        raise ParameterError(f"M + M0 - N must be >= 1, got {K}")

    p = params.p
    ks = np.arange(1, K + 1, dtype=np.float64)

    def lam_pow(e: np.ndarray) -> np.ndarray:
        return np.power(lam, -e)

    def r_pow(e: np.ndarray) -> np.ndarray:
        if R == 0.0:
            return np.where(e > 0, 0.0, 1.0)
        return np.power(R, e)

    with np.errstate(over="ignore", invalid="ignore"):
        G1 = _power(R, p) + float(np.sum(lam_pow(2 * ks - p) * r_pow(2 * ks)))

        k0 = np.arange(0, K + 1, dtype=np.float64)
        G2 = float(np.sum(lam_pow(2 * (k0 + 1) - p) * r_pow(2 * k0 + 1)))

        J1 = (
            _power(R, p - 1.0)
            + _power(lam, -(6.0 - 2.0 * p)) * _power(R, 5.0 - p)
            + float(np.sum(lam_pow(2 * (2 * ks - p)) * r_pow(4 * ks - p - 1)
                           + lam_pow(2 * ks - p) * r_pow(2 * ks - 1)))
        )
        J2 = (
            _power(lam, -(6.0 - 2.0 * p)) * _power(R, 4.0 - p)
            + float(np.sum(lam_pow(2 * (2 * (ks + 1) - p)) * r_pow(4 * ks - p + 2)
                           + lam_pow(2 * (ks + 1) - p) * r_pow(2 * ks)))
        )

    values = [G1, G2, J1, J2]
    saturated = not all(math.isfinite(v) for v in values)
    if saturated:
        values = [v if math.isfinite(v) else _SATURATED for v in values]
        logger.warning("contraction polynomials saturated", lam=lam, R=R)
    return ContractionPolynomials(*values, saturated=saturated)


# =================== EXISTENCE TIME ===================

def existence_time_estimate(
    eta: float,
    lam: float,
    params: ModelParameters,
    constants: Optional[Tuple[float, float, float]] = None,
    nonautonomous_b: Optional[float] = None,
) -> ExistenceTime:
    """
    Largest T in (0, 1] satisfying the three smallness conditions of the
    contraction argument, with R = 2 c eta and q = floor(N/2) + 1 + m:

        1/2 <T>^q + c T <T>^q G1 G2 / R          <= 1
        c1 T <T>^q (eta + G1 G2)                 <= lam / 2
        c3 T <T>^q (J1 G2 + G1 J2)               <  1

    With nonautonomous_b the horizon is capped at 1/b and the nonlinear
    terms carry sup_{[0,T]} (1 - b tau)^{N(p-1)-2-gamma}.
    """
    if eta <= 0.0 or not math.isfinite(eta):
        raise ParameterError("eta must be positive")
    if lam <= 0.0 or not math.isfinite(lam):
        raise ParameterError("lambda must be positive")

    settings = get_settings()
    if constants is None:
        constants = (settings.contraction_c, settings.contraction_c1, settings.contraction_c3)
    c, c1, c3 = constants
    if min(constants) <= 0.0:
        raise ParameterError("constants must be positive")

    R = 2.0 * c * eta
    q = params.N // 2 + 1 + params.m
    poly = contraction_polynomials(lam, R, params)
    G1G2 = poly.G1 * poly.G2
    JG = poly.J1 * poly.G2 + poly.G1 * poly.J2

    horizon = 1.0
    exponent = params.N * (params.p - 1.0) - 2.0 - params.gamma
    if nonautonomous_b is not None:
        if nonautonomous_b <= 0.0:
            raise ParameterError("nonautonomous b must be positive")
        horizon = min(1.0, (1.0 / nonautonomous_b) * (1.0 - 1e-12))

    def coefficient_sup(T: float) -> float:
        if nonautonomous_b is None or exponent >= 0.0:
            return 1.0
        return (1.0 - nonautonomous_b * T) ** exponent

    def excess(T: float) -> float:
        bracket = (1.0 + T * T) ** (q / 2.0)
        kappa = coefficient_sup(T)
        with np.errstate(over="ignore", invalid="ignore"):
            h1 = 0.5 * bracket + c * T * bracket * kappa * G1G2 / R - 1.0
            h2 = c1 * T * bracket * kappa * (eta + G1G2) / (lam / 2.0) - 1.0
            h3 = c3 * T * bracket * kappa * JG - 1.0
        worst = max(h1, h2, h3)
        return worst if math.isfinite(worst) else _SATURATED

    def feasible(T: float) -> bool:
        bracket = (1.0 + T * T) ** (q / 2.0)
        kappa = coefficient_sup(T)
        return (
            0.5 * bracket + c * T * bracket * kappa * G1G2 / R <= 1.0
            and c1 * T * bracket * kappa * (eta + G1G2) <= lam / 2.0
            and c3 * T * bracket * kappa * JG < 1.0
        )

    notes: List[str] = []
    if poly.saturated:
        notes.append("contraction polynomials saturated")

    if feasible(horizon):
        return ExistenceTime(T=horizon, feasible=True, R=R, q=q, polynomials=poly,
                             horizon=horizon, notes=notes)

    t_min = sys.float_info.min
    if not feasible(t_min):
        notes.append("no admissible T at machine minimum")
        logger.warning("existence time infeasible", eta=eta, lam=lam)
        return ExistenceTime(T=0.0, feasible=False, R=R, q=q, polynomials=poly,
                             horizon=horizon, notes=notes)

    root = bisect(excess, t_min, horizon, xtol=1e-300, rtol=settings.bisection_rtol, maxiter=4000)
    T = float(root)
    step = settings.bisection_rtol
    while T > t_min and not feasible(T):
        T *= 1.0 - step
        step = min(2.0 * step, 0.5)
    logger.debug("existence time bisection", eta=eta, lam=lam, T=T)
    return ExistenceTime(T=T, feasible=True, R=R, q=q, polynomials=poly, horizon=horizon, notes=notes)
