"""
⚖️ WEIGHTED INEQUALITY CHECKS
=============================

Lattice evaluations of the weighted harmonic-analysis bounds the theory
leans on: power-weight class membership, the weighted Riesz-potential
bound, Stein-derivative equivalence, the two interpolation inequalities,
the homogeneous-derivative weight bound and the weighted free-propagator
growth bound.

Every "≲" becomes a ratio over a finite deterministic family; a report
carries the per-sample ratios, their max and whether the max stays under
a ceiling.
"""

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from numpy.typing import NDArray

from .errors import ParameterError
from .grid_spectral import (
    BandLimitedData,
    Field,
    GaussianData,
    Grid,
    bessel,
    free_propagate,
    make_grid,
    riesz_derivative,
    riesz_potential,
    sample,
    stein_derivative,
)
from .settings import ZeroMode
from .utils import gather_in_threads, japanese_bracket

logger = structlog.get_logger(__name__)

Q_TOLERANCE = 1e-12
BOUNDARY_FRACTION = 0.45
BOUNDARY_MASS_LIMIT = 1e-6


# =================== DATA MODELS ===================

@dataclass(frozen=True)
class RatioSample:
    """One lhs / rhs evaluation; invalid samples are kept for the record but not ranked"""
    sample_id: str
    lhs: float
    rhs: float
    ratio: float
    valid: bool = True
    note: str = ""


@dataclass
class RatioReport:
    test_id: str
    family: str
    samples: List[RatioSample]
    ceiling: float = math.inf
    notes: List[str] = dc_field(default_factory=list)

    def __post_init__(self) -> None:
        self.samples = sorted(self.samples, key=lambda s: s.sample_id)

    @property
    def retained(self) -> List[RatioSample]:
        return [s for s in self.samples if s.valid]

    @property
    def max_ratio(self) -> float:
        kept = self.retained
        return max(s.ratio for s in kept) if kept else 0.0

    @property
    def ratio_bounded(self) -> bool:
        return self.max_ratio <= self.ceiling

    def ratio_of(self, sample_id: str) -> float:
        for s in self.samples:
            if s.sample_id == sample_id:
                return s.ratio
        raise KeyError(sample_id)

    def with_ceiling(self, ceiling: float) -> "RatioReport":
        return RatioReport(self.test_id, self.family, list(self.samples), ceiling, list(self.notes))

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "test_id": self.test_id,
                "sample_id": s.sample_id,
                "lhs": s.lhs,
                "rhs": s.rhs,
                "ratio": s.ratio,
                "valid": s.valid,
                "note": s.note,
            }
            for s in self.samples
        ]
        return pd.DataFrame(rows, columns=["test_id", "sample_id", "lhs", "rhs", "ratio", "valid", "note"])

    def summary(self) -> Dict[str, object]:
        return {
            "test_id": self.test_id,
            "family": self.family,
            "samples": len(self.samples),
            "retained": len(self.retained),
            "max_ratio": self.max_ratio,
            "ceiling": self.ceiling,
            "ratio_bounded": self.ratio_bounded,
        }


def _ratio_sample(sample_id: str, lhs: float, rhs: float, note: str = "") -> RatioSample:
    if not (math.isfinite(lhs) and math.isfinite(rhs)) or rhs <= 0.0:
        return RatioSample(sample_id, lhs, rhs, math.nan, valid=False, note=note or "zero or non-finite denominator")
    return RatioSample(sample_id, lhs, rhs, lhs / rhs, note=note)


def _skipped(sample_id: str, note: str) -> RatioSample:
    return RatioSample(sample_id, 0.0, 0.0, math.nan, valid=False, note=note)


# =================== NORMS ===================

def _weight(grid: Grid, power: float) -> NDArray[np.float64]:
    return japanese_bracket(np.sqrt(grid.r2)) ** power


def lebesgue_norm(grid: Grid, values: NDArray[np.generic], p: float) -> float:
    """(Σ |f|^p dx^N)^{1/p}"""
    return float(grid.integrate(np.abs(values) ** p) ** (1.0 / p))


def _l2(field: Field) -> float:
    return field.l2_norm()


def _weighted_l2(field: Field, power: float) -> float:
    return lebesgue_norm(field.grid, _weight(field.grid, power) * field.values, 2.0)


# =================== WEIGHT CLASSES ===================

def power_weight_class(l: float, p: float, q: float, N: int, gamma: float) -> Tuple[bool, bool]:
    """
    Membership of |x|^l in the two-exponent class (Riesz potential bound)
    and in the Muckenhoupt class.

        in_Ap  ⟺ -N < l < N(p-1)
        in_Apq ⟺ -(N - pγ)/p < l < N(p-1)/p
    """
    if not 0.0 < gamma < N:
        raise ParameterError(f"gamma must lie in (0, {N}), got {gamma}")
    if not 1.0 < p < N / gamma:
        raise ParameterError(f"p must lie in (1, N/gamma) = (1, {N / gamma}), got {p}")
    expected = 1.0 / p - gamma / N
    if abs(1.0 / q - expected) > Q_TOLERANCE:
        raise ParameterError(f"q={q} inconsistent with 1/q = 1/p - gamma/N = {expected}")
    in_ap = -N < l < N * (p - 1.0)
    in_apq = -(N - p * gamma) / p < l < N * (p - 1.0) / p
    return in_apq, in_ap


def target_exponent(p: float, N: int, gamma: float) -> float:
    """q with 1/q = 1/p - γ/N"""
    return 1.0 / (1.0 / p - gamma / N)


# =================== TEST FAMILIES ===================

FamilyMember = Tuple[str, Field]

DEFAULT_DILATIONS: Tuple[float, ...] = tuple(2.0 ** k for k in range(-3, 4))


def gaussian_dilation_family(grid: Grid, dilations: Sequence[float] = DEFAULT_DILATIONS) -> List[FamilyMember]:
    """e^{-|x/s|²} for each dilation s"""
    members = []
    for s in dilations:
        members.append((f"gaussian-s={s:.6g}", sample(grid, GaussianData(sigma=1.0 / (s * s)))))
    return members


def band_limited_family(grid: Grid, count: int = 20, seed: int = 0, bandwidth: float = 2.0) -> List[FamilyMember]:
    """Zero-mean seeded random fields; identical across refinements of n"""
    return [
        (f"band-{i:03d}", sample(grid, BandLimitedData(bandwidth=bandwidth, seed=seed + i, zero_mean=True)))
        for i in range(count)
    ]


def riesz_family(grid: Grid, seed: int = 0, count: int = 20) -> List[FamilyMember]:
    return gaussian_dilation_family(grid) + band_limited_family(grid, count=count, seed=seed)


# =================== RIESZ POTENTIAL ===================

def riesz_weighted_ratio(
    family: Sequence[FamilyMember],
    gamma: float,
    l: float,
    p: float,
    N: int,
    zero_mode: ZeroMode = "cellavg",
    ceiling: float = math.inf,
    jobs: int = 1,
    test_id: str = "riesz-weighted",
) -> RatioReport:
    """‖(K_γ * f)<x>^l‖_q / ‖f <x>^l‖_p over the family"""
    q = target_exponent(p, N, gamma)
    in_apq, _ = power_weight_class(l, p, q, N, gamma)

    def evaluate(member: FamilyMember) -> RatioSample:
        sample_id, f = member
        if f.grid.N != N:
            raise ParameterError(f"family member {sample_id} lives in dimension {f.grid.N}, expected {N}")
        weight = _weight(f.grid, l)
        rhs = lebesgue_norm(f.grid, weight * f.values, p)
        if rhs == 0.0:
            return _skipped(sample_id, "zero-norm sample")
        lhs = lebesgue_norm(f.grid, weight * riesz_potential(f, gamma, zero_mode).values, q)
        return _ratio_sample(sample_id, lhs, rhs)

    samples = gather_in_threads(evaluate, list(family), jobs)
    notes = [f"q = {q:.12g}", f"weight exponent {'inside' if in_apq else 'outside'} the admissible window"]
    report = RatioReport(
        test_id=test_id,
        family=f"{len(family)} fields, gamma={gamma}, l={l}, p={p}, N={N}, zero_mode={zero_mode}",
        samples=samples,
        ceiling=ceiling,
        notes=notes,
    )
    logger.info("⚖️ riesz ratio", test_id=test_id, max_ratio=report.max_ratio, inside=in_apq)
    return report


# =================== STEIN DERIVATIVE ===================

def stein_equivalence_ratio(f: Field, b: float, ceiling: float = math.inf, test_id: str = "stein") -> RatioReport:
    """r = (‖f‖ + ‖𝒟^b f‖) / ‖J^b f‖ and its reciprocal"""
    if not 0.0 < b < 1.0:
        raise ParameterError(f"Stein order must lie in (0, 1), got {b}")
    family = f"Stein equivalence, b={b}"
    bessel_norm = _l2(bessel(f, b))
    if bessel_norm == 0.0:
        return RatioReport(test_id, family, [_skipped("forward", "zero field"), _skipped("inverse", "zero field")],
                           ceiling)
    combined = _l2(f) + _l2(stein_derivative(f, b))
    samples = [
        _ratio_sample("forward", combined, bessel_norm),
        _ratio_sample("inverse", bessel_norm, combined),
    ]
    return RatioReport(test_id, family, samples, ceiling)


# =================== INTERPOLATION ===================

def interpolation_check(
    f: Field, a: float, bb: float, theta: float, ceiling: float = math.inf, test_id: str = "interpolation"
) -> RatioReport:
    """
    weight-outside: ‖<x>^{θa} J^{(1-θ)bb} f‖ / (‖J^{bb} f‖^{1-θ} ‖<x>^a f‖^θ)
    derivative-outside: ‖J^{θa}(<x>^{(1-θ)bb} f)‖ / (‖<x>^{bb} f‖^{1-θ} ‖J^a f‖^θ)
    """
    if a <= 0 or bb <= 0:
        raise ParameterError("interpolation orders must be positive")
    if not 0.0 < theta < 1.0:
        raise ParameterError(f"theta must lie in (0, 1), got {theta}")

    lhs_one = _weighted_l2(bessel(f, (1.0 - theta) * bb), theta * a)
    rhs_one = _l2(bessel(f, bb)) ** (1.0 - theta) * _weighted_l2(f, a) ** theta

    moved = f.with_values(_weight(f.grid, (1.0 - theta) * bb) * f.values)
    lhs_two = _l2(bessel(moved, theta * a))
    rhs_two = _weighted_l2(f, bb) ** (1.0 - theta) * _l2(bessel(f, a)) ** theta

    if rhs_one == 0.0 or rhs_two == 0.0:
        raise ParameterError("interpolation denominator vanishes")
    samples = [
        _ratio_sample("weight-outside", lhs_one, rhs_one),
        _ratio_sample("derivative-outside", lhs_two, rhs_two),
    ]
    return RatioReport(test_id, f"interpolation a={a}, bb={bb}, theta={theta}", samples, ceiling)


# =================== HOMOGENEOUS DERIVATIVE WEIGHT ===================

def homogeneous_weight_bound_check(
    f: Field, b: float, s: float, ceiling: float = math.inf, test_id: str = "homogeneous-weight"
) -> RatioReport:
    """‖<x>^b D^s f‖ / (‖<x>^b f‖ + ‖J^{s-b} f‖ + ‖<x>^b J^s f‖)"""
    if not 0.0 < b < s:
        raise ParameterError(f"need 0 < b < s, got b={b}, s={s}")
    family = f"homogeneous weight bound, b={b}, s={s}"
    rhs = _weighted_l2(f, b) + _l2(bessel(f, s - b)) + _weighted_l2(bessel(f, s), b)
    if rhs == 0.0:
        return RatioReport(test_id, family, [_skipped("bound", "zero field")], ceiling)
    lhs = _weighted_l2(riesz_derivative(f, s), b)
    return RatioReport(test_id, family, [_ratio_sample("bound", lhs, rhs)], ceiling)


# =================== FREE PROPAGATOR ===================

def boundary_mass_fraction(field: Field, fraction: float = BOUNDARY_FRACTION) -> float:
    """Share of ∫|f|² on lattice points with some |x_j| > fraction · L_j"""
    grid = field.grid
    density = np.abs(field.values) ** 2
    total = float(np.sum(density))
    if total == 0.0:
        return 0.0
    mask = np.zeros(grid.shape, dtype=bool)
    for x, L in zip(grid.mesh, grid.L):
        mask = mask | (np.abs(x) > fraction * L)
    return float(np.sum(density[mask]) / total)


def propagator_weight_growth(
    f: Field, b: float, times: Sequence[float], ceiling: float = math.inf, test_id: str = "propagator"
) -> RatioReport:
    """‖<x>^b e^{itΔ} f‖ / (<t>^b (‖J^b f‖ + ‖<x>^b f‖)) per time"""
    if b <= 0:
        raise ParameterError("weight order must be positive")
    if any(not math.isfinite(t) for t in times):
        raise ParameterError("propagation times must be finite")
    family = f"weighted propagator, b={b}, {len(times)} times"
    base = _l2(bessel(f, b)) + _weighted_l2(f, b)
    if base == 0.0:
        return RatioReport(test_id, family, [_skipped(f"t={t:.6g}", "zero field") for t in times], ceiling)

    samples = []
    for t in times:
        sample_id = f"t={t:.6g}"
        moved = free_propagate(f, t)
        lhs = _weighted_l2(moved, b)
        rhs = float(japanese_bracket(t)) ** b * base
        escaped = boundary_mass_fraction(moved)
        if escaped > BOUNDARY_MASS_LIMIT:
            samples.append(RatioSample(sample_id, lhs, rhs, lhs / rhs, valid=False,
                                       note=f"boundary mass {escaped:.3g} exceeds {BOUNDARY_MASS_LIMIT:g}"))
            logger.warning("⚠️ propagated sample reaches the box edge", t=t, boundary_mass=escaped)
            continue
        samples.append(_ratio_sample(sample_id, lhs, rhs))
    return RatioReport(test_id, family, samples, ceiling)


# =================== SUITE ===================

@dataclass(frozen=True)
class SuiteCase:
    """One named check on a 1D grid; `run` receives the grid"""
    test_id: str
    L: float
    n: int
    ceiling: float
    run: Callable[[Grid, float, int, int], RatioReport]
    expect_bounded: bool = True


def _gaussian(grid: Grid) -> Field:
    return sample(grid, GaussianData(sigma=1.0))


SUITE: Tuple[SuiteCase, ...] = (
    SuiteCase("riesz-inside", 80.0, 4096, 25.0,
              lambda g, c, seed, jobs: riesz_weighted_ratio(riesz_family(g, seed), 0.25, 0.2, 2.0, 1,
                                                            ceiling=c, jobs=jobs, test_id="riesz-inside")),
    SuiteCase("riesz-outside", 80.0, 4096, 25.0,
              lambda g, c, seed, jobs: riesz_weighted_ratio(riesz_family(g, seed), 0.25, 2.0, 2.0, 1,
                                                            ceiling=c, jobs=jobs, test_id="riesz-outside"),
              expect_bounded=False),
    SuiteCase("stein-gaussian", 40.0, 512, 10.0,
              lambda g, c, seed, jobs: stein_equivalence_ratio(_gaussian(g), 0.5, c, "stein-gaussian")),
    SuiteCase("interpolation-gaussian", 40.0, 512, 10.0,
              lambda g, c, seed, jobs: interpolation_check(_gaussian(g), 1.0, 1.0, 0.5, c, "interpolation-gaussian")),
    SuiteCase("homogeneous-weight-gaussian", 40.0, 512, 2.0,
              lambda g, c, seed, jobs: homogeneous_weight_bound_check(_gaussian(g), 0.5, 1.5, c,
                                                                      "homogeneous-weight-gaussian")),
    SuiteCase("propagator-gaussian", 80.0, 1024, 2.0,
              lambda g, c, seed, jobs: propagator_weight_growth(_gaussian(g), 1.0, list(np.linspace(0.0, 2.0, 9)),
                                                                c, "propagator-gaussian")),
)


def run_inequality_suite(
    seed: int = 0,
    jobs: int = 1,
    refine: bool = True,
    ceilings: Optional[Dict[str, float]] = None,
) -> List[Tuple[RatioReport, Optional[RatioReport]]]:
    """Every suite case at its base grid and, with refine, at n → 2n"""
    out: List[Tuple[RatioReport, Optional[RatioReport]]] = []
    for case in SUITE:
        ceiling = (ceilings or {}).get(case.test_id, case.ceiling)
        base = case.run(make_grid(1, case.L, case.n), ceiling, seed, jobs)
        refined = case.run(make_grid(1, case.L, 2 * case.n), ceiling, seed, jobs) if refine else None
        out.append((base, refined))
        logger.info("✅ suite case", test_id=case.test_id, max_ratio=base.max_ratio,
                    refined_max=refined.max_ratio if refined else None, bounded=base.ratio_bounded)
    return out


def refinement_drift(base: RatioReport, refined: RatioReport) -> float:
    """Relative change of the max ratio under one refinement step"""
    if base.max_ratio == 0.0:
        return 0.0 if refined.max_ratio == 0.0 else math.inf
    return abs(refined.max_ratio - base.max_ratio) / base.max_ratio


@dataclass(frozen=True)
class SuiteOutcome:
    test_id: str
    max_ratio: float
    refined_max: Optional[float]
    drift: Optional[float]
    bounded: bool
    expected_bounded: bool

    @property
    def passed(self) -> bool:
        stable = self.drift is None or self.drift <= MAX_REFINEMENT_DRIFT
        return self.bounded == self.expected_bounded and stable


MAX_REFINEMENT_DRIFT = 0.2
MIN_WINDOW_CONTRAST = 3.0


def suite_outcomes(results: Sequence[Tuple[RatioReport, Optional[RatioReport]]]) -> List[SuiteOutcome]:
    expected = {case.test_id: case.expect_bounded for case in SUITE}
    outcomes = []
    for base, refined in results:
        outcomes.append(SuiteOutcome(
            test_id=base.test_id,
            max_ratio=base.max_ratio,
            refined_max=refined.max_ratio if refined is not None else None,
            drift=refinement_drift(base, refined) if refined is not None else None,
            bounded=base.ratio_bounded,
            expected_bounded=expected.get(base.test_id, True),
        ))
    return outcomes


def window_contrast(inside: RatioReport, outside: RatioReport) -> float:
    """Outside-window max ratio over the inside-window max ratio"""
    if inside.max_ratio == 0.0:
        return math.inf
    return outside.max_ratio / inside.max_ratio
