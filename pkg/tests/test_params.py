"""
📐 Parameter admissibility, derived constants, orders and existence time
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.errors import ParameterError
from src.params import (
    ModelParameters,
    combined_report,
    contraction_polynomials,
    derived_constants,
    existence_time_estimate,
    suggest_orders,
    validate_blowup_regime,
    validate_scattering_regime,
    validate_wellposedness,
)


# =================== STRUCTURAL VALIDATION ===================

def test_gamma_outside_range_is_rejected():
    with pytest.raises(ValidationError):
        ModelParameters(N=1, p=1.8, gamma=1.0, m=0.55, M=6, M0=4)


def test_non_finite_values_are_rejected():
    with pytest.raises(ValidationError):
        ModelParameters(N=1, p=float("nan"), gamma=0.05, m=0.55, M=6, M0=4)
    with pytest.raises(ValidationError):
        ModelParameters(N=1, p=1.8, gamma=0.05, mu=complex(1, float("inf")), m=0.55, M=6, M0=4)


def test_report_is_recomputed_on_update(params_1d):
    assert params_1d.report.regime == "wellposed"
    moved = params_1d.with_updates(p=1.3)
    assert "p > 4/3" in moved.report.failed_ids
    assert params_1d.report.regime == "wellposed"


# =================== WELL-POSEDNESS ===================

def test_one_dimensional_example_is_wellposed(params_1d):
    report = validate_wellposedness(params_1d)
    assert report.regime == "wellposed"
    assert report.ok


def test_p_below_four_thirds_is_reported():
    params = ModelParameters(N=1, p=1.3, gamma=0.05, m=0.55, M=6, M0=4)
    report = validate_wellposedness(params)
    assert report.regime == "neither"
    assert "p > 4/3" in report.failed_ids


def test_weight_above_window_is_reported():
    params = ModelParameters(N=1, p=1.8, gamma=0.05, m=3.0, M=6, M0=4)
    report = validate_wellposedness(params)
    cond = report.condition("m < (N-2gamma)/(2(2-p))")
    assert not cond.satisfied
    assert cond.rhs == pytest.approx(2.25)


def test_each_condition_id_appears_once(params_1d, params_3d_blowup):
    for params in (params_1d, params_3d_blowup):
        for report in (validate_wellposedness(params), validate_blowup_regime(params), combined_report(params)):
            ids = [c.id for c in report.conditions]
            assert len(ids) == len(set(ids))


def test_validators_never_raise_for_violations():
    params = ModelParameters(N=2, p=2.5, gamma=1.9, m=0.1, M=1, M0=1, mu=-1.0)
    for report in (validate_wellposedness(params), validate_blowup_regime(params),
                   validate_scattering_regime(params)):
        assert not report.ok
        assert "p < 2" in report.failed_ids


def test_report_renderings(params_1d):
    text = params_1d.report.to_text()
    assert text.startswith("regime: wellposed")
    kv = params_1d.report.to_kv()
    assert kv["regime"] == "wellposed"
    assert kv["condition.0.satisfied"] in (True, False)


# =================== BLOW-UP REGIME ===================

def test_three_dimensional_example_is_blowup_admissible(params_3d_blowup):
    report = validate_blowup_regime(params_3d_blowup)
    assert report.regime == "blowup", report.messages
    assert params_3d_blowup.report.regime == "both"


def test_one_dimensional_example_is_not_blowup_admissible(params_1d):
    report = validate_blowup_regime(params_1d)
    assert "gamma < min{N(p-1)-2, ((N+2)(p-1)-2)/2, N(3p-4)/(2p)}" in report.failed_ids
    assert report.condition("gamma < min{N(p-1)-2, ((N+2)(p-1)-2)/2, N(3p-4)/(2p)}").rhs < 0


def test_mass_critical_boundary_is_rejected():
    params = ModelParameters(N=3, p=1.9, gamma=0.7, m=3.0, M=13, M0=7)
    report = validate_blowup_regime(params)
    assert report.regime == "neither"
    assert "gamma < min{N(p-1)-2, ((N+2)(p-1)-2)/2, N(3p-4)/(2p)}" in report.failed_ids


def test_complex_coupling_fails_focusing_condition(params_3d_blowup):
    report = validate_blowup_regime(params_3d_blowup.with_updates(mu=1 + 0.5j))
    assert "mu > 0" in report.failed_ids


# =================== SCATTERING REGIME ===================

def test_two_dimensional_scattering_example(params_2d_scattering):
    report = validate_scattering_regime(params_2d_scattering)
    assert report.regime == "scattering", report.messages


def test_scattering_needs_positive_chirp(params_2d_scattering):
    report = validate_scattering_regime(params_2d_scattering.with_updates(b=0.0))
    assert report.failed_ids == ["b > 0"]


def test_one_dimensional_scattering_is_impossible(params_1d):
    report = validate_scattering_regime(params_1d.with_updates(b=1.0))
    assert "gamma < min{N(3p-4)/(2p), N(p-1)-1}" in report.failed_ids


# =================== DERIVED CONSTANTS ===================

def test_derived_constants_three_dimensional(params_3d_blowup):
    consts = derived_constants(params_3d_blowup)
    assert consts.s_c == pytest.approx(1.0 / 9.0, rel=1e-12)
    assert consts.k_c == pytest.approx(0.1, rel=1e-12)
    assert consts.omega_c_sq == pytest.approx(0.102273, rel=1e-5)
    assert consts.omega_c_sq_valid


def test_derived_constants_boundary_and_subcritical(params_1d):
    boundary = derived_constants(ModelParameters(N=3, p=1.9, gamma=0.7, m=3.0, M=13, M0=7))
    assert abs(boundary.s_c) < 1e-12
    assert derived_constants(params_1d).s_c == pytest.approx(-0.78125, rel=1e-12)


def test_omega_invalid_when_denominator_vanishes():
    # N(p-2) + N - gamma = 0 for N=2, p=1.5, gamma=1
    consts = derived_constants(ModelParameters(N=2, p=1.5, gamma=1.0, m=1.0, M=6, M0=4))
    assert not consts.omega_c_sq_valid
    assert math.isnan(consts.omega_c_sq)


def test_positive_critical_index_matches_gamma_bound():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        N = int(rng.integers(1, 4))
        p = float(rng.uniform(1.01, 1.99))
        gamma = float(rng.uniform(0.01, N - 0.01))
        consts = derived_constants(ModelParameters(N=N, p=p, gamma=gamma, m=1.0, M=6, M0=4))
        bound = N * (p - 1.0) - 2.0
        if abs(gamma - bound) < 1e-9:
            continue
        assert (consts.s_c > 0) == (gamma < bound)


# =================== DERIVATIVE ORDERS ===================

@pytest.mark.parametrize(
    "N, p, gamma, m, expected",
    [(1, 1.8, 0.05, 0.55, (2, 6)), (3, 1.9, 0.5, 3.0, (7, 13))],
)
def test_suggest_orders(N, p, gamma, m, expected):
    assert suggest_orders(N, p, gamma, m) == expected


def test_suggest_orders_rejects_boundary_weight():
    with pytest.raises(ParameterError, match="weight out of range"):
        suggest_orders(1, 1.8, 0.05, 2.25)


def test_weight_at_rounded_upper_bound_is_rejected():
    params = ModelParameters(N=1, p=1.8, gamma=0.05, m=2.25, M=12, M0=6)
    report = validate_wellposedness(params)
    condition = report.condition("m < (N-2gamma)/(2(2-p))")
    assert condition.rhs == pytest.approx(2.25)
    assert not condition.satisfied


def test_suggested_orders_validate():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(200):
        N = int(rng.integers(1, 4))
        p = float(rng.uniform(1.4, 1.95))
        gamma = float(rng.uniform(0.01, 0.5 * N))
        if gamma >= N * (3 * p - 4) / (2 * p):
            continue
        lower = max((2 * gamma + N) / (4 * (p - 1)), N / 2)
        upper = (N - 2 * gamma) / (2 * (2 - p))
        if not lower < upper:
            continue
        m = float(rng.uniform(lower, upper))
        if not lower < m < upper:
            continue
        M0, M = suggest_orders(N, p, gamma, m)
        report = validate_wellposedness(ModelParameters(N=N, p=p, gamma=gamma, m=m, M=M, M0=M0))
        assert report.regime == "wellposed", report.messages
        checked += 1
    assert checked > 30


# =================== CONTRACTION POLYNOMIALS ===================

def test_polynomials_vanish_at_zero_radius(params_1d):
    poly = contraction_polynomials(1.0, 0.0, params_1d)
    assert (poly.G1, poly.G2, poly.J1, poly.J2) == (0.0, 0.0, 0.0, 0.0)


def test_polynomial_g1_direct_sums(params_1d):
    # M + M0 - N = 3
    three = params_1d.with_updates(M=2, M0=2)
    assert contraction_polynomials(1.0, 1.0, three).G1 == pytest.approx(4.0)
    one = params_1d.with_updates(M=1, M0=1)
    assert contraction_polynomials(2.0, 1.0, one).G1 == pytest.approx(1.0 + 2.0 ** -0.2)


def test_polynomials_monotone(params_1d):
    base = contraction_polynomials(1.0, 0.5, params_1d)
    bigger_R = contraction_polynomials(1.0, 0.6, params_1d)
    bigger_lam = contraction_polynomials(1.5, 0.5, params_1d)
    for name in ("G1", "G2", "J1", "J2"):
        assert getattr(bigger_R, name) > getattr(base, name)
        assert getattr(bigger_lam, name) < getattr(base, name)


def test_polynomials_saturate_instead_of_overflowing(params_1d):
    poly = contraction_polynomials(1e-200, 1e200, params_1d)
    assert poly.saturated
    assert all(math.isfinite(v) for v in (poly.G1, poly.G2, poly.J1, poly.J2))


def test_polynomials_reject_bad_inputs(params_1d):
    with pytest.raises(ParameterError):
        contraction_polynomials(0.0, 1.0, params_1d)
    with pytest.raises(ParameterError):
        contraction_polynomials(1.0, -1.0, params_1d)


# =================== EXISTENCE TIME ===================

def _feasible(T, eta, lam, params, c=1.0, c1=1.0, c3=1.0):
    R = 2 * c * eta
    q = params.N // 2 + 1 + params.m
    poly = contraction_polynomials(lam, R, params)
    bracket = (1 + T * T) ** (q / 2)
    g = poly.G1 * poly.G2
    return (
        0.5 * bracket + c * T * bracket * g / R <= 1
        and c1 * T * bracket * (eta + g) <= lam / 2
        and c3 * T * bracket * (poly.J1 * poly.G2 + poly.G1 * poly.J2) < 1
    )


def test_existence_time_matches_bisection_oracle(params_1d):
    est = existence_time_estimate(1.0, 1.0, params_1d, constants=(1.0, 1.0, 1.0))
    assert est.feasible
    assert 0.0 < est.T <= 1.0
    assert _feasible(est.T, 1.0, 1.0, params_1d)
    if est.T < 1.0:
        assert not _feasible(est.T * (1 + 1e-6), 1.0, 1.0, params_1d)


def test_existence_time_caps_at_one_for_small_data(params_1d):
    est = existence_time_estimate(1e-12, 1.0, params_1d, constants=(1.0, 1.0, 1.0))
    assert est.T == 1.0


def test_existence_time_monotone_in_lambda(params_1d):
    times = [existence_time_estimate(0.5, lam, params_1d, constants=(1.0, 1.0, 1.0)).T
             for lam in (0.5, 1.0, 2.0, 4.0)]
    assert all(b >= a for a, b in zip(times, times[1:]))


def test_nonautonomous_existence_time_respects_horizon(params_2d_scattering):
    est = existence_time_estimate(1e-12, 1.0, params_2d_scattering, constants=(1.0, 1.0, 1.0),
                                  nonautonomous_b=4.0)
    assert est.horizon < 0.25
    assert est.T <= est.horizon


def test_existence_time_rejects_bad_inputs(params_1d):
    with pytest.raises(ParameterError):
        existence_time_estimate(0.0, 1.0, params_1d)
    with pytest.raises(ParameterError):
        existence_time_estimate(1.0, -1.0, params_1d)
