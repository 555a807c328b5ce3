"""
⏱️ Nonlinearity, Strang steps, monitors and trajectories
"""

import dataclasses

import numpy as np
import pytest
from pydantic import ValidationError

from src.errors import ParameterError
from src.evolution import (
    IntegratorConfig,
    blowup_monitor,
    evolve,
    hartree_nonlinearity,
    nonautonomous_coefficient,
    phase_potential,
    strang_step,
)
from src.grid_spectral import Field, GaussianData, cellavg_zero_mode, free_propagate, make_grid, sample, spectral_l2_sq
from src.observables import record_observables


def _config(**kw):
    kw.setdefault("dt", 1e-3)
    kw.setdefault("t_end", 0.0)
    kw.setdefault("track_x_norm", False)
    return IntegratorConfig(**kw)


# =================== NONLINEARITY ===================

def test_nonlinearity_of_zero_field(params_1d, grid_1d):
    out = hartree_nonlinearity(Field(grid_1d, np.zeros(grid_1d.shape)), params_1d)
    assert np.all(out.values == 0)


def test_nonlinearity_is_gauge_equivariant(params_1d, gaussian_1d):
    phase = np.exp(0.7j)
    rotated = hartree_nonlinearity(gaussian_1d.scaled(phase), params_1d).values
    assert np.allclose(rotated, phase * hartree_nonlinearity(gaussian_1d, params_1d).values, atol=1e-12)


def test_nonlinearity_on_plane_wave(params_1d, grid_1d):
    c = 0.8
    k = 2 * np.pi * 5 / grid_1d.L[0]
    wave = Field(grid_1d, c * np.exp(1j * k * grid_1d.axes[0]))
    p = params_1d.p
    out = hartree_nonlinearity(wave, params_1d, zero_mode="cellavg")
    expected = cellavg_zero_mode(grid_1d, params_1d.gamma) * c ** (2 * p - 2) * wave.values
    assert np.allclose(out.values, expected, rtol=1e-10)
    assert np.allclose(hartree_nonlinearity(wave, params_1d, zero_mode="zero").values, 0.0, atol=1e-10)


def test_modulus_floor_regularizes_zeros(params_1d, grid_1d):
    values = np.zeros(grid_1d.shape)
    values[500:520] = 1.0
    field = Field(grid_1d, values)
    plain = phase_potential(field, params_1d)
    assert np.all(plain[:400] == 0)
    floored = phase_potential(field, params_1d, modulus_floor=0.1)
    assert np.all(np.isfinite(floored))
    assert np.any(floored[:400] != 0)


# =================== STRANG STEP ===================

def test_step_without_coupling_is_free_flow(params_1d, gaussian_1d):
    free = params_1d.with_updates(mu=0.0)
    stepped = strang_step(gaussian_1d, 0.0, 0.01, free, _config())
    assert np.allclose(stepped.values, free_propagate(gaussian_1d, 0.01).values, atol=1e-14)
    assert stepped.t == pytest.approx(0.01)


def test_nonlinear_phase_keeps_modulus(params_1d, gaussian_1d):
    potential = phase_potential(gaussian_1d, params_1d)
    rotated = np.exp(1j * potential * 0.05) * gaussian_1d.values
    assert np.max(np.abs(np.abs(rotated) - np.abs(gaussian_1d.values))) < 1e-13


def test_step_conserves_mass(params_1d, gaussian_1d):
    before = spectral_l2_sq(gaussian_1d)
    after = spectral_l2_sq(strang_step(gaussian_1d, 0.0, 1e-2, params_1d, _config()))
    assert abs(after - before) / before <= 1e-10


def test_step_is_time_reversible(params_1d, gaussian_1d):
    cfg = _config()
    forward = strang_step(gaussian_1d, 0.0, 0.02, params_1d, cfg)
    back = strang_step(forward, 0.02, -0.02, params_1d, cfg)
    err = np.sqrt(spectral_l2_sq(back.with_values(back.values - gaussian_1d.values)))
    assert err <= 1e-8 * gaussian_1d.l2_norm()


def _final_state(field, params, dt, t_end):
    u = field
    steps = int(round(t_end / dt))
    cfg = _config(dt=dt)
    for i in range(steps):
        u = strang_step(u, i * dt, dt, params, cfg)
    return u.values


@pytest.mark.slow
def test_strang_splitting_is_second_order(params_1d):
    grid = make_grid(1, 40.0, 256)
    u0 = sample(grid, GaussianData(a=1.0, sigma=0.5))
    t_end, dt = 0.5, 0.02
    reference = _final_state(u0, params_1d, dt / 64, t_end)
    errors = [np.linalg.norm(_final_state(u0, params_1d, dt / 2 ** j, t_end) - reference) for j in range(3)]
    for coarse, fine in zip(errors, errors[1:]):
        assert 3.5 <= coarse / fine <= 4.5


# =================== MONITORS ===================

def test_monitor_decisions(params_1d, gaussian_1d):
    cfg = _config()
    initial = record_observables(gaussian_1d, params_1d, track_x_norm=False)
    assert blowup_monitor(initial, initial, cfg) == "continue"
    steep = dataclasses.replace(initial, grad_l2_sq=initial.grad_l2_sq * 1.5e3)
    assert blowup_monitor(steep, initial, cfg) == "blowup-indicated"
    rough = dataclasses.replace(initial, spectral_tail_fraction=0.2)
    assert blowup_monitor(rough, initial, cfg) == "resolution-lost"


# =================== NONAUTONOMOUS COEFFICIENT ===================

def test_nonautonomous_coefficient(params_2d_scattering):
    assert nonautonomous_coefficient(0.0, 4.0, params_2d_scattering) == 1.0
    exponent = 2 * 0.9 - 2 - 0.5
    assert nonautonomous_coefficient(0.125, 4.0, params_2d_scattering) == pytest.approx(0.5 ** exponent)
    with pytest.raises(ParameterError):
        nonautonomous_coefficient(0.25, 4.0, params_2d_scattering)


def test_nonautonomous_horizon_is_enforced(params_2d_scattering):
    with pytest.raises(ValidationError):
        IntegratorConfig(dt=1e-3, t_end=0.3, nonautonomous=True, chirp_b=4.0)
    grid = make_grid(2, 20.0, 32)
    late = sample(grid, GaussianData()).with_time(0.1)
    cfg = IntegratorConfig(dt=1e-2, t_end=0.2, nonautonomous=True, chirp_b=4.0)
    with pytest.raises(ParameterError):
        evolve(late, params_2d_scattering, cfg)


# =================== TRAJECTORIES ===================

def test_zero_horizon_gives_single_record(params_1d, gaussian_1d):
    result = evolve(gaussian_1d, params_1d, _config())
    assert result.halt_reason == "completed"
    assert len(result.records) == 1
    assert result.final is gaussian_1d


def test_free_evolution_matches_closed_form(params_1d):
    grid = make_grid(1, 40.0, 512)
    u0 = sample(grid, GaussianData())
    result = evolve(u0, params_1d.with_updates(mu=0.0), _config(dt=0.01, t_end=0.5))
    x = grid.axes[0]
    exact = (1 + 2j) ** -0.5 * np.exp(-x * x / (1 + 2j))
    assert result.halt_reason == "completed"
    assert result.final.t == pytest.approx(0.5)
    assert np.max(np.abs(result.final.values - exact)) < 1e-9


def test_last_step_lands_on_horizon(params_1d, gaussian_1d):
    result = evolve(gaussian_1d, params_1d, _config(dt=0.03, t_end=0.1, record_every=2))
    assert result.steps_taken == 4
    assert result.final.t == pytest.approx(0.1, abs=1e-15)
    assert result.times[-1] == result.final.t
    assert np.all(np.diff(result.times) > 0)


def test_snapshots_are_captured(params_1d, gaussian_1d):
    result = evolve(gaussian_1d, params_1d, _config(dt=0.01, t_end=0.05, snapshot_times=(0.0, 0.02, 0.05)))
    assert sorted(result.snapshots) == [0.0, 0.02, 0.05]
    assert result.snapshots[0.0] is gaussian_1d
    assert result.snapshots[0.05].t == pytest.approx(0.05)


def test_non_finite_state_halts(params_1d, gaussian_1d):
    exploding = params_1d.with_updates(mu=complex(0.0, -1e300))
    result = evolve(gaussian_1d, exploding, _config(dt=0.01, t_end=0.05, zero_mode="cellavg"))
    assert result.halt_reason == "non-finite"
    assert result.steps_taken == 0
    assert result.final is gaussian_1d


@pytest.mark.slow
def test_focusing_run_conserves(params_1d, gaussian_1d):
    cfg = _config(dt=1e-4, t_end=1.0, record_every=1000, zero_mode="cellavg")
    result = evolve(gaussian_1d, params_1d, cfg)
    assert result.halt_reason == "completed"
    mass, energy = result.series("mass"), result.series("energy")
    assert np.max(np.abs(mass - mass[0])) / mass[0] <= 1e-6
    assert np.max(np.abs(energy - energy[0])) / max(abs(energy[0]), 1e-12) <= 1e-5
    momentum = np.array([r.momentum[0] for r in result.records])
    assert np.max(np.abs(momentum - momentum[0])) <= 1e-8
