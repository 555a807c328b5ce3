"""
⏱️ TIME INTEGRATION
===================

Strang splitting for

    i u_t + Δu + μ κ(t) (K_γ * |u|^p) |u|^{p-2} u = 0

with κ ≡ 1 for the autonomous equation and κ(t) = (1 - b t)^{N(p-1)-2-γ}
for the nonautonomous (pseudo-conformal) one. The nonlinear substep is
the exact flow u ↦ e^{i μ κ W |u|^{p-2} τ} u: the potential is real and
|u| does not change under it.

A trajectory never raises on numerical failure; the halt reason says
what happened.
"""

import math
import time
from dataclasses import dataclass, field as dc_field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import structlog
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field as PydField, model_validator

from .errors import NonFiniteStateError, ParameterError
from .grid_spectral import Field, free_propagate
from .observables import ObservableRecord, hartree_potential, record_observables
from .params import ModelParameters
from .settings import ZeroMode

logger = structlog.get_logger(__name__)

HaltReason = Literal["completed", "blowup-indicated", "resolution-lost", "non-finite"]
MonitorDecision = Literal["continue", "blowup-indicated", "resolution-lost"]


# =================== CONFIGURATION ===================

class IntegratorConfig(BaseModel):
    """Fixed-step integrator settings and halt thresholds"""

    model_config = ConfigDict(frozen=True)

    dt: float = PydField(..., gt=0, description="Time step")
    t_end: float = PydField(..., ge=0, description="Horizon measured from the initial field time")
    record_every: int = PydField(default=10, ge=1, description="Steps between records")
    nonautonomous: bool = PydField(default=False, description="Use the (1-bt)^e coefficient")
    chirp_b: float = PydField(default=0.0, description="b of the nonautonomous coefficient")
    grad_factor: float = PydField(default=1e3, gt=1, description="grad_l2_sq growth that signals blow-up")
    tail_threshold: float = PydField(default=0.1, gt=0, le=1, description="Spectral tail fraction limit")
    modulus_floor: float = PydField(default=0.0, ge=0, description="ε in (|u|²+ε²)^{(p-2)/2}")
    zero_mode: ZeroMode = PydField(default="cellavg", description="Riesz potential zero-mode policy")
    track_x_norm: bool = PydField(default=True, description="Evaluate the 𝔛-norm in every record")
    snapshot_times: Tuple[float, ...] = PydField(default=(), description="Times to capture fields")

    @model_validator(mode="after")
    def _horizon(self) -> "IntegratorConfig":
        for name in ("dt", "t_end", "chirp_b", "modulus_floor"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.nonautonomous and self.chirp_b > 0 and self.t_end > 1.0 / self.chirp_b:
            raise ValueError(f"nonautonomous horizon t_end={self.t_end} exceeds 1/b={1.0 / self.chirp_b}")
        return self


@dataclass
class TrajectoryResult:
    params: ModelParameters
    config: IntegratorConfig
    records: List[ObservableRecord]
    final: Field
    halt_reason: HaltReason
    steps_taken: int
    snapshots: Dict[float, Field] = dc_field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def times(self) -> List[float]:
        return [r.t for r in self.records]

    def series(self, name: str) -> NDArray[np.float64]:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)


# =================== NONLINEARITY ===================

def nonautonomous_coefficient(t: float, b: float, params: ModelParameters) -> float:
    """(1 - b t)^{N(p-1)-2-γ}"""
    base = 1.0 - b * t
    if base <= 0.0:
        raise ParameterError(f"nonautonomous coefficient undefined at t={t} (1 - b t = {base})")
    exponent = params.N * (params.p - 1.0) - 2.0 - params.gamma
    return base ** exponent


def phase_potential(
    field: Field,
    params: ModelParameters,
    modulus_floor: float = 0.0,
    zero_mode: Optional[ZeroMode] = None,
) -> NDArray[np.float64]:
    """W |u|^{p-2} as a real array, 0 where u vanishes (unless ε > 0)"""
    W = hartree_potential(field, params.gamma, params.p, zero_mode)
    modulus = np.abs(field.values)
    if modulus_floor > 0.0:
        factor = (modulus ** 2 + modulus_floor ** 2) ** ((params.p - 2.0) / 2.0)
    else:
        factor = np.zeros_like(modulus)
        nz = modulus > 0
        factor[nz] = modulus[nz] ** (params.p - 2.0)
    return W * factor


def hartree_nonlinearity(
    field: Field,
    params: ModelParameters,
    modulus_floor: float = 0.0,
    zero_mode: Optional[ZeroMode] = None,
) -> Field:
    """N(u) = (K_γ * |u|^p) |u|^{p-2} u"""
    return field.with_values(phase_potential(field, params, modulus_floor, zero_mode) * field.values)


def _nonlinear_half(
    values: NDArray[np.complex128], field: Field, coupling: complex, tau: float,
    params: ModelParameters, config: IntegratorConfig,
) -> NDArray[np.complex128]:
    potential = phase_potential(field.with_values(values), params, config.modulus_floor, config.zero_mode)
    with np.errstate(all="ignore"):
        out = np.exp(1j * coupling * potential * tau) * values
    if not np.all(np.isfinite(out)):
        raise NonFiniteStateError("non-finite values in nonlinear substep")
    return out


def strang_step(field: Field, t: float, dt: float, params: ModelParameters, config: IntegratorConfig) -> Field:
    """Half nonlinear phase, full free flow, half nonlinear phase"""
    mu = complex(params.mu)
    if config.nonautonomous:
        mu_first = mu * nonautonomous_coefficient(t + 0.25 * dt, config.chirp_b, params)
        mu_second = mu * nonautonomous_coefficient(t + 0.75 * dt, config.chirp_b, params)
    else:
        mu_first = mu_second = mu

    values = _nonlinear_half(field.values, field, mu_first, 0.5 * dt, params, config)
    try:
        moved = free_propagate(field.with_values(values), dt)
    except ValueError as exc:
        raise NonFiniteStateError(str(exc)) from exc
    values = _nonlinear_half(moved.values, moved, mu_second, 0.5 * dt, params, config)
    return field.with_values(values, t=t + dt)


# =================== MONITORS ===================

def blowup_monitor(
    record_now: ObservableRecord, record_initial: ObservableRecord, config: IntegratorConfig
) -> MonitorDecision:
    """Gradient growth beyond grad_factor, or spectral tail above threshold"""
    g0 = record_initial.grad_l2_sq
    if g0 > 0.0 and record_now.grad_l2_sq > config.grad_factor * g0:
        return "blowup-indicated"
    if record_now.spectral_tail_fraction > config.tail_threshold:
        return "resolution-lost"
    return "continue"


# =================== TRAJECTORIES ===================

def evolve(field: Field, params: ModelParameters, config: IntegratorConfig) -> TrajectoryResult:
    """Fixed-step Strang integration with records, snapshots and monitors"""
    if field.grid.N != params.N:
        raise ParameterError(f"grid dimension {field.grid.N} does not match N={params.N}")
    t0 = float(field.t)
    if config.nonautonomous and config.chirp_b > 0 and t0 + config.t_end > 1.0 / config.chirp_b:
        raise ParameterError("nonautonomous run would pass t = 1/b")

    started = time.perf_counter()
    steps = int(math.ceil(config.t_end / config.dt - 1e-9)) if config.t_end > 0 else 0

    def record(u: Field) -> ObservableRecord:
        return record_observables(u, params, config.zero_mode, config.track_x_norm)

    initial = record(field)
    records = [initial]
    pending = sorted(t0 + s for s in config.snapshot_times)
    snapshots: Dict[float, Field] = {}
    while pending and pending[0] <= t0:
        snapshots[pending.pop(0)] = field

    logger.info("🚀 trajectory start", N=params.N, p=params.p, gamma=params.gamma,
                steps=steps, dt=config.dt, nonautonomous=config.nonautonomous)

    u = field
    halt: HaltReason = "completed"
    taken = 0
    for i in range(steps):
        t_now = u.t
        t_next = t0 + min((i + 1) * config.dt, config.t_end)
        try:
            u = strang_step(u, t_now, t_next - t_now, params, config)
        except (NonFiniteStateError, ValueError) as exc:
            halt = "non-finite"
            logger.warning("❌ non-finite state, halting", t=t_now, error=str(exc))
            break
        u = u.with_time(t_next)
        taken += 1

        while pending and pending[0] <= t_next + 1e-12:
            snapshots[pending.pop(0)] = u

        if (i + 1) % config.record_every == 0 or i + 1 == steps:
            current = record(u)
            records.append(current)
            decision = blowup_monitor(current, initial, config)
            if decision != "continue":
                halt = decision
                logger.warning("⚠️ monitor tripped", reason=decision, t=current.t,
                               grad_ratio=current.grad_l2_sq / initial.grad_l2_sq if initial.grad_l2_sq else None,
                               tail=current.spectral_tail_fraction)
                break

    if records[-1].t != u.t:
        records.append(record(u))

    elapsed = time.perf_counter() - started
    logger.info("✅ trajectory end", halt_reason=halt, steps=taken, t=u.t, wall_time=round(elapsed, 3))
    return TrajectoryResult(
        params=params,
        config=config,
        records=records,
        final=u,
        halt_reason=halt,
        steps_taken=taken,
        snapshots=snapshots,
        wall_time=elapsed,
    )
