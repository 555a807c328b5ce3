"""
🧪 EXPERIMENT HARNESS
=====================

Line-oriented run configs, the experiment presets that orchestrate the
library, and everything that lands on disk: CSV time series, GHRT
snapshots, text/kv reports and the MANIFEST.

Exit codes: 0 completed, 2 blowup-indicated, 3 resolution-lost,
4 non-finite, 64 config error.
"""

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict, Field as PydField, ValidationError

from . import __version__
from .criteria import (
    blowup_criterion,
    chirp_b_ranges,
    chirped_observables,
    internal_time,
    physical_time,
    pseudo_conformal_map,
    scattering_profile,
    scattering_state,
    verdict_for_field,
)
from .errors import ConfigError, GHartreeError, ParameterError, PreconditionError
from .evolution import HaltReason, IntegratorConfig, TrajectoryResult, evolve
from .grid_spectral import (
    BandLimitedData,
    ChirpData,
    Field,
    GaussianData,
    Grid,
    PowerWeightData,
    bessel,
    chirp,
    free_propagate,
    make_grid,
    read_snapshot,
    sample,
    write_snapshot,
)
from .observables import ObservableRecord, csv_columns, min_weighted_modulus, virial_quantities, x_norm
from .params import (
    AdmissibilityReport,
    ModelParameters,
    derived_constants,
    existence_time_estimate,
    suggest_orders,
    validate_blowup_regime,
    validate_scattering_regime,
    validate_wellposedness,
)
from .settings import ChirpConvention, ZeroMode, get_settings
from .utils import config_digest, format_kv, gather_in_threads, parse_bool
from .weighted_checks import SUITE, run_inequality_suite, suite_outcomes, window_contrast

logger = structlog.get_logger(__name__)

Preset = Literal["params-report", "conservation", "virial", "blowup-demo", "scatter-demo", "inequality-suite"]
Action = Union[Preset, Literal["blowup-scan"]]

EXIT_CODES: Dict[str, int] = {
    "completed": 0,
    "blowup-indicated": 2,
    "resolution-lost": 3,
    "non-finite": 4,
}
EXIT_CONFIG_ERROR = 64


# =================== CONFIG SCHEMA ===================

def _number(text: str) -> Union[float, complex]:
    try:
        return float(text)
    except ValueError:
        return complex(text.replace(" ", ""))


def _float_list(text: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


KEY_SCHEMA: Dict[str, Callable[[str], Any]] = {
    "preset": str,
    "params.N": int,
    "params.p": float,
    "params.gamma": float,
    "params.mu": _number,
    "params.m": float,
    "params.M": int,
    "params.M0": int,
    "params.b": float,
    "grid.N": int,
    "grid.L": _float_list,
    "grid.n": _int_list,
    "integrator.dt": float,
    "integrator.t_end": float,
    "integrator.record_every": int,
    "integrator.nonautonomous": parse_bool,
    "integrator.grad_factor": float,
    "integrator.tail_threshold": float,
    "integrator.modulus_floor": float,
    "integrator.zero_mode": str,
    "integrator.track_x_norm": parse_bool,
    "data.kind": str,
    "data.a": _number,
    "data.m": float,
    "data.sigma": float,
    "data.chirp": parse_bool,
    "data.convention": str,
    "data.seed": int,
    "data.bandwidth": float,
    "blowup.b_factor": float,
    "scan.b_min": float,
    "scan.b_max": float,
    "scan.count": int,
    "scan.simulate": parse_bool,
    "scatter.compare_t": float,
    "scatter.s": float,
    "output.dir": str,
    "output.timeseries": parse_bool,
    "output.snapshots": _float_list,
    "output.reports": parse_bool,
    "run.seed": int,
    "run.jobs": int,
    "run.strict_regime": parse_bool,
}


# =================== CONFIG MODELS ===================

class GridBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")
    N: Optional[int] = None
    L: Tuple[float, ...] = (40.0,)
    n: Tuple[int, ...] = (256,)


class IntegratorBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")
    dt: float = PydField(default=1e-3, gt=0)
    t_end: float = PydField(default=1.0, ge=0)
    record_every: int = PydField(default=10, ge=1)
    nonautonomous: bool = False
    grad_factor: float = PydField(default=1e3, gt=1)
    tail_threshold: float = PydField(default=0.1, gt=0, le=1)
    modulus_floor: float = PydField(default=0.0, ge=0)
    zero_mode: Optional[ZeroMode] = None
    track_x_norm: bool = True


class DataBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")
    kind: Literal["power_weight", "gaussian", "band_limited"] = "gaussian"
    a: Union[float, complex] = 1.0
    m: Optional[float] = None
    sigma: float = PydField(default=1.0, gt=0)
    chirp: bool = False
    convention: Optional[ChirpConvention] = None
    seed: Optional[int] = None
    bandwidth: float = PydField(default=2.0, gt=0)


class BlowupBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")
    b_factor: float = PydField(default=1.25, gt=0)


class ScanBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")
    b_min: float = -10.0
    b_max: float = 10.0
    count: int = PydField(default=21, ge=1)
    simulate: bool = False


class ScatterBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")
    compare_t: float = PydField(default=0.0, ge=0)
    s: float = PydField(default=1.0, ge=0)


class OutputBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")
    dir: Optional[str] = None
    timeseries: bool = True
    snapshots: Tuple[float, ...] = ()
    reports: bool = True


class RunBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")
    seed: int = PydField(default=0, ge=0)
    jobs: int = PydField(default=1, ge=1)
    strict_regime: bool = True


class RunConfig(BaseModel):
    """A parsed, validated experiment description"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    preset: Preset
    params: ModelParameters
    grid: GridBlock = GridBlock()
    integrator: IntegratorBlock = IntegratorBlock()
    data: Optional[DataBlock] = None
    blowup: BlowupBlock = BlowupBlock()
    scan: ScanBlock = ScanBlock()
    scatter: ScatterBlock = ScatterBlock()
    output: OutputBlock = OutputBlock()
    run: RunBlock = RunBlock()
    entries: Dict[str, str] = PydField(default_factory=dict, description="Raw key = value pairs, for the MANIFEST")

    @property
    def zero_mode(self) -> ZeroMode:
        return self.integrator.zero_mode or get_settings().zero_mode

    def with_overrides(self, seed: Optional[int] = None, jobs: Optional[int] = None,
                       out_dir: Optional[str] = None) -> "RunConfig":
        run = self.run.model_copy(update={k: v for k, v in (("seed", seed), ("jobs", jobs)) if v is not None})
        output = self.output if out_dir is None else self.output.model_copy(update={"dir": out_dir})
        return self.model_copy(update={"run": run, "output": output})


# =================== PARSING ===================

def _tokenize(text: str) -> Tuple[Dict[str, str], Dict[str, int]]:
    entries: Dict[str, str] = {}
    lines: Dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected `key = value`, got {raw.strip()!r}", lines=[number])
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lines=[number])
        if key in lines:
            raise ConfigError(f"duplicate key {key!r}", lines=[lines[key], number])
        if key not in KEY_SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lines=[number])
        entries[key] = value
        lines[key] = number
    return entries, lines


def _nest(entries: Dict[str, str], lines: Dict[str, int]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in entries.items():
        try:
            converted = KEY_SCHEMA[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lines=[lines[key]]) from exc
        if "." in key:
            section, name = key.split(".", 1)
            nested.setdefault(section, {})[name] = converted
        else:
            nested[key] = converted
    return nested


def _validation_error(exc: ValidationError, lines: Dict[str, int]) -> ConfigError:
    cited: List[int] = []
    parts: List[str] = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"])
        parts.append(f"{loc}: {err['msg']}")
        for key, number in lines.items():
            if loc == key or loc.startswith(key + ".") or (loc and key.startswith(loc + ".")):
                cited.append(number)
    return ConfigError("invalid config: " + "; ".join(parts), lines=sorted(set(cited)))


REGIME_GATES: Dict[str, Callable[[ModelParameters], AdmissibilityReport]] = {
    "conservation": validate_wellposedness,
    "virial": validate_wellposedness,
    "blowup-demo": validate_blowup_regime,
    "scatter-demo": validate_scattering_regime,
}

# ids whose lhs comes from a single config key
_CONDITION_KEYS: Dict[str, str] = {
    "p < 2": "params.p",
    "p > 4/3": "params.p",
    "gamma > 0": "params.gamma",
    "mu > 0": "params.mu",
    "mu != 0": "params.mu",
    "b > 0": "params.b",
}


def _gate(report: AdmissibilityReport, lines: Dict[str, int], label: str) -> None:
    failed = report.failed_ids
    if not failed:
        return
    cited = sorted({lines[_CONDITION_KEYS[c]] for c in failed if _CONDITION_KEYS.get(c) in lines})
    raise ConfigError(f"{label} failed: " + ", ".join(failed), lines=cited, condition_ids=failed)


def parse_config(text: str) -> RunConfig:
    """`key = value` text with dotted sections and `#` comments into a validated RunConfig"""
    entries, lines = _tokenize(text)
    nested = _nest(entries, lines)
    if "preset" not in nested:
        raise ConfigError("missing key 'preset'")
    if "params" not in nested:
        raise ConfigError("missing params block")
    nested["entries"] = dict(entries)
    try:
        config = RunConfig.model_validate(nested)
    except ValidationError as exc:
        raise _validation_error(exc, lines) from exc

    params = config.params
    grid_N = config.grid.N if config.grid.N is not None else params.N
    if grid_N != params.N:
        raise ConfigError(f"grid.N = {grid_N} disagrees with params.N = {params.N}",
                          lines=[lines[k] for k in ("grid.N", "params.N") if k in lines])
    universal = params.report.condition("p < 2")
    if not universal.satisfied:
        raise ConfigError("validation failed: p < 2", lines=[lines["params.p"]], condition_ids=["p < 2"])
    if config.run.strict_regime and config.preset in REGIME_GATES:
        _gate(REGIME_GATES[config.preset](params), lines, f"{config.preset} regime")
    return config


def load_config(path: Union[str, Path]) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# =================== BUILDERS ===================

def build_grid(config: RunConfig) -> Grid:
    L: Any = config.grid.L if len(config.grid.L) > 1 else config.grid.L[0]
    n: Any = config.grid.n if len(config.grid.n) > 1 else config.grid.n[0]
    return make_grid(config.params.N, L, n)


def build_initial_data(config: RunConfig, grid: Grid, with_chirp: Optional[bool] = None) -> Field:
    """Sample the data block; `with_chirp` overrides data.chirp"""
    data = config.data or DataBlock()
    if data.kind == "gaussian":
        spec: Any = GaussianData(a=complex(data.a), sigma=data.sigma)
    elif data.kind == "power_weight":
        spec = PowerWeightData(a=complex(data.a), m=data.m if data.m is not None else config.params.m)
    else:
        seed = data.seed if data.seed is not None else config.run.seed
        spec = BandLimitedData(a=abs(complex(data.a)), bandwidth=data.bandwidth, seed=seed)
    apply_chirp = data.chirp if with_chirp is None else with_chirp
    if apply_chirp and config.params.b != 0.0:
        convention = data.convention or get_settings().chirp_convention
        spec = ChirpData(b=config.params.b, convention=convention, base=spec)
    return sample(grid, spec)


def integrator_config(config: RunConfig, **overrides: Any) -> IntegratorConfig:
    block = config.integrator
    values: Dict[str, Any] = dict(
        dt=block.dt,
        t_end=block.t_end,
        record_every=block.record_every,
        nonautonomous=block.nonautonomous,
        chirp_b=config.params.b,
        grad_factor=block.grad_factor,
        tail_threshold=block.tail_threshold,
        modulus_floor=block.modulus_floor,
        zero_mode=config.zero_mode,
        track_x_norm=block.track_x_norm,
        snapshot_times=config.output.snapshots,
    )
    values.update(overrides)
    return IntegratorConfig(**values)


# =================== PERSISTENCE ===================

def write_timeseries(records: Sequence[ObservableRecord], path: Union[str, Path]) -> Path:
    """Observables CSV, fixed column order, `%.17g` floats"""
    if not records:
        raise ParameterError("no records to write")
    N = len(records[0].momentum)
    frame = pd.DataFrame([r.as_row() for r in records], columns=csv_columns(N))
    target = Path(path)
    frame.to_csv(target, index=False, float_format="%.17g", na_rep="nan")
    return target


def read_timeseries(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, dtype=np.float64, float_precision="round_trip")


def write_snapshots(snapshots: Dict[float, Field], out: Path) -> List[Path]:
    paths = []
    for requested in sorted(snapshots):
        target = out / f"snapshot_t={requested:.6g}.ghrt"
        write_snapshot(snapshots[requested], target)
        paths.append(target)
    return paths


def write_report(out: Path, name: str, text: Optional[str], kv: Dict[str, object]) -> List[Path]:
    paths = []
    if text is not None:
        (out / f"{name}.txt").write_text(text, encoding="utf-8")
        paths.append(out / f"{name}.txt")
    (out / f"{name}.kv").write_text(format_kv(kv), encoding="utf-8")
    paths.append(out / f"{name}.kv")
    return paths


def write_manifest(out: Path, config: RunConfig, action: str, complete: bool, halt_reason: str) -> Path:
    settings = get_settings()
    data = config.data
    convention = (data.convention if data and data.convention else None) or settings.chirp_convention
    head: Dict[str, object] = {
        "version": __version__,
        "preset": action,
        "config_digest": config_digest(config.entries),
        "zero_mode": config.zero_mode,
        "chirp_convention": convention,
        "seed": config.run.seed,
        "complete": complete,
        "halt_reason": halt_reason,
    }
    for key in sorted(config.entries):
        head[f"config.{key}"] = config.entries[key]
    target = out / "MANIFEST"
    target.write_text(format_kv(head), encoding="utf-8")
    return target


# =================== RUN OUTCOME ===================

@dataclass
class RunOutcome:
    halt_reason: HaltReason = "completed"
    artifacts: List[Path] = dc_field(default_factory=list)
    summary: Dict[str, object] = dc_field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.halt_reason]


def _persist_trajectory(config: RunConfig, result: TrajectoryResult, out: Path, name: str = "timeseries") -> List[Path]:
    paths: List[Path] = []
    if config.output.timeseries:
        paths.append(write_timeseries(result.records, out / f"{name}.csv"))
    if result.snapshots:
        paths.extend(write_snapshots(result.snapshots, out))
    return paths


# =================== PRESET: PARAMS REPORT ===================

def _params_report(config: RunConfig, out: Path) -> RunOutcome:
    params = config.params
    consts = derived_constants(params)
    combined = params.report
    scattering = validate_scattering_regime(params)

    lines = [
        "ghartree parameter report",
        f"N = {params.N}  p = {params.p}  gamma = {params.gamma}  mu = {params.mu}",
        f"m = {params.m}  M = {params.M}  M0 = {params.M0}  b = {params.b}",
        f"s_c = {consts.s_c:.12g}  k_c = {consts.k_c:.12g}  omega_c^2 = {consts.omega_c_sq:.12g}",
        "",
        combined.to_text(),
        "scattering hypotheses:",
        scattering.to_text(),
    ]
    kv: Dict[str, object] = {
        "regime": combined.regime,
        "N": params.N, "p": params.p, "gamma": params.gamma, "mu": str(params.mu),
        "m": params.m, "M": params.M, "M0": params.M0, "b": params.b,
        "s_c": consts.s_c, "k_c": consts.k_c, "omega_c_sq": consts.omega_c_sq,
        "scattering_regime": scattering.regime,
    }
    kv.update(combined.to_kv(prefix="combined."))

    try:
        M0, M = suggest_orders(params.N, params.p, params.gamma, params.m)
        lines.append(f"suggested orders: M0 = {M0}, M = {M}")
        kv["suggested_M0"], kv["suggested_M"] = M0, M
    except ParameterError as exc:
        lines.append(f"suggested orders: {exc}")
        kv["suggested_orders"] = "weight out of range"

    if config.data is not None:
        u0 = build_initial_data(config, build_grid(config))
        eta = x_norm(u0, params).total
        lam = min_weighted_modulus(u0, params.m)
        kv["eta"], kv["lambda"] = eta, lam
        lines.append(f"eta = {eta:.12g}  lambda = {lam:.12g}")
        if lam > 0.0:
            estimate = existence_time_estimate(eta, lam, params)
            kv["existence_T"], kv["existence_feasible"] = estimate.T, estimate.feasible
            lines.append(f"existence time T = {estimate.T:.6g} (feasible = {estimate.feasible})")
            if params.b > 0:
                nonauto = existence_time_estimate(eta, lam, params, nonautonomous_b=params.b)
                kv["existence_T_nonautonomous"] = nonauto.T
                lines.append(f"nonautonomous existence time T = {nonauto.T:.6g}")
        else:
            lines.append("existence time: weighted modulus vanishes on the lattice")

    text = "\n".join(lines) + "\n"
    return RunOutcome(artifacts=write_report(out, "report", text, kv) if config.output.reports else [],
                      summary={"regime": combined.regime})


# =================== PRESET: CONSERVATION / VIRIAL ===================

def _drifts(result: TrajectoryResult) -> Dict[str, float]:
    mass = result.series("mass")
    energy = result.series("energy")
    momentum = np.array([r.momentum for r in result.records], dtype=np.float64)
    return {
        "mass_relative_drift": float(np.max(np.abs(mass - mass[0])) / max(abs(mass[0]), 1e-300)),
        "energy_relative_drift": float(np.max(np.abs(energy - energy[0])) / max(abs(energy[0]), 1e-300)),
        "energy_absolute_drift": float(np.max(np.abs(energy - energy[0]))),
        "momentum_absolute_drift": float(np.max(np.abs(momentum - momentum[0]))),
    }


def virial_consistency(result: TrajectoryResult) -> float:
    """max |V_tt(formula) - D²V(numeric)| / max |V_tt| over interior records"""
    t = np.array(result.times)
    if t.size < 5:
        raise ParameterError("need at least five records for a second difference")
    V = result.series("variance")
    Vtt = result.series("variance_tt")
    numeric = np.gradient(np.gradient(V, t), t)
    interior = slice(2, -2)
    return float(np.max(np.abs(Vtt[interior] - numeric[interior])) / max(np.max(np.abs(Vtt)), 1e-300))


def _simulate(config: RunConfig, out: Path) -> RunOutcome:
    grid = build_grid(config)
    u0 = build_initial_data(config, grid)
    result = evolve(u0, config.params, integrator_config(config))
    artifacts = _persist_trajectory(config, result, out)

    kv: Dict[str, object] = {"halt_reason": result.halt_reason, "steps": result.steps_taken, "t_final": result.final.t}
    kv.update(_drifts(result))
    if config.preset == "virial":
        gaps = [virial_quantities(u, config.params, config.zero_mode) for u in (u0, result.final)]
        kv["virial_forms_relative_gap"] = max(g.forms_relative_gap for g in gaps)
        kv["virial_direct_gap"] = max(
            abs(g.variance_tt_direct - g.variance_tt) / max(abs(g.variance_tt), 1e-300) for g in gaps
        )
        if len(result.records) >= 5:
            kv["virial_second_difference_gap"] = virial_consistency(result)
    if config.output.reports:
        artifacts += write_report(out, "report", None, kv)
    return RunOutcome(halt_reason=result.halt_reason, artifacts=artifacts, summary=kv)


# =================== PRESET: BLOW-UP DEMO ===================

def _blowup_demo(config: RunConfig, out: Path) -> RunOutcome:
    params = config.params
    grid = build_grid(config)
    v0 = build_initial_data(config, grid, with_chirp=False)
    ranges = chirp_b_ranges(v0, params, config.zero_mode)

    if "params.b" in config.entries:
        b = params.b
        convention = (config.data.convention if config.data else None) or get_settings().chirp_convention
    else:
        if ranges.negative_threshold is None:
            raise ConfigError("no chirp satisfies the blow-up criterion for this data",
                              condition_ids=[f"negative branch: {n}" for n in ranges.notes])
        b = config.blowup.b_factor * ranges.negative_threshold
        convention = "quarter"
    u0 = chirp(v0, b, convention)
    verdict = verdict_for_field(u0, params, config.zero_mode)
    logger.info("🎯 blow-up verdict", b=b, satisfied=verdict.satisfied, x=verdict.x)

    result = evolve(u0, params, integrator_config(config, chirp_b=b))
    artifacts = _persist_trajectory(config, result, out)
    V = result.series("variance")
    Vtt = result.series("variance_tt")
    kv: Dict[str, object] = {"b": b, "chirp_convention": convention}
    kv.update(verdict.to_kv())
    kv.update({f"ranges.{k}": v for k, v in ranges.to_kv().items()})
    kv.update({
        "halt_reason": result.halt_reason,
        "t_final": result.final.t,
        "variance_strictly_decreasing": bool(np.all(np.diff(V) < 0.0)),
        "variance_tt_negative": bool(np.all(Vtt < 0.0)),
    })
    if config.output.reports:
        artifacts += write_report(out, "verdict", None, kv)
    return RunOutcome(halt_reason=result.halt_reason, artifacts=artifacts, summary=kv)


# =================== PRESET: SCATTERING ===================

@dataclass(frozen=True)
class TwoRouteResult:
    discrepancy: float
    nonlinear_effect: float
    tau_final: float
    steps: int
    halt_reasons: Tuple[str, str]


def two_route_discrepancy(
    v0: Field,
    params: ModelParameters,
    b: float,
    t_final: float,
    dt: float,
    zero_mode: Optional[ZeroMode] = None,
) -> TwoRouteResult:
    """
    ‖u(t) - 𝒯v(τ)‖ where u solves the autonomous equation from e^{ib|x|²/4}v0
    and v the nonautonomous one from v0, with the same number of steps.
    """
    if b <= 0.0 or t_final <= 0.0:
        raise ParameterError("two-route comparison needs b > 0 and t > 0")
    steps = int(math.ceil(t_final / dt - 1e-9))
    tau_final = internal_time(t_final, b)
    u0 = chirp(v0, b, "quarter")
    common = dict(record_every=steps, zero_mode=zero_mode or get_settings().zero_mode, track_x_norm=False)

    direct = evolve(u0, params, IntegratorConfig(dt=t_final / steps, t_end=t_final, **common))
    internal = evolve(v0, params, IntegratorConfig(dt=tau_final / steps, t_end=tau_final, nonautonomous=True,
                                                   chirp_b=b, **common))
    mapped = pseudo_conformal_map(internal.final, internal.final.t, b)
    discrepancy = Field(v0.grid, direct.final.values - mapped.values).l2_norm()
    linear = free_propagate(u0, t_final)
    effect = Field(v0.grid, direct.final.values - linear.values).l2_norm()
    logger.info("🔁 two-route comparison", discrepancy=discrepancy, nonlinear_effect=effect, steps=steps)
    return TwoRouteResult(discrepancy, effect, tau_final, steps, (direct.halt_reason, internal.halt_reason))


def scattering_times(b: float, levels: int = 6) -> Tuple[float, ...]:
    """τ_k = (1 - 2^{-k}) / b, k = 1..levels"""
    return tuple((1.0 - 2.0 ** (-k)) / b for k in range(1, levels + 1))


MAX_MAPPED_DILATION = 3.0


def scattering_rows(result: TrajectoryResult, v0: Field, b: float, s: float) -> pd.DataFrame:
    """Residual ‖J^s(e^{-itΔ}u(t) - u+)‖ and decay (1+t)^{N/2} sup|u(t)| per snapshot"""
    u_plus = scattering_state(result.final, b)
    N = v0.grid.N
    rows = []
    initial_profile = chirp(v0, b, "quarter")
    rows.append({
        "tau": 0.0, "t": 0.0,
        "residual": bessel(Field(v0.grid, initial_profile.values - u_plus.values), s).l2_norm(),
        "decay": float(np.max(np.abs(v0.values))),
    })
    for requested in sorted(result.snapshots):
        v = result.snapshots[requested]
        tau = float(v.t)
        if b * tau >= 1.0:
            continue
        t = physical_time(tau, b)
        profile = scattering_profile(v, tau, b)
        residual = bessel(Field(v.grid, profile.values - u_plus.values), s).l2_norm()
        decay = math.nan
        if 1.0 + b * t <= MAX_MAPPED_DILATION:
            u_t = pseudo_conformal_map(v, tau, b)
            decay = (1.0 + t) ** (N / 2.0) * float(np.max(np.abs(u_t.values)))
        rows.append({"tau": tau, "t": t, "residual": residual, "decay": decay})
    return pd.DataFrame(rows, columns=["tau", "t", "residual", "decay"])


def _scatter_demo(config: RunConfig, out: Path) -> RunOutcome:
    params = config.params
    b = params.b
    if b <= 0.0:
        raise ConfigError("scatter-demo needs params.b > 0", condition_ids=["b > 0"])
    grid = build_grid(config)
    v0 = build_initial_data(config, grid, with_chirp=False)
    horizon = 1.0 / b
    taus = scattering_times(b)
    result = evolve(v0, params, integrator_config(config, nonautonomous=True, chirp_b=b, t_end=horizon,
                                                 snapshot_times=taus))
    artifacts: List[Path] = []
    if config.output.timeseries:
        artifacts.append(write_timeseries(result.records, out / "internal_timeseries.csv"))

    kv: Dict[str, object] = {"b": b, "horizon": horizon, "halt_reason": result.halt_reason}
    if result.halt_reason == "completed":
        frame = scattering_rows(result, v0, b, config.scatter.s)
        frame.to_csv(out / "scattering.csv", index=False, float_format="%.17g", na_rep="nan")
        artifacts.append(out / "scattering.csv")
        residual = frame["residual"].to_numpy()
        decay = frame["decay"].dropna().to_numpy()
        kv["residual_monotone"] = bool(np.all(np.diff(residual) < 0.0))
        kv["decay_bounded"] = bool(np.all(decay <= 2.0 * decay[0]))
        kv["final_residual"] = float(residual[-1])

    if config.scatter.compare_t > 0.0:
        two = two_route_discrepancy(v0, params, b, config.scatter.compare_t, config.integrator.dt, config.zero_mode)
        kv.update({"two_route_discrepancy": two.discrepancy, "two_route_nonlinear_effect": two.nonlinear_effect,
                   "two_route_steps": two.steps})
    if config.output.reports:
        artifacts += write_report(out, "report", None, kv)
    return RunOutcome(halt_reason=result.halt_reason, artifacts=artifacts, summary=kv)


# =================== PRESET: INEQUALITY SUITE ===================

def _inequality_suite(config: RunConfig, out: Path) -> RunOutcome:
    results = run_inequality_suite(seed=config.run.seed, jobs=config.run.jobs)
    artifacts: List[Path] = []
    kv: Dict[str, object] = {}
    for base, refined in results:
        artifacts.append(out / f"{base.test_id}.csv")
        base.to_frame().to_csv(artifacts[-1], index=False, float_format="%.17g", na_rep="nan")
        if refined is not None:
            artifacts.append(out / f"{base.test_id}-refined.csv")
            refined.to_frame().to_csv(artifacts[-1], index=False, float_format="%.17g", na_rep="nan")
    for outcome in suite_outcomes(results):
        prefix = outcome.test_id
        kv[f"{prefix}.max_ratio"] = outcome.max_ratio
        kv[f"{prefix}.refined_max_ratio"] = outcome.refined_max if outcome.refined_max is not None else "none"
        kv[f"{prefix}.ratio_bounded"] = outcome.bounded
        kv[f"{prefix}.passed"] = outcome.passed
    by_id = {base.test_id: base for base, _ in results}
    if "riesz-inside" in by_id and "riesz-outside" in by_id:
        kv["riesz.window_contrast"] = window_contrast(by_id["riesz-inside"], by_id["riesz-outside"])
    artifacts += write_report(out, "summary", None, kv)
    return RunOutcome(artifacts=artifacts, summary=kv)


# =================== BLOW-UP SCAN ===================

def _blowup_scan(config: RunConfig, out: Path) -> RunOutcome:
    params = config.params
    grid = build_grid(config)
    v0 = build_initial_data(config, grid, with_chirp=False)
    values = [float(b) for b in np.linspace(config.scan.b_min, config.scan.b_max, config.scan.count)]

    rows = []
    for b in values:
        chirped = chirped_observables(v0, b, params, "quarter", config.zero_mode)
        row: Dict[str, object] = {"b": b, "energy": chirped.E_u0, "V0": chirped.V0, "Vt0": chirped.Vt0}
        try:
            verdict = blowup_criterion(chirped.mass, chirped.E_u0, chirped.V0, chirped.Vt0, params)
            row.update(x=verdict.x, lhs=verdict.lhs, rhs=verdict.rhs, verdict="satisfied" if verdict.satisfied
                       else "not-satisfied")
        except PreconditionError as exc:
            row.update(x=math.nan, lhs=math.nan, rhs=math.nan, verdict="precondition-failed")
            logger.debug("scan precondition failed", b=b, failed=exc.failed)
        rows.append(row)

    if config.scan.simulate:
        def simulate_one(item: Tuple[int, float]) -> str:
            index, b = item
            sub = out / f"b_{index:03d}"
            sub.mkdir(parents=True, exist_ok=True)
            result = evolve(chirp(v0, b, "quarter"), params, integrator_config(config, chirp_b=b))
            write_timeseries(result.records, sub / "timeseries.csv")
            return result.halt_reason

        halts = gather_in_threads(simulate_one, list(enumerate(values)), config.run.jobs)
        for row, halt in zip(rows, halts):
            row["halt_reason"] = halt

    frame = pd.DataFrame(rows)
    frame.to_csv(out / "scan.csv", index=False, float_format="%.17g", na_rep="nan")
    satisfied = int(sum(1 for r in rows if r["verdict"] == "satisfied"))
    logger.info("🔍 blow-up scan done", count=len(values), satisfied=satisfied)
    return RunOutcome(artifacts=[out / "scan.csv"], summary={"count": len(values), "satisfied": satisfied})


# =================== DISPATCH ===================

RUNNERS: Dict[str, Callable[[RunConfig, Path], RunOutcome]] = {
    "params-report": _params_report,
    "conservation": _simulate,
    "virial": _simulate,
    "blowup-demo": _blowup_demo,
    "scatter-demo": _scatter_demo,
    "inequality-suite": _inequality_suite,
    "blowup-scan": _blowup_scan,
}


def output_dir(config: RunConfig, out_dir: Optional[Union[str, Path]] = None) -> Path:
    return Path(out_dir or config.output.dir or get_settings().output_dir)


def execute(config: RunConfig, out_dir: Optional[Union[str, Path]] = None,
            action: Optional[Action] = None) -> RunOutcome:
    """Run a preset (or the scan), always leaving a MANIFEST behind"""
    name = action or config.preset
    out = output_dir(config, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    logger.info("🚀 experiment start", action=name, out=str(out))

    outcome = RunOutcome(halt_reason="completed")
    complete = False
    try:
        outcome = RUNNERS[name](config, out)
        complete = True
    finally:
        write_manifest(out, config, name, complete, outcome.halt_reason if complete else "aborted")
    logger.info("✅ experiment end", action=name, halt_reason=outcome.halt_reason)
    return outcome


def run_experiment(config: RunConfig, out_dir: Optional[Union[str, Path]] = None,
                   action: Optional[Action] = None) -> int:
    """Exit status of `execute`; config errors map to 64"""
    try:
        return execute(config, out_dir, action).exit_code
    except ConfigError as exc:
        logger.error("❌ config error", error=str(exc))
        return EXIT_CONFIG_ERROR


__all__ = [
    "EXIT_CODES",
    "EXIT_CONFIG_ERROR",
    "GHartreeError",
    "RunConfig",
    "RunOutcome",
    "SUITE",
    "execute",
    "load_config",
    "parse_config",
    "read_snapshot",
    "read_timeseries",
    "run_experiment",
    "two_route_discrepancy",
    "write_manifest",
    "write_snapshot",
    "write_timeseries",
]
