"""
🧪 Config parsing, persistence, presets, exit codes and the CLI
"""

from dataclasses import replace
from pathlib import Path
from typing import Dict

import numpy as np
import pytest
from typer.testing import CliRunner

from src.cli import app
from src.errors import ConfigError, ParameterError
from src.evolution import IntegratorConfig, evolve
from src.grid_spectral import GaussianData, make_grid, read_snapshot, sample
from src.harness import (
    EXIT_CONFIG_ERROR,
    execute,
    load_config,
    parse_config,
    read_timeseries,
    run_experiment,
    scattering_times,
    two_route_discrepancy,
    virial_consistency,
    write_snapshots,
    write_timeseries,
)
from src.logging_setup import configure_logging
from src.observables import csv_columns

CONFIGS = Path(__file__).parent.parent / "configs"

BASE = """\
preset = conservation
params.N = 1
params.p = 1.8
params.gamma = 0.05
params.mu = 1
params.m = 0.55
params.M = 6
params.M0 = 4
"""

SMALL_RUN = BASE + """\
grid.L = 40
grid.n = 256
integrator.dt = 1e-2
integrator.t_end = 0.1
integrator.record_every = 2
integrator.zero_mode = cellavg
integrator.track_x_norm = false
data.kind = gaussian
data.a = 0.5
data.sigma = 0.5
"""


def _read_kv(path: Path) -> Dict[str, str]:
    entries = {}
    for line in path.read_text().splitlines():
        key, value = line.split(" = ", 1)
        entries[key] = value
    return entries


# =================== PARSING ===================

def test_minimal_config_gets_defaults():
    config = parse_config(BASE)
    assert config.preset == "conservation"
    assert config.params.M == 6
    assert config.grid.n == (256,)
    assert config.integrator.record_every == 10
    assert config.run.strict_regime
    assert config.entries["params.p"] == "1.8"


def test_comments_and_blank_lines_are_ignored():
    config = parse_config("# header\n\n" + BASE.replace("params.mu = 1", "params.mu = 1  # focusing"))
    assert config.params.mu == 1.0


def test_supercritical_power_names_condition():
    text = BASE.replace("params.p = 1.8", "params.p = 2.5")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.condition_ids == ["p < 2"]
    assert info.value.lines == [3]
    assert "p < 2" in str(info.value)


def test_duplicate_key_cites_both_lines():
    with pytest.raises(ConfigError) as info:
        parse_config(BASE + "params.m = 0.6\n")
    assert info.value.lines == [6, 9]
    assert "duplicate" in str(info.value)


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(BASE + "params.q = 1\n")
    assert info.value.lines == [9]


@pytest.mark.parametrize("line", ["grid.n = many", "no equals sign here"])
def test_bad_line_is_cited(line):
    with pytest.raises(ConfigError) as info:
        parse_config(BASE + line + "\n")
    assert info.value.lines == [9]


def test_missing_params_block():
    with pytest.raises(ConfigError, match="params"):
        parse_config("preset = conservation\n")


def test_grid_dimension_must_match():
    with pytest.raises(ConfigError) as info:
        parse_config(BASE + "grid.N = 2\n")
    assert info.value.lines == [9, 2]


def test_regime_gate_can_be_relaxed():
    text = BASE.replace("params.M = 6", "params.M = 2")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert any(c.startswith("M >") for c in info.value.condition_ids)
    assert parse_config(text + "run.strict_regime = false\n").params.M == 2


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.cfg")):
        assert load_config(path).preset


# =================== PERSISTENCE ===================

@pytest.fixture
def trajectory(params_1d, gaussian_1d):
    cfg = IntegratorConfig(dt=1e-2, t_end=0.05, record_every=1, zero_mode="cellavg", track_x_norm=False,
                           snapshot_times=(0.0, 0.05))
    return evolve(gaussian_1d, params_1d, cfg)


def test_timeseries_header_and_values(trajectory, tmp_path):
    path = write_timeseries(trajectory.records, tmp_path / "ts.csv")
    assert path.read_text().splitlines()[0] == ",".join(csv_columns(1))
    frame = read_timeseries(path)
    assert list(frame.columns) == csv_columns(1)
    assert np.array_equal(frame["t"].to_numpy(), np.array(trajectory.times))
    assert np.array_equal(frame["energy"].to_numpy(), trajectory.series("energy"))
    assert frame["x_norm"].isna().all()


def test_empty_timeseries_is_refused(tmp_path):
    with pytest.raises(ParameterError):
        write_timeseries([], tmp_path / "ts.csv")


def test_snapshots_on_disk(trajectory, tmp_path):
    paths = write_snapshots(trajectory.snapshots, tmp_path)
    assert [p.name for p in paths] == ["snapshot_t=0.ghrt", "snapshot_t=0.05.ghrt"]
    restored = read_snapshot(paths[-1])
    assert np.array_equal(restored.values, trajectory.snapshots[0.05].values)
    assert restored.t == trajectory.snapshots[0.05].t


# =================== PRESETS ===================

def test_conservation_run_writes_manifest(tmp_path):
    config = parse_config(SMALL_RUN)
    outcome = execute(config, tmp_path)
    assert outcome.exit_code == 0
    manifest = _read_kv(tmp_path / "MANIFEST")
    for key in ("version", "preset", "config_digest", "zero_mode", "chirp_convention", "seed", "complete",
                "halt_reason"):
        assert key in manifest
    assert manifest["complete"] == "true"
    assert manifest["halt_reason"] == "completed"
    assert manifest["zero_mode"] == "cellavg"
    assert manifest["config.params.p"] == "1.8"
    assert (tmp_path / "timeseries.csv").exists()
    assert outcome.summary["mass_relative_drift"] <= 1e-10


def test_same_config_gives_identical_csv(tmp_path):
    config = parse_config(SMALL_RUN)
    execute(config, tmp_path / "one")
    execute(config, tmp_path / "two")
    first = (tmp_path / "one" / "timeseries.csv").read_bytes()
    assert first == (tmp_path / "two" / "timeseries.csv").read_bytes()
    assert _read_kv(tmp_path / "one" / "MANIFEST") == _read_kv(tmp_path / "two" / "MANIFEST")


def test_free_flow_conserves_energy(tmp_path):
    config = parse_config(SMALL_RUN.replace("params.mu = 1", "params.mu = 0"))
    outcome = execute(config, tmp_path)
    assert outcome.summary["energy_relative_drift"] <= 1e-10


@pytest.mark.slow
def test_conservation_config_meets_drift_limits(tmp_path):
    outcome = execute(load_config(CONFIGS / "conservation_1d.cfg"), tmp_path)
    assert outcome.exit_code == 0
    assert outcome.summary["mass_relative_drift"] <= 1e-6
    assert outcome.summary["energy_relative_drift"] <= 1e-5
    assert outcome.summary["momentum_absolute_drift"] <= 1e-8


@pytest.mark.slow
def test_virial_config_matches_second_difference(tmp_path):
    outcome = execute(load_config(CONFIGS / "virial_1d.cfg"), tmp_path)
    assert outcome.exit_code == 0
    assert outcome.summary["virial_second_difference_gap"] <= 1e-3
    assert outcome.summary["virial_forms_relative_gap"] <= 1e-9
    assert float(_read_kv(tmp_path / "report.kv")["virial_second_difference_gap"]) <= 1e-3


def test_virial_consistency_needs_five_records(trajectory):
    short = replace(trajectory, records=trajectory.records[:4])
    with pytest.raises(ParameterError):
        virial_consistency(short)


def test_params_report(tmp_path):
    config = load_config(CONFIGS / "params_report_1d.cfg")
    outcome = execute(config, tmp_path)
    assert outcome.summary["regime"] == "wellposed"
    text = (tmp_path / "report.txt").read_text()
    assert "regime: wellposed" in text
    assert "M = 6  M0 = 4" in text
    kv = _read_kv(tmp_path / "report.kv")
    assert kv["regime"] == "wellposed"
    assert float(kv["lambda"]) > 0


def test_config_error_maps_to_exit_code(tmp_path):
    text = SMALL_RUN.replace("preset = conservation", "preset = scatter-demo") + "run.strict_regime = false\n"
    assert run_experiment(parse_config(text), tmp_path) == EXIT_CONFIG_ERROR
    manifest = _read_kv(tmp_path / "MANIFEST")
    assert manifest["complete"] == "false"
    assert manifest["halt_reason"] == "aborted"


def test_scattering_times_approach_horizon():
    taus = scattering_times(4.0)
    assert taus[0] == 0.125
    assert all(t < 0.25 for t in taus)
    assert np.all(np.diff(taus) > 0)


def test_two_route_needs_positive_chirp(params_1d, gaussian_1d):
    with pytest.raises(ParameterError):
        two_route_discrepancy(gaussian_1d, params_1d, 0.0, 0.5, 1e-3)


@pytest.mark.slow
def test_two_routes_agree(params_1d):
    v0 = sample(make_grid(1, 80.0, 1024), GaussianData(a=0.1))
    result = two_route_discrepancy(v0, params_1d, 4.0, 0.5, 5e-4, "cellavg")
    assert result.halt_reasons == ("completed", "completed")
    assert result.steps == 1000
    assert result.discrepancy <= 1e-4
    assert result.discrepancy < result.nonlinear_effect

    coarse = two_route_discrepancy(v0, params_1d, 4.0, 0.5, 1e-3, "cellavg")
    assert coarse.steps == 500
    assert result.discrepancy < coarse.discrepancy


@pytest.mark.slow
def test_scatter_demo(tmp_path):
    outcome = execute(load_config(CONFIGS / "scatter_demo_2d.cfg"), tmp_path)
    assert outcome.exit_code == 0
    assert outcome.summary["residual_monotone"]
    assert outcome.summary["decay_bounded"]
    assert (tmp_path / "scattering.csv").exists()


@pytest.mark.slow
def test_blowup_demo(tmp_path):
    outcome = execute(load_config(CONFIGS / "blowup_demo_3d.cfg"), tmp_path)
    assert outcome.summary["verdict"] == "satisfied"
    assert outcome.summary["b"] < 0
    assert outcome.summary["variance_strictly_decreasing"]
    assert outcome.summary["variance_tt_negative"]
    assert outcome.halt_reason in ("blowup-indicated", "resolution-lost")
    assert outcome.exit_code in (2, 3)
    assert _read_kv(tmp_path / "verdict.kv")["verdict"] == "satisfied"


# =================== CLI ===================

runner = CliRunner()


@pytest.fixture(autouse=True)
def _restore_logging():
    """The CLI callback rebinds logging to the runner's stderr, which closes after invoke"""
    yield
    configure_logging("WARNING")


def test_cli_check_params(tmp_path):
    result = runner.invoke(app, ["check-params", "--config", str(CONFIGS / "params_report_1d.cfg"),
                                 "--out", str(tmp_path)])
    assert result.exit_code == 0
    assert "wellposed" in result.output
    assert (tmp_path / "MANIFEST").exists()


def test_cli_simulate(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text(SMALL_RUN)
    result = runner.invoke(app, ["simulate", "--config", str(config), "--out", str(tmp_path / "out")])
    assert result.exit_code == 0
    assert (tmp_path / "out" / "timeseries.csv").exists()


@pytest.mark.parametrize("text", [BASE.replace("params.p = 1.8", "params.p = 2.5"), BASE + "bogus = 1\n"])
def test_cli_config_errors_exit_64(tmp_path, text):
    config = tmp_path / "bad.cfg"
    config.write_text(text)
    result = runner.invoke(app, ["simulate", "--config", str(config), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_CONFIG_ERROR
    assert "config error" in result.output


def test_cli_missing_config_file(tmp_path):
    result = runner.invoke(app, ["simulate", "--config", str(tmp_path / "absent.cfg")])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_cli_unwritable_output_exits_1(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text(SMALL_RUN)
    blocker = tmp_path / "taken"
    blocker.write_text("not a directory")
    result = runner.invoke(app, ["simulate", "--config", str(config), "--out", str(blocker / "out")])
    assert result.exit_code == 1
    assert "run failed" in result.output
