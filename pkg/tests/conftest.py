"""
🧪 Shared fixtures: parameter sets from the worked examples, small grids,
frozen ratio ceilings, and a clean settings/symbol cache per test.
"""

import json
from pathlib import Path
from typing import Any, Dict

import pytest

from src.grid_spectral import GaussianData, Grid, make_grid, sample, symbol_cache
from src.logging_setup import configure_logging
from src.params import ModelParameters
from src.settings import get_settings

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch: pytest.MonkeyPatch) -> Any:
    for name in ("GHARTREE_ZERO_MODE", "GHARTREE_CHIRP_CONVENTION", "GHARTREE_FFT_WORKERS"):
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture(scope="session", autouse=True)
def _logging() -> None:
    configure_logging("WARNING")


@pytest.fixture(autouse=True)
def _clear_symbols() -> Any:
    yield
    symbol_cache().clear()


@pytest.fixture
def params_1d() -> ModelParameters:
    """Well-posed 1D example: p = 1.8, gamma = 0.05, m = 0.55, M = 6, M0 = 4"""
    return ModelParameters(N=1, p=1.8, gamma=0.05, mu=1.0, m=0.55, M=6, M0=4)


@pytest.fixture
def params_3d_blowup() -> ModelParameters:
    return ModelParameters(N=3, p=1.9, gamma=0.5, mu=1.0, m=3.0, M=13, M0=7)


@pytest.fixture
def params_2d_scattering() -> ModelParameters:
    return ModelParameters(N=2, p=1.9, gamma=0.5, mu=1.0, m=1.5, M=11, M0=4, b=4.0)


@pytest.fixture
def grid_1d() -> Grid:
    return make_grid(1, 40.0, 1024)


@pytest.fixture
def gaussian_1d(grid_1d: Grid):
    """0.5 e^{-x²/2}"""
    return sample(grid_1d, GaussianData(a=0.5, sigma=0.5))


@pytest.fixture(scope="session")
def ratio_ceilings() -> Dict[str, Any]:
    return json.loads((FIXTURES / "ratio_ceilings.json").read_text())
