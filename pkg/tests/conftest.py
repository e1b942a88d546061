import pytest
import logging

import numpy as np

from piezobeam.params import MaterialParams, REFERENCE_PARAMS
from piezobeam.discretization.matrices import GridConfig, Scheme, assemble_blocks
from piezobeam.discretization.conditioning import conditioning_transform

# Configure logging for tests
logging.basicConfig(
    level=logging.DEBUG,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)


@pytest.fixture
def reference_params():
    """Fixture to provide the realistic material constants with k1 = k2 = 1e6."""
    return REFERENCE_PARAMS.with_gains(1e6, 1e6)


@pytest.fixture
def free_params():
    """Fixture to provide the realistic material constants without feedback."""
    return REFERENCE_PARAMS.with_gains(0.0, 0.0)


@pytest.fixture
def unit_params():
    """Fixture to provide order-one constants with unit gains."""
    return MaterialParams(rho=1.0, mu=1.0, alpha=2.0, beta=1.0, gamma=0.5, L=1.0, k1=1.0, k2=1.0)


@pytest.fixture
def unit_free_params(unit_params):
    """Fixture to provide order-one constants without feedback."""
    return unit_params.with_gains(0.0, 0.0)


@pytest.fixture
def make_operator():
    """Fixture to assemble and condition an operator for (params, scheme, N)."""
    def _make(params, scheme, N):
        grid = GridConfig(N=N, L=params.L, scheme=Scheme.parse(scheme))
        return conditioning_transform(assemble_blocks(params, grid))
    return _make


@pytest.fixture
def rng():
    """Fixture to provide a seeded random generator."""
    return np.random.default_rng(20240601)


@pytest.fixture
def mock_environment(monkeypatch, tmp_path):
    """Fixture to set up a mock environment for testing."""
    monkeypatch.setenv("PIEZOBEAM_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("PIEZOBEAM_OUTPUT_DIR", str(tmp_path / "results"))
    monkeypatch.setenv("PIEZOBEAM_WORKERS", "1")
    monkeypatch.setenv("PIEZOBEAM_LOG_LEVEL", "INFO")
    yield tmp_path
