import pytest
import logging

from landscapy.geometry import BodyParams, ShellParams, shell_build
from landscapy.landscape import default_beams
from landscapy.simulate import TrialConfig, run_trial

# Coarse tessellation keeps the mechanics fast enough for the suite.
COARSE_RESOLUTION = 6.0


def pytest_configure(config):
    """Configure pytest to display logs."""
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    config.addinivalue_line("markers", "slow: full-length simulations and pipeline runs")


@pytest.fixture(scope="session")
def shell_params():
    """Return the default shell parameters."""
    return ShellParams()


@pytest.fixture(scope="session")
def coarse_mesh(shell_params):
    """Return the cropped (sensed) shell at coarse resolution."""
    return shell_build(shell_params, mesh_resolution=COARSE_RESOLUTION, cropped=True)


@pytest.fixture(scope="session")
def coarse_counterpart(shell_params):
    """Return the uncropped shell used for the mechanics."""
    return shell_build(shell_params, mesh_resolution=COARSE_RESOLUTION, cropped=False)


@pytest.fixture(scope="session")
def beams():
    """Return the default left/right beam pair."""
    return default_beams()


@pytest.fixture(scope="session")
def body():
    """Return the default inertial parameters."""
    return BodyParams()


@pytest.fixture(scope="session")
def frictionless_trial(coarse_mesh, coarse_counterpart, beams, body):
    """Return a full noise-free, frictionless traverse at alpha = 0, beta = -20 deg."""
    config = TrialConfig(alpha_deg=0.0, beta_deg=-20.0, f=0.0, mu=0.0, noise=False, seed=7)
    return run_trial(config, coarse_mesh, coarse_counterpart, beams, body)


@pytest.fixture
def short_trial_config():
    """Return a short noise-free traverse through the contact region without reference gradients."""
    return TrialConfig(alpha_deg=10.0, beta_deg=-20.0, f=0.0, mu=0.3, noise=False, seed=3,
                       start_x=-40.0, travel=80.0, reference_gradient=False)
