import pytest
from hypothesis import settings

from biphoton.config import build_environment, build_nonlinear, build_pump, load_config
from biphoton.jointspectrum import default_windows, jsi_grid
from biphoton.phasematch import solve_tuning_point

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def config():
    return load_config()


@pytest.fixture(scope="session")
def env(config):
    """Calibrated fibre at 0.79 bar."""
    return build_environment(config).with_pressure(0.79)


@pytest.fixture(scope="session")
def pump(config):
    return build_pump(config)


@pytest.fixture(scope="session")
def params(config):
    return build_nonlinear(config)


@pytest.fixture(scope="session")
def point_079(env, pump, params):
    return solve_tuning_point(env, pump, params)


@pytest.fixture(scope="session")
def grid_079(env, pump, params, point_079):
    signal, idler = default_windows(point_079.signal, pump.center_wavelength, 15.0)
    return jsi_grid(env, pump, params, signal, idler, n=256)
