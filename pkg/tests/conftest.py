import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nfcal.forward_model import ChainErrorModel, default_scan_plane, simulate_near_field_scan
from nfcal.geometry import ALL_SHAPES, generate_tiling
from nfcal.pipeline import ScenarioConfig, run_pipeline

settings.register_profile("repo", deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def layout():
    return generate_tiling(16, 16, ALL_SHAPES, 1)


@pytest.fixture(scope="session")
def delta_z(layout):
    return 10.0 * layout.wavelength


@pytest.fixture(scope="session")
def ideal_scan(layout, delta_z):
    plane = default_scan_plane(layout, delta_z)
    return simulate_near_field_scan(layout, None, None, plane, (0.0, 0.0, delta_z))


@pytest.fixture(scope="session")
def errors0(layout):
    return ChainErrorModel.draw(len(layout.subarrays), 0)


@pytest.fixture(scope="session")
def errored_scan(layout, delta_z, errors0):
    plane = default_scan_plane(layout, delta_z)
    return simulate_near_field_scan(layout, None, errors0, plane, (0.0, 0.0, delta_z))


@pytest.fixture(scope="session")
def pipeline_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run_pipeline(ScenarioConfig(), output_dir=str(out)), out


def rel_rms(a, b):
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    return float(np.sqrt(np.sum(np.abs(a - b) ** 2) / np.sum(np.abs(b) ** 2)))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
