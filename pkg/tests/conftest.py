import numpy as np
import pytest

from qvie.constants import NORMALIZED
from qvie.dispersion import LorentzModel
from qvie.geometry import build_box_mesh, plane_wave_mode
from qvie.solver import DrivingSpec, SweepPlan, sweep_and_reconstruct

# lines collected by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def units():
    return NORMALIZED


@pytest.fixture(scope="session")
def model():
    return LorentzModel(omega_p=1.0, omega_0=1.0, gamma=0.1)


@pytest.fixture(scope="session")
def two_voxel():
    return build_box_mesh([0.4, 0.2, 0.2], [2, 1, 1])


@pytest.fixture(scope="session")
def plan():
    return SweepPlan(omega_max=8.0, n_omega=1024, eps_reg=1e-4, upsample=8)


@pytest.fixture(scope="session")
def two_voxel_results(two_voxel, model, units, plan):
    """Reconstructed histories for the three driving kinds on the 2-voxel box."""
    specs = dict(pulse=DrivingSpec.pulse(0, 1.0, 2.0, 12.0),
                 matter=DrivingSpec.matter(0, 0.8),
                 radiation=DrivingSpec.radiation(plane_wave_mode([0.0, 0.0, 1.3], 1, units)))
    return {k: sweep_and_reconstruct(plan, s, two_voxel, model, units) for k, s in specs.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
