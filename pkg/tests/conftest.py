import os
import time

import numpy as np
import pytest
from hypothesis import settings

from bifdetect.basis import build_basis
from bifdetect.detection import detect_curve
from bifdetect.dynamics import TargetLinearDynamics, MODEL_AWARE, linearize_diag
from bifdetect.koopman import scan, select_pair
from bifdetect.parallel import default_jobs
from bifdetect.sampling import generate_dataset, sample_initial
from bifdetect.systems import linear_system, pitchfork_system

settings.register_profile("default", deadline=None, max_examples=50)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

BOX = ((-1.0, 1.0), (-1.0, 1.0))


@pytest.fixture(scope="session")
def pitchfork():
    return pitchfork_system()


@pytest.fixture(scope="session")
def case_ds(pitchfork):
    """The reference configuration: alpha=-4, M=100, P=25, tau=0.1."""
    return generate_dataset(pitchfork, -4.0, sample_initial(BOX, 100, 0), 25, 0.1,
                            box=BOX, seed=0)


@pytest.fixture(scope="session")
def case_target(pitchfork):
    return linearize_diag(pitchfork, -4.0, 0.1)


@pytest.fixture(scope="session")
def basis5():
    return build_basis(2, 5)


@pytest.fixture(scope="session")
def diag_system():
    return linear_system(np.diag([-1.0, -2.0]))


@pytest.fixture(scope="session")
def diag_ds(diag_system):
    """Orbits of x' = diag(-1, -2) x; M=50, P=10, tau=0.1, fine RK4 step."""
    return generate_dataset(diag_system, 0.0, sample_initial(BOX, 50, 1), 10, 0.1, step=1e-4)


@pytest.fixture(scope="session")
def diag_target():
    return TargetLinearDynamics.from_generator(np.diag([-2.0, -1.0]), 0.1, MODEL_AWARE)


CASE_ALPHAS = np.round(np.arange(-5.0, -1.0 + 1e-9, 0.2), 12)


def _timed_curve(sys, target, b):
    start = time.perf_counter()
    curve = detect_curve(sys, CASE_ALPHAS, target, b, P_list=(25,), M=100, box=BOX, seed=0,
                         jobs=default_jobs())
    curve.elapsed = time.perf_counter() - start
    return curve


@pytest.fixture(scope="session")
def case_curve(pitchfork, case_target, basis5):
    """Full model-aware sweep: alpha in [-5, -1] step 0.2, P=25, mu re-selected."""
    return _timed_curve(pitchfork, case_target, basis5)


@pytest.fixture(scope="session")
def koopman_target(case_ds):
    return select_pair(scan(case_ds, build_basis(2, 5)), alpha0=-4.0)


@pytest.fixture(scope="session")
def koopman_curve(pitchfork, koopman_target, basis5):
    return _timed_curve(pitchfork, koopman_target, basis5)
