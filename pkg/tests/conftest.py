import numpy as np
import pytest

from mcms.ingest import compute_sample_moments
from mcms.scale import builtin_mcms
from mcms.sem import compile_model
from mcms.simulate import mcms_config, simulate_responses

CRITERIA = {}


def record_criterion(number, passed, detail):
    CRITERIA[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(
            f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}"
        )


@pytest.fixture(scope="session")
def mcms():
    return builtin_mcms()


@pytest.fixture(scope="session")
def mcms_spec(mcms):
    return compile_model(mcms, mean_structure=True)


@pytest.fixture(scope="session")
def normal_moments():
    data = simulate_responses(mcms_config(2000, seed=42))
    return compute_sample_moments(data.genuine("ALL"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
