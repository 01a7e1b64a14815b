import pytest
from hypothesis import HealthCheck, settings

from hri_memory.session import run_session
from hri_memory.sim import default_scenario

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def default_session():
    return run_session(default_scenario(0))


@pytest.fixture(scope="session")
def noiseless_session():
    cfg = default_scenario(0, azimuth_noise_sigma=0.0, detector_miss_rate=0.0)
    return run_session(cfg)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Recorder for acceptance criteria: call with (number, passed, detail)."""
    def record(n: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
