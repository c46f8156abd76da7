"""Shared test fixtures and hypothesis settings.

Property tests run derandomized so the suite is reproducible run to run;
deadlines are disabled because several properties do real numerics per case.
"""
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "bpire",
    derandomize=True,
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("bpire")

# one line per acceptance criterion, echoed after the run so the verdicts are
# visible even when pytest captures stdout
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def zeros_path():
    """Factory for the constant-environment walk (all increments 0)."""
    from bpire import WalkPath

    def make(n: int) -> WalkPath:
        return WalkPath.from_increments(np.zeros(n))

    return make


@pytest.fixture
def rand_path():
    """Factory for a seeded gaussian walk of a given length."""
    from bpire import WalkPath

    def make(n: int, seed: int = 0, sigma: float = 1.0) -> WalkPath:
        rng = np.random.default_rng(seed)
        return WalkPath.from_increments(sigma * rng.standard_normal(n))

    return make
