import numpy as np
import pytest

from rmtdetect import DataSource

ACCEPTANCE_LINES = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def gaussian_source():
    """Small deterministic Gaussian source for structural tests."""
    rng = np.random.default_rng(424242)
    vals = rng.standard_normal((12, 80))
    ids = tuple(f"n{i:02d}" for i in range(12))
    return DataSource(vals, ids, tuple(range(80)))
