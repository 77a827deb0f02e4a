from __future__ import annotations

import numpy as np
import pytest

from sigmaq import TimeGrid


@pytest.fixture
def grid():
    return TimeGrid.from_horizon(2.0 ** -10, 1.0)


@pytest.fixture
def coarse():
    return TimeGrid.from_horizon(2.0 ** -6, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from _stats import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
