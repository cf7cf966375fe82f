from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from suctiongrasp.shapes import box, desk_objects, write_desk_objects

settings.register_profile("suctiongrasp", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("suctiongrasp")

# acceptance criteria append (number, passed, detail) here; printed after the run
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def cube():
    """5 cm cube resting on the table, top face at z = 0.05."""
    return box((0.05, 0.05, 0.05), (0.0, 0.0, 0.025))


@pytest.fixture(scope="session")
def plate():
    """Large flat slab with its top face at z = 0."""
    return box((0.2, 0.2, 0.02), (0.0, 0.0, -0.01))


@pytest.fixture(scope="session")
def desk():
    return desk_objects()


@pytest.fixture(scope="session")
def desk_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    write_desk_objects(out)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
