import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pucci_logistic import Disk, Grid2D, LogisticModel, OperatorSpec, ReactionSpec, Rect  # noqa: E402

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE = {}


def record(criterion, passed, detail):
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return passed


def pytest_collection_modifyitems(items):
    # acceptance runs last so that its ordering check sees every monotone run
    items.sort(key=lambda it: it.nodeid.startswith("tests/test_acceptance.py") or "test_acceptance.py" in it.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])


UNIT_SQUARE = Rect.from_corners(0, 0, 1, 1)
OASIS = Disk(0.5, 0.5, 0.25)


def standard_k2(n):
    return LogisticModel(Grid2D.unit_square(n), UNIT_SQUARE, OperatorSpec(), ReactionSpec(mu=1.0, k_kind="K2", oasis=OASIS))


def square_k1(n, **kw):
    return LogisticModel(Grid2D.unit_square(n), UNIT_SQUARE, OperatorSpec(), ReactionSpec(mu=1.0, **kw))


@pytest.fixture(scope="session")
def k2_33():
    return standard_k2(33)


@pytest.fixture(scope="session")
def k2_65():
    return standard_k2(65)


@pytest.fixture(scope="session")
def k1_33():
    return square_k1(33)


@pytest.fixture(scope="session")
def k1_65():
    return square_k1(65)
