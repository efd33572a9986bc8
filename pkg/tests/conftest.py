import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from acceptance_log import ACCEPTANCE_LINES  # noqa: E402
from attnswitch.domain import CANONICAL_DOCUMENT, build_state_space, canonical_instance  # noqa: E402
from attnswitch.harness import planning_context  # noqa: E402
from attnswitch.planner import solve_cost_to_go  # noqa: E402


@pytest.fixture(scope="session")
def inst():
    return canonical_instance()


@pytest.fixture(scope="session")
def canonical_doc():
    return CANONICAL_DOCUMENT


@pytest.fixture(scope="session")
def space(inst):
    return build_state_space(inst)


@pytest.fixture(scope="session")
def cost(space):
    return solve_cost_to_go(space)


@pytest.fixture(scope="session")
def ctx(inst):
    return planning_context(inst)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
