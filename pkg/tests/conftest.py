import time
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"
SESSION_START = time.monotonic()

ACCEPTANCE_LINES: list[str] = []


def pytest_collection_modifyitems(session, config, items):
    # acceptance runs last so it can check the runtime of the whole suite
    items.sort(key=lambda it: it.nodeid.split("::")[0].endswith("test_acceptance.py"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def example_net():
    from labelrefine.process_model import parse_net

    return parse_net((DATA / "example.net").read_text(), name="example")
