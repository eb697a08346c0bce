import pathlib

import pytest

from sdup.net_sim import load_topology

SCENARIOS = pathlib.Path(__file__).resolve().parent.parent / "scenarios"


def fixture_topology(name):
    return load_topology((SCENARIOS / f"{name}.topo").read_text())


@pytest.fixture
def diamond():
    return fixture_topology("diamond")


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
