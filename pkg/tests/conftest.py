import pytest

from mobattack.features import enrich
from mobattack.simulate import ScenarioConfig, run

SMALL_SCENARIO = {
    "seed": 4, "duration_days": 3, "train_days": 2,
    "populations": {"wp": 60, "rwp": 60, "gm": 60},
    "topology": {"n_cells": 40, "seed": 3, "bounds": [0, 0, 8000, 8000]},
}


@pytest.fixture(scope="session")
def small_result():
    return run(ScenarioConfig.from_dict(SMALL_SCENARIO))


@pytest.fixture(scope="session")
def small_tables(small_result):
    return {m: enrich(ds, small_result.topology, boundary_day=2) for m, ds in small_result.legit.items()}


# one line per acceptance criterion, filled in by test_acceptance and echoed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
