import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def mc_se(x):
    x = np.asarray(x, dtype=float)
    return float(np.std(x, ddof=1) / np.sqrt(x.size))


# ----------------------------------------------------------------- acceptance bookkeeping

ACCEPTANCE_FILE = "test_acceptance.py"
ORACLE_OUTCOMES = {}          # nodeid -> passed, for every test outside the acceptance file
ORACLE_COLLECTED = set()
ACCEPTANCE_LINES = []


def pytest_collection_modifyitems(session, config, items):
    # acceptance last, so criterion 8 can read the outcomes of the oracle suites
    items.sort(key=lambda it: it.path.name == ACCEPTANCE_FILE)
    ORACLE_COLLECTED.update(it.nodeid for it in items if it.path.name != ACCEPTANCE_FILE)


def pytest_runtest_logreport(report):
    if ACCEPTANCE_FILE in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        ORACLE_OUTCOMES[report.nodeid] = ORACLE_OUTCOMES.get(report.nodeid, True) and report.outcome == "passed"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
