from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("effquant", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("effquant")

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"


@pytest.fixture(scope="session")
def fq():
    from effquant.locking import fq_params

    return fq_params()


# Filled by test_acceptance; one line per criterion.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
