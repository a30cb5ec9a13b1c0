from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from ttpredict.data import default_schema, ingest_csv

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).resolve().parents[1] / "data" / "cattaneo2.csv"


@pytest.fixture(scope="session")
def birthweight_path():
    return DATA


@pytest.fixture(scope="session")
def birthweight():
    return ingest_csv(DATA, default_schema())


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    item.config._criteria[mark.args[0]] = ("PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter, config):
    crit = getattr(config, "_criteria", {})
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(crit):
        status, detail = crit[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {detail}")
