import os

import pytest
from hypothesis import HealthCheck, settings

from statewalk.simapp import load_spec

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(autouse=True)
def _no_ambient_config(monkeypatch):
    for var in ("STATEWALK_CONFIG", "STATEWALK_REASONER_URL", "STATEWALK_REASONER_TOKEN",
                "STATEWALK_REASONER_TIMEOUT_MS"):
        monkeypatch.delenv(var, raising=False)


@pytest.fixture(scope="session")
def shop():
    return load_spec("ecommerce")


@pytest.fixture(scope="session")
def maze():
    return load_spec("linkmaze")


@pytest.fixture(scope="session")
def flaky():
    return load_spec("flaky")


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        title, ok = results[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}")
