import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mpcplan import FIXTURES, fixture_path
from mpcplan.ir import build_dag, load_document
from mpcplan.mpc import field

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

QUERY_FIXTURES = ("credit", "hhi", "aspirin", "comorbidity")


def load_fixture(name):
    return load_document(fixture_path(name))


def fixture_dag(name):
    return build_dag(load_fixture(name))


@pytest.fixture(params=FIXTURES)
def any_fixture(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["python", "compiled"] if field.BACKEND == "compiled" else ["python"])
def backend(request):
    old = field.use_backend(request.param)
    yield request.param
    field.use_backend(old)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark and rep.when == "call":
        verdicts = item.config.stash.setdefault(_VERDICTS, {})
        verdicts[mark.args[0]] = verdicts.get(mark.args[0], True) and rep.passed


def pytest_terminal_summary(terminalreporter, config):
    verdicts = config.stash.get(_VERDICTS, {})
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for title, ok in verdicts.items():
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {title}")


_VERDICTS = pytest.StashKey[dict]()
