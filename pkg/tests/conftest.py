import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from peerrec.synthetic import SyntheticConfig, generate_synthetic_log  # noqa: E402

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    n = marker.args[0]
    detail = dict(item.user_properties).get("detail", "")
    prev = _CRITERIA.get(n, (True, []))
    _CRITERIA[n] = (prev[0] and rep.passed, prev[1] + ([detail] if detail else []))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, details = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {'; '.join(details)}")


@pytest.fixture
def detail(record_property):
    """Attach a one-line summary to the acceptance report."""
    def _set(text):
        record_property("detail", text)
    return _set


@pytest.fixture(scope="session")
def small_log():
    cfg = SyntheticConfig(n_authors=60, n_sites=50, horizon_days=21, seed=3)
    return generate_synthetic_log(cfg)
