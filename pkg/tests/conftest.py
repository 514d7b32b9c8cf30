import numpy as np
import pytest
import torch
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")

torch.set_num_threads(1)

_criteria: dict[str, list[tuple[str, str, float]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        msg = ""
        if rep.failed:
            msg = str(rep.longrepr.reprcrash.message) if hasattr(rep.longrepr, "reprcrash") else str(rep.longrepr)
        _criteria.setdefault(marker.args[0], []).append((rep.outcome, msg.splitlines()[0] if msg else "", rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        results = _criteria[name]
        failed = [r for r in results if r[0] == "failed"]
        status = "FAIL" if failed else ("PASS" if all(r[0] == "passed" for r in results) else "SKIP")
        secs = sum(r[2] for r in results)
        line = f"{status}  {name}  ({len(results) - len(failed)}/{len(results)} checks, {secs:.2f}s)"
        if failed:
            line += f"  first failure: {failed[0][1][:160]}"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
