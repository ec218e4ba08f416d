from pathlib import Path

import pytest
import torch

from bertcnn.preprocess import Vocabulary

FIXTURES = Path(__file__).parent / "fixtures"

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    key = getattr(report, "criterion", None)
    if key is None:
        return
    status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
    previous = _criteria.get(key)
    if previous is None or status == "FAIL" or (previous == "SKIP" and status == "PASS"):
        _criteria[key] = status


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), status in sorted(_criteria.items()):
        terminalreporter.write_line(f"[{status}] criterion {number:>2}: {title}")


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def toy_vocab():
    return Vocabulary.load(FIXTURES / "vocab.txt")


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
    yield
