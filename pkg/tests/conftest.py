import shutil
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

_acceptance = {}


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def mini_coco():
    return FIXTURES / "mini_coco.json"


@pytest.fixture
def dsm_dir():
    return FIXTURES / "dsm"


@pytest.fixture
def converted(tmp_path, mini_coco, dsm_dir):
    """Output directory holding the converted 4-image fixture."""
    from dsm2yolo import convert_dataset, load_dataset

    report = convert_dataset(load_dataset(mini_coco), dsm_dir, tmp_path)
    return tmp_path, report


@pytest.fixture
def copytree(tmp_path):
    def _copy(src, name):
        dst = tmp_path / name
        shutil.copytree(src, dst)
        return dst
    return _copy


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if marker is not None:
            _acceptance[marker] = report.outcome


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = (m.args[0], item.name)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    by_num = {}
    for (num, name), outcome in _acceptance.items():
        by_num.setdefault(num, []).append(outcome)
    terminalreporter.section("acceptance criteria")
    for num in sorted(by_num):
        outcomes = by_num[num]
        if "failed" in outcomes:
            status = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {num}: {status} ({len(outcomes)} check(s))")
