import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from waferdse.hw_model import CoreSpec, DieSpec, DramChipletSpec, WaferConfig  # noqa: E402
from waferdse.workload import ModelConfig, TrainingWorkload  # noqa: E402

GB = 10 ** 9


def toy_die(name="toy"):
    return DieSpec(20.0, 20.0, 4, 4, CoreSpec(1.0e12, 1 << 20), 12e12, 0.25, name)


def toy_wafer(gx=4, gy=4, chiplets=2, cap_gb=4, d2d=1e12, name="toy"):
    dram = DramChipletSpec(2.0, 5.0, cap_gb * GB, 2e11, "m")
    return WaferConfig(gx, gy, toy_die(), chiplets, dram, d2d, name=name)


def tiny_model(layers=4, hidden=256, heads=4, seq=128):
    return ModelConfig("tiny", layers, hidden, heads, seq, 1000)


@pytest.fixture
def wafer():
    return toy_wafer()


@pytest.fixture
def model():
    return tiny_model()


@pytest.fixture
def workload(model):
    return TrainingWorkload(model, 2, 8)


# -- acceptance reporting ------------------------------------------------------

_criteria: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config.addinivalue_line("markers", "slow: long end-to-end run")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    outcomes = _criteria.setdefault(mark.args[0], [])
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        outcomes.append("fail" if call.excinfo is not None else "pass")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        res = _criteria[n]
        bad = res.count("fail")
        status = "PASS" if bad == 0 else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status} ({len(res) - bad}/{len(res)} checks)")
