from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from fedcontrib.data import Dataset, load_csv, prepare
from fedcontrib.surrogate import write_surrogate_csv

REPO = Path(__file__).resolve().parents[1]


def cervical_csv_path() -> Path | None:
    """The real UCI file, if one has been provided."""
    candidates = []
    if os.environ.get("FEDCONTRIB_CERVICAL_CSV"):
        candidates.append(Path(os.environ["FEDCONTRIB_CERVICAL_CSV"]))
    candidates.append(REPO / "data" / "risk_factors_cervical_cancer.csv")
    for c in candidates:
        if c.is_file():
            return c
    return None


@pytest.fixture(scope="session")
def surrogate_csv(tmp_path_factory) -> Path:
    return write_surrogate_csv(tmp_path_factory.mktemp("data") / "surrogate.csv", seed=0)


@pytest.fixture(scope="session")
def surrogate_dataset(surrogate_csv) -> Dataset:
    return prepare(load_csv(surrogate_csv, "Biopsy"))


@pytest.fixture
def toy_dataset() -> Dataset:
    rng = np.random.default_rng(7)
    X = rng.random((24, 3))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0.8).astype(int)
    return Dataset.from_arrays(X, y)


# --- acceptance summary -----------------------------------------------------

_ACCEPTANCE: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion_label", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[marker] = "PASS" if report.outcome == "passed" else report.outcome.upper()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report.criterion_label = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE):
        status = _ACCEPTANCE[label]
        terminalreporter.write_line(f"{'PASS' if status == 'PASS' else 'FAIL'}  {label}")
