from __future__ import annotations

import pytest

from corag.lm import ScriptedBackend
from corag.retrieval import BM25Index

from scenarios import fig_corpus, fig_rules

ACCEPTANCE_RESULTS: dict[str, str] = {}


@pytest.fixture
def fig_index() -> BM25Index:
    return BM25Index.build(fig_corpus())


@pytest.fixture
def fig_lm() -> ScriptedBackend:
    return ScriptedBackend(fig_rules())


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        for key in report.keywords:
            if key.startswith("AC") and key[2:].isdigit():
                prev = ACCEPTANCE_RESULTS.get(key, "PASS")
                ok = report.outcome == "passed"
                ACCEPTANCE_RESULTS[key] = "PASS" if ok and prev == "PASS" else "FAIL"


def pytest_configure(config):
    for i in range(1, 13):
        config.addinivalue_line("markers", f"AC{i}: acceptance criterion {i}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k[2:])):
        terminalreporter.write_line(f"{key}: {ACCEPTANCE_RESULTS[key]}")
