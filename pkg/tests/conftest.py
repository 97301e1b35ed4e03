from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corpusgen import build_corpus, make_score  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers",
                            "acceptance: toolkit acceptance criterion")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed"):
        for report in terminalreporter.stats.get(outcome, []):
            if getattr(report, "when", "call") != "call":
                continue
            if "test_acceptance.py" not in report.nodeid:
                continue
            name = report.nodeid.split("::")[-1]
            lines.append((name, outcome.upper()))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, outcome in sorted(lines):
            terminalreporter.write_line(f"[{outcome}] {name}")


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory) -> Path:
    """200 deterministic synthetic MIDI files."""
    directory = tmp_path_factory.mktemp("corpus")
    build_corpus(directory, 200, seed=7)
    return directory


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> Path:
    directory = tmp_path_factory.mktemp("small_corpus")
    build_corpus(directory, 12, seed=3)
    return directory


@pytest.fixture()
def demo_score():
    return make_score(42)
