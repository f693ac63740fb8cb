import shutil
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


def fixture_path(*parts: str) -> Path:
    return FIXTURES.joinpath(*parts)


@pytest.fixture
def basic_repo() -> Path:
    return fixture_path("crepos", "basic")


@pytest.fixture
def collide_repo() -> Path:
    return fixture_path("crepos", "collide")


@pytest.fixture
def edge_repo() -> Path:
    return fixture_path("crepos", "edge")


@pytest.fixture
def basic_repo_copy(tmp_path) -> Path:
    """A mutable copy of the basic repo, for edit/update scenarios."""
    dst = tmp_path / "basic"
    shutil.copytree(fixture_path("crepos", "basic"), dst)
    return dst


@pytest.fixture
def mini_repo() -> Path:
    return fixture_path("mini_repo")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, independent of verbosity."""
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            name = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" in name:
                tag = name.split("test_criterion_", 1)[1]
                num = tag.split("_", 1)[0]
                desc = tag.split("_", 1)[1].replace("_", " ") if "_" in tag else ""
                verdict = "PASS" if status == "passed" else "FAIL"
                lines.append((int(num), f"acceptance {num} [{desc}]: {verdict}"))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
