import pathlib
import sys

import pytest

sys.path.insert(0, str(pathlib.Path(__file__).parent))

CORPUS = pathlib.Path(__file__).parent.parent / "corpus"

# one "ACCEPTANCE n: PASS/FAIL" line per criterion, shown in the terminal
# summary regardless of output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus_dir() -> pathlib.Path:
    return CORPUS


@pytest.fixture(scope="session")
def corpus_sources() -> dict[str, str]:
    return {path.stem: path.read_text() for path in sorted(CORPUS.glob("*.qpl"))}


def compile_source(source: str):
    from cqpl import check_program, parse
    checked = check_program(parse(source))
    assert checked.ok, [str(d) for d in checked.diagnostics]
    return checked
