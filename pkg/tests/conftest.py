import random

import pytest

from callrank.corpus import FunctionSequence

# filled by test_acceptance; printed once at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


def make_seqs(rows, project="p", mode="full_names"):
    """``rows`` of token lists -> FunctionSequences in one file of ``project``."""
    return [FunctionSequence(f"{project}/F.java", r[0], list(r[1:]), None, mode) for r in rows]


@pytest.fixture
def rng():
    return random.Random(12345)
