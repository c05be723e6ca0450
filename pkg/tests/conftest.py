import random

import pytest

from csseal.field256 import P


@pytest.fixture
def rnd():
    return random.Random(20240601)


def field_ints(rnd, n, bound=2**256):
    """Random operands, weighted toward the edges of the limb range."""
    edges = [0, 1, 2, P - 1, P, P + 1, 2 * P - 1, 2**255 - 1, 2**256 - 1, 2**32 - 1, 2**224]
    out = list(edges)
    while len(out) < n:
        out.append(rnd.randrange(bound))
    return out[:n]


# acceptance criteria register a one-line verdict here; printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
