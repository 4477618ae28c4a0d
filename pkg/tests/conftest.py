import numpy as np
import pytest

from afsched.model import GainTable, NetworkInstance, SystemParams


def make_instance(sd, sr=None, rd=None, links=None, relay_links=None, **params):
    """Hand-built instance with explicit gains; default links i -> i and
    every relay usable by every link."""
    sd = np.asarray(sd, dtype=float)
    n, d = sd.shape
    sr = np.zeros((n, 0)) if sr is None else np.asarray(sr, dtype=float)
    m = sr.shape[1]
    rd = np.zeros((m, d)) if rd is None else np.asarray(rd, dtype=float)
    links = links if links is not None else [(i, i % d) for i in range(n)]
    if relay_links is None:
        relay_links = [(i, r, j) for i, j in links for r in range(m)]
    return NetworkInstance(n, m, d, tuple(links), tuple(relay_links), GainTable(sd, sr, rd),
                           SystemParams(**params))


@pytest.fixture
def single_link():
    return make_instance([[0.001]], T=1, demand=1)


ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    """Remember one acceptance verdict; printed again in the summary."""
    line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
