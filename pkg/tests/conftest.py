import numpy as np
import pytest

from bdris.channels import ChannelSet, ScenarioConfig, draw_channels
from bdris.linalg import complex_gaussian


def random_channels(K=2, nr=2, nt=2, M=3, seed=0, noise=1.0, scale=1.0) -> ChannelSet:
    rng = np.random.default_rng(seed)
    h = scale * complex_gaussian((K, K, nr, nt), rng)
    f = complex_gaussian((K, nr, M), rng)
    g = complex_gaussian((K, nt, M), rng)
    return ChannelSet(h, f, g, noise)


def scenario_channels(seed=0, **changes) -> ChannelSet:
    cfg = ScenarioConfig(**changes)
    return draw_channels(cfg, np.random.default_rng(seed))


def random_symmetric_unitary(m, rng):
    z = complex_gaussian((m, m), rng)
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return q @ q.T


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> str:
    line = f"criterion {number:>2} [{title}]: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
