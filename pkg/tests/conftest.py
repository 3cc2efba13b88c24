import numpy as np
import pytest

from hlnc.model import ChannelModel, generate_sfm
from hlnc.schemes import SCHEME_NAMES, make_scheme, run_block

_LINES = []


@pytest.fixture(scope="session", autouse=True)
def warm_jit():
    """Load (or compile) every numba kernel once so timed sections measure steady state."""
    rng = np.random.default_rng(0)
    ch = ChannelModel.uniform(4, 0.3)
    for name in SCHEME_NAMES:
        for _ in range(3):
            sfm = generate_sfm(6, 4, ch, rng)
            if sfm.total:
                run_block(make_scheme(name), sfm, ch, rng, log=True)


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line; lines are repeated in the terminal summary."""
    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
        print(line)
        _LINES.append((number, line))
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
