import sys

import numpy as np
import pytest

from dkae.numerics import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


def random_psd(rng, n, rank=None):
    m = rng.standard_normal((n, rank or n))
    return m @ m.T


def pytest_terminal_summary(terminalreporter):
    acc = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(acc, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
