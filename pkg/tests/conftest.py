import itertools

import numpy as np
import pytest


def brute_nearest(basis, x, radius=4):
    """Closest lattice coordinates by exhaustive search of a box around rounded coordinates."""
    basis = np.asarray(basis, dtype=np.float64)
    n = basis.shape[0]
    c0 = np.rint(np.linalg.solve(basis, x)).astype(np.int64)
    best, best_d = None, np.inf
    for off in itertools.product(range(-radius, radius + 1), repeat=n):
        c = c0 + np.array(off)
        d = float(np.sum((basis @ c - x) ** 2))
        if d < best_d - 1e-12:
            best, best_d = c, d
    return best, best_d


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[k])
