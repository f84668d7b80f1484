import numpy as np
import pytest
from hypothesis import strategies as st

from minleaf.data import Dataset


def make_ds(X, y, K=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.int64)
    return Dataset(X, y, int(K if K is not None else max(2, y.max() + 1)))


def random_ds(rng, n, p, K=2, grid=None):
    """Random dataset; ``grid`` limits features to that many distinct levels."""
    if grid:
        X = rng.integers(0, grid, size=(n, p)) / max(grid - 1, 1)
    else:
        X = rng.random((n, p))
    y = rng.integers(0, K, size=n)
    y[:K] = np.arange(K)  # every class present
    return make_ds(X, y, K)


@st.composite
def small_datasets(draw, max_n=30, max_p=3, K=2, levels=6):
    n = draw(st.integers(K, max_n))
    p = draw(st.integers(1, max_p))
    cells = draw(st.lists(st.integers(0, levels - 1), min_size=n * p, max_size=n * p))
    y = draw(st.lists(st.integers(0, K - 1), min_size=n, max_size=n))
    y[:K] = list(range(K))
    X = np.asarray(cells, dtype=float).reshape(n, p) / (levels - 1)
    return make_ds(X, y, K)


@pytest.fixture
def xor_ds():
    return make_ds([[0.1, 0.1], [0.9, 0.9], [0.1, 0.9], [0.9, 0.1]], [0, 0, 1, 1])


@pytest.fixture
def line_ds():
    return make_ds([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
