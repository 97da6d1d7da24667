import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_stable(rng, d, margin=(0.1, 1.0)):
    """Random real d x d matrix with all eigenvalue real parts < 0, and an offset."""
    M = rng.normal(size=(d, d))
    top = np.linalg.eigvals(M).real.max()
    return M - (top + rng.uniform(*margin)) * np.eye(d), rng.normal(size=d)


def random_quadratic(rng, m):
    """Symmetric positive definite Q of size 2m with unit spectral norm."""
    B = rng.normal(size=(2 * m, 2 * m))
    Q = B @ B.T + 0.1 * np.eye(2 * m)
    return Q / np.linalg.norm(Q, 2)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import OUTCOMES
    except ImportError:
        return
    if not OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(OUTCOMES):
        terminalreporter.write_line(OUTCOMES[number].line())
