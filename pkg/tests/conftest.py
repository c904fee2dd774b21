import numpy as np
import pytest

from interq.model import solve_riccati, validate_system

PAPER_A = [[1.5, 2.0], [0.0, 1.51]]
PAPER_B = [[0.0], [1.0]]


def paper_system(lam=50.0, noise=None, K_W=None):
    return validate_system(
        PAPER_A, PAPER_B, np.eye(2), [[1.0]], np.eye(2) if K_W is None else K_W, 0.95, lam, noise=noise
    )


@pytest.fixture(scope="session")
def paper():
    m = paper_system(50.0)
    return m, solve_riccati(m)


def random_system(rng, n=None, m_in=None):
    """Random controllable/observable plant with moderate scales."""
    n = n or int(rng.integers(1, 5))
    m_in = m_in or int(rng.integers(1, n + 1))
    while True:
        A = rng.normal(size=(n, n)) * 0.8
        B = rng.normal(size=(n, m_in))
        C = rng.normal(size=(n, n))
        Q = C @ C.T / n + 0.1 * np.eye(n)
        D = rng.normal(size=(m_in, m_in))
        R = D @ D.T + 0.5 * np.eye(m_in)
        gamma = float(rng.uniform(0.5, 0.97))
        # skip nearly uncontrollable draws: their P is huge and the absolute
        # fixed-point defect is then limited by float roundoff
        ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        sv = np.linalg.svd(ctrb, compute_uv=False)
        if sv[-1] < 0.05 * sv[0]:
            continue
        try:
            return validate_system(A, B, Q, R, np.eye(n), gamma, float(rng.uniform(1, 100)))
        except ValueError:
            continue


def pytest_terminal_summary(terminalreporter):
    from .helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
