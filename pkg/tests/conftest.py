import numpy as np
import pytest
from hypothesis import strategies as st

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])

ACCEPTANCE_LINES = []


def example_M(alpha):
    """``I - alpha J``, the planar friction-plus-field example."""
    return np.eye(2) - alpha * J2


@st.composite
def admissible_matrices(draw, sizes=(2, 3, 5)):
    """``M = S + K`` with ``S`` symmetric positive definite and ``K`` antisymmetric."""
    n = draw(st.sampled_from(sizes))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    S = A @ A.T / n + draw(st.floats(0.2, 2.0)) * np.eye(n)
    B = rng.standard_normal((n, n))
    K = draw(st.floats(0.0, 3.0)) * (B - B.T) / 2
    return S + K


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
