import numpy as np
import pytest

from dlresnet.model import Dataset, ResNetParams

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def np_rng():
    return np.random.default_rng(20240531)


def ball_params(gen, m, d, k, L, radius_frac=0.9, norm="fro"):
    """ResNetParams with every hidden layer at ``radius_frac * 0.5/L``."""
    A = gen.standard_normal((m, d))
    B = gen.standard_normal((k, m))
    W = gen.standard_normal((L, m, m))
    for l in range(L):
        s = np.linalg.norm(W[l]) if norm == "fro" else np.linalg.norm(W[l], 2)
        W[l] *= radius_frac * 0.5 / L / s
    return ResNetParams(A, B, W)


def random_data(gen, d, k, n):
    return Dataset(gen.standard_normal((d, n)), gen.standard_normal((k, n)))
