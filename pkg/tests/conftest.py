import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex) / 2,
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex) / 2,
    "z": np.array([[1, 0], [0, -1]], dtype=complex) / 2,
}


def collective_full(axis: str, n: int) -> np.ndarray:
    """Sum of single-spin operators on the full 2^N space (qubit 0 leftmost, |0> = up)."""
    dim = 2**n
    out = np.zeros((dim, dim), dtype=complex)
    for k in range(n):
        ops = [np.eye(2)] * n
        ops[k] = PAULI[axis]
        term = ops[0]
        for op in ops[1:]:
            term = np.kron(term, op)
        out += term
    return out


def dicke_isometry(n: int) -> np.ndarray:
    """Columns are symmetric states with k up spins, ordered by ascending projection."""
    dim = 2**n
    cols = np.zeros((dim, n + 1), dtype=complex)
    for bits in itertools.product((0, 1), repeat=n):
        ups = bits.count(0)
        idx = int("".join(map(str, bits)), 2) if n else 0
        cols[idx, ups] = 1.0
    return cols / np.linalg.norm(cols, axis=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])
