import numpy as np
import pytest

from qtag.circuit import GROUPS, SINGLE_QUBIT, Circuit
from qtag.diffusion import DiffusionSchedule, make_backend


def random_circuit(rng: np.random.Generator, num_qubits: int = 8, num_columns: int = 12,
                   density: float = 0.6) -> Circuit:
    """Valid random circuit: each column gets at most one group of each multi-qubit kind."""
    grid = np.zeros((num_qubits, num_columns), dtype=np.int8)
    singles = [int(g) for g in SINGLE_QUBIT]
    for t in range(num_columns):
        free = list(rng.permutation(num_qubits))
        for roles in GROUPS.values():
            if len(free) >= len(roles) and rng.random() < density / 2:
                for r in roles:
                    grid[free.pop(), t] = int(r)
        for q in free:
            if rng.random() < density:
                grid[q, t] = singles[rng.integers(len(singles))]
    return Circuit(grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def zero_backend():
    return make_backend("zero")


@pytest.fixture(scope="session")
def schedule():
    return DiffusionSchedule(50)


# acceptance criteria record a one-line verdict here; printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
