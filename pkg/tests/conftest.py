import numpy as np
import pytest

from cprank.kruskal import KruskalModel
from cprank.tensor import DenseTensor3


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_model(rng, dims, R, alpha=None):
    i, j, k = dims
    if alpha is None:
        alpha = rng.uniform(0.5, 1.5, R) * rng.choice([-1.0, 1.0], R)
    return KruskalModel(
        rng.standard_normal((i, R)),
        rng.standard_normal((j, R)),
        rng.standard_normal((k, R)),
        alpha,
    )


def random_tensor(rng, dims):
    return DenseTensor3(rng.standard_normal(dims))


def enumeration_tensor():
    """2x2x2 tensor whose vec is (1, ..., 8)."""
    return DenseTensor3(np.arange(1.0, 9.0), (2, 2, 2))


# R=1 model used across the examples: a=(1,2), b=(1,1), c=(1,-1), alpha=3
def small_rank_one():
    return KruskalModel([[1.0], [2.0]], [[1.0], [1.0]], [[1.0], [-1.0]], [3.0])


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
