import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(ROOT)

from core.problem import ObjectiveF, Po4Problem, QuadraticFunction  # noqa: E402
from core.settings import SolverOptions  # noqa: E402
from storage.problem_file import ProblemFile  # noqa: E402

PROBLEMS_DIR = os.path.join(ROOT, 'problems')

EXAMPLE3_VALUE = 43.7102


def problem_path(name: str) -> str:
    return os.path.join(PROBLEMS_DIR, f"{name}.json")


def load(name: str) -> Po4Problem:
    return ProblemFile.load(problem_path(name)).problem


def sphere(center, radius: float = 1.0) -> QuadraticFunction:
    """||x - center||^2 - radius^2"""
    center = np.asarray(center, dtype=float)
    n = center.size
    return QuadraticFunction(A=np.eye(n), a=-2.0 * center, a0=float(center @ center) - radius ** 2)


@pytest.fixture
def options():
    return SolverOptions()


@pytest.fixture
def example1():
    return load('example1')


@pytest.fixture
def example2():
    return load('example2')


@pytest.fixture
def example3():
    return load('example3')


@pytest.fixture
def aqp_pair():
    p = load('aqp_example')
    return p.f, p.g


@pytest.fixture
def squares():
    """f = x1^2, g = x2^2"""
    f = QuadraticFunction.from_data([[1.0, 0.0], [0.0, 0.0]])
    g = QuadraticFunction.from_data([[0.0, 0.0], [0.0, 1.0]])
    return f, g


@pytest.fixture
def shifted_squares():
    """f = x1^2 + 3, g = x2^2 + 4: the joint range is {z >= (3, 4)}"""
    f = QuadraticFunction.from_data([[1.0, 0.0], [0.0, 0.0]], a0=3.0)
    g = QuadraticFunction.from_data([[0.0, 0.0], [0.0, 1.0]], a0=4.0)
    return Po4Problem(f=f, g=g, F=ObjectiveF.squared_norm())
