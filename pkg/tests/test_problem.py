import numpy as np
import pytest

from core.problem import (
    JointRangePoint,
    ObjectiveF,
    Po4Problem,
    QuadraticFunction,
    eval_F,
    eval_quadratic,
    validate_problem,
)


def test_eval_quadratic_examples():
    q = QuadraticFunction.from_data(np.eye(2))
    assert eval_quadratic(q, [0.0, 0.0]) == 0.0
    assert eval_quadratic(q, [1.0, 2.0]) == pytest.approx(5.0)

    P = QuadraticFunction(A=np.diag([1.0, 2.0, 3.0]), a=[0.0, 1.0, 1.0], a0=7.0)
    assert eval_quadratic(P, [1.0, 1.0, 1.0]) == pytest.approx(15.0)


def test_eval_quadratic_dimension_mismatch():
    q = QuadraticFunction.from_data(np.eye(2))
    with pytest.raises(ValueError):
        q.evaluate([1.0, 2.0, 3.0])


def test_eval_F_examples():
    F = ObjectiveF.from_coefficients(1.0, 0.0, 2.0, 1.0, 2.0)
    assert eval_F(F, [0.0, 0.0]) == 0.0
    assert eval_F(F, [1.0, 1.0]) == pytest.approx(6.0)
    assert eval_F(ObjectiveF.squared_norm(), [3.0, 4.0]) == pytest.approx(25.0)


def test_asymmetric_input_is_symmetrized():
    rng = np.random.default_rng(1)
    raw = rng.normal(size=(4, 4))
    q = QuadraticFunction(A=raw, a=rng.normal(size=4), a0=0.3)
    sym = QuadraticFunction(A=0.5 * (raw + raw.T), a=q.a, a0=0.3)
    assert np.array_equal(q.A, q.A.T)
    assert q.input_defect > 0
    for x in rng.normal(size=(100, 4)):
        assert q.evaluate(x) == pytest.approx(sym.evaluate(x), rel=1e-12, abs=1e-12)


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(2)
    q = QuadraticFunction(A=rng.normal(size=(3, 3)), a=rng.normal(size=3), a0=1.0)
    h = 1e-5
    for _ in range(20):
        x = rng.uniform(-10, 10, size=3)
        x *= min(1.0, 10.0 / np.linalg.norm(x))
        grad = q.gradient(x)
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd = (q.evaluate(x + e) - q.evaluate(x - e)) / (2 * h)
            assert fd == pytest.approx(grad[i], abs=1e-6 * (1 + abs(grad[i])))
    assert np.allclose(q.hessian(), 2.0 * q.A)


def test_homogenized_reproduces_value():
    rng = np.random.default_rng(3)
    for _ in range(100):
        q = QuadraticFunction(A=rng.normal(size=(3, 3)), a=rng.normal(size=3), a0=rng.normal())
        x = rng.normal(size=3)
        v = np.append(x, 1.0)
        assert v @ q.homogenized() @ v == pytest.approx(q.evaluate(x), rel=1e-10, abs=1e-10)


def test_validate_example3(example3):
    report = validate_problem(example3)
    assert report.theta_psd
    assert not report.PQ_dependent
    assert report.path == "SDP"
    assert report.n == 3 and report.m == 0


def test_validate_identical_matrices():
    f = QuadraticFunction.from_data(np.eye(2))
    g = QuadraticFunction.from_data(np.eye(2), a0=-1.0)
    report = validate_problem(Po4Problem(f=f, g=g))
    assert report.PQ_dependent
    assert report.t_star == pytest.approx(1.0)
    assert report.path == "DEPENDENT"


def test_validate_nonconvex_objective(example2):
    report = validate_problem(example2)
    assert not report.theta_psd
    assert report.path == "NONCONVEX_F"


def test_problem_rejects_mismatched_rows():
    f = QuadraticFunction.from_data(np.eye(2))
    with pytest.raises(ValueError):
        Po4Problem(f=f, g=f, a=[1.0, 0.0], b=[1.0], c=[0.0, 0.0])


def test_joint_range_point_consistency(squares):
    f, g = squares
    point = JointRangePoint.from_witness(f, g, [2.0, 3.0])
    assert np.allclose(point.z, [4.0, 9.0])
    assert point.is_consistent(f, g)
    assert not JointRangePoint(z=np.array([4.0, 8.0]), witness_x=np.array([2.0, 3.0])).is_consistent(f, g)
