import math

import numpy as np
import pytest

from conftest import load, sphere
from apps.aqp import (
    BRANCH_BOTH_ZERO,
    BRANCH_LAMBDA1_ONLY,
    BRANCH_MU_POSITIVE,
    CASE1_LEFT,
    CASE1_RIGHT,
    CASE2_KKT,
    CASE_AFFINE,
    kkt_linear_branch,
    solve_aqp,
)
from apps.qsic import CASE_BOTH_ZERO, CASE_DEPENDENT, solve_qsic
from core.problem import QuadraticFunction


class TestQsic:

    def test_disjoint_spheres(self):
        f = sphere([0.0, 0.0, 0.0])
        g = sphere([3.0, 0.0, 0.0])
        result = solve_qsic(f, g)
        assert result.case == CASE_DEPENDENT
        assert result.value == pytest.approx(3.125, abs=1e-3)
        assert result.decision == "DISJOINT"
        assert result.x is None or abs(result.x[1]) + abs(result.x[2]) <= 1e-2

    def test_overlapping_spheres(self):
        f = sphere([0.0, 0.0, 0.0])
        g = sphere([1.0, 0.0, 0.0])
        result = solve_qsic(f, g)
        assert result.value <= 1e-8
        assert result.decision == "INTERSECT"
        assert result.x is not None
        assert abs(f.evaluate(result.x)) <= 1e-6
        assert abs(g.evaluate(result.x)) <= 1e-6

    def test_problem_files_agree(self):
        disjoint = load('spheres_disjoint')
        touching = load('spheres_touching')
        assert solve_qsic(disjoint.f, disjoint.g).decision == "DISJOINT"
        assert solve_qsic(touching.f, touching.g, rho=1e-6).decision == "INTERSECT"

    def test_symmetric_in_f_and_g(self):
        f = sphere([0.0, 0.0, 0.0])
        g = sphere([0.0, 2.5, 0.0], radius=0.5)
        forward = solve_qsic(f, g)
        backward = solve_qsic(g, f)
        assert forward.value == pytest.approx(backward.value, abs=1e-4)
        assert forward.decision == backward.decision

    def test_independent_pair(self):
        p = load('qsic_independent')
        result = solve_qsic(p.f, p.g, rho=1e-6)
        assert result.value >= 0.0
        assert result.intersects == (result.value < 1e-6)

    def test_zero_quadratic_part_swaps(self):
        # P = 0: the plane x1 = 3 against the unit sphere
        f = QuadraticFunction.affine([1.0, 0.0, 0.0], -3.0)
        g = sphere([0.0, 0.0, 0.0])
        result = solve_qsic(f, g)
        assert result.case == CASE_DEPENDENT
        assert result.decision == "DISJOINT"
        assert result.value > 0.0

    def test_affine_pair(self):
        crossing = solve_qsic(QuadraticFunction.affine([1.0, 0.0], -1.0),
                              QuadraticFunction.affine([0.0, 1.0], -2.0))
        assert crossing.case == CASE_BOTH_ZERO
        assert crossing.decision == "INTERSECT"
        assert np.allclose(crossing.x, [1.0, 2.0])

        parallel = solve_qsic(QuadraticFunction.affine([1.0, 0.0]),
                              QuadraticFunction.affine([1.0, 0.0], -2.0))
        assert parallel.value == pytest.approx(2.0)
        assert parallel.decision == "DISJOINT"

    def test_rejects_non_positive_rho(self):
        with pytest.raises(ValueError):
            solve_qsic(sphere([0.0, 0.0]), sphere([1.0, 0.0]), rho=0.0)


class TestAqp:

    def test_worked_example(self, aqp_pair):
        f, g = aqp_pair
        result = solve_aqp(f, g)
        assert result.case == CASE2_KKT
        assert result.status == "Optimal"
        assert result.value == pytest.approx(0.0, abs=1e-6)
        assert result.kkt_branch == BRANCH_BOTH_ZERO
        assert np.allclose(result.x, [1.0, 0.0], atol=1e-4)
        assert g.evaluate(result.x) <= 1e-6

        audit = {a.branch: a for a in result.audit}
        assert not audit[BRANCH_MU_POSITIVE].accepted
        assert audit[BRANCH_BOTH_ZERO].accepted
        assert not audit[BRANCH_LAMBDA1_ONLY].accepted
        assert audit[BRANCH_LAMBDA1_ONLY].z1 == pytest.approx(0.25)
        assert "0.75" in audit[BRANCH_LAMBDA1_ONLY].reason

    def test_report_shape(self, aqp_pair):
        report = solve_aqp(*aqp_pair).to_dict()
        assert report['kkt_branch'] == BRANCH_BOTH_ZERO
        assert [a['branch'] for a in report['audit']] == [BRANCH_MU_POSITIVE, BRANCH_BOTH_ZERO,
                                                          BRANCH_LAMBDA1_ONLY]

    def test_independent_right_side(self):
        f = QuadraticFunction.from_data(np.eye(2), a0=1.0)
        g = QuadraticFunction.from_data(np.diag([1.0, 0.0]), a0=-1.0)
        result = solve_aqp(f, g)
        assert result.case == CASE1_RIGHT
        assert result.value == pytest.approx(1.0, abs=1e-3)
        assert result.gamma_star == pytest.approx(1.0, abs=1e-3)

    def test_independent_left_side(self):
        f = QuadraticFunction.from_data(-np.eye(2), a0=-1.0)
        g = QuadraticFunction.from_data(np.diag([1.0, 0.0]), a0=-1.0)
        result = solve_aqp(f, g)
        assert result.case == CASE1_LEFT
        assert result.value == pytest.approx(1.0, abs=1e-3)

    def test_affine_case(self):
        result = solve_aqp(QuadraticFunction.affine([1.0, 0.0], -1.0),
                           QuadraticFunction.affine([0.0, 1.0]))
        assert result.case == CASE_AFFINE
        assert result.value == 0.0
        assert np.allclose(result.x, [1.0, 0.0])

        empty = solve_aqp(QuadraticFunction.affine([1.0, 0.0]), QuadraticFunction.affine([0.0, 0.0], 1.0))
        assert empty.status == "Infeasible"

    def test_affine_objective_on_disc(self):
        f = QuadraticFunction.affine([1.0, 0.0], -3.0)
        g = sphere([0.0, 0.0])
        result = solve_aqp(f, g)
        assert result.kkt_branch == BRANCH_MU_POSITIVE
        assert result.value == pytest.approx(2.0, abs=1e-4)
        assert np.allclose(result.x, [1.0, 0.0], atol=1e-2)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            solve_aqp(sphere([0.0, 0.0]), sphere([0.0, 0.0, 0.0]))

    def test_constant_constraint_row(self):
        f = QuadraticFunction.from_data([[1.0]], a0=-1.0)
        result = solve_aqp(f, QuadraticFunction.affine([0.0], -1.0))
        assert result.status == "Optimal"
        assert result.value == pytest.approx(0.0, abs=1e-6)
        assert abs(result.x[0]) == pytest.approx(1.0, abs=1e-4)
        audit = {a.branch: a for a in result.audit}
        assert not audit[BRANCH_MU_POSITIVE].accepted
        assert "constant" in audit[BRANCH_MU_POSITIVE].reason

        empty = solve_aqp(f, QuadraticFunction.affine([0.0], 1.0))
        assert empty.status == "Infeasible"
        assert empty.value == math.inf

    @pytest.mark.parametrize("case", ["disc", "constant_row", "right_side", "worked"])
    def test_value_is_a_lower_bound_on_samples(self, case, aqp_pair):
        f, g = {
            "disc": (QuadraticFunction.affine([1.0, 0.0], -3.0), sphere([0.0, 0.0])),
            "constant_row": (QuadraticFunction.from_data([[1.0]], a0=-1.0), QuadraticFunction.affine([0.0], -1.0)),
            "right_side": (QuadraticFunction.from_data(np.eye(2), a0=1.0),
                           QuadraticFunction.from_data(np.diag([1.0, 0.0]), a0=-1.0)),
            "worked": aqp_pair,
        }[case]
        result = solve_aqp(f, g)
        assert result.status == "Optimal"
        rng = np.random.default_rng(11)
        samples = rng.uniform(-3.0, 3.0, size=(10000, f.n))
        feasible = [x for x in samples if g.evaluate(x) <= 0.0]
        assert feasible
        tol = 1e-3 * (1.0 + abs(result.value))
        assert min(abs(f.evaluate(x)) for x in feasible) >= result.value - tol


class TestKktLinearBranch:

    def test_member_when_inequality_holds(self):
        f = QuadraticFunction.from_data(np.eye(2), a=[-2.0, 0.0])
        g = QuadraticFunction.from_data(np.eye(2), a=[-2.0, 0.0])
        branch = kkt_linear_branch(f, g, 1.0)
        assert branch.consistent
        assert np.allclose(branch.particular, [1.0, 0.0])
        assert branch.z1 == pytest.approx(-1.0)
        assert branch.lambda1 == pytest.approx(-2.0)
        assert len(branch.members) == 1

    def test_no_member_when_inequality_fails(self):
        f = QuadraticFunction.from_data(np.eye(2), a=[-2.0, 0.0])
        g = QuadraticFunction.from_data(np.eye(2), a=[-2.0, 0.0], a0=5.0)
        branch = kkt_linear_branch(f, g, 1.0)
        assert branch.consistent
        assert not branch.members
        assert "violated" in branch.reason

    def test_inconsistent_stationarity(self):
        f = QuadraticFunction.from_data(np.diag([1.0, 0.0]), a=[0.0, 1.0])
        g = QuadraticFunction.from_data(np.diag([2.0, 0.0]))
        branch = kkt_linear_branch(f, g, 2.0)
        assert not branch.consistent
        assert not branch.members

    def test_stationary_family_satisfies_kkt_lines(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            n = int(rng.integers(1, 4))
            B = rng.normal(size=(n, n))
            P = B @ B.T + 0.5 * np.eye(n)
            f = QuadraticFunction.from_data(P, a=rng.normal(size=n), a0=float(rng.normal()))
            t_star = float(rng.uniform(-2.0, 2.0))
            g = QuadraticFunction.from_data(t_star * P, a=rng.normal(size=n), a0=float(rng.normal()))
            branch = kkt_linear_branch(f, g, t_star)
            assert branch.consistent
            x = branch.particular
            assert np.max(np.abs(2.0 * P @ x + f.a)) <= 1e-9 * (1.0 + np.linalg.norm(f.a))
            assert branch.z1 == pytest.approx(0.5 * float(f.a @ x) + f.a0, abs=1e-12)
            assert branch.lambda1 == pytest.approx(2.0 * branch.z1)
            assert f.evaluate(x) == pytest.approx(branch.z1, abs=1e-8)
            for member in branch.members:
                r = float((g.a - t_star * f.a) @ member) + g.a0 - t_star * f.a0
                assert r + t_star * branch.z1 <= 1e-7
