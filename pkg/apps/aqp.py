"""
Absolute-value quadratic program: inf |f(x)| s.t. g(x) <= 0.

Written as inf z1^2 s.t. f(x) = z1, g(x) <= 0. With {P, Q} independent the
value comes from the certificate SDP with F = z1^2 and the row z2 <= 0;
with Q = t* P the KKT system of the Q-eliminated program is enumerated.
"""
import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import scipy.linalg

from core.linalg import linear_dependence
from core.problem import ObjectiveF, Po4Problem, QuadraticFunction
from core.settings import SolverOptions
from solvers.recovery import newton_root
from solvers.sprocedure import Po4Status, solve_value
from solvers.subsolvers import (
    SubproblemStatus,
    solve_qp1eqc,
    solve_qp1eqc_on_hyperplane,
    solve_qp1qc,
)

logger = logging.getLogger(__name__)

CASE1_ZERO = "Case1_zero"
CASE1_RIGHT = "Case1_positive_right"
CASE1_LEFT = "Case1_positive_left"
CASE2_KKT = "Case2_KKT"
CASE_AFFINE = "Affine"

BRANCH_MU_POSITIVE = "MuPositive"
BRANCH_BOTH_ZERO = "BothZero"
BRANCH_LAMBDA1_ONLY = "Lambda1Only"

KKT_TOL = 1e-7
CONSISTENCY_TOL = 1e-9


@dataclass
class BranchAudit:
    """One KKT branch attempt"""
    branch: str
    accepted: bool
    reason: str
    z1: Optional[float] = None
    x: Optional[np.ndarray] = None
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'branch': self.branch,
            'accepted': self.accepted,
            'reason': self.reason,
            'z1': self.z1,
            'x': self.x.tolist() if self.x is not None else None,
            'lambda1': self.lambda1,
            'lambda2': self.lambda2,
        }


@dataclass
class AqpResult:
    value: float
    x: Optional[np.ndarray]
    case: str
    kkt_branch: Optional[str] = None
    status: str = "Optimal"
    gamma_star: Optional[float] = None
    audit: List[BranchAudit] = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> Dict[str, Any]:
        value = self.value
        if math.isinf(value):
            value = "inf" if value > 0 else "-inf"
        return {
            'status': self.status,
            'value': value,
            'x': self.x.tolist() if self.x is not None else None,
            'case': self.case,
            'kkt_branch': self.kkt_branch,
            'gamma_star': self.gamma_star,
            'audit': [a.to_dict() for a in self.audit],
            'message': self.message,
        }


@dataclass
class KktLinearBranch:
    """
    Solutions of 2Px + p = 0 with z1 = p^T x / 2 + p0 and lambda1 = 2 z1.

    The family is particular + span(basis); members lists the points of the
    family that pass the lambda1 != 0 and linear inequality filters.
    """
    consistent: bool
    particular: Optional[np.ndarray] = None
    basis: Optional[np.ndarray] = None
    z1: Optional[float] = None
    lambda1: Optional[float] = None
    members: List[np.ndarray] = field(default_factory=list)
    reason: str = ""


def _eliminated_row(f: QuadraticFunction, g: QuadraticFunction, t_star: float):
    """r(x) = (q - t* p)^T x + (q0 - t* p0); the constraint reads r(x) + t* z1 <= 0"""
    return g.a - t_star * f.a, g.a0 - t_star * f.a0


def kkt_linear_branch(f: QuadraticFunction, g: QuadraticFunction, t_star: float) -> KktLinearBranch:
    """
    KKT branch with lambda1 != 0 and lambda2 = 0 of the Q-eliminated program

    Args:
        f: Objective quadratic (P, p, p0)
        g: Constraint quadratic with Q = t_star * P
        t_star: Dependence ratio

    Returns:
        KktLinearBranch; an inconsistent stationarity system gives no members
    """
    P, p, p0 = f.A, f.a, f.a0
    w, w0 = _eliminated_row(f, g, t_star)
    x_p, _, _, _ = scipy.linalg.lstsq(2.0 * P, -p)
    residual = float(np.max(np.abs(2.0 * P @ x_p + p))) if p.size else 0.0
    if residual > CONSISTENCY_TOL * (1.0 + float(np.linalg.norm(p))):
        return KktLinearBranch(consistent=False, reason=f"2Px + p = 0 inconsistent (residual {residual:.2e})")

    basis = scipy.linalg.null_space(P)
    z1 = 0.5 * float(p @ x_p) + p0
    lam1 = 2.0 * z1
    branch = KktLinearBranch(consistent=True, particular=x_p, basis=basis, z1=z1, lambda1=lam1)
    if abs(lam1) <= CONSISTENCY_TOL:
        branch.reason = "lambda1 = 0 on the stationary family"
        return branch

    slack = float(w @ x_p) + w0 + t_star * z1
    if slack <= KKT_TOL:
        branch.members.append(x_p)
    elif basis.shape[1] and np.linalg.norm(basis.T @ w) > CONSISTENCY_TOL:
        # move along the family until the inequality holds with unit margin
        d = basis @ (basis.T @ w)
        branch.members.append(x_p - ((slack + 1.0) / float(w @ d)) * d)
    else:
        branch.reason = f"linear inequality violated by {slack:.6g}"
    return branch


def _multipliers_positive(f: QuadraticFunction, g: QuadraticFunction, t_star: float,
                          x: np.ndarray, z1: float):
    """(lambda1, lambda2 > 0) solving the first two KKT lines, or None"""
    w, _ = _eliminated_row(f, g, t_star)
    grad = 2.0 * f.A @ x + f.a
    K = np.vstack([np.array([[-1.0, t_star]]), np.column_stack([grad, w])])
    rhs = np.r_[-2.0 * z1, np.zeros(f.n)]
    lam, _, _, _ = scipy.linalg.lstsq(K, rhs)
    if np.max(np.abs(K @ lam - rhs)) > KKT_TOL * (1.0 + abs(z1)):
        return None
    if lam[1] > KKT_TOL:
        return lam
    N = scipy.linalg.null_space(K)
    for j in range(N.shape[1]):
        if abs(N[1, j]) > KKT_TOL:
            return lam + ((1.0 - lam[1]) / N[1, j]) * N[:, j]
    return None


def _branch_mu_positive(f: QuadraticFunction, g: QuadraticFunction, t_star: float,
                        opts: SolverOptions) -> BranchAudit:
    """lambda2 > 0: inequality active, inf z1^2 on two equalities in y = (x, z1)"""
    n = f.n
    w, w0 = _eliminated_row(f, g, t_star)
    if not np.any(w) and t_star == 0.0:
        # a constant row has zero gradient, so lambda2 adds nothing to the other branches
        reason = "constant inequality row is never active" if w0 != 0.0 else "inequality row vanishes identically"
        return BranchAudit(BRANCH_MU_POSITIVE, False, reason)
    objective = QuadraticFunction(A=np.diag(np.r_[np.zeros(n), 1.0]), a=np.zeros(n + 1))
    lifted = f.embedded(n + 1)
    constraint = QuadraticFunction(A=lifted.A, a=lifted.a + np.r_[np.zeros(n), -1.0], a0=f.a0)
    sol = solve_qp1eqc_on_hyperplane(objective, constraint, np.r_[w, t_star], w0, opts)
    if sol.x is None:
        return BranchAudit(BRANCH_MU_POSITIVE, False, f"active-inequality program: {sol.status.value}")
    x, z1 = sol.x[:n], float(sol.x[n])
    if z1 * z1 <= opts.aqp_zero_tol:
        z1 = 0.0
    lam = _multipliers_positive(f, g, t_star, x, z1)
    if lam is None:
        return BranchAudit(BRANCH_MU_POSITIVE, False, "no multipliers with lambda2 > 0", z1=z1, x=x)
    return BranchAudit(BRANCH_MU_POSITIVE, True, "KKT point with active inequality", z1=z1, x=x,
                       lambda1=float(lam[0]), lambda2=float(lam[1]))


def _branch_both_zero(f: QuadraticFunction, g: QuadraticFunction, t_star: float,
                      opts: SolverOptions) -> BranchAudit:
    """lambda1 = lambda2 = 0: z1 = 0, find x with f(x) = 0 and r(x) <= 0"""
    w, w0 = _eliminated_row(f, g, t_star)
    r = QuadraticFunction.affine(w, w0)
    sol = solve_qp1eqc(r, f, opts)
    if sol.status == SubproblemStatus.INFEASIBLE:
        return BranchAudit(BRANCH_BOTH_ZERO, False, "f(x) = 0 has no solution")
    if sol.value > KKT_TOL:
        return BranchAudit(BRANCH_BOTH_ZERO, False, f"inf r on f = 0 is {sol.value:.6g} > 0")

    def accept(x, how):
        return BranchAudit(BRANCH_BOTH_ZERO, True, how, z1=0.0, x=x, lambda1=0.0, lambda2=0.0)

    def valid(x):
        return x is not None and abs(f.evaluate(x)) <= KKT_TOL and r.evaluate(x) <= KKT_TOL

    if valid(sol.x):
        return accept(sol.x, "root of f with r <= 0")

    # unbounded or unextracted: look for a root of f on the boundary r = 0
    norm2 = QuadraticFunction(A=np.eye(f.n), a=np.zeros(f.n))
    if np.any(w):
        boundary = solve_qp1eqc_on_hyperplane(norm2, f, w, w0, opts)
        if valid(boundary.x):
            return accept(boundary.x, "least-norm root of f on r = 0")
    nearest = solve_qp1eqc(norm2, f, opts)
    if valid(nearest.x):
        return accept(nearest.x, "least-norm root of f")
    return BranchAudit(BRANCH_BOTH_ZERO, False, f"value {sol.value:.6g} <= 0 but no witness extracted")


def _branch_lambda1_only(f: QuadraticFunction, g: QuadraticFunction, t_star: float) -> BranchAudit:
    branch = kkt_linear_branch(f, g, t_star)
    if not branch.members:
        return BranchAudit(BRANCH_LAMBDA1_ONLY, False, branch.reason or "no member of the stationary family",
                           z1=branch.z1, x=branch.particular, lambda1=branch.lambda1, lambda2=0.0)
    return BranchAudit(BRANCH_LAMBDA1_ONLY, True, "stationary point of f", z1=branch.z1,
                       x=branch.members[0], lambda1=branch.lambda1, lambda2=0.0)


def _dependent_case(f: QuadraticFunction, g: QuadraticFunction, t_star: float,
                    opts: SolverOptions) -> AqpResult:
    w, w0 = _eliminated_row(f, g, t_star)
    if not np.any(w) and t_star == 0.0 and w0 > 0.0:
        return AqpResult(value=math.inf, x=None, case=CASE2_KKT, status="Infeasible",
                         message="g(x) <= 0 has no solution")
    audit = [
        _branch_mu_positive(f, g, t_star, opts),
        _branch_both_zero(f, g, t_star, opts),
        _branch_lambda1_only(f, g, t_star),
    ]
    for a in audit:
        logger.info(f"AQP branch {a.branch}: {'accepted' if a.accepted else 'rejected'} ({a.reason})")
    accepted = [a for a in audit if a.accepted]
    if not accepted:
        return AqpResult(value=math.nan, x=None, case=CASE2_KKT, status="NoKKTPoint", audit=audit,
                         message="no KKT branch produced a feasible point")
    best = min(accepted, key=lambda a: a.z1 * a.z1)
    return AqpResult(value=abs(best.z1), x=best.x, case=CASE2_KKT, kkt_branch=best.branch, audit=audit)


def _affine_case(f: QuadraticFunction, g: QuadraticFunction) -> AqpResult:
    """P = Q = 0: inf |p^T x + p0| over the half-space q^T x + q0 <= 0"""
    p, p0, q, q0 = f.a, f.a0, g.a, g.a0
    if not np.any(q) and q0 > 0:
        return AqpResult(value=math.inf, x=None, case=CASE_AFFINE, status="Infeasible")
    if not np.any(p):
        x = np.zeros(f.n) if not np.any(q) else -(q0 / float(q @ q)) * q
        return AqpResult(value=abs(p0), x=x, case=CASE_AFFINE)
    # closest point of {f = 0} with the largest margin on g
    x0 = -(p0 / float(p @ p)) * p
    proj = q - (float(q @ p) / float(p @ p)) * p
    if g.evaluate(x0) <= 0:
        return AqpResult(value=0.0, x=x0, case=CASE_AFFINE)
    if np.linalg.norm(proj) > CONSISTENCY_TOL:
        x = x0 - (g.evaluate(x0) / float(proj @ proj)) * proj
        return AqpResult(value=0.0, x=x, case=CASE_AFFINE)
    # q = s p: the half-space is a level set bound of f
    s = float(q @ p) / float(p @ p)
    x = -((q0 / s) / float(p @ p)) * p
    return AqpResult(value=abs(f.evaluate(x)), x=x, case=CASE_AFFINE)


def _swapped_case(f: QuadraticFunction, g: QuadraticFunction, opts: SolverOptions) -> AqpResult:
    """P = 0, Q != 0: |affine| over a quadratic constraint"""
    audit = []
    # z1 = 0 reachable: inf g on the hyperplane f = 0
    on_plane = solve_qp1eqc(g, f, opts)
    if on_plane.status == SubproblemStatus.UNBOUNDED or (on_plane.x is not None and on_plane.value <= KKT_TOL):
        x = on_plane.x
        if x is None:
            root = newton_root(f, g, (0.0, -1.0), restarts=opts.restarts, options=opts)
            x = root.x
        if x is not None:
            audit.append(BranchAudit(BRANCH_BOTH_ZERO, True, "root of f with g <= 0", z1=0.0, x=x,
                                     lambda1=0.0, lambda2=0.0))
            return AqpResult(value=0.0, x=x, case=CASE2_KKT, kkt_branch=BRANCH_BOTH_ZERO, audit=audit)
    audit.append(BranchAudit(BRANCH_BOTH_ZERO, False, f"inf g on f = 0 is {on_plane.value:.6g}"))

    # active constraint: inf f^2 on g = 0
    square = QuadraticFunction(A=np.outer(f.a, f.a), a=2.0 * f.a0 * f.a, a0=f.a0 ** 2)
    active = solve_qp1eqc(square, g, opts)
    if active.x is None:
        audit.append(BranchAudit(BRANCH_MU_POSITIVE, False, f"inf f^2 on g = 0: {active.status.value}"))
        return AqpResult(value=math.nan, x=None, case=CASE2_KKT, status="NoKKTPoint", audit=audit)
    z1 = f.evaluate(active.x)
    audit.append(BranchAudit(BRANCH_MU_POSITIVE, True, "minimizer of f^2 on g = 0", z1=z1, x=active.x))
    return AqpResult(value=abs(z1), x=active.x, case=CASE2_KKT, kkt_branch=BRANCH_MU_POSITIVE, audit=audit)


def _independent_case(f: QuadraticFunction, g: QuadraticFunction, opts: SolverOptions) -> AqpResult:
    problem = Po4Problem(f=f, g=g, F=ObjectiveF.from_coefficients(1.0, 0.0, 0.0),
                         a=[0.0], b=[1.0], c=[0.0])
    vr = solve_value(problem, opts)
    if vr.status == Po4Status.INFEASIBLE:
        return AqpResult(value=math.inf, x=None, case=CASE1_ZERO, status="Infeasible",
                         message="g(x) <= 0 has no solution")
    if vr.status != Po4Status.OPTIMAL:
        return AqpResult(value=math.nan, x=None, case=CASE1_ZERO, status=vr.status.value,
                         message=vr.sdp.message)
    gamma = vr.value

    if gamma <= opts.aqp_zero_tol:
        sol = solve_qp1eqc(g, f, opts)
        x = sol.x if sol.x is not None and sol.value <= KKT_TOL else None
        if x is None:
            z = vr.moment_point
            target = (0.0, min(z[1], 0.0) if z is not None else 0.0)
            root = newton_root(f, g, target, restarts=opts.restarts, options=opts)
            if root.converged and g.evaluate(root.x) <= KKT_TOL:
                x = root.x
        result = AqpResult(value=0.0, x=x, case=CASE1_ZERO, gamma_star=gamma)
        if x is None:
            result.status = "RelaxationGap"
            result.message = "value 0 but no root of f with g <= 0 was extracted"
        return result

    root_gamma = math.sqrt(gamma)
    right = solve_qp1qc(f, g, opts)
    if right.status == SubproblemStatus.OPTIMAL and right.value >= root_gamma - 1e-6 * (1.0 + root_gamma):
        return AqpResult(value=right.value, x=right.x, case=CASE1_RIGHT, gamma_star=gamma)
    left = solve_qp1qc(f.scaled(-1.0), g, opts)
    if left.status == SubproblemStatus.OPTIMAL:
        return AqpResult(value=left.value, x=left.x, case=CASE1_LEFT, gamma_star=gamma)
    return AqpResult(value=root_gamma, x=None, case=CASE1_LEFT, gamma_star=gamma, status="RelaxationGap",
                     message=f"side programs ended with {right.status.value} / {left.status.value}")


def solve_aqp(f: QuadraticFunction, g: QuadraticFunction,
              options: Optional[SolverOptions] = None) -> AqpResult:
    """
    inf |f(x)| s.t. g(x) <= 0

    Args:
        f: Quadratic inside the absolute value
        g: Constraint quadratic
        options: Solver options

    Returns:
        AqpResult; Case 2 results carry the branch audit
    """
    if f.n != g.n:
        raise ValueError(f"Dimension mismatch: f has n={f.n}, g has n={g.n}")
    opts = options or SolverOptions()
    dep = linear_dependence(f.A, g.A, tol=opts.dependence_tol)

    if dep.kind == 'both_zero':
        result = _affine_case(f, g)
    elif dep.dependent and dep.swapped:
        result = _swapped_case(f, g, opts)
    elif dep.dependent:
        result = _dependent_case(f, g, dep.t_star, opts)
    else:
        result = _independent_case(f, g, opts)
    logger.info(f"AQP {result.case}: value={result.value:.10g} status={result.status}")
    return result
