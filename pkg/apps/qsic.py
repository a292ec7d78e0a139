"""
Quadric surfaces intersection: inf f(x)^2 + g(x)^2 and the rho decision.
"""
import math
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
import scipy.linalg

from core.errors import SolverError
from core.linalg import linear_dependence
from core.problem import Po4Problem, QuadraticFunction
from core.settings import SolverOptions
from solvers.recovery import newton_root, solve_po4_full
from solvers.sprocedure import Po4Status
from solvers.subsolvers import SubproblemStatus, solve_qp1eqc_on_hyperplane

logger = logging.getLogger(__name__)

CASE_INDEPENDENT = "Independent"
CASE_DEPENDENT = "Dependent"
CASE_BOTH_ZERO = "BothZero"


@dataclass
class QsicResult:
    value: float
    x: Optional[np.ndarray]
    intersects: bool
    rho_used: float
    case: str
    status: str = "Optimal"
    recovery: str = ""
    message: str = ""

    @property
    def decision(self) -> str:
        return "INTERSECT" if self.intersects else "DISJOINT"

    def to_dict(self) -> Dict[str, Any]:
        value = self.value
        if math.isinf(value):
            value = "inf" if value > 0 else "-inf"
        return {
            'status': self.status,
            'value': value,
            'decision': self.decision,
            'intersects': self.intersects,
            'rho': self.rho_used,
            'case': self.case,
            'x': self.x.tolist() if self.x is not None else None,
            'recovery': self.recovery,
            'message': self.message,
        }


def _witness_ok(f: QuadraticFunction, g: QuadraticFunction, x: np.ndarray, rho: float) -> bool:
    return abs(f.evaluate(x)) + abs(g.evaluate(x)) <= math.sqrt(2.0 * rho) * (1.0 + 1e-6)


def _finish(f: QuadraticFunction, g: QuadraticFunction, result: QsicResult,
            opts: SolverOptions) -> QsicResult:
    """Decide against rho and polish an intersection witness toward f = g = 0"""
    result.intersects = result.value < result.rho_used
    if result.intersects and result.x is not None:
        polished = newton_root(f, g, (0.0, 0.0), restarts=opts.restarts, options=opts, x0=result.x)
        if polished.converged:
            result.x = polished.x
        if not _witness_ok(f, g, result.x, result.rho_used):
            logger.warning("Intersection witness could not be polished below the rho bound; dropped")
            result.message = "witness dropped: |f|+|g| above the rho bound"
            result.x = None
    logger.info(f"QSIC {result.case}: value={result.value:.10g} -> {result.decision}")
    return result


def _affine_least_squares(f: QuadraticFunction, g: QuadraticFunction, rho: float) -> QsicResult:
    B = np.vstack([f.a, g.a])
    rhs = -np.array([f.a0, g.a0])
    x = scipy.linalg.lstsq(B, rhs)[0]
    r = B @ x - rhs
    return QsicResult(value=float(r @ r), x=x, intersects=False, rho_used=rho,
                      case=CASE_BOTH_ZERO, recovery="least_squares")


def _dependent_case(f: QuadraticFunction, g: QuadraticFunction, t_star: float,
                    rho: float, opts: SolverOptions) -> QsicResult:
    """Q = t* P: eliminate Q and solve the one-equality program in y = (x, z1, z2)"""
    n = f.n
    total = n + 2
    objective = QuadraticFunction(A=np.diag(np.r_[np.zeros(n), 1.0, 1.0]), a=np.zeros(total))
    lifted_f = f.embedded(total)
    constraint = QuadraticFunction(A=lifted_f.A, a=lifted_f.a + np.r_[np.zeros(n), -1.0, 0.0],
                                   a0=f.a0)
    h = np.r_[g.a - t_star * f.a, t_star, -1.0]
    h0 = g.a0 - t_star * f.a0

    sol = solve_qp1eqc_on_hyperplane(objective, constraint, h, h0, opts)
    if sol.status in (SubproblemStatus.NUMERICAL_TROUBLE, SubproblemStatus.INFEASIBLE):
        raise SolverError(f"reduced one-equality program ended with {sol.status.value}",
                          stage="qsic.case2", partial={'value': sol.value})
    result = QsicResult(value=max(sol.value, 0.0), x=None, intersects=False, rho_used=rho,
                        case=CASE_DEPENDENT, status=sol.status.value, recovery="hyperplane_qp1eqc")
    if sol.x is not None:
        result.x = sol.x[:n]
        result.status = "Optimal"
    else:
        result.message = f"no extracted point ({sol.status.value})"
    return result


def solve_qsic(f: QuadraticFunction, g: QuadraticFunction, rho: Optional[float] = None,
               options: Optional[SolverOptions] = None, epsilon: Optional[float] = None) -> QsicResult:
    """
    Decide whether {f = 0} and {g = 0} intersect

    Args:
        f: First quadric
        g: Second quadric
        rho: Intersection threshold on inf f^2 + g^2 (defaults to options.rho)
        options: Solver options
        epsilon: Recovery accuracy for the independent case

    Returns:
        QsicResult
    """
    if f.n != g.n:
        raise ValueError(f"Dimension mismatch: f has n={f.n}, g has n={g.n}")
    opts = options or SolverOptions()
    rho = opts.rho if rho is None else float(rho)
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")

    dep = linear_dependence(f.A, g.A, tol=opts.dependence_tol)
    if dep.kind == 'both_zero':
        return _finish(f, g, _affine_least_squares(f, g, rho), opts)

    if dep.dependent:
        if dep.swapped:
            logger.info("P = 0 with Q != 0: swapping f and g")
            result = _dependent_case(g, f, dep.t_star, rho, opts)
        else:
            result = _dependent_case(f, g, dep.t_star, rho, opts)
        return _finish(f, g, result, opts)

    solution = solve_po4_full(Po4Problem(f=f, g=g), epsilon=epsilon, options=opts)
    if solution.status != Po4Status.OPTIMAL:
        raise SolverError(f"value SDP ended with {solution.status.value}", stage="qsic.case1")
    result = QsicResult(value=max(solution.value, 0.0), x=solution.x_bar, intersects=False,
                        rho_used=rho, case=CASE_INDEPENDENT, recovery=solution.recovery,
                        message=solution.message)
    return _finish(f, g, result, opts)
