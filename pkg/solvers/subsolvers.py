"""
One-constraint quadratic programs solved through their lifted SDP

    QP1EQC:  inf f(x)  s.t. g(x) = 0
    QP1QC:   inf f(x)  s.t. g(x) <= 0

Both are solved as max gamma s.t. H_f - gamma E_hh + lambda H_g PSD (lambda
free or lambda >= 0); the primal matrix Y of that LMI is the lifted
[x;1][x;1]^T and a solution x is extracted from it by rank-one decomposition.
"""
import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.linalg import nullspace_basis, sym_eig
from core.problem import QuadraticFunction
from core.settings import SolverOptions
from solvers.sdp import LmiProblem, SdpSolution, SdpStatus, solve_lmi

logger = logging.getLogger(__name__)

MATCH_TOL = 1e-5
FEASIBILITY_TOL = 1e-7
HOMOGENIZING_FLOOR = 1e-10
POLISH_STEPS = 30


class SubproblemStatus(Enum):
    OPTIMAL = "Optimal"
    UNBOUNDED = "Unbounded"
    INFEASIBLE = "Infeasible"
    RELAXATION_GAP = "RelaxationGap"
    NUMERICAL_TROUBLE = "NumericalTrouble"


@dataclass
class LiftedSolution:
    """
    Lifted relaxation answer.

    Y is indexed (x_1..x_n, h) with h last; x is set only when an extracted
    point is feasible and matches value.
    """
    status: SubproblemStatus
    value: float
    Y: Optional[np.ndarray] = None
    x: Optional[np.ndarray] = None
    rank_estimate: int = 0
    multiplier: Optional[float] = None
    candidate: Optional[np.ndarray] = None
    unattained_hint: bool = False
    sdp: Optional[SdpSolution] = field(default=None, repr=False)

    @property
    def is_optimal(self) -> bool:
        return self.status == SubproblemStatus.OPTIMAL

    def to_dict(self) -> Dict[str, Any]:
        value = self.value
        if math.isinf(value):
            value = "inf" if value > 0 else "-inf"
        return {
            'status': self.status.value,
            'value': value,
            'x': self.x.tolist() if self.x is not None else None,
            'rank_estimate': self.rank_estimate,
            'multiplier': self.multiplier,
            'unattained_hint': self.unattained_hint,
        }


def _check_pair(f: QuadraticFunction, g: QuadraticFunction):
    if f.n != g.n:
        raise ValueError(f"Dimension mismatch: f has n={f.n}, g has n={g.n}")


def _lift_value(H: np.ndarray, v: np.ndarray) -> float:
    return float(v @ H @ v)


def _polish(x: np.ndarray, g: QuadraticFunction, sense: str) -> np.ndarray:
    """Newton steps on g along its gradient until the constraint holds"""
    for _ in range(POLISH_STEPS):
        gx = g.evaluate(x)
        if (sense == '=' and abs(gx) <= 1e-13 * (1.0 + np.linalg.norm(x) ** 2)) or (sense == '<=' and gx <= 0.0):
            break
        grad = g.gradient(x)
        gg = float(grad @ grad)
        if gg == 0.0:
            break
        x = x - (gx / gg) * grad
    return x


def _rotate_pair(pi: np.ndarray, pj: np.ndarray, H: np.ndarray, target: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rotate (pi, pj) so the first vector has pi^T H pi = target

    Requires pi^T H pi > target > pj^T H pj; the outer product sum is kept.
    """
    di = _lift_value(H, pi) - target
    dj = _lift_value(H, pj) - target
    dij = float(pi @ H @ pj)
    # (pi + t pj)^T H (pi + t pj) - target (1 + t^2) = dj t^2 + 2 dij t + di = 0
    disc = max(dij * dij - di * dj, 0.0)
    t = (-dij - math.copysign(math.sqrt(disc), dij if dij != 0.0 else 1.0)) / dj
    if not np.isfinite(t):
        t = -di / (2.0 * dij)
    scale = math.sqrt(1.0 + t * t)
    return (pi + t * pj) / scale, (pj - t * pi) / scale


def rank_one_extract(Y: np.ndarray, constraints: Sequence[Tuple[np.ndarray, str]],
                     objective: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
    """
    Extract a point from a lifted PSD matrix by rank-one decomposition

    Args:
        Y: PSD matrix, homogenizing index last
        constraints: (H, sense) pairs, sense '=' (H . vv^T = 0) or '<=' (<= 0);
            the first one drives the pairwise rotation
        objective: Optional homogenized objective used to rank the candidates

    Returns:
        De-homogenized x, or None when Y carries no mass on the homogenizing
        coordinate (solution at infinity)
    """
    Y = 0.5 * (np.asarray(Y, dtype=float) + np.asarray(Y, dtype=float).T)
    h = Y.shape[0] - 1
    if Y[h, h] <= HOMOGENIZING_FLOOR:
        return None

    eig = sym_eig(Y)
    top = max(float(eig.values[-1]), 0.0)
    keep = eig.values > 1e-12 * max(top, 1.0)
    vectors = [math.sqrt(lam) * eig.vectors[:, i] for i, lam in enumerate(eig.values) if keep[i]]
    if not vectors:
        return None

    if constraints:
        H, _sense = constraints[0]
        H = np.asarray(H, dtype=float)
        target = _lift_value_sum(H, vectors) / len(vectors)
        tol = 1e-12 * (1.0 + float(np.max(np.abs(H)))) * (1.0 + float(np.trace(Y)))
        for _ in range(len(vectors)):
            devs = [_lift_value(H, v) - target for v in vectors]
            hi = int(np.argmax(devs))
            lo = int(np.argmin(devs))
            if devs[hi] <= tol or devs[lo] >= -tol:
                break
            vectors[hi], vectors[lo] = _rotate_pair(vectors[hi], vectors[lo], H, target)

    candidates = []
    for v in vectors:
        if abs(v[h]) <= 1e-8 * math.sqrt(Y[h, h]):
            continue
        candidates.append(v[:h] / v[h])
    if not candidates:
        return None
    if objective is None:
        weights = [abs(v[h]) for v in vectors if abs(v[h]) > 1e-8 * math.sqrt(Y[h, h])]
        return candidates[int(np.argmax(weights))]

    objective = np.asarray(objective, dtype=float)

    def score(x):
        hom = np.append(x, 1.0)
        violation = 0.0
        for H, sense in constraints:
            r = _lift_value(np.asarray(H, dtype=float), hom)
            violation += abs(r) if sense == '=' else max(r, 0.0)
        return (violation > FEASIBILITY_TOL * (1.0 + float(x @ x)), _lift_value(objective, hom))

    return min(candidates, key=score)


def _lift_value_sum(H: np.ndarray, vectors: List[np.ndarray]) -> float:
    return float(sum(_lift_value(H, v) for v in vectors))


def _rank(Y: np.ndarray) -> int:
    values = sym_eig(Y).values
    top = max(float(values[-1]), 0.0)
    return int(np.sum(values > 1e-6 * max(top, 1e-12)))


def _solve_lifted(f: QuadraticFunction, g: QuadraticFunction, sense: str,
                  options: Optional[SolverOptions]) -> LiftedSolution:
    _check_pair(f, g)
    opts = options or SolverOptions()
    Hf = f.homogenized()
    Hg = g.homogenized()
    d = Hf.shape[0]
    E = np.zeros((d, d))
    E[-1, -1] = 1.0

    lmi = LmiProblem(c=[1.0, 0.0], F0=Hf, Fi=[-E, Hg],
                     nonneg_mask=(1,) if sense == '<=' else ())
    sol = solve_lmi(lmi, opts)

    if sol.status == SdpStatus.INFEASIBLE:
        logger.debug("Lifted dual infeasible: subproblem unbounded below")
        return LiftedSolution(status=SubproblemStatus.UNBOUNDED, value=-math.inf, sdp=sol)
    if sol.status == SdpStatus.UNBOUNDED:
        logger.debug("Lifted dual unbounded: no feasible x")
        return LiftedSolution(status=SubproblemStatus.INFEASIBLE, value=math.inf, sdp=sol)
    if not sol.usable:
        logger.warning(f"Lifted SDP ended with {sol.status.value}: {sol.message}")
        return LiftedSolution(status=SubproblemStatus.NUMERICAL_TROUBLE, value=sol.objective_value, sdp=sol)

    value = float(sol.y[0])
    Y = sol.dual_X
    if Y[-1, -1] > HOMOGENIZING_FLOOR:
        Y = Y / Y[-1, -1]
    rank = _rank(Y)
    x = rank_one_extract(Y, [(Hg, sense)], objective=Hf)
    result = LiftedSolution(status=SubproblemStatus.RELAXATION_GAP, value=value, Y=Y,
                            rank_estimate=rank, multiplier=float(sol.y[1]),
                            unattained_hint=sol.penalty_active, sdp=sol)
    if x is None:
        logger.warning("Lifted solution has no finite rank-one component")
        return result

    x = _polish(x, g, sense)
    gx = g.evaluate(x)
    fx = f.evaluate(x)
    feasible = abs(gx) <= FEASIBILITY_TOL if sense == '=' else gx <= FEASIBILITY_TOL
    result.candidate = x
    if feasible and abs(fx - value) <= MATCH_TOL * (1.0 + abs(value)):
        result.status = SubproblemStatus.OPTIMAL
        result.x = x
        logger.debug(f"Extracted x with f={fx:.10g}, g={gx:.3e} (rank {rank})")
    else:
        logger.warning(f"Relaxation gap: best extracted point has f={fx:.8g} vs value {value:.8g}, g={gx:.3e}")
    return result


def solve_qp1eqc(f: QuadraticFunction, g: QuadraticFunction,
                 options: Optional[SolverOptions] = None) -> LiftedSolution:
    """
    inf f(x) s.t. g(x) = 0

    Args:
        f: Objective
        g: Equality constraint function
        options: Solver options

    Returns:
        LiftedSolution
    """
    return _solve_lifted(f, g, '=', options)


def solve_qp1qc(f: QuadraticFunction, g: QuadraticFunction,
                options: Optional[SolverOptions] = None) -> LiftedSolution:
    """inf f(x) s.t. g(x) <= 0"""
    return _solve_lifted(f, g, '<=', options)


def solve_qp1eqc_on_hyperplane(f: QuadraticFunction, g: QuadraticFunction, h, h0: float,
                               options: Optional[SolverOptions] = None) -> LiftedSolution:
    """
    inf f(y) s.t. g(y) = 0 and h^T y + h0 = 0, by reduction to y = y0 + V s

    Args:
        f: Objective in y
        g: Equality constraint in y
        h: Hyperplane normal (nonzero)
        h0: Hyperplane offset
        options: Solver options

    Returns:
        LiftedSolution whose x (and candidate) are mapped back to y
    """
    _check_pair(f, g)
    V, y0 = nullspace_basis(h, h0)
    if V.shape[1] == 0:
        # the hyperplane is a single point
        gy = g.evaluate(y0)
        if abs(gy) <= FEASIBILITY_TOL:
            return LiftedSolution(status=SubproblemStatus.OPTIMAL, value=f.evaluate(y0), x=y0)
        return LiftedSolution(status=SubproblemStatus.INFEASIBLE, value=math.inf)

    result = solve_qp1eqc(f.restricted(y0, V), g.restricted(y0, V), options)
    if result.x is not None:
        result.x = y0 + V @ result.x
    if result.candidate is not None:
        result.candidate = y0 + V @ result.candidate
    return result
