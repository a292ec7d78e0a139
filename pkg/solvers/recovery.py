"""
Solution recovery for (Po4): from the optimal value to z_bar and x_bar.

    Step 1  v from the certificate SDP
    Step 2  z_bar by angular bisection of the plane around the origin
            (F = z1^2 + z2^2), or the lifted moment point for other F
    Step 3  x_bar with f(x_bar), g(x_bar) = z_bar by Gauss-Newton

With no linear rows the last bisection sector is resolved directly in x
through a one-equality quadratic program, so Step 3 is skipped.
"""
import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from core.errors import SolverError
from core.problem import ObjectiveF, Po4Problem, QuadraticFunction
from core.settings import SolverOptions
from solvers.sprocedure import Po4Status, Po4ValueResult, solve_value
from solvers.subsolvers import solve_qp1eqc

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
SECTOR_TOL = 1e-6
ESCAPE_FACTOR = 1e3
FEASIBILITY_TOL = 1e-7


def k_star(v_bar: float, epsilon: float) -> int:
    """
    Number of bisection steps needed to shrink the sector below the stop angle

    Args:
        v_bar: Reference value, > 0
        epsilon: Accuracy, > 0

    Returns:
        floor(log2(2 pi / arccos(sqrt(v_bar / (v_bar + epsilon/2))))) + 1
    """
    if v_bar <= 0 or epsilon <= 0:
        raise ValueError(f"k_star needs v_bar > 0 and epsilon > 0, got {v_bar}, {epsilon}")
    angle = stop_angle(v_bar, epsilon)
    return int(math.floor(math.log2(TWO_PI / angle) + 1e-12)) + 1


def stop_angle(v_bar: float, epsilon: float) -> float:
    return math.acos(math.sqrt(v_bar / (v_bar + epsilon / 2.0)))


def cut_rows(cuts) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-planes sign * (sin phi, -cos phi) . z >= 0 as rows of z1*a + z2*b <= c"""
    a = np.array([-sign * s for s, _, sign in cuts])
    b = np.array([-sign * mc for _, mc, sign in cuts])
    return a, b, np.zeros(len(cuts))


@dataclass
class BisectionState:
    """Current sector [l, u] and the half-plane cuts (sin phi, -cos phi, sign)"""
    l: float
    u: float
    v_bar: float
    epsilon: float
    cuts: List[Tuple[float, float, int]] = field(default_factory=list)
    k: int = 0
    values: List[float] = field(default_factory=list)

    def cut_rows(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return cut_rows(self.cuts)

    def to_dict(self) -> Dict[str, Any]:
        return {'l': self.l, 'u': self.u, 'k': self.k, 'v_bar': self.v_bar,
                'epsilon': self.epsilon, 'cuts': [list(c) for c in self.cuts],
                'values': list(self.values)}


@dataclass
class SectorEndpoints:
    """z_check on the circle F = v_bar at angle u, z_hat on its tangent at angle l"""
    z_check: np.ndarray
    z_hat: np.ndarray

    @classmethod
    def from_state(cls, state: BisectionState) -> 'SectorEndpoints':
        r = math.sqrt(state.v_bar)
        width = state.u - state.l
        z_check = r * np.array([math.cos(state.u), math.sin(state.u)])
        z_hat = (r / math.cos(width)) * np.array([math.cos(state.l), math.sin(state.l)])
        return cls(z_check=z_check, z_hat=z_hat)


@dataclass
class BisectionResult:
    z_bar: Optional[np.ndarray]
    iterations: int
    case: str
    state: BisectionState
    endpoints: Optional[SectorEndpoints] = None


def _delta(v_bar: float) -> float:
    return SECTOR_TOL * (1.0 + abs(v_bar))


def _sub_value(problem: Po4Problem, opts: SolverOptions, stage: str,
               partial: Optional[Dict[str, Any]] = None) -> Po4ValueResult:
    result = solve_value(problem, opts)
    if result.status == Po4Status.NUMERICAL_TROUBLE:
        raise SolverError(f"subproblem SDP failed: {result.sdp.message}", stage=stage, partial=partial)
    return result


def _linear_objective(direction) -> ObjectiveF:
    return ObjectiveF(theta=np.zeros((2, 2)), eta=np.asarray(direction, dtype=float))


def ray_membership(problem: Po4Problem, z, v_bar: float,
                   options: Optional[SolverOptions] = None) -> Tuple[bool, float]:
    """
    Decide whether the segment [O, z] meets the feasible set

    Args:
        problem: (Po4) instance with F = z1^2 + z2^2
        z: Segment end point
        v_bar: Reference value (sets the comparison slack)
        options: Solver options

    Returns:
        (member, w) with w = inf{z . w' : w' feasible on the ray through z}
    """
    opts = options or SolverOptions()
    z = np.asarray(z, dtype=float)
    delta = _delta(v_bar)
    if not np.any(z):
        value = _sub_value(problem.with_objective(ObjectiveF.squared_norm()), opts, "ray").value
        return value <= delta, 0.0

    # the line z2*w1 - z1*w2 = 0 as two opposite rows, then the ray z . w >= 0
    ray = Po4Problem(f=problem.f, g=problem.g, F=_linear_objective(z),
                     a=np.concatenate([problem.a, [z[1], -z[1], -z[0]]]),
                     b=np.concatenate([problem.b, [-z[0], z[0], -z[1]]]),
                     c=np.concatenate([problem.c, [0.0, 0.0, 0.0]]))
    w = _sub_value(ray, opts, "ray").value
    threshold = float(z @ z)
    member = w <= threshold + delta
    logger.debug(f"ray angle={math.atan2(z[1], z[0]):.6f} inf={w:.8g} threshold={threshold:.8g} member={member}")
    return member, w


def _chord_span(z_check: np.ndarray, z_hat: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Direction along the tangent line at z_check and the parameter of z_hat

    Points of the line are (v_bar z_check + t perp) / |z_check|^2 with
    t = perp . z; the chord [z_check, z_hat] is t in [0, t_hat].
    """
    perp = np.array([z_check[1], -z_check[0]])
    t_hat = float(perp @ z_hat)
    if t_hat < 0.0:
        raise ValueError(f"z_hat must lie clockwise of z_check on the tangent line (t = {t_hat:.6g})")
    return perp, t_hat


def _chord_point(problem: Po4Problem, ends: SectorEndpoints, v_bar: float,
                 opts: SolverOptions) -> Optional[np.ndarray]:
    """Feasible point of the chord [z_check, z_hat] closest to z_check"""
    z_check = ends.z_check
    perp, t_hat = _chord_span(z_check, ends.z_hat)
    line = Po4Problem(f=problem.f, g=problem.g, F=_linear_objective(perp),
                      a=np.concatenate([problem.a, [z_check[0], -z_check[0]]]),
                      b=np.concatenate([problem.b, [z_check[1], -z_check[1]]]),
                      c=np.concatenate([problem.c, [v_bar, -v_bar]]))
    low = _sub_value(line, opts, "bisection.chord")
    if low.status == Po4Status.INFEASIBLE:
        return None
    t = low.value
    if t < 0.0:
        high = _sub_value(line.with_objective(_linear_objective(-perp)), opts, "bisection.chord")
        t = min(-high.value, 0.0)
    if not math.isfinite(t):
        return None
    clipped = min(max(t, 0.0), t_hat)
    if abs(clipped - t) > _delta(v_bar):
        logger.warning(f"Feasible part of the tangent line misses the chord (t={t:.6g}, chord [0, {t_hat:.6g}])")
    return (v_bar * z_check + clipped * perp) / float(z_check @ z_check)


def bisect_z(problem: Po4Problem, v_bar: float, epsilon: float,
             options: Optional[SolverOptions] = None) -> BisectionResult:
    """
    Locate z_bar with v <= F(z_bar) <= v + epsilon by angular bisection

    Args:
        problem: (Po4) instance with F = z1^2 + z2^2
        v_bar: Reference value in [v, v + epsilon/2]
        epsilon: Accuracy
        options: Solver options

    Returns:
        BisectionResult; case is 'ray_check', 'ray_hat', 'chord' or 'none'
    """
    opts = options or SolverOptions()
    if not problem.F.is_squared_norm:
        raise ValueError("bisect_z needs F = z1^2 + z2^2")
    if v_bar <= 0:
        raise ValueError(f"bisect_z needs v_bar > 0, got {v_bar}")

    state = BisectionState(l=0.0, u=TWO_PI, v_bar=v_bar, epsilon=epsilon)
    stop = stop_angle(v_bar, epsilon)
    delta = _delta(v_bar)

    while state.u - state.l > stop:
        phi = 0.5 * (state.l + state.u)
        trial = state.cuts + [(math.sin(phi), -math.cos(phi), 1)]
        sector = problem.with_rows(*cut_rows(trial))
        value = _sub_value(sector, opts, "bisection", partial=state.to_dict()).value
        state.k += 1
        if value <= v_bar + delta:
            state.u = phi
            state.cuts = trial
            branch = '+'
        else:
            state.l = phi
            state.cuts = state.cuts + [(math.sin(phi), -math.cos(phi), -1)]
            branch = '-'
        state.values.append(value)
        logger.debug(f"bisect k={state.k} phi={phi:.10f} value={value:.10g} branch={branch}")

    ends = SectorEndpoints.from_state(state)
    logger.info(f"Bisection finished after {state.k} steps: sector [{state.l:.6f}, {state.u:.6f}]")

    member, w = ray_membership(problem, ends.z_check, v_bar, opts)
    if member:
        z_bar = (w / float(ends.z_check @ ends.z_check)) * ends.z_check
        return BisectionResult(z_bar=z_bar, iterations=state.k, case='ray_check', state=state, endpoints=ends)

    member, w = ray_membership(problem, ends.z_hat, v_bar, opts)
    if member:
        z_bar = (w / float(ends.z_hat @ ends.z_hat)) * ends.z_hat
        return BisectionResult(z_bar=z_bar, iterations=state.k, case='ray_hat', state=state, endpoints=ends)

    z_bar = _chord_point(problem, ends, v_bar, opts)
    if z_bar is None:
        logger.warning("Tangent chord misses the feasible set")
        return BisectionResult(z_bar=None, iterations=state.k, case='none', state=state, endpoints=ends)
    return BisectionResult(z_bar=z_bar, iterations=state.k, case='chord', state=state, endpoints=ends)


@dataclass
class NearestPoint:
    x: Optional[np.ndarray]
    z: Optional[np.ndarray]
    status: str


def nearest_on_line(problem: Po4Problem, kind: str, anchor, v_bar: float,
                    options: Optional[SolverOptions] = None, far_end=None) -> NearestPoint:
    """
    Resolve the last sector in x when there are no linear rows

    Args:
        problem: (Po4) instance with a = b = c = 0
        kind: 'ray' (nearest point to O on the line through anchor) or
            'chord' (nearest point to anchor on the chord [anchor, far_end])
        anchor: z_check or z_hat
        v_bar: Reference value
        options: Solver options
        far_end: z_hat, required by the chord case

    Returns:
        NearestPoint; status is the one-equality subproblem status, or
        'Clipped' when the chord point was moved to an end of the chord
    """
    if problem.m:
        raise ValueError("nearest_on_line applies to problems without linear rows")
    opts = options or SolverOptions()
    zc = np.asarray(anchor, dtype=float)
    f, g = problem.f, problem.g

    if kind == 'ray':
        objective = f.combine(g, zc[0], zc[1])
        constraint = f.combine(g, zc[1], -zc[0])
        sol = solve_qp1eqc(objective, constraint, opts)
        if sol.is_optimal and objective.evaluate(sol.x) < -_delta(v_bar):
            logger.info("Line minimizer lies on the opposite ray")
            return NearestPoint(x=None, z=None, status="OppositeRay")
    elif kind == 'chord':
        if far_end is None:
            raise ValueError("the chord case needs its far end z_hat")
        _, t_hat = _chord_span(zc, np.asarray(far_end, dtype=float))
        objective = f.combine(g, zc[1], -zc[0])
        tangent = f.combine(g, zc[0], zc[1])
        constraint = QuadraticFunction(A=tangent.A, a=tangent.a, a0=tangent.a0 - v_bar)
        sol = solve_qp1eqc(objective, constraint, opts)
        if sol.is_optimal and objective.evaluate(sol.x) < 0.0:
            other = solve_qp1eqc(objective.scaled(-1.0), constraint, opts)
            if other.is_optimal and objective.evaluate(other.x) <= 0.0:
                sol = other
        if sol.is_optimal:
            t = objective.evaluate(sol.x)
            if t < -_delta(v_bar) or t > t_hat + _delta(v_bar):
                # clip to the chord end on that side and map it back to x
                end = zc if t < 0.0 else np.asarray(far_end, dtype=float)
                logger.info(f"Nearest tangent-line point t={t:.6g} lies off the chord [0, {t_hat:.6g}]; clipping")
                root = newton_root(f, g, end, restarts=opts.restarts, options=opts)
                if not root.converged:
                    return NearestPoint(x=None, z=None, status="OffChord")
                return NearestPoint(x=root.x, z=problem.joint_point(root.x), status="Clipped")
    else:
        raise ValueError(f"Unknown line kind: {kind}")

    if not sol.is_optimal:
        logger.warning(f"Nearest-point subproblem ({kind}) ended with {sol.status.value}")
        return NearestPoint(x=None, z=None, status=sol.status.value)
    return NearestPoint(x=sol.x, z=problem.joint_point(sol.x), status=sol.status.value)


@dataclass
class NewtonResult:
    x: Optional[np.ndarray]
    residual: float
    converged: bool
    starts: int
    iterations: int = 0


def _start_radius(f: QuadraticFunction, g: QuadraticFunction, z) -> float:
    scale = abs(z[0]) + abs(z[1]) + abs(f.a0) + abs(g.a0)
    return 1.0 + max(float(np.linalg.norm(f.a)), float(np.linalg.norm(g.a)), math.sqrt(scale))


def newton_root(f: QuadraticFunction, g: QuadraticFunction, z_target, restarts: int = 20,
                options: Optional[SolverOptions] = None, x0=None, seed: Optional[int] = None) -> NewtonResult:
    """
    Solve f(x) = z1, g(x) = z2 by Gauss-Newton with restarts

    Args:
        f: First quadratic
        g: Second quadratic
        z_target: (z1, z2)
        restarts: Number of random starts after x0
        options: Solver options (iteration cap, halvings, seed)
        x0: Optional first start
        seed: Overrides options.seed

    Returns:
        NewtonResult; x is None when no start converged
    """
    opts = options or SolverOptions()
    z = np.asarray(z_target, dtype=float)
    tol = 1e-9 * (1.0 + float(np.linalg.norm(z)))
    radius = _start_radius(f, g, z)
    escape = ESCAPE_FACTOR * (1.0 + radius)
    rng = np.random.default_rng(opts.seed if seed is None else seed)

    starts = []
    if x0 is not None:
        starts.append(np.asarray(x0, dtype=float))
    starts.extend(rng.uniform(-radius, radius, size=f.n) for _ in range(max(restarts, 0)))

    best = NewtonResult(x=None, residual=math.inf, converged=False, starts=0)
    total = 0
    for count, x in enumerate(starts, start=1):
        x = x.copy()
        r = np.array([f.evaluate(x) - z[0], g.evaluate(x) - z[1]])
        for _ in range(opts.newton_max_iter):
            if np.max(np.abs(r)) <= tol:
                break
            total += 1
            J = np.vstack([f.gradient(x), g.gradient(x)])
            step = -scipy.linalg.lstsq(J, r)[0]
            norm_r = float(np.linalg.norm(r))
            t = 1.0
            for _ in range(opts.line_search_halvings):
                x_new = x + t * step
                r_new = np.array([f.evaluate(x_new) - z[0], g.evaluate(x_new) - z[1]])
                if np.linalg.norm(r_new) < norm_r:
                    break
                t *= 0.5
            else:
                break
            x, r = x_new, r_new
            if np.linalg.norm(x) > escape:
                break

        res = float(np.max(np.abs(r)))
        if res <= tol and np.linalg.norm(x) <= escape:
            logger.debug(f"Newton converged from start {count}: residual {res:.2e}")
            return NewtonResult(x=x, residual=res, converged=True, starts=count, iterations=total)
        if res < best.residual:
            best = NewtonResult(x=None, residual=res, converged=False, starts=count, iterations=total)

    logger.warning(f"Newton failed for target ({z[0]:.6g}, {z[1]:.6g}) after {len(starts)} starts "
                   f"(best residual {best.residual:.3e})")
    best.starts = len(starts)
    best.iterations = total
    return best


@dataclass
class Po4Solution:
    """Value, recovered point and how it was obtained"""
    status: Po4Status
    value: float
    x_bar: Optional[np.ndarray] = None
    z_bar: Optional[np.ndarray] = None
    recovery: str = "none"
    recovered: bool = False
    feasible: Optional[bool] = None
    iterations: int = 0
    k_star: Optional[int] = None
    v_bar: Optional[float] = None
    message: str = ""
    value_result: Optional[Po4ValueResult] = field(default=None, repr=False)

    def objective_at_x(self, problem: Po4Problem) -> Optional[float]:
        if self.x_bar is None:
            return None
        return problem.objective_at(self.x_bar)

    def quality(self, problem: Po4Problem) -> Optional[float]:
        """F(f(x_bar), g(x_bar)) - value"""
        fx = self.objective_at_x(problem)
        if fx is None or not math.isfinite(self.value):
            return None
        return fx - self.value

    def to_dict(self, problem: Optional[Po4Problem] = None) -> Dict[str, Any]:
        value = self.value
        if math.isinf(value):
            value = "inf" if value > 0 else "-inf"
        report = {
            'status': self.status.value,
            'value': value,
            'x_bar': self.x_bar.tolist() if self.x_bar is not None else None,
            'z_bar': self.z_bar.tolist() if self.z_bar is not None else None,
            'recovery': self.recovery,
            'recovered': self.recovered,
            'feasible': self.feasible,
            'iterations': self.iterations,
            'k_star': self.k_star,
            'v_bar': self.v_bar,
            'message': self.message,
        }
        if problem is not None:
            report['quality'] = self.quality(problem)
        return report


def _finish_with_newton(problem: Po4Problem, sol: Po4Solution, target, opts: SolverOptions,
                        restarts: int, x0=None) -> Po4Solution:
    newton = newton_root(problem.f, problem.g, target, restarts=restarts, options=opts, x0=x0)
    if not newton.converged:
        sol.message = (f"RECOVERY FAILED (possible non-attainment): no x with (f, g) = "
                       f"({target[0]:.6g}, {target[1]:.6g}), best residual {newton.residual:.3e}")
        logger.warning(sol.message)
        return sol
    sol.x_bar = newton.x
    sol.recovered = True
    z = problem.joint_point(newton.x)
    sol.feasible = problem.is_feasible_z(z, FEASIBILITY_TOL)
    if not sol.feasible:
        sol.message = "recovered point violates the linear rows"
        logger.warning(sol.message)
    return sol


def solve_po4_full(problem: Po4Problem, epsilon: Optional[float] = None,
                   options: Optional[SolverOptions] = None, restarts: Optional[int] = None) -> Po4Solution:
    """
    Optimal value and an approximate minimizer of (Po4)

    Args:
        problem: Instance on the convex path
        epsilon: Bisection accuracy (defaults to options.epsilon)
        options: Solver options
        restarts: Newton restarts (defaults to options.restarts)

    Returns:
        Po4Solution; x_bar is best effort and absent when recovery failed
    """
    opts = options or SolverOptions()
    eps = opts.epsilon if epsilon is None else float(epsilon)
    if eps <= 0:
        raise ValueError(f"epsilon must be positive, got {eps}")
    n_restarts = opts.restarts if restarts is None else int(restarts)

    value_result = solve_value(problem, opts)
    sol = Po4Solution(status=value_result.status, value=value_result.value, value_result=value_result)
    if value_result.status != Po4Status.OPTIMAL:
        sol.message = f"no recovery: value status {value_result.status.value}"
        return sol

    v = value_result.value
    if not problem.F.is_squared_norm:
        z_bar = value_result.moment_point
        if z_bar is None:
            sol.message = "RECOVERY FAILED (possible non-attainment): lifted point at infinity"
            return sol
        sol.z_bar = z_bar
        sol.recovery = "moment"
        return _finish_with_newton(problem, sol, z_bar, opts, n_restarts)

    if v <= opts.zero_value_tol:
        sol.z_bar = np.zeros(2)
        sol.recovery = "zero"
        return _finish_with_newton(problem, sol, sol.z_bar, opts, n_restarts)

    v_bar = max(v, 0.0) + eps / 4.0
    sol.v_bar = v_bar
    sol.k_star = k_star(v_bar, eps)
    bis = bisect_z(problem, v_bar, eps, opts)
    sol.iterations = bis.iterations
    sol.z_bar = bis.z_bar

    if problem.m == 0 and bis.case != 'none':
        kind = 'chord' if bis.case == 'chord' else 'ray'
        anchor = bis.endpoints.z_hat if bis.case == 'ray_hat' else bis.endpoints.z_check
        near = nearest_on_line(problem, kind, anchor, v_bar, opts, far_end=bis.endpoints.z_hat)
        if near.x is not None:
            sol.x_bar = near.x
            sol.z_bar = near.z
            sol.recovered = True
            sol.feasible = True
            sol.recovery = f"line_{bis.case}"
            return sol
        logger.info("Falling back to Newton on the bisection point")

    if bis.z_bar is None:
        sol.message = "RECOVERY FAILED (possible non-attainment): no bisection point"
        return sol
    sol.recovery = f"bisection_{bis.case}"
    return _finish_with_newton(problem, sol, bis.z_bar, opts, n_restarts)
