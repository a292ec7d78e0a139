"""
Dense primal-dual interior-point solver for small LMI problems

    maximize   c^T y
    subject to F0 + sum_i y_i F_i  >= 0   (PSD)
               y_j >= 0 for j in nonneg_mask

The LMI is solved through the standard primal/dual pair

    min <C, X>  s.t. <A_i, X> = b_i, X >= 0
    max b^T y   s.t. S = C - sum_i y_i A_i >= 0

with the nonnegative variables as 1x1 blocks, an objective cap block
(cap - c^T y >= 0) and a trace penalty variable w >= 0 entering the LMI as
+w*I with objective -R*w (equivalently trace(X) <= R on the primal side).
The shift w gives a strictly feasible dual start, and S is always
recomputed from y, so every iterate is dual feasible and only the primal
residual has to be driven to zero. Steps follow the HKM direction with a
Mehrotra predictor-corrector.
"""
import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from core.linalg import as_symmetric, min_eigenvalue
from core.settings import SolverOptions

logger = logging.getLogger(__name__)

TRACE_ESCALATION = 100.0
CAP_HEADROOM = 10.0
BACKTRACK_LIMIT = 8
NEAR_GAP_TOL = 1e-6
NEAR_INF_TOL = 1e-6
STALL_STEP = 1e-9
STALL_LIMIT = 3
ITERATION_LIMIT = "iteration limit reached"


class SdpStatus(Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_TROUBLE = "NumericalTrouble"


@dataclass(eq=False)
class LmiProblem:
    """maximize c^T y s.t. F0 + sum y_i F_i PSD, y_j >= 0 for j in nonneg_mask"""
    c: np.ndarray
    F0: np.ndarray
    Fi: List[np.ndarray]
    nonneg_mask: Tuple[int, ...] = ()

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.F0 = as_symmetric(self.F0, "F0")
        d = self.F0.shape[0]
        if len(self.Fi) != self.c.size:
            raise ValueError(f"LmiProblem: {len(self.Fi)} coefficient matrices for {self.c.size} variables")
        if self.c.size < 1:
            raise ValueError("LmiProblem needs at least one variable")
        mats = []
        for i, Fi in enumerate(self.Fi):
            Fi = as_symmetric(Fi, f"F{i + 1}")
            if Fi.shape != (d, d):
                raise ValueError(f"F{i + 1} has shape {Fi.shape}, expected {(d, d)}")
            mats.append(Fi)
        self.Fi = mats
        mask = tuple(sorted(set(int(j) for j in self.nonneg_mask)))
        for j in mask:
            if j < 0 or j >= self.k:
                raise ValueError(f"nonneg_mask index {j} out of range for k={self.k}")
        self.nonneg_mask = mask

    @property
    def k(self) -> int:
        return self.c.size

    @property
    def d(self) -> int:
        return self.F0.shape[0]

    def slack(self, y) -> np.ndarray:
        """F0 + sum_i y_i F_i"""
        y = np.asarray(y, dtype=float)
        if y.size != self.k:
            raise ValueError(f"y has length {y.size}, expected {self.k}")
        return self.F0 + np.tensordot(y, np.array(self.Fi), axes=1)


@dataclass
class SdpSolution:
    status: SdpStatus
    y: np.ndarray
    objective_value: float
    dual_objective: float
    dual_X: np.ndarray
    dual_nonneg: np.ndarray
    gap: float
    min_eig_slack: float
    iterations: int
    near_optimal: bool = False
    penalty_active: bool = False
    message: str = ""
    history: List[dict] = field(default_factory=list, repr=False)

    @property
    def is_optimal(self) -> bool:
        return self.status == SdpStatus.OPTIMAL

    @property
    def usable(self) -> bool:
        """Optimal, or stopped early with small residuals"""
        return self.status == SdpStatus.OPTIMAL or self.near_optimal


@dataclass
class FeasibilityResult:
    feasible: bool
    min_eig: float


def check_feasibility(p: LmiProblem, fixed_y, feas_tol: float = 1e-9) -> FeasibilityResult:
    """
    Evaluate F0 + sum y_i F_i at a given y (and y_mask >= 0)

    Args:
        p: LMI data
        fixed_y: Point to test
        feas_tol: Eigenvalue floor

    Returns:
        FeasibilityResult with the smallest eigenvalue seen
    """
    y = np.asarray(fixed_y, dtype=float)
    min_eig = min_eigenvalue(p.slack(y))
    if p.nonneg_mask:
        min_eig = min(min_eig, float(np.min(y[list(p.nonneg_mask)])))
    return FeasibilityResult(feasible=min_eig >= -feas_tol, min_eig=min_eig)


class _StandardForm:
    """Block-diagonal standard-form data for one LMI at a given trace bound"""

    def __init__(self, p: LmiProblem, trace_bound: float, cap_bound: float):
        d, k = p.d, p.k
        mask = list(p.nonneg_mask)
        q = len(mask)
        self.d = d
        self.k = k
        self.N = d + q + 2
        self.K = k + 1
        self.w_index = d + q
        self.cap_index = d + q + 1
        self.trace_bound = trace_bound
        self.cap_bound = cap_bound

        N, K = self.N, self.K
        C = np.zeros((N, N))
        C[:d, :d] = p.F0
        C[self.cap_index, self.cap_index] = cap_bound
        A = np.zeros((K, N, N))
        for i in range(k):
            A[i, :d, :d] = -p.Fi[i]
            A[i, self.cap_index, self.cap_index] = p.c[i]
        for j, idx in enumerate(mask):
            A[idx, d + j, d + j] = -1.0
        A[k, :d, :d] = -np.eye(d)
        A[k, self.w_index, self.w_index] = -1.0

        self.C = C
        self.A = A
        self.b = np.concatenate([p.c, [-trace_bound]])
        self.b_scale = 1.0 + np.abs(self.b)

    def A_op(self, X: np.ndarray) -> np.ndarray:
        """(tr(A_i X))_i; X need not be symmetric"""
        return np.tensordot(self.A, X, axes=([1, 2], [0, 1]))

    def A_adj(self, y: np.ndarray) -> np.ndarray:
        return np.tensordot(y, self.A, axes=1)

    def slack(self, y: np.ndarray) -> np.ndarray:
        """S = C - sum y_i A_i, always recomputed from y"""
        return _sym(self.C - self.A_adj(y))


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _cholesky(Z: np.ndarray) -> np.ndarray:
    return scipy.linalg.cholesky(Z, lower=True)


def _is_pd(Z: np.ndarray) -> bool:
    try:
        _cholesky(Z)
    except np.linalg.LinAlgError:
        return False
    return bool(np.all(np.isfinite(Z)))


def _max_step(L: np.ndarray, dZ: np.ndarray) -> float:
    """Largest alpha with Z + alpha*dZ PSD, given Z = L L^T (inf when dZ keeps Z inside)"""
    T = scipy.linalg.solve_triangular(L, dZ, lower=True)
    T = scipy.linalg.solve_triangular(L, T.T, lower=True)
    lam = float(np.min(scipy.linalg.eigvalsh(_sym(T))))
    if lam >= 0.0:
        return math.inf
    return -1.0 / lam


@dataclass
class _Run:
    """State at the end of one interior-point run on the penalized problem"""
    X: np.ndarray
    y: np.ndarray
    S: np.ndarray
    converged: bool
    unbounded: bool
    rel_gap: float
    pinf: float
    iterations: int
    message: str
    trace_bound: float
    d: int
    history: List[dict]


class SdpSolver:
    """
    One LMI solve. Holds iteration state; use one instance per solve.

    Args:
        problem: LMI data
        options: Solver options (tolerances, iteration cap, objective cap)
        allow_phase_one: Run the phase-I infeasibility test when the main run fails
    """

    def __init__(self, problem: LmiProblem, options: Optional[SolverOptions] = None,
                 allow_phase_one: bool = True):
        self.problem = problem
        self.options = options or SolverOptions()
        self.allow_phase_one = allow_phase_one
        self.iterations = 0

    def solve(self) -> SdpSolution:
        opts = self.options
        run = self._run(opts.trace_bound)
        if run.unbounded:
            return self._package(run, SdpStatus.UNBOUNDED, run.message)

        feasible, min_eig = self._user_feasibility(run.y)
        if feasible and (run.converged or self._near(run)):
            message = "converged" if run.converged else f"converged to gap {run.rel_gap:.1e} ({run.message})"
            return self._package(run, SdpStatus.OPTIMAL, message)

        # Either the shift w*I is still needed to make the slack PSD, or the
        # run stopped early. Tell an infeasible LMI from a binding trace bound.
        if self.allow_phase_one:
            t_star = phase_one(self.problem, opts)
            if t_star is not None and t_star < -opts.phase_one_tol:
                logger.info(f"Phase-I optimum {t_star:.3e} < 0; LMI infeasible")
                return self._package(run, SdpStatus.INFEASIBLE, f"phase-I optimum {t_star:.3e}")

        if self._penalty_active(run) or not feasible:
            wider = self._run(opts.trace_bound * TRACE_ESCALATION)
            if wider.unbounded:
                return self._package(wider, SdpStatus.UNBOUNDED, wider.message)
            wide_feasible, _ = self._user_feasibility(wider.y)
            if wide_feasible and (wider.converged or self._near(wider)):
                return self._package(wider, SdpStatus.OPTIMAL, "converged with a wider trace bound")
            if (run.converged or self._near(run)) and (wider.converged or self._near(wider)):
                before, after = self._penalized_value(run), self._penalized_value(wider)
                if before - after > 1e-2 * (1.0 + abs(before)):
                    logger.info(f"Penalized LMI value diverges with the trace bound "
                                f"({before:.4e} -> {after:.4e}); infeasible")
                    return self._package(wider, SdpStatus.INFEASIBLE,
                                         "objective diverges as the trace bound grows")

        if run.converged:
            return self._package(run, SdpStatus.NUMERICAL_TROUBLE,
                                 f"slack eigenvalue {min_eig:.3e} below tolerance")
        status = SdpStatus.MAX_ITERATIONS if run.message == ITERATION_LIMIT else SdpStatus.NUMERICAL_TROUBLE
        return self._package(run, status, run.message)

    def _user_scale(self, y_user: np.ndarray) -> float:
        p = self.problem
        return 1.0 + float(np.linalg.norm(p.F0)) + sum(
            abs(float(v)) * float(np.linalg.norm(Fi)) for v, Fi in zip(y_user, p.Fi))

    def _user_feasibility(self, y: np.ndarray, relative: bool = False) -> Tuple[bool, float]:
        """Replay F0 + sum y_i F_i (without the shift w) on the user's LMI"""
        y_user = y[:self.problem.k]
        result = check_feasibility(self.problem, y_user, self.options.feas_tol)
        if not relative:
            return result.feasible, result.min_eig
        tol = self.options.feas_tol * self._user_scale(y_user)
        return result.min_eig >= -tol, result.min_eig

    def _near(self, run: _Run) -> bool:
        return run.rel_gap <= NEAR_GAP_TOL and run.pinf <= NEAR_INF_TOL

    @staticmethod
    def _penalty_active(run: _Run) -> bool:
        return float(np.trace(run.X[:run.d, :run.d])) >= 0.5 * run.trace_bound

    def _penalized_value(self, run: _Run) -> float:
        return float(self.problem.c @ run.y[:self.problem.k]) - run.trace_bound * float(run.y[-1])

    def _initial_point(self, sf: _StandardForm):
        p = self.problem
        d = sf.d
        norms = [float(np.linalg.norm(Fi)) for Fi in p.Fi]
        zeta = max(10.0, math.sqrt(d),
                   d * max((1.0 + abs(ci)) / (1.0 + ni) for ci, ni in zip(p.c, norms)))
        xi = max(10.0, math.sqrt(d), float(np.linalg.norm(p.F0)), max(norms))

        y = np.zeros(sf.K)
        for j in p.nonneg_mask:
            y[j] = 1.0
        # the shift w makes the starting slack xi*I or larger
        lam = min_eigenvalue(p.slack(y[:p.k]))
        y[sf.k] = max(xi - lam, xi)

        X = zeta * np.eye(sf.N)
        wi, ci = sf.w_index, sf.cap_index
        X[wi, wi] = max(sf.trace_bound - zeta * d, zeta)
        X[ci, ci] = zeta * xi / sf.cap_bound
        return X, y

    def _run(self, trace_bound: float) -> _Run:
        opts = self.options
        p = self.problem
        sf = _StandardForm(p, trace_bound, CAP_HEADROOM * opts.objective_cap)
        X, y = self._initial_point(sf)
        S = sf.slack(y)
        N = sf.N

        history = []
        converged = unbounded = False
        message = ITERATION_LIMIT
        stalled = 0
        rel_gap = pinf = math.inf
        it = 0

        for it in range(opts.max_iterations + 1):
            rp = sf.b - sf.A_op(X)
            gap = float(np.sum(X * S))
            mu = gap / N
            pobj = float(np.sum(sf.C * X))
            dobj = float(sf.b @ y)
            user_obj = float(p.c @ y[:p.k])
            rel_gap = gap / (1.0 + abs(dobj))
            pinf = float(np.max(np.abs(rp) / sf.b_scale))
            history.append({'iteration': it, 'pobj': pobj, 'dobj': dobj, 'gap': rel_gap, 'pinf': pinf})
            logger.debug(f"it={it:3d} pobj={pobj: .8e} dobj={dobj: .8e} gap={rel_gap:.2e} pinf={pinf:.2e}")

            if user_obj > opts.objective_cap and self._user_feasibility(y, relative=True)[0]:
                unbounded = True
                message = f"objective {user_obj:.3e} exceeds cap with a feasible iterate"
                break
            if rel_gap <= opts.gap_tol and pinf <= opts.primal_tol:
                converged = True
                message = "converged"
                break
            if it == opts.max_iterations:
                break

            try:
                step = self._step(sf, X, y, S, rp, mu)
            except (np.linalg.LinAlgError, ValueError) as e:
                message = f"linear algebra failure: {e}"
                logger.debug(f"Interior-point step failed at iteration {it}: {e}")
                break
            if step is None:
                message = "no step keeps the iterates interior"
                break

            step_p, step_d, X, y, S = step
            if max(step_p, step_d) < STALL_STEP:
                stalled += 1
                if stalled >= STALL_LIMIT:
                    message = "step length stalled"
                    break
            else:
                stalled = 0

        self.iterations += it
        return _Run(X=X, y=y, S=S, converged=converged, unbounded=unbounded, rel_gap=rel_gap,
                    pinf=pinf, iterations=it, message=message, trace_bound=trace_bound, d=sf.d, history=history)

    def _step(self, sf: _StandardForm, X, y, S, rp, mu):
        """One Mehrotra predictor-corrector step along the HKM direction"""
        opts = self.options
        N = sf.N
        Lx = _cholesky(X)
        Ls = _cholesky(S)
        S_inv = _sym(scipy.linalg.cho_solve((Ls, True), np.eye(N)))

        # Schur complement M_ij = tr(A_i X A_j S^-1), diagonally scaled
        XAS = np.array([X @ Ai @ S_inv for Ai in sf.A])
        M = _sym(np.tensordot(sf.A, XAS, axes=([1, 2], [1, 2])))
        if not np.all(np.isfinite(M)):
            raise np.linalg.LinAlgError("Schur complement is not finite")
        diag = np.diag(M)
        scale = np.where(diag > 0.0, 1.0 / np.sqrt(np.where(diag > 0.0, diag, 1.0)), 1.0)
        Ms = M * scale[:, None] * scale[None, :]
        try:
            factor = scipy.linalg.cho_factor(Ms)
            solve_scaled = lambda rhs: scipy.linalg.cho_solve(factor, rhs)
        except np.linalg.LinAlgError:
            solve_scaled = lambda rhs: scipy.linalg.lstsq(Ms, rhs)[0]

        def direction(T):
            dy = scale * solve_scaled(scale * (rp - sf.A_op(T)))
            dS = -sf.A_adj(dy)
            dX = _sym(T - X @ dS @ S_inv)
            return dX, dy, dS

        # predictor
        dX_a, dy_a, dS_a = direction(-X)
        ap_a = min(1.0, _max_step(Lx, dX_a))
        ad_a = min(1.0, _max_step(Ls, dS_a))
        mu_aff = float(np.sum((X + ap_a * dX_a) * (S + ad_a * dS_a))) / N
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        # corrector
        dX, dy, dS = direction(sigma * mu * S_inv - X - dX_a @ dS_a @ S_inv)
        step_p = min(1.0, opts.step_fraction * _max_step(Lx, dX))
        step_d = min(1.0, opts.step_fraction * _max_step(Ls, dS))

        for _ in range(BACKTRACK_LIMIT):
            X_new = _sym(X + step_p * dX)
            y_new = y + step_d * dy
            S_new = sf.slack(y_new)
            if _is_pd(X_new) and _is_pd(S_new):
                return step_p, step_d, X_new, y_new, S_new
            step_p *= 0.5
            step_d *= 0.5
        return None

    def _package(self, run: _Run, status: SdpStatus, message: str) -> SdpSolution:
        p = self.problem
        d = p.d
        X = run.X
        y_user = run.y[:p.k].copy()

        try:
            min_eig = check_feasibility(p, y_user, self.options.feas_tol).min_eig
        except ValueError:
            min_eig = -math.inf

        user_obj = float(p.c @ y_user)
        if status == SdpStatus.UNBOUNDED:
            objective = math.inf
        elif status == SdpStatus.INFEASIBLE:
            objective = -math.inf
        else:
            objective = user_obj

        near = (status in (SdpStatus.MAX_ITERATIONS, SdpStatus.NUMERICAL_TROUBLE)
                and self._near(run) and min_eig >= -NEAR_INF_TOL * self._user_scale(y_user))
        q = len(p.nonneg_mask)

        if status == SdpStatus.OPTIMAL:
            logger.debug(f"LMI solved in {self.iterations} iterations: objective={user_obj:.8e}")
        else:
            logger.debug(f"LMI solve ended with {status.value} after {self.iterations} iterations: {message}")

        return SdpSolution(
            status=status, y=y_user, objective_value=objective,
            dual_objective=float(np.sum(p.F0 * X[:d, :d])),
            dual_X=_sym(X[:d, :d]), dual_nonneg=np.array([X[d + j, d + j] for j in range(q)]),
            gap=float(np.sum(X * run.S)), min_eig_slack=min_eig, iterations=self.iterations,
            near_optimal=near, penalty_active=self._penalty_active(run), message=message,
            history=run.history,
        )


def solve_lmi(p: LmiProblem, opts: Optional[SolverOptions] = None) -> SdpSolution:
    """
    Solve an LMI maximization problem

    Args:
        p: LMI data
        opts: Solver options

    Returns:
        SdpSolution
    """
    return SdpSolver(p, opts).solve()


def phase_one(p: LmiProblem, opts: Optional[SolverOptions] = None) -> Optional[float]:
    """
    Largest t with F0 + sum y_i F_i - t*I PSD, y_mask >= t and t <= 1

    Args:
        p: LMI data
        opts: Solver options

    Returns:
        Optimal t, or None when the phase-I problem itself could not be solved
    """
    d, k = p.d, p.k
    mask = list(p.nonneg_mask)
    q = len(mask)
    D = d + q + 1

    F0 = np.zeros((D, D))
    F0[:d, :d] = p.F0
    F0[D - 1, D - 1] = 1.0
    Fi = []
    for i in range(k):
        Fi_ext = np.zeros((D, D))
        Fi_ext[:d, :d] = p.Fi[i]
        for j, idx in enumerate(mask):
            if idx == i:
                Fi_ext[d + j, d + j] = 1.0
        Fi.append(Fi_ext)
    Ft = -np.eye(D)
    Fi.append(Ft)
    c = np.zeros(k + 1)
    c[k] = 1.0

    sol = SdpSolver(LmiProblem(c=c, F0=F0, Fi=Fi), opts, allow_phase_one=False).solve()
    if sol.status == SdpStatus.UNBOUNDED:
        return 1.0
    if not sol.usable:
        logger.debug(f"Phase-I solve ended with {sol.status.value}")
        return None
    return float(sol.objective_value)
