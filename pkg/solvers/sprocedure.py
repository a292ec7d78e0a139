"""
S-procedure machinery for (Po4): the certificate matrix M, the LMI whose
optimal gamma is v(Po4), and certificate checks.

M is indexed (z1, z2, x_1..x_n, h) with h the homogenizing coordinate, so
with v = (z1, z2, x, 1)

    v^T M v = F(z) - gamma + alpha (f(x) - z1) + beta (g(x) - z2)
              + mu^T (z1 a + z2 b - c)
"""
import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.errors import PathError
from core.linalg import min_eigenvalue
from core.problem import Po4Problem, validate_problem
from core.settings import SolverOptions
from solvers.sdp import LmiProblem, SdpSolution, SdpStatus, solve_lmi, phase_one

logger = logging.getLogger(__name__)

Z1, Z2, X0 = 0, 1, 2
G1_TOL = 1e-6
G1_SAMPLE_SCALE = 3.0


def _float_or_str(value: float) -> Any:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return float(value)


@dataclass
class Certificate:
    """Multipliers (gamma, alpha, beta, mu) for the S-procedure matrix M"""
    gamma: float
    alpha: float
    beta: float
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.gamma = float(self.gamma)
        self.alpha = float(self.alpha)
        self.beta = float(self.beta)
        self.mu = np.asarray(self.mu, dtype=float).ravel()
        if self.mu.size and np.min(self.mu) < -1e-12:
            raise ValueError(f"Certificate mu must be nonnegative, got min {np.min(self.mu):.3e}")

    def to_dict(self) -> Dict[str, Any]:
        return {'gamma': _float_or_str(self.gamma), 'alpha': self.alpha,
                'beta': self.beta, 'mu': self.mu.tolist()}


class Po4Status(Enum):
    OPTIMAL = "Optimal"
    UNBOUNDED = "Unbounded"
    INFEASIBLE = "Infeasible"
    NUMERICAL_TROUBLE = "NumericalTrouble"


def _h_index(p: Po4Problem) -> int:
    return p.n + 2


def _constant_part(p: Po4Problem) -> np.ndarray:
    h = _h_index(p)
    F0 = np.zeros((h + 1, h + 1))
    F0[:2, :2] = p.F.theta
    F0[Z1, h] = F0[h, Z1] = 0.5 * p.F.eta[0]
    F0[Z2, h] = F0[h, Z2] = 0.5 * p.F.eta[1]
    return F0


def _gamma_part(p: Po4Problem) -> np.ndarray:
    h = _h_index(p)
    Fg = np.zeros((h + 1, h + 1))
    Fg[h, h] = -1.0
    return Fg


def _multiplier_part(p: Po4Problem, which: str) -> np.ndarray:
    """Coefficient matrix of alpha (which='f') or beta (which='g')"""
    q = p.f if which == 'f' else p.g
    zi = Z1 if which == 'f' else Z2
    h = _h_index(p)
    Fm = np.zeros((h + 1, h + 1))
    Fm[zi, h] = Fm[h, zi] = -0.5
    Fm[X0:h, X0:h] = q.A
    Fm[X0:h, h] = Fm[h, X0:h] = 0.5 * q.a
    Fm[h, h] = q.a0
    return Fm


def _row_part(p: Po4Problem, j: int) -> np.ndarray:
    h = _h_index(p)
    Fr = np.zeros((h + 1, h + 1))
    Fr[Z1, h] = Fr[h, Z1] = 0.5 * p.a[j]
    Fr[Z2, h] = Fr[h, Z2] = 0.5 * p.b[j]
    Fr[h, h] = -p.c[j]
    return Fr


def assemble_M(p: Po4Problem, cert: Certificate) -> np.ndarray:
    """
    Build the (n+3)x(n+3) certificate matrix

    Args:
        p: Problem data
        cert: Multipliers; cert.mu must have one entry per linear row

    Returns:
        Symmetric matrix M
    """
    if cert.mu.size != p.m:
        raise ValueError(f"Certificate has {cert.mu.size} row multipliers, problem has m={p.m}")
    M = (_constant_part(p) + cert.gamma * _gamma_part(p)
         + cert.alpha * _multiplier_part(p, 'f') + cert.beta * _multiplier_part(p, 'g'))
    for j in range(p.m):
        M += cert.mu[j] * _row_part(p, j)
    return M


def opposite_row_pairs(p: Po4Problem) -> List[Tuple[int, int]]:
    """Disjoint pairs (i, j) of rows with (a_j, b_j, c_j) = -(a_i, b_i, c_i) != 0"""
    pairs = []
    used = set()
    for i in range(p.m):
        if i in used:
            continue
        row_i = np.array([p.a[i], p.b[i], p.c[i]])
        if not np.any(row_i):
            continue
        for j in range(i + 1, p.m):
            if j in used:
                continue
            if np.array_equal(np.array([p.a[j], p.b[j], p.c[j]]), -row_i):
                pairs.append((i, j))
                used.update((i, j))
                break
    return pairs


@dataclass
class _Assembly:
    lmi: LmiProblem
    # per LMI variable past (gamma, alpha, beta): ('row', i) or ('pair', i, j)
    groups: List[Tuple]

    def certificate(self, y: np.ndarray, m: int) -> Certificate:
        mu = np.zeros(m)
        for value, group in zip(y[3:], self.groups):
            if group[0] == 'row':
                mu[group[1]] = max(value, 0.0)
            else:
                mu[group[1]] = max(value, 0.0)
                mu[group[2]] = max(-value, 0.0)
        return Certificate(gamma=y[0], alpha=y[1], beta=y[2], mu=mu)


def _assemble(p: Po4Problem, merge_equalities: bool) -> _Assembly:
    pairs = opposite_row_pairs(p) if merge_equalities else []
    paired = {i for pair in pairs for i in pair}
    first_of_pair = {i: j for i, j in pairs}

    Fi = [_gamma_part(p), _multiplier_part(p, 'f'), _multiplier_part(p, 'g')]
    groups = []
    mask = []
    for i in range(p.m):
        if i in first_of_pair:
            groups.append(('pair', i, first_of_pair[i]))
            Fi.append(_row_part(p, i))
        elif i not in paired:
            groups.append(('row', i))
            mask.append(len(Fi))
            Fi.append(_row_part(p, i))

    c = np.zeros(len(Fi))
    c[0] = 1.0
    lmi = LmiProblem(c=c, F0=_constant_part(p), Fi=Fi, nonneg_mask=tuple(mask))
    return _Assembly(lmi=lmi, groups=groups)


def assemble_lmi(p: Po4Problem, merge_equalities: bool = False) -> LmiProblem:
    """
    LMI in y = (gamma, alpha, beta, mu_1..mu_m) maximizing gamma with M(y) PSD

    Args:
        p: Problem data
        merge_equalities: Give each pair of opposite rows one free multiplier

    Returns:
        LmiProblem with nonneg_mask on the row multipliers
    """
    return _assemble(p, merge_equalities).lmi


@dataclass
class Po4ValueResult:
    """v(Po4) with the certificate that proves it"""
    status: Po4Status
    value: float
    certificate: Optional[Certificate]
    sdp: SdpSolution
    inexact: bool = False

    @property
    def moment_point(self) -> Optional[np.ndarray]:
        """(z1, z2) read from the lifted primal matrix"""
        X = self.sdp.dual_X
        if X is None or X.size == 0:
            return None
        h = X.shape[0] - 1
        if X[h, h] <= 1e-12:
            return None
        return np.array([X[Z1, h], X[Z2, h]]) / X[h, h]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'status': self.status.value,
            'value': _float_or_str(self.value),
            'certificate': self.certificate.to_dict() if self.certificate else None,
            'sdp_status': self.sdp.status.value,
            'sdp_iterations': self.sdp.iterations,
            'min_eig_M': _float_or_str(self.sdp.min_eig_slack),
            'inexact': self.inexact,
        }


def solve_value(p: Po4Problem, options: Optional[SolverOptions] = None,
                merge_equalities: bool = True, check_path: bool = True) -> Po4ValueResult:
    """
    Compute v(Po4) as the optimal gamma of the certificate LMI

    Args:
        p: Problem on the convex path (Theta PSD, {P, Q} independent)
        options: Solver options
        merge_equalities: Merge opposite row pairs into free multipliers
        check_path: Refuse instances outside the convex path

    Returns:
        Po4ValueResult; UNBOUNDED carries -inf and INFEASIBLE +inf
    """
    opts = options or SolverOptions()
    if check_path:
        report = validate_problem(p, opts.dependence_tol)
        if report.path != "SDP":
            raise PathError(
                f"solve_value needs convex F and independent {{P, Q}}; path is {report.path}"
                + (" (use the dependent-case solvers)" if report.path == "DEPENDENT" else ""),
                path=report.path,
            )

    assembly = _assemble(p, merge_equalities)
    sol = solve_lmi(assembly.lmi, opts)

    if sol.status == SdpStatus.INFEASIBLE:
        logger.info("No gamma makes M PSD: (Po4) is unbounded below")
        return Po4ValueResult(status=Po4Status.UNBOUNDED, value=-math.inf, certificate=None, sdp=sol)
    if sol.status == SdpStatus.UNBOUNDED:
        logger.info("Certificate LMI unbounded: (Po4) has no feasible point")
        return Po4ValueResult(status=Po4Status.INFEASIBLE, value=math.inf, certificate=None, sdp=sol)
    if not sol.usable:
        logger.warning(f"Value SDP ended with {sol.status.value}: {sol.message}")
        return Po4ValueResult(status=Po4Status.NUMERICAL_TROUBLE, value=sol.objective_value,
                              certificate=assembly.certificate(sol.y, p.m), sdp=sol, inexact=True)

    cert = assembly.certificate(sol.y, p.m)
    logger.info(f"v(Po4) = {cert.gamma:.8g} ({sol.iterations} iterations)")
    return Po4ValueResult(status=Po4Status.OPTIMAL, value=cert.gamma, certificate=cert, sdp=sol,
                          inexact=not sol.is_optimal)


@dataclass
class CertificateReport:
    g2_pass: bool
    g2_min_eig: float
    g1_pass: bool
    g1_min_margin: float
    samples_used: int
    samples_requested: int

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def verify_certificate(p: Po4Problem, cert: Certificate, samples: int = 10000,
                       seed: int = 0, tol: float = 1e-8) -> CertificateReport:
    """
    Check a certificate both ways: M PSD (G2) and F(z) >= gamma on samples (G1)

    Args:
        p: Problem data
        cert: Multipliers to check
        samples: Number of random x drawn for the G1 spot check
        seed: Sampling seed
        tol: Eigenvalue floor for the G2 check

    Returns:
        CertificateReport
    """
    min_eig = min_eigenvalue(assemble_M(p, cert))
    g2_pass = min_eig >= -tol

    rng = np.random.default_rng(seed)
    X = rng.normal(scale=G1_SAMPLE_SCALE, size=(max(samples, 0), p.n))
    Z = np.column_stack([p.f.evaluate_many(X), p.g.evaluate_many(X)]) if samples > 0 else np.zeros((0, 2))
    if p.m and len(Z):
        residuals = Z[:, [0]] * p.a + Z[:, [1]] * p.b - p.c
        # equality rows are met only on a measure-zero set; keep the inequality-feasible draws
        feasible = np.all(residuals <= 1e-9 * (1.0 + np.abs(p.c)), axis=1)
        Z = Z[feasible]

    if len(Z):
        margins = p.F.evaluate_many(Z) - cert.gamma
        min_margin = float(np.min(margins))
    else:
        min_margin = math.inf
    g1_pass = min_margin >= -G1_TOL * (1.0 + abs(cert.gamma))

    if g2_pass and not g1_pass:
        logger.warning(f"G2 holds but G1 sampling found margin {min_margin:.3e}")
    return CertificateReport(g2_pass=g2_pass, g2_min_eig=min_eig, g1_pass=g1_pass,
                             g1_min_margin=min_margin, samples_used=len(Z),
                             samples_requested=samples)


@dataclass
class CertificateExistence:
    exists: bool
    t_star: Optional[float]


def certificate_exists(p: Po4Problem, gamma: float, options: Optional[SolverOptions] = None) -> CertificateExistence:
    """
    Decide whether some (alpha, beta, mu >= 0) makes M PSD at a fixed gamma

    Args:
        p: Problem data
        gamma: Fixed lower-bound candidate
        options: Solver options

    Returns:
        CertificateExistence; t_star is the phase-I optimum (negative means none)
    """
    opts = options or SolverOptions()
    h = _h_index(p)
    F0 = _constant_part(p) + gamma * _gamma_part(p)
    Fi = [_multiplier_part(p, 'f'), _multiplier_part(p, 'g')] + [_row_part(p, j) for j in range(p.m)]
    lmi = LmiProblem(c=np.zeros(len(Fi)), F0=F0, Fi=Fi, nonneg_mask=tuple(range(2, 2 + p.m)))
    t_star = phase_one(lmi, opts)
    if t_star is None:
        logger.warning(f"Phase-I solve failed for gamma={gamma} (dimension {h + 1})")
        return CertificateExistence(exists=False, t_star=None)
    return CertificateExistence(exists=t_star >= -opts.phase_one_tol, t_star=t_star)
