"""
Problem data model for (Po4):

    minimize   F(z) = z^T Theta z + eta^T z
    subject to z1 * a + z2 * b <= c,  z = (f(x), g(x)),  x in R^n

with f, g quadratic functions x^T A x + a^T x + a0.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from core.linalg import as_symmetric, symmetry_defect, linear_dependence, min_eigenvalue, DEPENDENCE_TOL

logger = logging.getLogger(__name__)

PSD_TOL = 1e-10
WITNESS_TOL = 1e-8


def _vector(values, length: Optional[int], name: str) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    if length is not None and v.size != length:
        raise ValueError(f"{name} must have length {length}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


@dataclass(frozen=True, eq=False)
class QuadraticFunction:
    """
    x -> x^T A x + a^T x + a0 with A stored exactly symmetric.

    Asymmetric input is symmetrized on construction; the defect of the
    input is kept in input_defect for validation reports.
    """
    A: np.ndarray
    a: np.ndarray
    a0: float = 0.0
    input_defect: float = field(default=0.0, compare=False)

    def __post_init__(self):
        raw = np.asarray(self.A, dtype=float)
        if raw.ndim != 2:
            raw = np.atleast_2d(raw)
        A = as_symmetric(raw, "A")
        n = A.shape[0]
        object.__setattr__(self, 'input_defect', symmetry_defect(raw))
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'a', _vector(self.a, n, "a"))
        a0 = float(self.a0)
        if not np.isfinite(a0):
            raise ValueError("a0 must be finite")
        object.__setattr__(self, 'a0', a0)

    @classmethod
    def from_data(cls, A, a=None, a0: float = 0.0) -> 'QuadraticFunction':
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if a is None:
            a = np.zeros(A.shape[0])
        return cls(A=A, a=a, a0=a0)

    @classmethod
    def affine(cls, a, a0: float = 0.0) -> 'QuadraticFunction':
        a = np.asarray(a, dtype=float).ravel()
        return cls(A=np.zeros((a.size, a.size)), a=a, a0=a0)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"Dimension mismatch: function has n={self.n}, x has {x.shape[-1]}")
        return x

    def evaluate(self, x) -> float:
        x = self._check(x)
        return float(x @ (self.A @ x + self.a) + self.a0)

    def evaluate_many(self, X) -> np.ndarray:
        """Row-wise evaluation for an (N, n) array"""
        X = self._check(np.atleast_2d(X))
        return np.einsum('ij,ij->i', X @ self.A, X) + X @ self.a + self.a0

    def gradient(self, x) -> np.ndarray:
        x = self._check(x)
        return 2.0 * self.A @ x + self.a

    def hessian(self) -> np.ndarray:
        return 2.0 * self.A

    def homogenized(self) -> np.ndarray:
        """(n+1)x(n+1) matrix H with [x;1]^T H [x;1] = q(x), homogenizing index last"""
        n = self.n
        H = np.zeros((n + 1, n + 1))
        H[:n, :n] = self.A
        H[:n, n] = 0.5 * self.a
        H[n, :n] = 0.5 * self.a
        H[n, n] = self.a0
        return H

    def combine(self, other: 'QuadraticFunction', s: float = 1.0, t: float = 1.0) -> 'QuadraticFunction':
        """s*self + t*other"""
        if other.n != self.n:
            raise ValueError("Cannot combine functions of different dimension")
        return QuadraticFunction(A=s * self.A + t * other.A, a=s * self.a + t * other.a,
                                 a0=s * self.a0 + t * other.a0)

    def scaled(self, s: float) -> 'QuadraticFunction':
        return QuadraticFunction(A=s * self.A, a=s * self.a, a0=s * self.a0)

    def restricted(self, y0, V) -> 'QuadraticFunction':
        """The function s -> q(y0 + V s) on the affine subspace y0 + range(V)"""
        y0 = np.asarray(y0, dtype=float)
        V = np.asarray(V, dtype=float)
        A = V.T @ self.A @ V
        a = V.T @ (2.0 * self.A @ y0 + self.a)
        return QuadraticFunction(A=A, a=a, a0=self.evaluate(y0))

    def embedded(self, total: int, offset: int = 0) -> 'QuadraticFunction':
        """Same function of the coordinates offset..offset+n-1 of a longer vector"""
        A = np.zeros((total, total))
        a = np.zeros(total)
        sl = slice(offset, offset + self.n)
        A[sl, sl] = self.A
        a[sl] = self.a
        return QuadraticFunction(A=A, a=a, a0=self.a0)

    def same_as(self, other: 'QuadraticFunction') -> bool:
        return (self.n == other.n and np.array_equal(self.A, other.A)
                and np.array_equal(self.a, other.a) and self.a0 == other.a0)

    def to_dict(self) -> Dict[str, Any]:
        return {'A': self.A.tolist(), 'a': self.a.tolist(), 'a0': self.a0}


def eval_quadratic(q: QuadraticFunction, x) -> float:
    """x^T A x + a^T x + a0"""
    return q.evaluate(x)


@dataclass(frozen=True, eq=False)
class ObjectiveF:
    """F(z) = theta1 z1^2 + 2 theta2 z1 z2 + theta3 z2^2 + eta1 z1 + eta2 z2"""
    theta: np.ndarray
    eta: np.ndarray
    is_convex: bool = field(default=False, init=False)

    def __post_init__(self):
        theta = as_symmetric(np.asarray(self.theta, dtype=float).reshape(2, 2), "theta")
        object.__setattr__(self, 'theta', theta)
        object.__setattr__(self, 'eta', _vector(self.eta, 2, "eta"))
        object.__setattr__(self, 'is_convex', min_eigenvalue(theta) >= -PSD_TOL)

    @classmethod
    def from_coefficients(cls, theta1: float, theta2: float, theta3: float,
                          eta1: float = 0.0, eta2: float = 0.0) -> 'ObjectiveF':
        return cls(theta=[[theta1, theta2], [theta2, theta3]], eta=[eta1, eta2])

    @classmethod
    def squared_norm(cls) -> 'ObjectiveF':
        """z1^2 + z2^2, the QSIC objective and the file default"""
        return cls(theta=np.eye(2), eta=np.zeros(2))

    @property
    def coefficients(self):
        return [float(self.theta[0, 0]), float(self.theta[0, 1]), float(self.theta[1, 1])]

    @property
    def is_squared_norm(self) -> bool:
        return bool(np.array_equal(self.theta, np.eye(2)) and not np.any(self.eta))

    def evaluate(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.theta @ z + self.eta @ z)

    def evaluate_many(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return np.einsum('ij,ij->i', Z @ self.theta, Z) + Z @ self.eta

    def to_dict(self) -> Dict[str, Any]:
        return {'theta': self.coefficients, 'eta': self.eta.tolist()}


def eval_F(F: ObjectiveF, z) -> float:
    return F.evaluate(z)


@dataclass(frozen=True, eq=False)
class Po4Problem:
    """One (Po4) instance; m = 0 means no linear rows"""
    f: QuadraticFunction
    g: QuadraticFunction
    F: ObjectiveF = field(default_factory=ObjectiveF.squared_norm)
    a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.f.n != self.g.n:
            raise ValueError(f"f and g dimensions differ: {self.f.n} vs {self.g.n}")
        a = _vector(self.a, None, "linear.a")
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'b', _vector(self.b, a.size, "linear.b"))
        object.__setattr__(self, 'c', _vector(self.c, a.size, "linear.c"))

    @property
    def n(self) -> int:
        return self.f.n

    @property
    def m(self) -> int:
        return self.a.size

    def objective_at(self, x) -> float:
        return self.F.evaluate(self.joint_point(x))

    def joint_point(self, x) -> np.ndarray:
        return np.array([self.f.evaluate(x), self.g.evaluate(x)])

    def row_residuals(self, z) -> np.ndarray:
        """z1*a + z2*b - c; feasible when every entry is <= 0"""
        z = np.asarray(z, dtype=float)
        return z[0] * self.a + z[1] * self.b - self.c

    def is_feasible_z(self, z, tol: float = 1e-9) -> bool:
        if self.m == 0:
            return True
        res = self.row_residuals(z)
        return bool(np.all(res <= tol * (1.0 + np.abs(self.c))))

    def with_rows(self, a, b, c) -> 'Po4Problem':
        """Same problem with extra linear rows appended"""
        return Po4Problem(f=self.f, g=self.g, F=self.F,
                          a=np.concatenate([self.a, np.atleast_1d(np.asarray(a, dtype=float))]),
                          b=np.concatenate([self.b, np.atleast_1d(np.asarray(b, dtype=float))]),
                          c=np.concatenate([self.c, np.atleast_1d(np.asarray(c, dtype=float))]))

    def with_objective(self, F: ObjectiveF) -> 'Po4Problem':
        return Po4Problem(f=self.f, g=self.g, F=F, a=self.a, b=self.b, c=self.c)

    def same_as(self, other: 'Po4Problem') -> bool:
        return (self.f.same_as(other.f) and self.g.same_as(other.g)
                and np.array_equal(self.F.theta, other.F.theta)
                and np.array_equal(self.F.eta, other.F.eta)
                and np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)
                and np.array_equal(self.c, other.c))


@dataclass
class JointRangePoint:
    """A point z of the joint numerical range, optionally with a witness x"""
    z: np.ndarray
    witness_x: Optional[np.ndarray] = None

    @classmethod
    def from_witness(cls, f: QuadraticFunction, g: QuadraticFunction, x) -> 'JointRangePoint':
        x = np.asarray(x, dtype=float)
        return cls(z=np.array([f.evaluate(x), g.evaluate(x)]), witness_x=x)

    def is_consistent(self, f: QuadraticFunction, g: QuadraticFunction) -> bool:
        if self.witness_x is None:
            return True
        fz = f.evaluate(self.witness_x)
        gz = g.evaluate(self.witness_x)
        return (abs(fz - self.z[0]) <= WITNESS_TOL * (1.0 + abs(self.z[0]))
                and abs(gz - self.z[1]) <= WITNESS_TOL * (1.0 + abs(self.z[1])))


@dataclass
class ValidationReport:
    n: int
    m: int
    f_symmetry_defect: float
    g_symmetry_defect: float
    theta_psd: bool
    theta_min_eig: float
    PQ_dependent: bool
    dependence_kind: str
    t_star: Optional[float]
    swapped: bool
    path: str

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def validate_problem(p: Po4Problem, dependence_tol: float = DEPENDENCE_TOL) -> ValidationReport:
    """
    Report the structure of a problem and which solve path applies

    Args:
        p: Problem to inspect
        dependence_tol: Relative residual threshold for {P, Q} dependence

    Returns:
        ValidationReport; path is "SDP", "DEPENDENT" or "NONCONVEX_F"
    """
    dep = linear_dependence(p.f.A, p.g.A, tol=dependence_tol)
    theta_min = min_eigenvalue(p.F.theta)

    if not p.F.is_convex:
        path = "NONCONVEX_F"
    elif dep.dependent:
        path = "DEPENDENT"
    else:
        path = "SDP"

    report = ValidationReport(
        n=p.n,
        m=p.m,
        f_symmetry_defect=p.f.input_defect,
        g_symmetry_defect=p.g.input_defect,
        theta_psd=p.F.is_convex,
        theta_min_eig=theta_min,
        PQ_dependent=dep.dependent,
        dependence_kind=dep.kind,
        t_star=dep.t_star,
        swapped=dep.swapped,
        path=path,
    )
    logger.debug(f"Validated problem n={p.n} m={p.m}: path={path}")
    return report
