"""
Dense symmetric linear algebra primitives.

Symmetric matrices are plain numpy arrays that are exactly symmetric;
pack_upper/unpack_upper give the packed upper-triangular storage used
for serialization.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

JACOBI_MAX_SWEEPS = 100
DEPENDENCE_TOL = 1e-9


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in ascending order with orthonormal eigenvector columns"""
    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


@dataclass(frozen=True)
class DependenceResult:
    """
    Outcome of the {P, Q} linear dependence test.

    kind is 'independent', 'dependent' or 'both_zero'. For 'dependent',
    Q = t_star * P; when swapped is set the roles are reversed (P = t_star * Q,
    which happens when P = 0 and Q != 0).
    """
    kind: str
    t_star: Optional[float] = None
    swapped: bool = False
    residual: float = 0.0

    @property
    def dependent(self) -> bool:
        return self.kind != 'independent'


def as_symmetric(A, name: str = "matrix") -> np.ndarray:
    """Validate a square finite matrix and return its exact symmetrization"""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return 0.5 * (A + A.T)


def symmetry_defect(A) -> float:
    """Largest absolute asymmetry max|A - A^T|"""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(A - A.T)))


def pack_upper(A: np.ndarray) -> np.ndarray:
    """Row-major upper triangle, diagonal included"""
    A = np.asarray(A, dtype=float)
    return A[np.triu_indices(A.shape[0])].copy()


def unpack_upper(packed, dim: int) -> np.ndarray:
    packed = np.asarray(packed, dtype=float)
    if packed.size != dim * (dim + 1) // 2:
        raise ValueError(f"Packed length {packed.size} does not match dimension {dim}")
    A = np.zeros((dim, dim))
    A[np.triu_indices(dim)] = packed
    return A + np.triu(A, 1).T


def sym_eig(A) -> EigenDecomposition:
    """
    Full spectral decomposition by cyclic Jacobi rotations

    Args:
        A: Real symmetric matrix (symmetrized if slightly asymmetric)

    Returns:
        EigenDecomposition with ascending values
    """
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ValueError("sym_eig: non-finite input")
    a = as_symmetric(A, "sym_eig input").copy()
    n = a.shape[0]
    v = np.eye(n)

    scale = np.linalg.norm(a)
    if n == 1 or scale == 0.0:
        return EigenDecomposition(values=np.diag(a).copy(), vectors=v)

    tol = 1e-14 * scale
    for sweep in range(JACOBI_MAX_SWEEPS):
        off = float(np.linalg.norm(np.triu(a, 1)))
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * scale:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                # A <- J^T A J on rows/columns p, q
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        logger.warning(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps (n={n})")

    values = np.diag(a).copy()
    order = np.argsort(values, kind='stable')
    return EigenDecomposition(values=values[order], vectors=v[:, order])


def min_eigenvalue(A) -> float:
    """Smallest eigenvalue, the PSD oracle used with a tolerance"""
    return float(sym_eig(A).values[0])


def nullspace_basis(h, h0: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Orthonormal basis of {y : h^T y = 0} and the particular point y0

    Args:
        h: Normal vector of the hyperplane h^T y + h0 = 0
        h0: Offset

    Returns:
        (V, y0) with V of shape (k, k-1) and y0 = -(h0 / h^T h) h
    """
    h = np.asarray(h, dtype=float).ravel()
    hh = float(h @ h)
    if hh == 0.0:
        raise ValueError("nullspace_basis: h must be nonzero")
    V = scipy.linalg.null_space(h.reshape(1, -1))
    y0 = -(h0 / hh) * h
    return V, y0


def linear_dependence(P, Q, tol: float = DEPENDENCE_TOL) -> DependenceResult:
    """
    Decide whether Q = t*P (or P = t*Q when P = 0)

    Args:
        P: Symmetric matrix
        Q: Symmetric matrix of the same dimension
        tol: Relative residual threshold

    Returns:
        DependenceResult
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise ValueError(f"linear_dependence: shapes differ {P.shape} vs {Q.shape}")

    norm_p = float(np.linalg.norm(P))
    norm_q = float(np.linalg.norm(Q))
    if norm_p == 0.0 and norm_q == 0.0:
        return DependenceResult(kind='both_zero')

    threshold = tol * max(norm_p, norm_q, 1.0)
    if norm_p == 0.0:
        # P = 0 * Q
        return DependenceResult(kind='dependent', t_star=0.0, swapped=True)

    t = float(np.sum(P * Q) / norm_p ** 2)
    residual = float(np.linalg.norm(Q - t * P))
    if residual <= threshold:
        return DependenceResult(kind='dependent', t_star=t, residual=residual)
    return DependenceResult(kind='independent', residual=residual)
