"""
Brute-force checks of the joint range {(f(x), g(x))} and of (Po4) values.

Used by the tests and by the `range` command; nothing here certifies
optimality, grid minima are upper bounds only.
"""
import csv
import math
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import qmc

from core.problem import JointRangePoint, Po4Problem, QuadraticFunction
from solvers.recovery import newton_root

logger = logging.getLogger(__name__)

GRID_CHUNK = 200000
CONSTRAINT_SLACK = 1e-9

BoxSpec = Union[float, Sequence[Tuple[float, float]]]


def make_box(box: BoxSpec, n: int) -> np.ndarray:
    """
    Normalize a box to an (n, 2) array of [low, high] bounds

    Args:
        box: Half-width h (giving [-h, h]^n) or one (low, high) pair per coordinate
        n: Dimension

    Returns:
        Array of bounds
    """
    if np.isscalar(box):
        half = float(box)
        bounds = np.tile([-half, half], (n, 1))
    else:
        bounds = np.asarray(box, dtype=float).reshape(-1, 2)
        if bounds.shape[0] == 1 and n > 1:
            bounds = np.tile(bounds, (n, 1))
    if bounds.shape != (n, 2):
        raise ValueError(f"Box has {bounds.shape[0]} bounds for dimension {n}")
    if not np.all(np.isfinite(bounds)) or np.any(bounds[:, 1] <= bounds[:, 0]):
        raise ValueError(f"Degenerate box: {bounds.tolist()}")
    return bounds


@dataclass
class SampleCloud:
    """Witnesses X inside box and their images Z = (f(X), g(X))"""
    X: np.ndarray
    Z: np.ndarray
    box: np.ndarray
    f: QuadraticFunction
    g: QuadraticFunction

    @property
    def count(self) -> int:
        return self.X.shape[0]

    @property
    def points(self) -> List[JointRangePoint]:
        return [JointRangePoint(z=self.Z[i].copy(), witness_x=self.X[i].copy()) for i in range(self.count)]


def sample_range(f: QuadraticFunction, g: QuadraticFunction, box: BoxSpec, count: int,
                 seed: int = 0) -> SampleCloud:
    """
    Seeded low-discrepancy image of a box under (f, g)

    Args:
        f: First quadratic
        g: Second quadratic
        box: Half-width or per-coordinate bounds
        count: Number of samples, >= 1
        seed: Scrambling seed

    Returns:
        SampleCloud
    """
    if f.n != g.n:
        raise ValueError(f"Dimension mismatch: f has n={f.n}, g has n={g.n}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    bounds = make_box(box, f.n)
    sampler = qmc.Halton(d=f.n, scramble=True, seed=seed)
    X = qmc.scale(sampler.random(count), bounds[:, 0], bounds[:, 1])
    Z = np.column_stack([f.evaluate_many(X), g.evaluate_many(X)])
    logger.debug(f"Sampled {count} points of the joint range (n={f.n}, seed={seed})")
    return SampleCloud(X=X, Z=Z, box=bounds, f=f, g=g)


def write_csv(cloud: SampleCloud, path: str):
    """CSV with header x1..xn,z1,z2 and full float precision"""
    header = [f"x{i + 1}" for i in range(cloud.X.shape[1])] + ["z1", "z2"]
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(header)
        for x, z in zip(cloud.X, cloud.Z):
            writer.writerow(['%.17g' % v for v in np.r_[x, z]])
    logger.info(f"Wrote {cloud.count} rows to {path}")


@dataclass
class GridResult:
    value: float
    x: Optional[np.ndarray]
    z: Optional[np.ndarray]
    evaluated: int
    feasible: int

    @property
    def empty(self) -> bool:
        return self.feasible == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'value': self.value if math.isfinite(self.value) else "inf",
            'x': self.x.tolist() if self.x is not None else None,
            'z': self.z.tolist() if self.z is not None else None,
            'evaluated': self.evaluated,
            'feasible': self.feasible,
        }


def _grid_chunks(axes: List[np.ndarray]):
    """Lexicographic grid points in bounded chunks"""
    n = len(axes)
    inner = int(np.prod([a.size for a in axes[1:]])) if n > 1 else 1
    per_chunk = max(1, GRID_CHUNK // inner)
    first = axes[0]
    for start in range(0, first.size, per_chunk):
        block = [first[start:start + per_chunk]] + axes[1:]
        mesh = np.meshgrid(*block, indexing='ij')
        yield np.column_stack([m.ravel() for m in mesh])


def brute_min_po4(problem: Po4Problem, box: BoxSpec = 10.0, grid_per_dim: int = 100,
                  max_dim: int = 4, constraint_slack: float = CONSTRAINT_SLACK) -> GridResult:
    """
    Grid minimum of F(f(x), g(x)) over the rows z1*a + z2*b <= c

    Args:
        problem: (Po4) instance, n <= max_dim
        box: Half-width or per-coordinate bounds
        grid_per_dim: Intervals per axis (grid_per_dim + 1 points)
        max_dim: Largest n accepted
        constraint_slack: Row tolerance

    Returns:
        GridResult; the first minimizer in lexicographic order wins ties
    """
    n = problem.n
    if n > max_dim:
        raise ValueError(f"brute_min_po4 is limited to n <= {max_dim}, got n={n}")
    if grid_per_dim < 1:
        raise ValueError(f"grid_per_dim must be >= 1, got {grid_per_dim}")
    bounds = make_box(box, n)
    axes = [np.linspace(lo, hi, grid_per_dim + 1) for lo, hi in bounds]

    best = GridResult(value=math.inf, x=None, z=None, evaluated=0, feasible=0)
    for X in _grid_chunks(axes):
        Z = np.column_stack([problem.f.evaluate_many(X), problem.g.evaluate_many(X)])
        values = problem.F.evaluate_many(Z)
        if problem.m:
            res = Z[:, [0]] * problem.a + Z[:, [1]] * problem.b - problem.c
            ok = np.all(res <= constraint_slack, axis=1)
            values = np.where(ok, values, math.inf)
            best.feasible += int(np.sum(ok))
        else:
            best.feasible += X.shape[0]
        best.evaluated += X.shape[0]
        i = int(np.argmin(values))
        if values[i] < best.value:
            best.value = float(values[i])
            best.x = X[i].copy()
            best.z = Z[i].copy()

    if best.empty:
        logger.info("Grid found no feasible point")
    return best


@dataclass
class ProbeReport:
    pairs: int
    violations: int
    evidence: str = "soft"

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def convexity_probe(cloud: SampleCloud, pairs: int = 50, newton: Optional[Callable] = None,
                    restarts: int = 5, seed: int = 0) -> ProbeReport:
    """
    Count sampled midpoints that a local root finder cannot reach

    Args:
        cloud: Sampled joint range
        pairs: Number of random point pairs
        newton: Root finder with the signature of newton_root
        restarts: Restarts per midpoint
        seed: Pair sampling seed

    Returns:
        ProbeReport; a violation is soft evidence of non-convexity only
    """
    solver = newton or newton_root
    if cloud.count < 2:
        return ProbeReport(pairs=0, violations=0)
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(pairs):
        i, j = rng.choice(cloud.count, size=2, replace=False)
        mid = 0.5 * (cloud.Z[i] + cloud.Z[j])
        result = solver(cloud.f, cloud.g, mid, restarts=restarts, x0=0.5 * (cloud.X[i] + cloud.X[j]))
        if not result.converged:
            violations += 1
            logger.debug(f"Midpoint {mid} unreachable")
    return ProbeReport(pairs=pairs, violations=violations)
