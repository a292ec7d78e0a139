import math

import numpy as np
import pytest

from conftest import EXAMPLE3_VALUE
from core.problem import ObjectiveF, Po4Problem, QuadraticFunction
from oracle.sampling import (
    SampleCloud,
    brute_min_po4,
    convexity_probe,
    make_box,
    sample_range,
    write_csv,
)


class TestSampling:

    def test_images_of_squares(self, squares):
        f, g = squares
        cloud = sample_range(f, g, 2.0, 500)
        assert cloud.count == 500
        assert np.all(cloud.Z >= 0.0)
        assert np.all(np.abs(cloud.X) <= 2.0)
        assert all(p.is_consistent(f, g) for p in cloud.points[:50])

    def test_example1_stays_above_parabola(self, example1):
        cloud = sample_range(example1.f, example1.g, 3.0, 2000)
        z1, z2 = cloud.Z[:, 0], cloud.Z[:, 1]
        assert np.all(z2 >= -2.0 * z1 ** 2 - 1e-9)

    def test_seeded_samples_repeat(self, squares):
        f, g = squares
        a = sample_range(f, g, 1.0, 100, seed=3)
        b = sample_range(f, g, 1.0, 100, seed=3)
        c = sample_range(f, g, 1.0, 100, seed=4)
        assert np.array_equal(a.X, b.X)
        assert not np.array_equal(a.X, c.X)

    def test_invalid_requests(self, squares):
        f, g = squares
        with pytest.raises(ValueError):
            sample_range(f, g, 1.0, 0)
        with pytest.raises(ValueError):
            make_box([(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 2)
        with pytest.raises(ValueError):
            make_box([(1.0, 1.0)], 2)

    def test_per_coordinate_box(self, squares):
        f, g = squares
        cloud = sample_range(f, g, [(0.0, 1.0), (2.0, 3.0)], 200)
        assert np.all((cloud.X[:, 0] >= 0.0) & (cloud.X[:, 0] <= 1.0))
        assert np.all((cloud.X[:, 1] >= 2.0) & (cloud.X[:, 1] <= 3.0))

    def test_csv_output(self, squares, tmp_path):
        f, g = squares
        cloud = sample_range(f, g, 1.0, 10)
        out = tmp_path / "range.csv"
        write_csv(cloud, str(out))
        lines = out.read_text().splitlines()
        assert lines[0] == "x1,x2,z1,z2"
        assert len(lines) == 11
        first = [float(v) for v in lines[1].split(',')]
        assert first == pytest.approx(np.r_[cloud.X[0], cloud.Z[0]].tolist(), rel=0, abs=0)


class TestGrid:

    def test_upper_bounds_example3(self, example3):
        grid = brute_min_po4(example3, box=5.0, grid_per_dim=40)
        assert not grid.empty
        assert grid.value >= EXAMPLE3_VALUE - 1e-3

    def test_closed_form_minimizer(self):
        f = QuadraticFunction(A=np.eye(2), a=[-1.0, 0.5], a0=1.0 + 0.25 + 0.0625)
        g = QuadraticFunction.from_data(np.diag([1.0, -1.0]))
        p = Po4Problem(f=f, g=g, F=ObjectiveF(theta=np.zeros((2, 2)), eta=[1.0, 0.0]))
        grid = brute_min_po4(p, box=1.0, grid_per_dim=8)
        assert grid.value == pytest.approx(1.0)
        assert np.allclose(grid.x, [0.5, -0.25])
        assert grid.evaluated == 81

    def test_empty_feasible_set(self, squares):
        f, g = squares
        p = Po4Problem(f=f, g=g, a=[1.0], b=[0.0], c=[-1.0])
        grid = brute_min_po4(p, box=1.0, grid_per_dim=10)
        assert grid.empty
        assert grid.value == math.inf
        assert grid.x is None
        assert grid.to_dict()['value'] == "inf"

    def test_dimension_limit(self):
        q = QuadraticFunction.from_data(np.eye(5))
        with pytest.raises(ValueError):
            brute_min_po4(Po4Problem(f=q, g=q), grid_per_dim=2)

    def test_refinement_never_worse(self, shifted_squares):
        p = shifted_squares.with_rows([-1.0], [1.0], [0.5])
        coarse = brute_min_po4(p, box=2.0, grid_per_dim=10)
        fine = brute_min_po4(p, box=2.0, grid_per_dim=20)
        assert fine.value <= coarse.value


class TestConvexityProbe:

    def test_single_point(self, squares):
        f, g = squares
        report = convexity_probe(sample_range(f, g, 1.0, 1))
        assert report.pairs == 0 and report.violations == 0

    def test_convex_range_has_no_violations(self, squares):
        f, g = squares
        report = convexity_probe(sample_range(f, g, 2.0, 100), pairs=20)
        assert report.pairs == 20
        assert report.violations == 0
        assert report.to_dict()['evidence'] == "soft"

    def test_midpoint_below_parabola(self, example1):
        # (-1, -2) and (1, -2) lie on z2 = -2 z1^2, their midpoint (0, -2) does not
        X = np.array([[1.0, -2.0], [-1.0, 2.0]])
        Z = np.column_stack([example1.f.evaluate_many(X), example1.g.evaluate_many(X)])
        assert np.allclose(Z, [[-1.0, -2.0], [1.0, -2.0]])
        cloud = SampleCloud(X=X, Z=Z, box=make_box(3.0, 2), f=example1.f, g=example1.g)
        report = convexity_probe(cloud, pairs=3)
        assert report.violations == 3
