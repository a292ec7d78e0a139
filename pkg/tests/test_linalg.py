import numpy as np
import pytest

from core.linalg import (
    linear_dependence,
    min_eigenvalue,
    nullspace_basis,
    pack_upper,
    sym_eig,
    unpack_upper,
)


def test_sym_eig_known_spectra():
    assert np.allclose(sym_eig(np.diag([3.0, 1.0, 2.0])).values, [1.0, 2.0, 3.0])
    assert np.allclose(sym_eig([[0.0, 1.0], [1.0, 0.0]]).values, [-1.0, 1.0])


def test_sym_eig_psd_square():
    rng = np.random.default_rng(0)
    G = rng.normal(size=(6, 6))
    assert min_eigenvalue(G.T @ G) >= -1e-10


def test_sym_eig_rejects_non_finite():
    with pytest.raises(ValueError):
        sym_eig([[1.0, np.nan], [np.nan, 1.0]])


def test_sym_eig_reconstructs_random_matrices():
    rng = np.random.default_rng(4)
    for _ in range(100):
        d = int(rng.integers(1, 13))
        B = rng.normal(size=(d, d))
        A = 0.5 * (B + B.T)
        eig = sym_eig(A)
        scale = 1.0 + np.max(np.abs(A))
        assert np.max(np.abs(eig.reconstruct() - A)) <= 1e-8 * scale
        assert np.max(np.abs(eig.vectors.T @ eig.vectors - np.eye(d))) <= 1e-10
        assert np.all(np.diff(eig.values) >= 0)


def test_sym_eig_resolves_tiny_couplings():
    # couplings ~1e-8 relative to the diagonal sit below the rounding floor of sum(a^2)
    A = np.diag([1000.0, 2000.0, 3000.0])
    A[0, 1] = A[1, 0] = 1e-5
    A[0, 2] = A[2, 0] = -2e-5
    A[1, 2] = A[2, 1] = 1e-5
    eig = sym_eig(A)
    assert np.max(np.abs(eig.reconstruct() - A)) <= 1e-10 * 3000.0
    assert np.max(np.abs(eig.vectors.T @ A @ eig.vectors - np.diag(eig.values))) <= 1e-10


def test_pack_unpack():
    A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
    packed = pack_upper(A)
    assert packed.tolist() == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    assert np.array_equal(unpack_upper(packed, 3), A)
    with pytest.raises(ValueError):
        unpack_upper(packed, 4)


def test_nullspace_basis_examples():
    V, y0 = nullspace_basis([1.0, 0.0, 0.0], 0.0)
    assert V.shape == (3, 2)
    assert np.allclose(V[0], 0.0)
    assert np.allclose(y0, 0.0)

    h = np.array([1.0, 1.0])
    V, y0 = nullspace_basis(h, -2.0)
    assert np.allclose(y0, [1.0, 1.0])
    assert h @ y0 - 2.0 == pytest.approx(0.0)
    assert np.allclose(V.T @ h, 0.0)


def test_nullspace_basis_random():
    rng = np.random.default_rng(5)
    h = rng.normal(size=5)
    V, _ = nullspace_basis(h, 0.7)
    assert np.linalg.norm(h @ V) <= 1e-12
    assert np.allclose(V.T @ V, np.eye(4), atol=1e-12)


def test_nullspace_basis_zero_normal():
    with pytest.raises(ValueError):
        nullspace_basis([0.0, 0.0])


def test_linear_dependence_cases(example3):
    P = np.diag([1.0, 2.0])
    dep = linear_dependence(P, 2.0 * P)
    assert dep.kind == 'dependent'
    assert dep.t_star == pytest.approx(2.0)

    assert linear_dependence(example3.f.A, example3.g.A).kind == 'independent'
    assert linear_dependence(np.zeros((2, 2)), np.zeros((2, 2))).kind == 'both_zero'

    swapped = linear_dependence(np.zeros((2, 2)), P)
    assert swapped.dependent and swapped.swapped


def test_linear_dependence_dimension_mismatch():
    with pytest.raises(ValueError):
        linear_dependence(np.eye(2), np.eye(3))


@pytest.mark.parametrize("scale", [1e-3, 1e3])
def test_linear_dependence_scale_consistent(scale):
    rng = np.random.default_rng(6)
    for _ in range(20):
        B = rng.normal(size=(3, 3))
        P = B + B.T
        C = rng.normal(size=(3, 3))
        for Q in (-1.5 * P, C + C.T):
            base = linear_dependence(P, Q).kind
            assert linear_dependence(scale * P, scale * Q).kind == base
