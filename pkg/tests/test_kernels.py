import numpy as np
import pytest
from numpy.testing import assert_allclose

from active_stokes.errors import DomainError, SingularityError
from active_stokes.kernels import (FluidParams, M_apply, grad_U_apply, laplacian_U,
                                   oseen_tilde_U, oseen_U)
from active_stokes.numerics import (fd_divergence_rows, fd_jacobian, fd_laplacian,
                                    random_traceless_symmetric)


def test_oseen_examples():
    assert_allclose(oseen_U([1.0, 0, 0]), np.diag([2.0, 1.0, 1.0]) / (8 * np.pi), rtol=1e-15)
    assert_allclose(np.diag(oseen_U([1.0, 0, 0])), [0.0795775, 0.0397887, 0.0397887], atol=5e-8)
    assert_allclose(np.diag(oseen_tilde_U([1.0, 0, 0])), [-0.0265258, 0.0132629, 0.0132629], atol=5e-8)
    assert_allclose(laplacian_U([0, 0, 1.0]), np.diag([2.0, 2.0, -4.0]) / (8 * np.pi), rtol=1e-15)
    assert_allclose(grad_U_apply([1.0, 0, 0], np.diag([1.0, 0, 0])), [-0.1193662, 0, 0], atol=5e-8)


def test_viscosity_scaling():
    x = np.array([0.3, -1.2, 0.7])
    assert_allclose(oseen_U(x, FluidParams(2.0)), oseen_U(x) / 2, rtol=1e-15)
    with pytest.raises(DomainError):
        FluidParams(0.0)


def test_singularity_guard():
    for k in (oseen_U, oseen_tilde_U, laplacian_U):
        with pytest.raises(SingularityError):
            k(np.zeros(3))
    with pytest.raises(SingularityError):
        grad_U_apply([0, 0, 1e-13], np.eye(3))


def test_symmetry_and_traces(rng):
    X = rng.standard_normal((50, 3))
    U = oseen_U(X)
    assert_allclose(U, np.swapaxes(U, -1, -2), atol=0)
    assert_allclose(U, oseen_U(-X), rtol=1e-15)
    assert np.all(np.linalg.eigvalsh(U) > 0)
    assert_allclose(np.trace(oseen_tilde_U(X), axis1=-2, axis2=-1), 0, atol=1e-15)
    assert_allclose(np.trace(laplacian_U(X), axis1=-2, axis2=-1), 0, atol=1e-13)


@pytest.mark.parametrize("s", [0.5, 2.0, 10.0])
def test_homogeneity(rng, s):
    X = rng.standard_normal((20, 3))
    A = random_traceless_symmetric(rng)
    assert_allclose(oseen_U(s * X), oseen_U(X) / s, rtol=1e-12)
    assert_allclose(oseen_tilde_U(s * X), oseen_tilde_U(X) / s, rtol=1e-12)
    assert_allclose(laplacian_U(s * X), laplacian_U(X) / s**3, rtol=1e-12)
    assert_allclose(grad_U_apply(s * X, A), grad_U_apply(X, A) / s**2, rtol=1e-12)
    assert_allclose(M_apply(s * X, A), M_apply(X, A) / s**3, rtol=1e-12)


def test_divergence_free_rows():
    F = lambda y: oseen_U(y)  # noqa: E731
    assert_allclose(fd_divergence_rows(F, np.array([1.0, 2.0, 3.0])), 0, atol=1e-6)


def test_laplacian_against_fd():
    x = np.array([1.0, 1.0, 1.0])
    L = fd_laplacian(oseen_U, x, h=1e-2)
    assert_allclose(L, laplacian_U(x), rtol=1e-5, atol=1e-5 * np.abs(laplacian_U(x)).max())


def test_grad_contraction_is_dipole(rng):
    # d/dt U(x + t p) p at t = 0 contracted appropriately equals gradU(x)(pp)
    # on the trace-free part: d_k U_ij A_jk for A = pp - Id/3
    for _ in range(20):
        x = rng.standard_normal(3) * 2
        p = rng.standard_normal(3)
        p /= np.linalg.norm(p)
        A = np.outer(p, p) - np.eye(3) / 3
        J = np.stack([fd_jacobian(lambda y: oseen_U(y)[:, j], x, h=1e-5) for j in range(3)], axis=1)
        ref = np.einsum("ijk,jk->i", J, A)
        assert_allclose(grad_U_apply(x, A), ref, rtol=1e-6, atol=1e-9)


def test_grad_antisymmetric_zero(rng):
    B = rng.standard_normal((3, 3))
    assert_allclose(grad_U_apply(rng.standard_normal(3), B - B.T), 0, atol=1e-16)


def test_M_matches_fd_strain(rng):
    x = np.array([1.0, 2.0, -1.0])
    for _ in range(5):
        A = random_traceless_symmetric(rng)
        J = fd_jacobian(lambda y: grad_U_apply(y, A), x, h=1e-5, order=4)
        D = 0.5 * (J + J.T)
        assert_allclose(D, 3 / (8 * np.pi) * M_apply(x, A), rtol=1e-5, atol=1e-9)


def test_M_symmetric_trace_free_many_points(rng):
    X = rng.standard_normal((100, 3)) + 0.1
    A = random_traceless_symmetric(rng)
    M = M_apply(X, A)
    assert_allclose(M, np.swapaxes(M, -1, -2), atol=1e-14)
    assert_allclose(np.trace(M, axis1=-2, axis2=-1), 0, atol=1e-12)
    for x, m in zip(X[:100], M):
        J = fd_jacobian(lambda y: grad_U_apply(y, A), x, h=1e-5, order=4)
        assert_allclose(0.5 * (J + J.T), 3 / (8 * np.pi) * m, rtol=1e-5,
                        atol=1e-5 * np.abs(m).max())


def test_M_printed_identity_example(rng):
    x = rng.standard_normal(3)
    r = np.linalg.norm(x)
    assert_allclose(M_apply(x, np.eye(3), printed=True), 3 * np.outer(x, x) / r**5, rtol=1e-13)


def test_purity(rng):
    x = rng.standard_normal((5, 3))
    assert np.array_equal(oseen_U(x), oseen_U(x.copy()))
