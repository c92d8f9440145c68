import numpy as np
import pytest
from numpy.testing import assert_allclose

from active_stokes.errors import CalibrationError, DomainError, SingularityError
from active_stokes.kernels import FluidParams, grad_U_apply
from active_stokes.numerics import (fd_jacobian, loglog_slope, random_rotation,
                                    random_traceless_symmetric, random_unit_vectors)
from active_stokes.quadrature import product_gauss
from active_stokes.swimmer import (Jcal, SwimmerParams, calibrate_Jprime, dipole_decomposition,
                                   dipole_velocity, elementary_flow, elementary_pressure,
                                   elementary_velocity, elementary_velocity_gradient,
                                   fit_pressure_coefficients, image_flow, passive_strain_gradient,
                                   passive_strain_velocity, stokes_residual, stresslet_coefficient,
                                   swimmer_quadrature, taylor_remainder, traction_on_sphere,
                                   translation_flow, v1_image_velocity)


@pytest.fixture
def p(rng):
    return random_unit_vectors(1, rng)[0]


def test_params_derived_constants():
    sp = SwimmerParams(alpha=1.0, beta=2.0, a=1.0)
    assert_allclose(sp.kf, np.pi)
    assert_allclose(sp.gamma1, 0.6875)
    assert_allclose(sp.gamma2, 0.25 - 0.0625)
    assert_allclose(sp.gamma3, 0.125 * 0.75**2)
    with pytest.raises(DomainError):
        SwimmerParams(1.0, 1.0)
    with pytest.raises(DomainError):
        SwimmerParams(1.0, 2.0, a=0.0)


def test_interior_value_example(p):
    sp = SwimmerParams(1.0, 2.0, 1.0)
    assert_allclose(elementary_velocity(0.3 * p, p, sp), 0.052083333333333336 * p, rtol=1e-14)


def test_no_slip_of_image_system(rng, p):
    sp = SwimmerParams(1.0, 2.0, 0.7)
    n = random_unit_vectors(200, rng)
    assert np.abs(v1_image_velocity(sp.a * n, p, sp)).max() <= 1e-8 * sp.kf / (sp.mu * sp.a)


def test_continuity_across_surface(rng, p):
    sp = SwimmerParams(-0.8, 1.6, 0.5)
    n = random_unit_vectors(200, rng)
    ext = elementary_velocity(sp.a * n, p, sp, exterior_formula=True)
    assert_allclose(ext, np.tile(sp.translation_speed * p, (200, 1)), atol=1e-8)
    inside = elementary_velocity(sp.a * n * rng.uniform(0, 1, (200, 1)), p, sp)
    assert_allclose(inside, np.tile(sp.translation_speed * p, (200, 1)), rtol=1e-15)


def test_v1_far_field_monopole(p):
    sp = SwimmerParams(1.0, 2.0, 1.0)
    d = np.array([0.6, 0.0, 0.8])
    r = np.geomspace(1e3, 1e5, 5)
    v = np.linalg.norm(v1_image_velocity(r[:, None] * d, p, sp), axis=1)
    assert abs(loglog_slope(r, v)[0] + 1) < 0.05


def test_linearity_in_alpha(rng, p):
    x = rng.uniform(-3, 3, (20, 3))
    s1, s2 = SwimmerParams(1.0, 2.0, 0.5), SwimmerParams(2.0, 2.0, 0.5)
    assert_allclose(elementary_velocity(x, p, s2), 2 * elementary_velocity(x, p, s1), rtol=1e-14)
    assert_allclose(v1_image_velocity(x, p, s2), 2 * v1_image_velocity(x, p, s1), rtol=1e-14)


def test_singular_points_raise(p):
    sp = SwimmerParams(1.0, 2.0, 1.0)
    with pytest.raises(SingularityError):
        elementary_velocity(sp.a * sp.beta * p, p, sp)
    with pytest.raises(SingularityError):
        v1_image_velocity(sp.a / sp.beta * p, p, sp)


def test_rotation_equivariance(rng, p):
    sp = SwimmerParams(1.0, 2.5, 0.8)
    R = random_rotation(rng)
    x = rng.uniform(-3, 3, (30, 3))
    assert_allclose(elementary_velocity(x @ R.T, R @ p, sp), elementary_velocity(x, p, sp) @ R.T,
                    rtol=1e-11, atol=1e-14)


def test_gradient_closed_form(rng, p):
    sp = SwimmerParams(1.0, 2.0, 0.5)
    for _ in range(10):
        x = random_unit_vectors(1, rng)[0] * rng.uniform(0.6, 3)
        G = elementary_velocity_gradient(x, p, sp)
        Gf = fd_jacobian(lambda y: elementary_velocity(y, p, sp), x, h=1e-6)
        assert_allclose(G, Gf, atol=1e-7 * np.abs(G).max())


def test_pressure_momentum_residual(rng, p):
    sp = SwimmerParams(1.0, 2.0, 1.0)
    worst = 0.0
    count = 0
    while count < 100:
        x = rng.uniform(-4, 4, 3)
        if (np.linalg.norm(x) < 1.2 or np.linalg.norm(x - 2 * p) < 0.4):
            continue
        r, scale = stokes_residual(lambda y: elementary_velocity(y, p, sp),
                                   lambda y: elementary_pressure(y, p, sp), x, sp.mu, 1e-3)
        worst = max(worst, np.linalg.norm(r) / scale)
        count += 1
    assert worst < 1e-4


def test_printed_pressure_fails_residual_and_fit_recovers(p):
    sp = SwimmerParams(1.0, 2.0, 1.0)
    fit = fit_pressure_coefficients(p, sp)
    assert fit["residual_derived"] < 1e-6
    assert fit["residual_printed"] > 1e-2
    assert_allclose(fit["fitted"], fit["derived"], atol=1e-6)


def test_pressure_decay_and_parity(rng, p):
    sp = SwimmerParams(1.0, 2.0, 1.0)
    d = random_unit_vectors(1, rng)[0]
    r = np.geomspace(10, 1e4, 6)
    vals = np.abs(elementary_pressure(r[:, None] * d, p, sp))
    # force-free swimmer: the pressure is dipolar, O(|x|^-3)
    assert abs(loglog_slope(r, vals)[0] + 3) < 0.1
    x = rng.uniform(-3, 3, (10, 3)) + 4
    assert_allclose(elementary_pressure(x, p, sp), elementary_pressure(-x, -p, sp), rtol=1e-13)


@pytest.mark.parametrize("beta", [1.5, 2.0, 4.0])
@pytest.mark.parametrize("a", [0.5, 1.0])
def test_force_torque_identities(p, beta, a):
    sp = SwimmerParams(1.0, beta, a)
    m = traction_on_sphere(elementary_flow(p, sp, exterior_formula=True), a,
                           swimmer_quadrature(sp, p), mu=sp.mu)
    assert np.linalg.norm(m.force + sp.kf * p) <= 1e-6 * sp.kf
    assert np.linalg.norm(m.torque) <= 1e-8 * sp.kf


def test_image_force(p):
    sp = SwimmerParams(1.0, 2.0, 1.0)
    m = traction_on_sphere(image_flow(p, sp), sp.a * (1 + 1e-9), product_gauss(32, 64, axis=p))
    assert_allclose(m.force, -sp.kf * sp.gamma1 * p, atol=1e-6 * sp.kf)


def test_near_degenerate_beta_escalates(p):
    sp = SwimmerParams(1.0, 1.0001, 1.0)
    q = swimmer_quadrature(sp, p)
    assert q.label.startswith("graded_polar")
    m = traction_on_sphere(elementary_flow(p, sp, exterior_formula=True), 1.0, q)
    assert np.linalg.norm(m.force + sp.kf * p) <= 1e-6 * sp.kf


@pytest.mark.parametrize("beta", [1.5, 2.0, 4.0])
def test_stresslet_identity(p, beta):
    su = SwimmerParams.unit(beta)
    m = traction_on_sphere(elementary_flow(p, su, exterior_formula=True), 1.0, swimmer_quadrature(su, p))
    c = stresslet_coefficient(beta)
    assert_allclose(m.stresslet_deviatoric, c * (np.outer(p, p) - np.eye(3) / 3), atol=1e-6 * abs(c))
    # isotropic part gamma_2 / 2 (dropped from the trace-free statement)
    assert_allclose(np.trace(m.stresslet) / 3, su.gamma2 / 2 + c / 3, atol=1e-7)


def test_stresslet_example_value():
    assert stresslet_coefficient(2.0) == -0.53125


def test_v2_stresslet_zero(p):
    sp = SwimmerParams(1.0, 2.0, 1.0)
    m = traction_on_sphere(translation_flow(p, sp), 1.0, product_gauss(32, 64, axis=p))
    assert np.abs(m.stresslet).max() <= 1e-8


def test_traction_refinement_tol(p):
    sp = SwimmerParams(1.0, 2.0, 1.0)
    m = traction_on_sphere(elementary_flow(p, sp, exterior_formula=True), 1.0,
                           product_gauss(8, 16, axis=p), tol=1e-8)
    assert np.linalg.norm(m.force + sp.kf * p) <= 1e-7 * sp.kf


def test_scaling_law(rng, p):
    x = rng.uniform(-4, 4, (1000, 3))
    for a in (0.01, 0.5, 3.0):
        sp = SwimmerParams(1.3, 2.0, a)
        su = SwimmerParams.unit(2.0)
        lhs = elementary_velocity(a * x, p, sp)
        rhs = sp.kf / a * elementary_velocity(x, p, su)
        assert np.max(np.linalg.norm(lhs - rhs, axis=1) / np.linalg.norm(rhs, axis=1)) <= 1e-12


def test_Jcal_value_and_alpha_power():
    assert_allclose(Jcal(2.0), 1.1015625, rtol=1e-15)
    assert_allclose(Jcal(2.0, alpha=1.0, alpha_power=2), 1.1015625, rtol=1e-15)
    assert_allclose(Jcal(2.0, alpha=-2.0, alpha_power=2), -2.203125, rtol=1e-15)
    with pytest.raises(ValueError):
        Jcal(2.0, alpha_power=3)


def test_dipole_coefficient(p):
    sp = SwimmerParams(1.0, 2.0, 1.0)
    dip = dipole_decomposition(p, sp)
    assert_allclose(dip.Jcal, 1.1015625)
    assert_allclose(dip.trace_free, dip.Jcal * (np.outer(p, p) - np.eye(3) / 3), atol=1e-12)
    # calibration agrees with the trace-free closure Jprime = alpha J / (3 mu)
    assert_allclose(dip.Jprime, dip.Jcal / 3, rtol=1e-6)
    assert_allclose(dip.fitted_Jcal, dip.Jcal, rtol=1e-6)
    with pytest.raises(DomainError):
        dipole_decomposition(p, sp, lam=0.01, N=1000)


def test_remainder_decay_and_parity(rng, p):
    sp = SwimmerParams(1.0, 2.0, 1.0)
    dip = dipole_decomposition(p, sp)
    r = np.geomspace(30, 3000, 6)
    for d in random_unit_vectors(10, rng):
        R = np.linalg.norm(taylor_remainder(r[:, None] * d, p, sp, dipole=dip), axis=1)
        assert abs(loglog_slope(r, R)[0] + 3) < 0.1
        assert (R * r**3).max() < 10 * (R * r**3).min()
    x = rng.uniform(2, 4, (10, 3))
    assert_allclose(taylor_remainder(-x, -p, sp, dipole=dipole_decomposition(-p, sp)),
                    -taylor_remainder(x, p, sp, dipole=dip), rtol=1e-10, atol=1e-15)


def test_remainder_slope_in_a(p):
    x = np.array([0.36, 0.48, 0.8])
    a = np.geomspace(1e-3, 1e-1, 5)
    R = [np.linalg.norm(taylor_remainder(x, p, SwimmerParams(1.0, 2.0, ai))) for ai in a]
    assert abs(loglog_slope(a, R)[0] - 4) < 0.1


def test_dipole_velocity_matches_kernel(p):
    C = np.outer(p, p) - np.eye(3) / 3
    x = np.array([3.0, 1.0, -2.0])
    assert_allclose(dipole_velocity(x, C, 0.1), 4 * np.pi / 3 * 1e-3 * grad_U_apply(x, C), rtol=1e-15)


def test_calibration_returns_decay():
    Jp, Jfit, decay = calibrate_Jprime(SwimmerParams(1.0, 3.0, 1.0))
    assert decay >= 2.8
    assert issubclass(CalibrationError, Exception)


def test_passive_strain(rng):
    a = 0.3
    S = random_traceless_symmetric(rng)
    n = random_unit_vectors(200, rng)
    assert_allclose(passive_strain_velocity(a * n, S, a), -(a * n) @ S.T, atol=1e-10)
    assert_allclose(passive_strain_velocity(n, np.zeros((3, 3)), a), 0)
    with pytest.raises(DomainError):
        passive_strain_velocity(0.5 * a * n[0], S, a)
    x = np.array([0.7, -0.2, 0.5])
    assert_allclose(passive_strain_gradient(x, S, a),
                    fd_jacobian(lambda y: passive_strain_velocity(y, S, a), x, h=1e-6), atol=1e-8)


def test_passive_strain_far_field(rng):
    a = 1.0
    S = random_traceless_symmetric(rng)
    lam_over_N = 4 * np.pi / 3 * a**3
    d = random_unit_vectors(1, rng)[0]
    r = np.geomspace(20, 2000, 6)
    X = r[:, None] * d
    R = np.linalg.norm(passive_strain_velocity(X, S, a)
                       - 5 * lam_over_N * grad_U_apply(X, S, FluidParams(1.0)), axis=1)
    assert abs(loglog_slope(r, R)[0] + 4) < 0.1
