import numpy as np
import pytest
from numpy.testing import assert_allclose

from active_stokes.density import (Domain, OrientationDensity, sample_vmf, vmf_axial_moment,
                                   vmf_pdf)
from active_stokes.errors import DomainError
from active_stokes.quadrature import product_gauss


def test_domains_have_unit_volume(rng):
    for d in (Domain.unit_cube(), Domain.unit_volume_ball()):
        assert_allclose(d.volume, 1.0, rtol=1e-14)
        x = d.sample_uniform(500, rng)
        assert x.shape == (500, 3) and d.contains(x).all()
    with pytest.raises(DomainError):
        Domain("torus")


def test_vmf_normalization_and_moment():
    q = product_gauss(64, 128)
    for kappa in (0.0, 0.5, 3.0, 50.0):
        g = vmf_pdf(q.nodes, (0, 0, 1), kappa)
        assert_allclose(g @ q.weights, 1.0, rtol=1e-10)
        assert_allclose((g * q.nodes[:, 2] ** 2) @ q.weights, vmf_axial_moment(kappa), rtol=1e-9)


def test_vmf_sampler_moment(rng):
    kappa = 4.0
    p0 = np.array([1.0, 2.0, 2.0]) / 3.0
    P = sample_vmf(40000, p0, kappa, rng)
    assert_allclose(np.linalg.norm(P, axis=1), 1.0, rtol=1e-14)
    assert abs(np.mean((P @ p0) ** 2) - vmf_axial_moment(kappa)) < 3 / np.sqrt(40000)


@pytest.mark.parametrize("dens", [
    OrientationDensity.uniform(),
    OrientationDensity.axisymmetric_smooth((0, 1, 0), 2.0),
    OrientationDensity.uniform(domain=Domain.unit_volume_ball()),
])
def test_total_mass_one(dens):
    q = product_gauss(16, 32)
    x = np.array([[0.1, -0.2, 0.3], [0.0, 0.0, 0.0]])
    assert_allclose(dens.orientation_mass(x, q), dens.rho(x), rtol=1e-12)
    assert_allclose(np.trace(dens.second_moment(x), axis1=-2, axis2=-1), dens.rho(x), rtol=1e-10)


def test_singular_laws():
    d = OrientationDensity.dirac_aligned((0, 0, 2))
    assert d.is_singular and d.p0 == (0.0, 0.0, 1.0)
    assert_allclose(d.second_moment(np.zeros(3)), np.diag([0, 0, 1.0]))
    with pytest.raises(DomainError):
        d.orientation_pdf(np.array([0, 0, 1.0]))
    h = OrientationDensity.hemisphere_symmetric((0, 1, 1), mirror=(0, 1, 0))
    M = h.second_moment(np.zeros(3))
    assert_allclose(M, np.diag([0, 0.5, 0.5]), atol=1e-15)
    with pytest.raises(DomainError):
        OrientationDensity("dirac_aligned")


def test_tabulated_matches_vmf(rng):
    nt, nph = 64, 128
    th = (np.arange(nt) + 0.5) * np.pi / nt
    ph = (np.arange(nph) + 0.5) * 2 * np.pi / nph
    T, P = np.meshgrid(th, ph, indexing="ij")
    nodes = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1)
    table = vmf_pdf(nodes, (0, 0, 1), 2.0)
    d = OrientationDensity.tabulated(table)
    ref = OrientationDensity.axisymmetric_smooth((0, 0, 1), 2.0)
    assert_allclose(d.second_moment(np.zeros(3)), ref.second_moment(np.zeros(3)), atol=2e-3)
    S = d.sample_orientations(np.zeros((4000, 3)), rng)
    assert abs(np.mean(S[:, 2] ** 2) - vmf_axial_moment(2.0)) < 3 / np.sqrt(4000)
    with pytest.raises(DomainError):
        OrientationDensity.tabulated(-table)


def test_tabulated_spatial_profile(rng):
    g = np.linspace(-0.5, 0.5, 5)
    X, _, _ = np.meshgrid(g, g, g, indexing="ij")
    rho = 1.0 + X  # normalizes to 1 on the unit cube
    d = OrientationDensity(spatial="tabulated", rho_table=rho)
    assert_allclose(d.rho(np.array([0.25, 0.0, 0.0])), 1.25, rtol=1e-12)
    assert d.rho(np.array([0.7, 0.0, 0.0])) == 0.0
    x = d.sample_positions(20000, rng)
    assert abs(x[:, 0].mean() - 1.0 / 12.0) < 3 * 0.3 / np.sqrt(20000)


def test_dict_round_trip():
    for d in (OrientationDensity.uniform(),
              OrientationDensity.axisymmetric_smooth((1, 0, 0), 3.0, domain=Domain.unit_volume_ball()),
              OrientationDensity.hemisphere_symmetric((0, 1, 1))):
        assert OrientationDensity.from_dict(d.to_dict()) == d
