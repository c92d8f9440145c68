import numpy as np
import pytest
from numpy.testing import assert_allclose

from active_stokes.density import OrientationDensity
from active_stokes.io import read_csv
from active_stokes.orientation_stats import (BinGrid, continuum_bin_moments, empirical_moments,
                                             stress_convergence, stress_discrepancy,
                                             stress_prefactor)
from active_stokes.suspension import SuspensionConfig, sample_configuration
from active_stokes.swimmer import SwimmerParams

UNIFORM = OrientationDensity.uniform()


def _relaxed(dens, N, seed):
    return sample_configuration(dens, N, 0.01, 0.5, 2.0, seed=seed, mode="relaxed")


def test_bin_grid_index_and_nodes():
    b = BinGrid(4, 0.5)
    x = np.array([[-0.5, -0.5, -0.5], [0.5, 0.5, 0.5], [0.0, -0.26, 0.3]])
    assert b.index(x).tolist() == [0, 63, 2 * 16 + 0 * 4 + 3]
    X, W = b.gauss_nodes(3)
    assert X.shape == (64, 27, 3)
    assert_allclose(W.sum() * 64, 1.0, rtol=1e-14)
    # nodes of bin k lie in bin k
    assert np.all(b.index(X.reshape(-1, 3)).reshape(64, 27) == np.arange(64)[:, None])


def test_dirac_second_moment_exact():
    cfg = _relaxed(OrientationDensity.dirac_aligned(), 500, 1)
    s = empirical_moments(cfg)
    assert np.array_equal(s.second_moment, np.diag([0.0, 0.0, 1.0]))
    assert np.array_equal(s.first_moment, np.array([0.0, 0.0, 1.0]))


def test_uniform_second_moment_monte_carlo():
    N = 10000
    errs = []
    for seed in range(20):
        s = empirical_moments(_relaxed(UNIFORM, N, seed))
        assert_allclose(np.trace(s.second_moment), 1.0, rtol=1e-14)
        assert_allclose(s.second_moment, s.second_moment.T, atol=0)
        errs.append(np.abs(s.second_moment - np.eye(3) / 3).max())
    assert max(errs) < 3 / np.sqrt(N)


def test_partition_consistency_and_merge():
    cfg = _relaxed(OrientationDensity.axisymmetric_smooth((0, 1, 0), 2.0), 3000, 2)
    sp = SwimmerParams(-1.5, 2.0)
    s8 = empirical_moments(cfg, sp, 8)
    s1 = empirical_moments(cfg, sp, 1)
    glob = stress_prefactor(sp) / cfg.N * (cfg.orientations.T @ cfg.orientations
                                            - cfg.N * np.eye(3) / 3)
    assert_allclose(s1.discrete_stress, glob, atol=1e-15)
    assert_allclose(s8.discrete_stress, glob, atol=1e-13)
    m = s8.merged(2)
    s4 = empirical_moments(cfg, sp, 4)
    assert np.array_equal(m.histogram, s4.histogram)
    assert_allclose(m.bin_stress, s4.bin_stress, atol=1e-15)
    assert_allclose(s8.merged(8).bin_stress[0, 0, 0], glob, atol=1e-13)
    with pytest.raises(ValueError):
        s8.merged(3)


def test_relabeling_invariance(rng):
    cfg = _relaxed(UNIFORM, 1000, 3)
    perm = rng.permutation(cfg.N)
    shuf = SuspensionConfig(cfg.N, cfg.lam, cfg.centers[perm], cfg.orientations[perm], cfg.sep_c,
                            cfg.beta, cfg.seed, "relaxed", cfg.domain)
    a, b = empirical_moments(cfg), empirical_moments(shuf)
    assert np.array_equal(a.histogram, b.histogram)
    assert_allclose(a.bin_stress, b.bin_stress, atol=1e-15)
    assert_allclose(a.second_moment, b.second_moment, atol=1e-15)


def test_continuum_bin_moments_mass():
    mass, mom = continuum_bin_moments(OrientationDensity.dirac_aligned(), BinGrid(4))
    assert_allclose(mass, 1 / 64, rtol=1e-13)
    assert_allclose(mom[5], np.diag([0, 0, 1 / 64]), atol=1e-15)


def test_dirac_discrepancy_zero():
    d = OrientationDensity.dirac_aligned((1, 1, 0))
    cfg = _relaxed(d, 2000, 4)
    assert stress_discrepancy(empirical_moments(cfg), d) <= 1e-14


def test_uniform_decay_exponent():
    cfgs = [_relaxed(UNIFORM, N, 100 * k + s) for k, N in enumerate((1000, 10000, 100000))
            for s in range(3)]
    tab = stress_convergence(cfgs, UNIFORM)
    assert tab.N.tolist() == [1000, 10000, 100000]
    assert abs(tab.exponent + 0.5) <= 0.15


def test_kappa_sweep_collapse():
    rescaled = []
    for kappa in (0.5, 2.0, 8.0):
        d = OrientationDensity.axisymmetric_smooth((0, 0, 1), kappa)
        cfgs = [_relaxed(d, N, 7 * s + N) for N in (1000, 8000, 64000) for s in range(4)]
        r = stress_convergence(cfgs, d).rescaled
        rescaled.append(r)
        assert r.max() / r.min() < 1.5
    assert np.all(np.isfinite(rescaled))


def test_csv_export(tmp_path):
    cfg = _relaxed(UNIFORM, 200, 5)
    s = empirical_moments(cfg, bins=2)
    sha = s.to_csv(tmp_path / "m.csv", header={"seed": 5})
    t = read_csv(tmp_path / "m.csv")
    assert len(t.rows) == 8 and t.columns[:4] == ["i", "j", "k", "x"]
    assert sum(t.column("count", int)) == 200
    assert len(sha) == 40
    assert any("seed" in h for h in t.header)
