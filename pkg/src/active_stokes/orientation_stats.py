"""Empirical orientation moments of configurations and their continuum limits.

The discrete active stress of a configuration is sampled per spatial bin as

    Sigma_b = (alpha J / N) sum_{i in b} (p_i p_i - Id/3),

the discrete counterpart of the bin integral of sigma_1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .density import OrientationDensity
from .io import write_csv
from .numerics import loglog_slope
from .suspension import SuspensionConfig
from .swimmer import Jcal, SwimmerParams

_DEV = np.eye(3) / 3.0


@dataclass(frozen=True)
class BinGrid:
    """``n^3`` equal cubic bins covering ``[-half_width, half_width]^3``."""

    n: int = 8
    half_width: float = 0.5

    @property
    def edges(self):
        return np.linspace(-self.half_width, self.half_width, self.n + 1)

    def index(self, x):
        """Flat bin index of each point (points on the outer faces go to the boundary bins)."""
        x = np.asarray(x, dtype=float)
        k = np.floor((x + self.half_width) / (2 * self.half_width) * self.n).astype(int)
        k = np.clip(k, 0, self.n - 1)
        return (k[:, 0] * self.n + k[:, 1]) * self.n + k[:, 2]

    def gauss_nodes(self, order: int = 3):
        """Per-bin tensor Gauss nodes (n^3, order^3, 3) and weights (order^3,)."""
        t, w = leggauss(order)
        h = 2 * self.half_width / self.n
        lo = self.edges[:-1]
        c1 = (lo[:, None] + 0.5 * h * (t + 1))  # (n, order)
        n, o = self.n, order
        X = np.empty((n, n, n, o, o, o, 3))
        X[..., 0] = c1[:, None, None, :, None, None]
        X[..., 1] = c1[None, :, None, None, :, None]
        X[..., 2] = c1[None, None, :, None, None, :]
        X = X.reshape(n ** 3, o ** 3, 3)
        W = (0.5 * h) ** 3 * np.einsum("i,j,k->ijk", w, w, w).ravel()
        return X, W


@dataclass(frozen=True)
class MomentSummary:
    """Exact discrete moments of a configuration."""

    count: int
    first_moment: np.ndarray
    second_moment: np.ndarray
    histogram: np.ndarray = field(repr=False)
    bin_stress: np.ndarray = field(repr=False)
    bin_second_moment_sum: np.ndarray = field(repr=False)
    bins: BinGrid = BinGrid()
    prefactor: float = 1.0

    @property
    def discrete_stress(self):
        """Global discrete stress (sum of the per-bin stresses)."""
        return self.bin_stress.reshape(-1, 3, 3).sum(axis=0)

    def merged(self, factor: int) -> "MomentSummary":
        """Merge ``factor^3`` blocks of bins into one (exact additivity)."""
        n = self.bins.n
        if n % factor:
            raise ValueError("merge factor must divide the bin count")
        m = n // factor

        def merge(a):
            a = a.reshape((m, factor, m, factor, m, factor) + a.shape[3:])
            return a.sum(axis=(1, 3, 5))

        return MomentSummary(self.count, self.first_moment, self.second_moment,
                             merge(self.histogram), merge(self.bin_stress),
                             merge(self.bin_second_moment_sum),
                             BinGrid(m, self.bins.half_width), self.prefactor)

    def to_csv(self, path, header: dict | None = None):
        """Per-bin export: bin indices, centre, count and the six stress components."""
        n = self.bins.n
        h = 2 * self.bins.half_width / n
        cols = ["i", "j", "k", "x", "y", "z", "count",
                "s_xx", "s_xy", "s_xz", "s_yy", "s_yz", "s_zz"]
        rows = []
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    S = self.bin_stress[i, j, k]
                    c = -self.bins.half_width + (np.array([i, j, k]) + 0.5) * h
                    rows.append([i, j, k, *c.tolist(), int(self.histogram[i, j, k]),
                                 S[0, 0], S[0, 1], S[0, 2], S[1, 1], S[1, 2], S[2, 2]])
        hdr = {"N": self.count, "bins": n, "prefactor": self.prefactor}
        hdr.update(header or {})
        return write_csv(path, cols, rows, header=hdr)


def stress_prefactor(sp: SwimmerParams, alpha_power: int = 1):
    """alpha * J for the swimmer parameters."""
    return sp.alpha * Jcal(sp.beta, sp.mu, sp.alpha, alpha_power)


def empirical_moments(cfg: SuspensionConfig, sp: SwimmerParams | None = None,
                      bins: BinGrid | int = 8, alpha_power: int = 1) -> MomentSummary:
    """Exact discrete moments and the binned discrete active stress.

    Parameters
    ----------
    cfg : SuspensionConfig
    sp : SwimmerParams, optional
        Supplies alpha J; defaults to ``cfg.swimmer()`` (alpha = 1).
    bins : BinGrid or int
        Spatial binning over the bounding cube of the domain (default 8^3).
    """
    if isinstance(bins, (int, np.integer)):
        bins = BinGrid(int(bins), cfg.domain.half_width)
    sp = cfg.swimmer() if sp is None else sp
    pref = stress_prefactor(sp, alpha_power)
    P = cfg.orientations
    N = cfg.N
    PP = P[:, :, None] * P[:, None, :]
    idx = bins.index(cfg.centers)
    nb = bins.n ** 3
    hist = np.bincount(idx, minlength=nb)
    pp_sum = np.zeros((nb, 3, 3))
    np.add.at(pp_sum, idx, PP)
    stress = pref / N * (pp_sum - hist[:, None, None] * _DEV)
    shp = (bins.n,) * 3
    return MomentSummary(N, P.mean(axis=0), PP.mean(axis=0), hist.reshape(shp),
                         stress.reshape(shp + (3, 3)), pp_sum.reshape(shp + (3, 3)), bins, pref)


def continuum_bin_moments(density: OrientationDensity, bins: BinGrid, order: int = 3):
    """Bin integrals of rho and of the second moment of f: (mass (nb,), moment (nb, 3, 3))."""
    X, W = bins.gauss_nodes(order)
    rho = density.rho(X)
    M = density.second_moment(X)
    return rho @ W, np.einsum("bqij,q->bij", M, W)


@dataclass(frozen=True)
class ConvergenceTable:
    N: np.ndarray
    discrepancy: np.ndarray
    seeds: tuple = ()

    @property
    def exponent(self):
        """Fitted log-log slope of discrepancy vs N."""
        return loglog_slope(self.N, self.discrepancy)[0]

    @property
    def rescaled(self):
        """sqrt(N) * discrepancy."""
        return np.sqrt(self.N) * self.discrepancy


def stress_discrepancy(summary: MomentSummary, density: OrientationDensity, order: int = 3):
    """Mass-weighted RMS gap between per-bin conditional stresses.

    In each bin ``b`` compare the mean discrete stress per particle,
    ``alpha J <pp - Id/3>_b``, with the continuum conditional mean
    ``alpha J (int_b int pp f - Id/3 int_b rho) / int_b rho``; the squared
    Frobenius gaps are averaged with the continuum bin masses.  A
    deterministic orientation law gives zero up to round-off, and i.i.d.
    sampling gives O(N^-1/2).
    """
    mass, mom = continuum_bin_moments(density, summary.bins, order)
    cnt = summary.histogram.ravel()
    pp = summary.bin_second_moment_sum.reshape(-1, 3, 3)
    use = (mass > 0) & (cnt > 0)
    disc = pp[use] / cnt[use, None, None] - _DEV
    cont = mom[use] / mass[use, None, None] - _DEV
    gap = np.sum((disc - cont) ** 2, axis=(1, 2))
    w = mass[use] / mass[use].sum()
    return float(abs(summary.prefactor) * np.sqrt(np.sum(w * gap)))


def stress_convergence(cfgs, density: OrientationDensity, sp: SwimmerParams | None = None,
                       bins: BinGrid | int = 8, alpha_power: int = 1) -> ConvergenceTable:
    """Discrepancy table over a sequence of configurations (ordered by N).

    Configurations sharing the same N are averaged (root-mean-square).
    """
    by_n: dict = {}
    for cfg in cfgs:
        s = empirical_moments(cfg, sp, bins, alpha_power)
        by_n.setdefault(cfg.N, []).append(stress_discrepancy(s, density))
    Ns = np.array(sorted(by_n))
    d = np.array([np.sqrt(np.mean(np.square(by_n[n]))) for n in Ns])
    return ConvergenceTable(Ns, d)
