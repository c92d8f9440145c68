"""Stationary orientation densities under a frozen strain, and the anisotropy condition.

The orientation density ``F`` on the unit sphere evolves by

    dF/dt + div_p((Id - p p) xi S p F) - Dr Lap_p F = 0

for a frozen trace-free symmetric strain ``S``.  The drift is a surface
gradient, ``(Id - p p) S p = grad_p psi`` with ``psi(p) = p.Sp / 2``, and
``psi`` is a degree-2 spherical harmonic (``Lap_p psi = -6 psi``).  In a real
orthonormal spherical-harmonic basis ``Y_a`` (degree ``l_a``) the Galerkin
matrix of the drift therefore only needs the triple products

    int Y_a grad(Y_b psi)... = -1/2 [6 + l_a(l_a+1) - l_b(l_b+1)] int Y_a Y_b psi,

which a product Gauss rule integrates exactly.  The degree-0 row vanishes
identically, so total mass is conserved by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.special import sph_harm_y

from .density import OrientationDensity
from .errors import ConvergenceError, DomainError
from .quadrature import SurfaceQuadrature, product_gauss

FOUR_PI = 4.0 * np.pi


def _check_strain(S):
    S = np.asarray(S, dtype=float)
    if S.shape != (3, 3):
        raise DomainError("S must be a 3x3 matrix")
    scale = max(np.abs(S).max(), 1.0)
    if np.abs(S - S.T).max() > 1e-12 * scale or abs(np.trace(S)) > 1e-12 * scale:
        raise DomainError("S must be symmetric and trace-free")
    return 0.5 * (S + S.T)


# --------------------------------------------------------------------------
# real spherical harmonics
# --------------------------------------------------------------------------

def real_sph_harm(L, p):
    """Real orthonormal spherical harmonics of degree <= L at unit vectors ``p``.

    Returns ``(Y, degrees)`` with ``Y`` of shape (..., (L+1)^2); the index of
    (l, m) is ``l*l + l + m``.
    """
    p = np.asarray(p, dtype=float)
    th = np.arccos(np.clip(p[..., 2], -1.0, 1.0))
    ph = np.arctan2(p[..., 1], p[..., 0])
    out = np.empty(p.shape[:-1] + ((L + 1) ** 2,))
    deg = np.empty((L + 1) ** 2, dtype=int)
    for l in range(L + 1):
        for m in range(0, l + 1):
            Y = sph_harm_y(l, m, th, ph)
            if m == 0:
                out[..., l * l + l] = Y.real
            else:
                out[..., l * l + l + m] = np.sqrt(2.0) * Y.real
                out[..., l * l + l - m] = np.sqrt(2.0) * Y.imag
        deg[l * l:(l + 1) ** 2] = l
    return out, deg


@lru_cache(maxsize=16)
def _basis_on_rule(L):
    quad = product_gauss(L + 3, 2 * L + 4)
    Y, deg = real_sph_harm(L, quad.nodes)
    Y.setflags(write=False)
    return quad, Y, deg


# --------------------------------------------------------------------------
# spectral solution
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SphericalDensity:
    """A density on the sphere given by real spherical-harmonic coefficients.

    ``coeffs[0]`` multiplies ``Y_00`` and equals ``1/sqrt(4 pi)`` for a
    normalized density; evaluation adds the constant ``1/(4 pi)`` exactly.
    """

    coeffs: np.ndarray
    L: int
    S: np.ndarray = field(repr=False)
    xi: float = 0.0
    Dr: float = 1.0
    convergence: float = 0.0
    min_value: float = 0.0

    @property
    def negative_excursion(self):
        """True when the density dips below -1e-8 somewhere (reported, not clipped)."""
        return self.min_value < -1e-8

    @property
    def is_uniform(self):
        return not np.any(self.coeffs[1:])

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        base = np.full(p.shape[:-1], 1.0 / FOUR_PI)
        if self.is_uniform:
            return base
        Y, _ = real_sph_harm(self.L, p)
        return base + Y[..., 1:] @ self.coeffs[1:]

    def integrate(self, values_fn, quad: SurfaceQuadrature | None = None):
        """int values_fn(p) F(p) dp (values_fn returns (..., k) arrays)."""
        quad = product_gauss(self.L + 8, 2 * self.L + 16) if quad is None else quad
        w = quad.weights * self(quad.nodes)
        return np.tensordot(w, values_fn(quad.nodes), axes=(0, 0))

    def second_moment(self):
        return self.integrate(lambda P: P[:, :, None] * P[:, None, :])

    def table(self, nt: int = 64, nph: int = 128):
        """Values on the (theta, phi) cell-centre grid of tabulated densities."""
        th = (np.arange(nt) + 0.5) * np.pi / nt
        ph = (np.arange(nph) + 0.5) * 2 * np.pi / nph
        T, P = np.meshgrid(th, ph, indexing="ij")
        p = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
        return self(p)

    def to_orientation_density(self, nt: int = 64, nph: int = 128, **kw) -> OrientationDensity:
        """Tabulated :class:`OrientationDensity` (negative excursions clipped to 0)."""
        return OrientationDensity.tabulated(np.clip(self.table(nt, nph), 0.0, None), **kw)


def galerkin_matrix(S, xi, Dr, L):
    """Generator A of dc/dt = A c in the real spherical-harmonic basis."""
    S = _check_strain(S)
    quad, Y, deg = _basis_on_rule(L)
    P = quad.nodes
    psi = 0.5 * np.einsum("ni,ij,nj->n", P, S, P)
    T = np.einsum("n,na,nb->ab", quad.weights * psi, Y, Y)
    ll = deg * (deg + 1.0)
    # -xi int Y_a div(Y_b grad psi) = xi int Y_b grad Y_a . grad psi
    drift = 0.5 * xi * (6.0 + ll[:, None] - ll[None, :]) * T
    return drift - Dr * np.diag(ll)


def _solve_coeffs(S, xi, Dr, L):
    n = (L + 1) ** 2
    c = np.zeros(n)
    c[0] = 1.0 / np.sqrt(FOUR_PI)
    if xi == 0.0 or not np.any(S):
        return c
    A = galerkin_matrix(S, xi, Dr, L)
    c[1:] = np.linalg.solve(A[1:, 1:], -A[1:, 0] * c[0])
    return c


def stationary_orientation_density(S, xi: float, Dr: float, L: int = 16, tol: float = 1e-6,
                                   check: bool = True) -> SphericalDensity:
    """Stationary solution of the orientation Fokker-Planck equation at frozen strain.

    Parameters
    ----------
    S : (3, 3) symmetric trace-free strain.
    xi : float
        Shape parameter.
    Dr : float
        Rotational diffusivity, > 0.
    L : int
        Truncation degree, >= 4.
    tol : float
        With ``check``, the degree ``L`` and ``L + 4`` solutions must agree in
        L2 (relative to the norm of the density) to ``tol``, otherwise
        :class:`ConvergenceError` is raised.

    Returns
    -------
    SphericalDensity
        Normalized to unit mass.  ``min_value`` is the minimum on a dense
        grid; negative excursions are reported through
        ``negative_excursion``, never clipped.
    """
    if not Dr > 0:
        raise DomainError("Dr must be positive")
    if L < 4:
        raise DomainError("truncation degree must be at least 4")
    S = _check_strain(S)
    c = _solve_coeffs(S, xi, Dr, L)
    diff = 0.0
    if check and np.any(c[1:]):
        c2 = _solve_coeffs(S, xi, Dr, L + 4)
        d = c2.copy()
        d[: c.size] -= c
        diff = float(np.linalg.norm(d) / np.linalg.norm(c2))
        if diff > tol:
            raise ConvergenceError(f"spherical-harmonic truncation L={L} not converged: "
                                   f"L vs L+4 relative L2 difference {diff:.3g} > {tol:g} "
                                   f"(xi|S|/Dr = {xi * np.linalg.norm(S) / Dr:.3g})")
    out = SphericalDensity(c, L, S, float(xi), float(Dr), diff, 0.0)
    grid = out.table(4 * L + 8, 8 * L + 16)
    object.__setattr__(out, "min_value", float(grid.min()))
    return out


def galerkin_mass_drift(S, xi, Dr, L, c0=None, t: float = 1.0):
    """Change in total mass after evolving dc/dt = A c for time ``t`` (should be 0)."""
    from scipy.linalg import expm
    A = galerkin_matrix(S, xi, Dr, L)
    n = A.shape[0]
    if c0 is None:
        c0 = np.zeros(n)
        c0[0] = 1.0 / np.sqrt(FOUR_PI)
        c0[1:] = 1e-2 * np.cos(np.arange(1, n))
    c = expm(A * t) @ c0
    return float(c[0] - c0[0]) * np.sqrt(FOUR_PI)


def linear_response_coefficient(F, S, xi, Dr, quad: SurfaceQuadrature | None = None):
    """c in F ~ (1 + c (xi/Dr) p.Sp) / (4 pi), by L2 projection onto p.Sp.

    ``F`` is a callable density on the sphere.
    """
    quad = product_gauss(24, 48) if quad is None else quad
    P = quad.nodes
    q = np.einsum("ni,ij,nj->n", P, S, P)
    r = FOUR_PI * F(P) - 1.0
    return float((quad.weights * r) @ q / ((quad.weights * q) @ q) * Dr / xi)


# --------------------------------------------------------------------------
# finite-volume oracle
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GridDensity:
    """Cell values of a density on a (theta, phi) finite-volume grid."""

    values: np.ndarray
    centers: np.ndarray
    areas: np.ndarray

    def linear_response_coefficient(self, S, xi, Dr):
        q = np.einsum("...i,ij,...j->...", self.centers, S, self.centers)
        r = FOUR_PI * self.values - 1.0
        return float(np.sum(self.areas * r * q) / np.sum(self.areas * q * q) * Dr / xi)


def finite_volume_stationary(S, xi: float, Dr: float, nt: int = 128, nph: int = 256) -> GridDensity:
    """Conservative finite-volume solution on a uniform (theta, phi) grid.

    Central fluxes for the drift, two-point fluxes for diffusion; one
    balance equation is replaced by the unit-mass constraint.
    """
    S = _check_strain(S)
    dth, dph = np.pi / nt, 2 * np.pi / nph
    te = np.arange(nt + 1) * dth
    tc = (np.arange(nt) + 0.5) * dth
    pc = (np.arange(nph) + 0.5) * dph
    pe = (np.arange(nph) + 1.0) * dph  # face between j and j+1

    def unit(t, p):
        return np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1)

    def dtheta(t, p):
        return np.stack([np.cos(t) * np.cos(p), np.cos(t) * np.sin(p), -np.sin(t)], axis=-1)

    def dphi(t, p):
        return np.stack([-np.sin(t) * np.sin(p), np.sin(t) * np.cos(p), np.zeros_like(t)], axis=-1)

    area = (np.cos(te[:-1]) - np.cos(te[1:]))[:, None] * dph * np.ones(nph)
    idx = np.arange(nt * nph).reshape(nt, nph)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(v.ravel())

    # theta faces between rows i and i+1
    T, P = np.meshgrid(te[1:-1], pc, indexing="ij")
    u = xi * np.einsum("...i,ij,...j->...", unit(T, P), S, dtheta(T, P))
    ell = np.sin(T) * dph
    a, b = idx[:-1], idx[1:]
    # flux a -> b: ell [u (Fa + Fb)/2 - Dr (Fb - Fa)/dth]
    ca = ell * (0.5 * u + Dr / dth)
    cb = ell * (0.5 * u - Dr / dth)
    add(a, a, ca)
    add(a, b, cb)
    add(b, a, -ca)
    add(b, b, -cb)
    # phi faces between columns j and j+1 (periodic)
    T, P = np.meshgrid(tc, pe, indexing="ij")
    u = xi * np.einsum("...i,ij,...j->...", unit(T, P), S, dphi(T, P)) / np.sin(T)
    a, b = idx, np.roll(idx, -1, axis=1)
    ca = dth * (0.5 * u + Dr / (np.sin(T) * dph))
    cb = dth * (0.5 * u - Dr / (np.sin(T) * dph))
    add(a, a, ca)
    add(a, b, cb)
    add(b, a, -ca)
    add(b, b, -cb)
    A = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(nt * nph, nt * nph)).tolil()
    A[0, :] = area.ravel()
    rhs = np.zeros(nt * nph)
    rhs[0] = 1.0
    F = spla.spsolve(A.tocsr(), rhs).reshape(nt, nph)
    Tc, Pc = np.meshgrid(tc, pc, indexing="ij")
    return GridDensity(F, unit(Tc, Pc), area)


# --------------------------------------------------------------------------
# anisotropy condition
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DiracLaw:
    """Point masses on the sphere: ``sum_k weight_k delta(p - p_k)``."""

    points: tuple
    weights: tuple

    @classmethod
    def at(cls, p, mass: float = 1.0):
        p = np.asarray(p, dtype=float)
        return cls((tuple(p / np.linalg.norm(p)),), (float(mass),))


def top_eigenvector(S):
    """Unit eigenvector of the largest eigenvalue of symmetric ``S``."""
    w, V = np.linalg.eigh(np.asarray(S, dtype=float))
    return w[-1], V[:, -1]


def dirac_top_eigenvector(S, mass: float = FOUR_PI) -> DiracLaw:
    """F[S] concentrated on the extensional direction ``p+`` of ``S``.

    The mass defaults to ``|S^2| = 4 pi``, the normalization under which the
    anisotropy integral equals ``4 pi lambda+``; pass ``mass=1`` for a
    probability measure.
    """
    return DiracLaw.at(top_eigenvector(S)[1], mass)


def _law_moment(law, quad):
    """int p p dF for a law: DiracLaw, OrientationDensity, SphericalDensity or callable pdf."""
    if isinstance(law, DiracLaw):
        M = np.zeros((3, 3))
        for p, w in zip(law.points, law.weights):
            p = np.asarray(p)
            M += w * np.outer(p, p)
        return M
    if isinstance(law, OrientationDensity):
        if law.family == "uniform":
            return np.eye(3) / 3.0
        if law.family == "dirac_aligned":
            p0 = np.asarray(law.p0)
            return np.outer(p0, p0)
        if law.family == "hemisphere_symmetric":
            p0 = np.asarray(law.p0)
            q0 = law._mirror_p0()
            return 0.5 * (np.outer(p0, p0) + np.outer(q0, q0))
        pdf = law.orientation_pdf
    else:
        pdf = law
    quad = product_gauss(48, 96) if quad is None else quad
    P = quad.nodes
    return np.einsum("n,ni,nj->ij", quad.weights * pdf(P), P, P)


def anisotropy_condition(F, S, quad: SurfaceQuadrature | None = None) -> float:
    """int_{S^2} p p : S F[S](p) dp.

    ``F`` is either a map ``S -> law`` or a law itself; a law is a
    :class:`DiracLaw` (exact), an :class:`OrientationDensity` (exact for the
    uniform and singular families) or any callable density on the sphere (quadrature,
    default product rule 48 x 96).
    """
    S = _check_strain(S)
    law = F
    if callable(F) and not isinstance(F, (DiracLaw, OrientationDensity, SphericalDensity)):
        try:
            law = F(S)
        except (TypeError, ValueError):
            law = F
        if isinstance(law, np.ndarray):  # F was a pdf taking points
            law = F
    M = _law_moment(law, quad)
    return float(np.sum(M * S))
