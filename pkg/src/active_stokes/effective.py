"""Continuum (effective) model: active stress, its Stokes response and energy rates.

The active stress of a density ``f`` is

    sigma_1(x) = alpha * Jcal * int_{S^2} (p p - Id/3) f(x, p) dp,

and the effective flow it drives solves ``-mu Lap w0 + grad p0 = lam div sigma_1``
on all of R^3, i.e.

    w0_i(x) = (lam / mu) int (d_k U_ij)(x - y) sigma_1,jk(y) dy      (mu = 1 kernel).

Volume potentials are discretized with piecewise-constant data on a uniform
grid of cubes (midpoint sampling of the data).  The integral of the kernel over
each cube is computed exactly for cubes near the target (closed-form face
integrals, which also handles the cube containing the target) and with a
corrected midpoint rule further away; see :mod:`active_stokes._cells`.
Two evaluation paths share these cell integrals:

* a direct sum at arbitrary target points (compiled, parallel over targets);
* an FFT convolution onto shifted lattices of cell centres, used for
  volume integrals of the flow itself (weak forms, Einstein source terms).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import fft as sfft

from . import _cells
from .density import Domain, OrientationDensity
from .errors import ConvergenceError, DomainError
from .flow import FlowField
from .quadrature import SurfaceQuadrature
from .swimmer import Jcal as _Jcal
from .swimmer import SwimmerParams



# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VolumeGrid:
    """Uniform grid of ``n**3`` cubes covering the box ``[-L, L]^3``.

    Parameters
    ----------
    n : int
        Cells per side.
    half_width : float
        ``L``.
    """

    n: int = 48
    half_width: float = 0.5

    def __post_init__(self):
        if self.n < 1 or self.half_width <= 0:
            raise DomainError("grid needs n >= 1 and a positive half width")

    @classmethod
    def for_domain(cls, domain: Domain, n: int = 48) -> "VolumeGrid":
        """Grid over the bounding box of ``domain`` with ``n`` cells per side."""
        return cls(n, domain.half_width)

    @property
    def h(self):
        return 2.0 * self.half_width / self.n

    @property
    def cell_volume(self):
        return self.h**3

    @property
    def axis(self):
        """Cell-centre coordinates along one axis."""
        return -self.half_width + (np.arange(self.n) + 0.5) * self.h

    def centers(self):
        """Cell centres, shape (n, n, n, 3), 'ij' ordering."""
        a = self.axis
        return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1)

    def refined(self) -> "VolumeGrid":
        return VolumeGrid(2 * self.n, self.half_width)

    def extended(self, cells: int) -> "VolumeGrid":
        """The same lattice grown by ``cells`` layers on every side."""
        return VolumeGrid(self.n + 2 * cells, self.half_width + cells * self.h)

    def covering(self, radius: float) -> "VolumeGrid":
        """Smallest extension of this lattice containing ``[-radius, radius]^3``."""
        extra = max(0, int(np.ceil((radius - self.half_width) / self.h - 1e-12)))
        return self.extended(extra)


# --------------------------------------------------------------------------
# active stress
# --------------------------------------------------------------------------

def _dev(M):
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    tr = np.trace(M, axis1=-2, axis2=-1)[..., None, None]
    return M - tr / 3.0 * np.eye(3)


@dataclass(frozen=True)
class ActiveStress:
    """The active stress field ``sigma_1`` of a density.

    Calling the object evaluates ``sigma_1`` at points of shape (..., 3); the
    result is symmetric and trace-free and vanishes outside the domain.
    ``alpha_power`` selects the convention for where alpha enters (see
    :func:`active_stokes.swimmer.Jcal`).
    """

    density: OrientationDensity
    sp: SwimmerParams
    alpha_power: int = 1
    quad: Optional[SurfaceQuadrature] = field(default=None, compare=False)

    @property
    def alpha(self):
        return self.sp.alpha

    @property
    def Jcal(self):
        return _Jcal(self.sp.beta, self.sp.mu, self.sp.alpha, self.alpha_power)

    @property
    def prefactor(self):
        """alpha * Jcal."""
        return self.sp.alpha * self.Jcal

    @property
    def is_zero(self):
        return self.density.family == "uniform" or self.prefactor == 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_zero:
            return np.zeros(x.shape[:-1] + (3, 3))
        M2 = self.density.second_moment(x, self.quad)
        return self.prefactor * _dev(M2)

    def on_grid(self, grid: VolumeGrid):
        """Cell-centre samples, shape (n, n, n, 3, 3)."""
        return self(grid.centers())

    def total(self, grid: VolumeGrid | None = None):
        """int sigma_1 dx (exact for spatially uniform densities)."""
        d = self.density
        if d.spatial == "uniform" and d.family != "tabulated":
            return self(np.zeros(3)) * d.domain.volume
        grid = VolumeGrid.for_domain(d.domain, 48) if grid is None else grid
        return self.on_grid(grid).sum(axis=(0, 1, 2)) * grid.cell_volume


@dataclass(frozen=True)
class PrescribedStress:
    """A user-supplied stress field, usable wherever an ActiveStress is.

    ``func`` maps points (..., 3) to tensors (..., 3, 3); values are
    symmetrized, made trace-free and cut off outside ``domain``.
    """

    func: Callable
    domain: Domain = field(default_factory=Domain.unit_cube)
    mu: float = 1.0
    is_zero: bool = False

    @property
    def sp(self):
        from .kernels import FluidParams
        return SwimmerParams(0.0, 2.0, fluid=FluidParams(self.mu))

    @property
    def density(self):
        return OrientationDensity(domain=self.domain)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = self.domain.contains(x)[..., None, None]
        return np.where(inside, _dev(np.asarray(self.func(x), float)), 0.0)

    def on_grid(self, grid: VolumeGrid):
        return self(grid.centers())


def active_stress(density: OrientationDensity, sp: SwimmerParams, alpha_power: int = 1,
                  quad: SurfaceQuadrature | None = None) -> ActiveStress:
    """sigma_1(x) = alpha Jcal (int p p f(x, p) dp - rho(x) Id / 3).

    The trace-free part of the second moment is taken explicitly so that
    the result is trace-free to rounding even when the sphere quadrature of
    ``quad`` is not exact for the orientation law.
    """
    return ActiveStress(density, sp, alpha_power, quad)


# --------------------------------------------------------------------------
# flows
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EffectiveFlow(FlowField):
    """A flow computed from the effective model.

    ``provenance`` is ``"w0"`` or ``"einstein_corrected"``.  When target
    points were passed to the solver, ``points`` and ``values`` hold them.
    """

    provenance: str = "w0"
    lam: float = 0.0
    points: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    values: Optional[np.ndarray] = field(default=None, repr=False, compare=False)


def _fd_gradient(velocity, h):
    def grad(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 3)
        G = np.empty((flat.shape[0], 3, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            G[:, :, k] = (velocity(flat + e) - velocity(flat - e)) / (2 * h)
        return G.reshape(x.shape[:-1] + (3, 3))
    return grad


def _pack_cells(grid: VolumeGrid, values, rank):
    """Flatten cell data and drop identically-zero cells."""
    C = grid.centers().reshape(-1, 3)
    V = np.asarray(values, dtype=float).reshape((C.shape[0],) + (3,) * rank)
    keep = np.any(V.reshape(C.shape[0], -1) != 0.0, axis=1)
    return np.ascontiguousarray(C[keep]), np.ascontiguousarray(V[keep])


def _direct(points, grid, g=None, tau=None, want_grad=False):
    """Direct cell-integral sums (mu = 1) at arbitrary points."""
    x = np.asarray(points, dtype=float)
    flat = np.ascontiguousarray(x.reshape(-1, 3))
    vel = np.zeros_like(flat)
    grad = np.zeros((flat.shape[0], 3, 3))
    if g is not None:
        C, G = _pack_cells(grid, g, 1)
        if C.shape[0]:
            v, gr = _cells.direct_sum(flat, C, grid.h, G, np.zeros((0, 3, 3)), want_grad)
            vel += v
            grad += gr
    if tau is not None:
        C, T = _pack_cells(grid, tau, 2)
        if C.shape[0]:
            v, _ = _cells.direct_sum(flat, C, grid.h, np.zeros((0, 3)), T, False)
            vel += v
    return vel.reshape(x.shape), grad.reshape(x.shape[:-1] + (3, 3))


def stokes_volume_potential(points, grid: VolumeGrid, tau=None, g=None, mu: float = 1.0):
    """St^{-1}(g + div tau) at ``points`` for piecewise-constant cell data.

    ``tau`` has shape (n, n, n, 3, 3), ``g`` shape (n, n, n, 3).
    """
    v, _ = _direct(points, grid, g=g, tau=tau)
    return v / mu


def _checked_solution(solve, points, tol, label):
    """Run ``solve(grid)`` on a grid and its refinement when a tolerance is set."""
    base = solve(None)
    if tol is None or points is None:
        return base
    fine = solve("refined")
    va, vb = base.values, fine.values
    scale = max(np.abs(vb).max(), 1e-300)
    err = np.abs(va - vb).max() / scale
    if err > tol:
        raise ConvergenceError(f"{label}: grid refinement changed the solution by {err:.3g} "
                               f"(relative) > tol={tol:g}")
    return fine


def solve_w0(stress: ActiveStress, lam: float, points=None, grid: VolumeGrid | None = None,
             tol: float | None = None, fd_step: float | None = None) -> EffectiveFlow:
    """Effective flow ``w0 = St^{-1}(lam div sigma_1)``.

    Parameters
    ----------
    stress : ActiveStress
    lam : float
        Volume fraction.
    points : array_like (..., 3), optional
        Targets evaluated eagerly (stored in ``values``).
    grid : VolumeGrid, optional
        Default: 48 cells per side over the domain's bounding box.
    tol : float, optional
        If given, also solve on the refined grid and raise
        :class:`ConvergenceError` if the values at ``points`` differ by more
        than ``tol`` (relative to their maximum); the refined solution is
        returned.
    fd_step : float, optional
        Step of the central-difference gradient (default ``1e-4 h``).

    Notes
    -----
    The returned evaluator satisfies ``-mu Lap w0 + grad p0 = lam div sigma_1``,
    equivalently ``2 mu int D(w0):D(phi) = -lam int sigma_1:D(phi)`` for
    divergence-free test fields, and decays like ``lam grad U(x) int sigma_1``.
    """
    base_grid = VolumeGrid.for_domain(stress.density.domain) if grid is None else grid
    mu = stress.sp.mu

    def solve(which):
        gr = base_grid.refined() if which == "refined" else base_grid
        if stress.is_zero or lam == 0.0:
            def vel(x):
                return np.zeros(np.shape(x))
            gradf = lambda x: np.zeros(np.shape(x)[:-1] + (3, 3))  # noqa: E731
        else:
            tau = lam * stress.on_grid(gr)

            def vel(x):
                return stokes_volume_potential(x, gr, tau=tau, mu=mu)
            gradf = _fd_gradient(vel, 1e-4 * gr.h if fd_step is None else fd_step)
        vals = None if points is None else vel(np.asarray(points, dtype=float))
        return EffectiveFlow(vel, None, gradf, label="w0", meta={"grid_n": gr.n, "h": gr.h},
                             provenance="w0", lam=lam,
                             points=None if points is None else np.asarray(points, float),
                             values=vals)

    return _checked_solution(solve, points, tol, "solve_w0")


# --------------------------------------------------------------------------
# external forcing and the first-order effective solve
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ForceField:
    """A body force supported in the ball ``|x - center| <= radius``."""

    func: Callable
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.3
    label: str = "force"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.func(x), dtype=float)
        inside = np.linalg.norm(x - np.asarray(self.center), axis=-1) <= self.radius
        return np.where(inside[..., None], out, 0.0)

    @property
    def extent(self):
        """Half width of the smallest origin-centred box holding the support."""
        return float(np.max(np.abs(self.center)) + self.radius)


def bump_force(amplitude=(1.0, 0.0, 0.0), center=(0.0, 0.0, 0.0), radius: float = 0.3,
               power: int = 4) -> ForceField:
    """g(x) = amplitude * (1 - |x - center|^2 / radius^2)_+^power."""
    A = np.asarray(amplitude, dtype=float)
    c = np.asarray(center, dtype=float)

    def func(x):
        q = np.clip(1.0 - np.sum((x - c) ** 2, axis=-1) / radius**2, 0.0, None)
        return q[..., None] ** power * A

    return ForceField(func, tuple(c), radius, label=f"bump(power={power})")


def first_order_sources(g: ForceField | None, density: OrientationDensity, sp: SwimmerParams,
                        grid: VolumeGrid, alpha_power: int = 1):
    """Cell data of the first-order effective solve.

    Returns ``(work_grid, gc, tau)``: the lattice (``grid`` extended to contain
    the support of ``g``), the force samples ``g`` (or None) and the source
    ``tau = sigma_1 + 5 mu rho D(u0)`` of ``u1 = St^{-1}(div tau)``, where
    ``u0 = St^{-1} g`` is differentiated exactly at the cell centres.
    """
    mu = sp.mu
    gr = grid if g is None else grid.covering(g.extent)
    X = gr.centers()
    tau = active_stress(density, sp, alpha_power)(X)
    gc = None
    if g is not None:
        gc = g(X)
        rho = density.rho(X)
        G0 = LatticeSource(gr, g=gc).gradient() / mu
        D0 = 0.5 * (G0 + np.swapaxes(G0, -1, -2))
        tau = tau + 5.0 * mu * rho[..., None, None] * D0
    return gr, gc, tau


def solve_effective(g: ForceField | None, density: OrientationDensity, sp: SwimmerParams,
                    lam: float, points=None, grid: VolumeGrid | None = None,
                    alpha_power: int = 1, tol: float | None = None) -> EffectiveFlow:
    """First-order solution ``u = u0 + lam u1`` of the Einstein-corrected system.

    ``u0 = St^{-1} g`` and ``u1 = St^{-1} div(sigma_1 + 5 mu rho D(u0))``
    (see :func:`first_order_sources`); both potentials are evaluated by the
    direct cell sums.  The viscosity jump across the domain boundary enters
    only through ``rho`` in the source; no transmission condition is imposed
    beyond first order, as recorded in the flow's metadata.
    """
    base = VolumeGrid.for_domain(density.domain) if grid is None else grid
    mu = sp.mu

    def solve(which):
        gr0 = base.refined() if which == "refined" else base
        gr, gc, tau = first_order_sources(g, density, sp, gr0, alpha_power)
        tau_l = lam * tau

        def vel(x):
            v, _ = _direct(x, gr, g=gc, tau=tau_l if lam != 0.0 else None)
            return v / mu
        gradf = _fd_gradient(vel, 1e-4 * gr.h)
        vals = None if points is None else vel(np.asarray(points, dtype=float))
        return EffectiveFlow(vel, None, gradf, label="u_eff",
                             meta={"grid_n": gr.n, "h": gr.h, "alpha_power": alpha_power,
                                   "transmission_condition": "not imposed (first-order expansion)"},
                             provenance="einstein_corrected", lam=lam,
                             points=None if points is None else np.asarray(points, float),
                             values=vals)

    return _checked_solution(solve, points, tol, "solve_effective")


# --------------------------------------------------------------------------
# lattice (FFT) evaluation
# --------------------------------------------------------------------------

_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_WORKSPACE: dict = {}


def _table_buffer(ncomp, Lm):
    """Reusable kernel-table buffer (first touch of large arrays is costly)."""
    key = (ncomp, Lm)
    buf = _WORKSPACE.get(key)
    if buf is None:
        _WORKSPACE.clear()
        buf = np.empty((ncomp, Lm, Lm, Lm))
        _WORKSPACE[key] = buf
    return buf


def _fft_apply(table, P, Q, src_hat, n, pad, shp, workers=None):
    """out[t, p] = sum_{s, q} table[p * Q + q][t - s + shift] src[s, q].

    ``src_hat`` holds the transforms of the ``Q`` source components on the
    FFT box ``shp``.  Returns an array of shape (n + 2 pad,) * 3 + (P,).
    """
    out_n = n + 2 * pad
    out = np.empty((out_n,) * 3 + (P,))
    lo = n - 1
    for p in range(P):
        acc = None
        for q in range(Q):
            k = sfft.rfftn(table[p * Q + q], shp, workers=workers)
            k *= src_hat[q]
            if acc is None:
                acc = k
            else:
                acc += k
        full = sfft.irfftn(acc, shp, workers=workers)
        out[..., p] = full[lo:lo + out_n, lo:lo + out_n, lo:lo + out_n]
    return out


class LatticeSource:
    """Cell data on a grid, transformed once for repeated lattice evaluations.

    Parameters
    ----------
    grid : VolumeGrid
    g : (n, n, n, 3) array, optional
        Vector data for the Oseen potential.
    tau : (n, n, n, 3, 3) array, optional
        Symmetric tensor data for the gradient potential.
    pad : int
        Cells by which target lattices extend the grid on every side.
    """

    def __init__(self, grid: VolumeGrid, g=None, tau=None, pad: int = 0, workers=None):
        self.grid = grid
        self.pad = int(pad)
        self.workers = workers
        n = grid.n
        self.Lm = 2 * n - 1 + 2 * self.pad
        L = sfft.next_fast_len(self.Lm, real=True)
        self.shp = (L, L, L)
        self.g_hat = None
        self.tau_hat = None
        if g is not None:
            g = np.asarray(g, float)
            self.g_hat = [sfft.rfftn(g[..., q], self.shp, workers=workers) for q in range(3)]
        if tau is not None:
            tau = np.asarray(tau, float)
            self.tau_hat = []
            for j, k in _PAIRS:
                comp = tau[..., j, k] if j == k else 0.5 * (tau[..., j, k] + tau[..., k, j])
                self.tau_hat.append(sfft.rfftn(comp, self.shp, workers=workers))

    def _table(self, ncomp, offset, layout):
        n = self.grid.n
        buf = _table_buffer(ncomp, self.Lm)
        shift = np.full(3, n - 1 + self.pad, dtype=np.int64)
        _cells.fill_kernel_table(buf, self.grid.h, np.asarray(offset, float), shift, layout)
        return buf

    def velocity(self, offset=(0.0, 0.0, 0.0)):
        """Potential (mu = 1) on the padded lattice shifted by ``offset``."""
        n, pad = self.grid.n, self.pad
        out = np.zeros((n + 2 * pad,) * 3 + (3,))
        if self.g_hat is not None:
            T = self._table(9, offset, _cells.TABLE_U)
            out += _fft_apply(T, 3, 3, self.g_hat, n, pad, self.shp, self.workers)
        if self.tau_hat is not None:
            T = self._table(18, offset, _cells.TABLE_SYM_K)
            out += _fft_apply(T, 3, 6, self.tau_hat, n, pad, self.shp, self.workers)
        return out

    def gradient(self, offset=(0.0, 0.0, 0.0)):
        """Gradient of the Oseen potential of ``g``, shape (m, m, m, 3, 3)."""
        if self.g_hat is None:
            raise ValueError("gradient evaluation needs vector data g")
        n, pad = self.grid.n, self.pad
        T = self._table(27, offset, _cells.TABLE_GRAD_K)
        G = _fft_apply(T, 9, 3, self.g_hat, n, pad, self.shp, self.workers)
        return G.reshape((n + 2 * pad,) * 3 + (3, 3))


def lattice_potential(grid: VolumeGrid, g=None, tau=None, offset=(0.0, 0.0, 0.0), pad: int = 0,
                      mode: str = "velocity", workers=None):
    """Volume potentials (mu = 1) at the shifted lattice ``centres + offset``.

    The target lattice is the grid's cell-centre lattice grown by ``pad``
    cells on every side and shifted by ``offset``.

    mode="velocity": ``sum IU g + sum K : tau``, shape (m, m, m, 3);
    mode="gradient": gradient of the Oseen part, ``sum_j K[i,j,k] g_j``,
    shape (m, m, m, 3, 3).
    """
    src = LatticeSource(grid, g=g, tau=tau if mode == "velocity" else None, pad=pad,
                        workers=workers)
    if mode == "gradient":
        return src.gradient(offset)
    return src.velocity(offset)


# --------------------------------------------------------------------------
# divergence-free test fields and weak forms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SolenoidalBump:
    """phi = grad(b) x c with b(x) = (1 - |x - center|^2 / R^2)_+^k.

    Compactly supported in the closed ball of radius ``R``, divergence free,
    and ``C^(k-2)`` smooth.
    """

    center: tuple
    radius: float
    direction: tuple
    power: int = 8

    def _parts(self, x):
        y = np.asarray(x, dtype=float) - np.asarray(self.center)
        R2 = self.radius**2
        q = 1.0 - np.sum(y * y, axis=-1) / R2
        inside = q > 0
        q = np.where(inside, q, 0.0)
        return y, q, inside, R2

    def velocity(self, x):
        y, q, inside, R2 = self._parts(x)
        k = self.power
        gb = (-2.0 * k / R2 * q ** (k - 1))[..., None] * y
        return np.cross(gb, np.asarray(self.direction))

    def laplacian(self, x):
        y, q, inside, R2 = self._parts(x)
        k = self.power
        dL = -2.0 * k / R2 * ((2 * k + 1) * (k - 1) * q ** (k - 2)
                              - 2.0 * (k - 1) * (k - 2) * q ** (k - 3))
        gL = (dL * (-2.0 / R2))[..., None] * y
        return np.cross(gL, np.asarray(self.direction))

    def gradient(self, x):
        """G[..., i, k] = d phi_i / d x_k."""
        y, q, inside, R2 = self._parts(x)
        k = self.power
        H = (-2.0 * k / R2) * (q[..., None, None] ** (k - 1) * np.eye(3)
                               - (2.0 * (k - 1) / R2) * q[..., None, None] ** (k - 2)
                               * y[..., :, None] * y[..., None, :])
        c = np.asarray(self.direction)
        # phi_i = eps_ilm H_l. c_m  ->  d_k phi_i = eps_ilm H_lk c_m
        eps = np.zeros((3, 3, 3))
        eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
        eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
        return np.einsum("ilm,...lk,m->...ik", eps, H, c)

    def strain(self, x):
        G = self.gradient(x)
        return 0.5 * (G + np.swapaxes(G, -1, -2))


def random_test_fields(rng, n: int, half_width: float = 0.5, radius_range=(0.2, 0.35),
                       power: int = 8, straddle: bool = True):
    """``n`` random :class:`SolenoidalBump` fields near the box ``[-L, L]^3``.

    With ``straddle`` every centre lies within ``0.3 R`` of a face of the
    box, so the support crosses the boundary, where a piecewise-constant
    source concentrates its divergence.
    """
    out = []
    while len(out) < n:
        R = rng.uniform(*radius_range)
        c = rng.uniform(-half_width, half_width, 3)
        if straddle:
            ax = rng.integers(3)
            c[ax] = rng.choice([-1.0, 1.0]) * half_width + rng.uniform(-0.3, 0.3) * R
        d = rng.standard_normal(3)
        out.append(SolenoidalBump(tuple(c), float(R), tuple(d / np.linalg.norm(d)), power))
    return out


def weak_rhs(grid: VolumeGrid, tau, field: SolenoidalBump, cell_gauss: int = 3):
    """(-int tau : D(phi), int |tau| |D(phi)|) for piecewise-constant ``tau``.

    The second number is the scale against which cancellation in the first
    can be judged.
    """
    h = grid.h
    x, wq = leggauss(cell_gauss)
    Cg = grid.centers()
    lo = np.asarray(field.center) - field.radius
    hi = np.asarray(field.center) + field.radius
    sel = np.all((Cg + h / 2 > lo) & (Cg - h / 2 < hi), axis=-1)
    C = Cg[sel]
    T = np.asarray(tau, float)[sel]
    Tn = np.sqrt(np.sum(T * T, axis=(-1, -2)))
    tot = 0.0
    scale = 0.0
    for i, xi in enumerate(x):
        for j, xj in enumerate(x):
            for k, xk in enumerate(x):
                wgt = wq[i] * wq[j] * wq[k] * (h / 2) ** 3
                D = field.strain(C + 0.5 * h * np.array([xi, xj, xk]))
                tot += wgt * np.sum(T * D)
                scale += wgt * np.sum(Tn * np.sqrt(np.sum(D * D, axis=(-1, -2))))
    return -tot, scale


def select_test_fields(rng, n: int, grid: VolumeGrid, tau, min_ratio: float = 0.1, **kw):
    """Random test fields whose weak-form response is not nearly cancelled.

    A field is kept when ``|int tau:D(phi)| >= min_ratio * int |tau||D(phi)|``;
    this screens out draws for which symmetry makes both sides of a weak
    form vanish, where relative errors carry no information.
    """
    out = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > 1000 * n:
            raise RuntimeError("could not find non-degenerate test fields")
        f = random_test_fields(rng, 1, grid.half_width, **kw)[0]
        r, sc = weak_rhs(grid, tau, f)
        if sc > 0 and abs(r) >= min_ratio * sc:
            out.append(f)
    return out


_SUB_OFFSETS = np.array([[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)]) * 0.25


def weak_form_pairs(grid: VolumeGrid, tau, fields, mu: float = 1.0, cell_gauss: int = 3,
                    workers=None):
    """Both sides of the weak form of ``w = St^{-1}(div tau)``.

    Returns ``(lhs, rhs)`` arrays over ``fields`` with

        lhs = 2 mu int D(w):D(phi) = -mu int w . Lap(phi)   (div phi = 0),
        rhs = -int tau : D(phi).

    ``lhs`` is a volume integral of the potential itself, computed on the
    lattices of cell centres and of half-cell centres (FFT evaluation) and
    Richardson-extrapolated; ``w`` is smooth inside every cell, so the
    composite midpoint error expands in even powers of the spacing.
    ``rhs`` uses Gauss-Legendre on every cell (tau is constant per cell).
    """
    h = grid.h
    L = grid.half_width
    reach = max(max(np.abs(f.center)) + f.radius for f in fields)
    pad = max(0, int(np.ceil((reach - L) / h)) + 1)
    m = grid.n + 2 * pad
    base = -L - pad * h + (np.arange(m) + 0.5) * h
    X0 = np.stack(np.meshgrid(base, base, base, indexing="ij"), axis=-1)

    src = LatticeSource(grid, tau=tau, pad=pad, workers=workers)

    def lattice_sum(offsets, weight):
        acc = np.zeros(len(fields))
        for off in offsets:
            w = src.velocity(off * h) / mu
            X = X0 + off * h
            for a, f in enumerate(fields):
                acc[a] += np.sum(w * f.laplacian(X)) * weight
        return -mu * acc

    coarse = lattice_sum(np.zeros((1, 3)), h**3)
    fine = lattice_sum(_SUB_OFFSETS, (h / 2) ** 3)
    lhs = (4.0 * fine - coarse) / 3.0

    rhs = np.array([weak_rhs(grid, tau, f, cell_gauss)[0] for f in fields])
    return lhs, rhs


def weak_form_w0(stress: ActiveStress, lam: float, fields, grid: VolumeGrid | None = None,
                 workers=None):
    """(2 mu int D(w0):D(phi), -lam int sigma_1:D(phi)) for each test field."""
    grid = VolumeGrid.for_domain(stress.density.domain) if grid is None else grid
    tau = lam * stress.on_grid(grid)
    return weak_form_pairs(grid, tau, fields, stress.sp.mu, workers=workers)


# --------------------------------------------------------------------------
# energy
# --------------------------------------------------------------------------

class EnergyRates(NamedTuple):
    """Terms of the kinetic-energy balance (both already signed)."""

    viscous: float
    active: float


def linear_flow(G, label="linear") -> FlowField:
    """u(x) = G x (an extensional flow for symmetric trace-free G)."""
    G = np.asarray(G, dtype=float)

    def vel(x):
        return np.asarray(x, dtype=float) @ G.T

    def grad(x):
        return np.broadcast_to(G, np.shape(x)[:-1] + (3, 3)).copy()

    return FlowField(vel, lambda x: np.zeros(np.shape(x)[:-1]), grad, label=label)


def energy_dissipation(flow: FlowField, density: OrientationDensity, sp: SwimmerParams, lam: float,
                       grid: VolumeGrid | None = None, alpha_power: int = 1,
                       quad: SurfaceQuadrature | None = None) -> EnergyRates:
    """Viscous and active contributions to the rate of change of kinetic energy.

    viscous = -2 mu int (1 + 5/2 rho lam) |D(u)|^2,   active = -lam int sigma_1 : D(u),

    both by the midpoint rule over ``grid`` (default 48^3 over the domain's
    bounding box; the viscous integral is restricted to that box).
    """
    grid = VolumeGrid.for_domain(density.domain) if grid is None else grid
    X = grid.centers()
    D = flow.strain(X)
    rho = density.rho(X)
    dv = grid.cell_volume
    viscous = -2.0 * sp.mu * float(np.sum((1.0 + 2.5 * rho * lam) * np.sum(D * D, axis=(-1, -2)))) * dv
    sig = active_stress(density, sp, alpha_power, quad)(X)
    active = -lam * float(np.sum(sig * D)) * dv
    return EnergyRates(viscous, active)
