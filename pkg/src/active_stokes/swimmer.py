"""Single-swimmer Stokes solution and its surface identities.

A swimmer is a rigid ball ``B(0, a)`` with orientation ``p``; the fluid is
pushed by a point force ``-k_f p`` located at ``a beta p`` and the body
feels ``+k_f p``.  The exact solution is the image system

.. math::

    v_1(x) = -k_f U(x - a\\beta p)p + k_f\\gamma_1 U(x - a\\beta^{-1}p)p
             - k_f\\gamma_2 a\\,\\nabla U(x - a\\beta^{-1}p)(pp - Id/3)
             + k_f\\gamma_3 a^2 \\Delta U(x - a\\beta^{-1}p)p

which vanishes on the sphere, plus the translation field

.. math::

    v_2(x) = k_f(1-\\gamma_1)\\,[U(x)p + a^2|x|^{-2}\\tilde U(x)p]

which equals the constant ``U_2 = k_f(1-gamma_1)/(6 pi mu a) p`` on the
sphere.  Inside the ball the velocity is that constant.

Coordinates here are always relative to the particle center.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CalibrationError, DomainError, QuadratureError, SingularityError
from .flow import FlowField
from .kernels import (DEFAULT_FLUID, FluidParams, grad_U_apply, laplacian_U, oseen_U)
from .numerics import fd_jacobian, fd_laplacian, loglog_slope, rotation_to
from .quadrature import SurfaceQuadrature, graded_polar, product_gauss

_C8 = 1.0 / (8 * np.pi)


# --------------------------------------------------------------------------
# parameters
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SwimmerParams:
    """Swimmer parameters.

    Parameters
    ----------
    alpha : float
        Swimming intensity; ``alpha > 0`` puller, ``alpha < 0`` pusher.
    beta : float
        Force offset factor, ``beta > 1``.
    a : float
        Particle radius.
    fluid : FluidParams
    """

    alpha: float
    beta: float
    a: float = 1.0
    fluid: FluidParams = field(default_factory=lambda: DEFAULT_FLUID)

    def __post_init__(self):
        if not self.beta > 1:
            raise DomainError(f"beta must exceed 1, got {self.beta}")
        if not self.a > 0:
            raise DomainError(f"radius must be positive, got {self.a}")

    @property
    def mu(self):
        return self.fluid.mu

    @property
    def kf(self):
        """Force magnitude k_f = alpha pi mu a^2."""
        return self.alpha * np.pi * self.mu * self.a**2

    @property
    def gamma1(self):
        b = self.beta
        return 1.5 / b - 0.5 / b**3

    @property
    def gamma2(self):
        b = self.beta
        return b**-2 - b**-4

    @property
    def gamma3(self):
        b = self.beta
        return 0.25 / b * (1 - b**-2) ** 2

    @property
    def translation_speed(self):
        """Scalar U_2 such that the body moves with velocity U_2 p."""
        return self.kf * (1 - self.gamma1) / (6 * np.pi * self.mu * self.a)

    def with_radius(self, a):
        return replace(self, a=a)

    @classmethod
    def unit(cls, beta, fluid: FluidParams = DEFAULT_FLUID):
        """Unit-scaled swimmer: a = 1 and k_f = 1."""
        return cls(alpha=1.0 / (np.pi * fluid.mu), beta=beta, a=1.0, fluid=fluid)

    @classmethod
    def from_volume_fraction(cls, alpha, beta, lam, N, fluid: FluidParams = DEFAULT_FLUID):
        """Radius from ``lam = (4/3) pi a^3 N``."""
        return cls(alpha=alpha, beta=beta, a=radius_from_volume_fraction(lam, N), fluid=fluid)


def radius_from_volume_fraction(lam, N):
    return (3.0 * lam / (4.0 * np.pi * N)) ** (1.0 / 3.0)


def stresslet_coefficient(beta):
    """Closed-form stresslet coefficient -5/2 beta^-2 + 3/2 beta^-4."""
    return -2.5 * beta**-2 + 1.5 * beta**-4


def dipole_strength(beta):
    """beta - 5/2 beta^-2 + 3/2 beta^-4 (positive for beta > 1)."""
    return beta - 2.5 * beta**-2 + 1.5 * beta**-4


def Jcal(beta, mu=1.0, alpha=1.0, alpha_power=1):
    """Active-stress coefficient.

    ``alpha_power=1`` (default) returns ``(3 mu/4)(beta - 5/2 beta^-2 + 3/2 beta^-4)``,
    which does not contain alpha; the active stress is then ``alpha * Jcal``.
    ``alpha_power=2`` includes one factor of alpha in Jcal itself.
    """
    j = 0.75 * mu * dipole_strength(beta)
    if alpha_power == 1:
        return j
    if alpha_power == 2:
        return alpha * j
    raise ValueError("alpha_power must be 1 or 2")


# --------------------------------------------------------------------------
# building blocks (vectorized; x has shape (..., 3))
# --------------------------------------------------------------------------

def _as_unit(p):
    p = np.asarray(p, dtype=float)
    n = np.linalg.norm(p)
    if not np.isclose(n, 1.0, atol=1e-12):
        raise DomainError(f"orientation must be a unit vector, |p| = {n}")
    return p


def _check_sources(x, p, sp, which=("f", "i")):
    eps = 1e-12 * sp.a
    if "f" in which:
        d = np.linalg.norm(x - sp.a * sp.beta * p, axis=-1)
        if np.any(d < eps):
            raise SingularityError("evaluation at the point-force location a*beta*p")
    if "i" in which:
        d = np.linalg.norm(x - sp.a / sp.beta * p, axis=-1)
        if np.any(d < eps):
            raise SingularityError("evaluation at the image location a*p/beta")


def _Up(r, p, mu):
    rr = np.linalg.norm(r, axis=-1)[..., None]
    rp = np.einsum("...i,i->...", r, p)[..., None]
    return (p / rr + r * rp / rr**3) * (_C8 / mu)


def _grad_Up(r, p, mu):
    rr = np.linalg.norm(r, axis=-1)[..., None, None]
    rp = np.einsum("...i,i->...", r, p)[..., None, None]
    ri = r[..., :, None]
    rk = r[..., None, :]
    pi = p[:, None]
    pk = p[None, :]
    G = (-pi * rk + np.eye(3) * rp + ri * pk) / rr**3 - 3 * ri * rk * rp / rr**5
    return G * (_C8 / mu)


def _dipA(r, p, mu):
    """gradU(r)(pp - Id/3) = -3/(8 pi mu) ((p.r)^2 - |r|^2/3) r/|r|^5."""
    rr = np.linalg.norm(r, axis=-1)[..., None]
    rp = np.einsum("...i,i->...", r, p)[..., None]
    axx = rp**2 - rr**2 / 3
    return (-3 * _C8 / mu) * axx * r / rr**5


def _grad_dipA(r, p, mu):
    rr = np.linalg.norm(r, axis=-1)[..., None, None]
    rp = np.einsum("...i,i->...", r, p)[..., None, None]
    axx = rp**2 - rr**2 / 3
    Ar = rp[..., 0] * p - r / 3  # A r with A = pp - Id/3
    ri = r[..., :, None]
    rk = r[..., None, :]
    G = 2 * ri * Ar[..., None, :] / rr**5 + axx * np.eye(3) / rr**5 - 5 * axx * ri * rk / rr**7
    return (-3 * _C8 / mu) * G


def _LUp(r, p, mu):
    rr = np.linalg.norm(r, axis=-1)[..., None]
    rp = np.einsum("...i,i->...", r, p)[..., None]
    return (2 * p / rr**3 - 6 * r * rp / rr**5) * (_C8 / mu)


def _grad_LUp(r, p, mu):
    rr = np.linalg.norm(r, axis=-1)[..., None, None]
    rp = np.einsum("...i,i->...", r, p)[..., None, None]
    ri = r[..., :, None]
    rk = r[..., None, :]
    pi = p[:, None]
    pk = p[None, :]
    G = -6 * (pi * rk + np.eye(3) * rp + ri * pk) / rr**5 + 30 * ri * rk * rp / rr**7
    return G * (_C8 / mu)


# --------------------------------------------------------------------------
# velocity fields
# --------------------------------------------------------------------------

def v1_image_velocity(x, p, sp: SwimmerParams):
    """Image-system velocity v_1; vanishes on the sphere |x| = a."""
    x = np.asarray(x, dtype=float)
    p = _as_unit(p)
    _check_sources(x, p, sp)
    a, b, kf, mu = sp.a, sp.beta, sp.kf, sp.mu
    r1 = x - a * b * p
    r2 = x - a / b * p
    return kf * (-_Up(r1, p, mu) + sp.gamma1 * _Up(r2, p, mu)
                 - sp.gamma2 * a * _dipA(r2, p, mu) + sp.gamma3 * a * a * _LUp(r2, p, mu))


def v1_image_gradient(x, p, sp: SwimmerParams):
    x = np.asarray(x, dtype=float)
    p = _as_unit(p)
    _check_sources(x, p, sp)
    a, b, kf, mu = sp.a, sp.beta, sp.kf, sp.mu
    r1 = x - a * b * p
    r2 = x - a / b * p
    return kf * (-_grad_Up(r1, p, mu) + sp.gamma1 * _grad_Up(r2, p, mu)
                 - sp.gamma2 * a * _grad_dipA(r2, p, mu) + sp.gamma3 * a * a * _grad_LUp(r2, p, mu))


def v2_translation_velocity(x, p, sp: SwimmerParams):
    """Exterior flow of a sphere translating with speed U_2 along p."""
    x = np.asarray(x, dtype=float)
    p = _as_unit(p)
    if np.any(np.linalg.norm(x, axis=-1) < 1e-12 * sp.a):
        raise SingularityError("translation field evaluated at the particle center")
    c = sp.kf * (1 - sp.gamma1)
    return c * (_Up(x, p, sp.mu) + sp.a**2 / 6 * _LUp(x, p, sp.mu))


def v2_translation_gradient(x, p, sp: SwimmerParams):
    x = np.asarray(x, dtype=float)
    p = _as_unit(p)
    c = sp.kf * (1 - sp.gamma1)
    return c * (_grad_Up(x, p, sp.mu) + sp.a**2 / 6 * _grad_LUp(x, p, sp.mu))


def elementary_velocity(x, p, sp: SwimmerParams, exterior_formula: bool = False):
    """Swimmer velocity v[p](x).

    For ``|x| > a`` the sum of the image system and the translation field;
    for ``|x| <= a`` the rigid translation ``U_2 p``.  With
    ``exterior_formula=True`` the exterior expression is used everywhere
    (useful for one-sided finite differences on the surface).
    """
    x = np.asarray(x, dtype=float)
    p = _as_unit(p)
    _check_sources(x, p, sp)
    if exterior_formula:
        return v1_image_velocity(x, p, sp) + v2_translation_velocity(x, p, sp)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    out = np.empty_like(X)
    r = np.linalg.norm(X, axis=1)
    inside = r <= sp.a
    out[inside] = sp.translation_speed * p
    ext = ~inside
    if np.any(ext):
        out[ext] = v1_image_velocity(X[ext], p, sp) + v2_translation_velocity(X[ext], p, sp)
    return out[0] if single else out


def elementary_velocity_gradient(x, p, sp: SwimmerParams, exterior_formula: bool = False):
    """Closed-form gradient ``G[i, k] = d v_i / d x_k`` of v[p]; zero inside the ball."""
    x = np.asarray(x, dtype=float)
    p = _as_unit(p)
    _check_sources(x, p, sp)
    if exterior_formula:
        return v1_image_gradient(x, p, sp) + v2_translation_gradient(x, p, sp)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    out = np.zeros(X.shape + (3,))
    ext = np.linalg.norm(X, axis=1) > sp.a
    if np.any(ext):
        out[ext] = v1_image_gradient(X[ext], p, sp) + v2_translation_gradient(X[ext], p, sp)
    return out[0] if single else out


# --------------------------------------------------------------------------
# pressure
# --------------------------------------------------------------------------

def pressure_basis(x, p, sp: SwimmerParams):
    """Harmonic pressure terms available for the image system.

    Columns: p.r1/|r1|^3, p.r2/|r2|^3, (A:r2 r2)/|r2|^5, p.r2/|r2|^5 with
    r1 = x - a beta p, r2 = x - a p/beta, A = pp - Id/3.  The last one is
    not harmonic-compatible with any velocity term; it is included so that
    a least-squares fit can show it is absent.
    """
    x = np.asarray(x, dtype=float)
    r1 = x - sp.a * sp.beta * p
    r2 = x - sp.a / sp.beta * p
    n1 = np.linalg.norm(r1, axis=-1)
    n2 = np.linalg.norm(r2, axis=-1)
    p1 = r1 @ p
    p2 = r2 @ p
    axx = p2**2 - n2**2 / 3
    return np.stack([p1 / n1**3, p2 / n2**3, axx / n2**5, p2 / n2**5], axis=-1)


def printed_pressure_coefficients(sp: SwimmerParams):
    """Coefficients of :func:`pressure_basis` in the literature expression for p_1."""
    return np.array([1.0, 1.0, 3 * sp.gamma2 * sp.a, 3 * sp.gamma3 * sp.a**2])


def derived_pressure_coefficients(sp: SwimmerParams):
    """Coefficients of :func:`pressure_basis` that make (v_1, p_1) a Stokes pair."""
    return np.array([-1.0, sp.gamma1, 3 * sp.gamma2 * sp.a, 0.0])


def image_pressure(x, p, sp: SwimmerParams, variant: str = "derived"):
    """Pressure p_1 paired with v_1.

    ``variant="derived"`` (default) uses coefficients verified against the
    momentum equation; ``variant="printed"`` reproduces the commonly quoted
    expression, which does not satisfy it.
    """
    p = _as_unit(p)
    coef = derived_pressure_coefficients(sp) if variant == "derived" else printed_pressure_coefficients(sp)
    if variant not in ("derived", "printed"):
        raise ValueError(f"unknown pressure variant {variant!r}")
    _check_sources(np.asarray(x, dtype=float), p, sp)
    return sp.kf / (4 * np.pi) * (pressure_basis(x, p, sp) @ coef)


def translation_pressure(x, p, sp: SwimmerParams):
    """p_2 = k_f (1 - gamma_1) x.p/(4 pi |x|^3)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    return sp.kf * (1 - sp.gamma1) * (x @ p) / (4 * np.pi * r**3)


def elementary_pressure(x, p, sp: SwimmerParams, variant: str = "derived"):
    """Pressure p[p] = p_1 + p_2 in the fluid (|x| > a)."""
    x = np.asarray(x, dtype=float)
    if np.any(np.linalg.norm(x, axis=-1) < sp.a * (1 - 1e-9)):
        raise DomainError("pressure is only defined in the fluid region |x| >= a")
    return image_pressure(x, p, sp, variant) + translation_pressure(x, p, sp)


def stokes_residual(velocity, pressure, x, mu, h):
    """Momentum residual -mu Lap v + grad p at ``x`` and the size of grad p."""
    lap = fd_laplacian(velocity, x, h=h, order=4)
    gp = fd_jacobian(lambda y: np.atleast_1d(pressure(y)), x, h=h, order=4)[0]
    return -mu * lap + gp, float(np.linalg.norm(gp))


def fit_pressure_coefficients(p, sp: SwimmerParams, n_points: int = 60, seed: int = 0):
    """Re-derive the p_1 coefficients from the Stokes residual of v_1.

    Solves ``mu Lap v_1 = k_f/(4 pi) sum_m c_m grad b_m`` in least squares over
    random exterior points, ``b_m`` from :func:`pressure_basis`.

    Returns
    -------
    dict
        ``fitted``, ``printed``, ``derived`` coefficient vectors and the
        relative residual norms of the printed and fitted pressures.
    """
    p = _as_unit(p)
    rng = np.random.default_rng(seed)
    rows, rhs = [], []
    h = 1e-3 * sp.a
    pts = []
    while len(pts) < n_points:
        y = rng.uniform(-4, 4, 3) * sp.a
        if (np.linalg.norm(y) > 1.3 * sp.a
                and np.linalg.norm(y - sp.a * sp.beta * p) > 0.3 * sp.a):
            pts.append(y)
    for y in pts:
        lap = fd_laplacian(lambda z: v1_image_velocity(z, p, sp), y, h=h)
        Gb = fd_jacobian(lambda z: pressure_basis(z, p, sp), y, h=h, order=4)  # (4, 3)
        rows.append(sp.kf / (4 * np.pi) * Gb.T)
        rhs.append(sp.mu * lap)
    A = np.concatenate(rows)
    b = np.concatenate(rhs)
    fitted, *_ = np.linalg.lstsq(A, b, rcond=None)
    printed = printed_pressure_coefficients(sp)
    derived = derived_pressure_coefficients(sp)
    nb = np.linalg.norm(b)
    return {
        "fitted": fitted,
        "printed": printed,
        "derived": derived,
        "residual_printed": float(np.linalg.norm(A @ printed - b) / nb),
        "residual_derived": float(np.linalg.norm(A @ derived - b) / nb),
        "residual_fitted": float(np.linalg.norm(A @ fitted - b) / nb),
    }


# --------------------------------------------------------------------------
# flow-field wrappers
# --------------------------------------------------------------------------

def elementary_flow(p, sp: SwimmerParams, exterior_formula: bool = False,
                    pressure_variant: str = "derived") -> FlowField:
    """FlowField for v[p] with pressure and closed-form gradient."""
    p = _as_unit(p)
    return FlowField(
        velocity=lambda x: elementary_velocity(x, p, sp, exterior_formula),
        pressure=lambda x: image_pressure(x, p, sp, pressure_variant) + translation_pressure(x, p, sp),
        gradient=lambda x: elementary_velocity_gradient(x, p, sp, exterior_formula),
        label="v[p]",
    )


def image_flow(p, sp: SwimmerParams, pressure_variant: str = "derived") -> FlowField:
    p = _as_unit(p)
    return FlowField(lambda x: v1_image_velocity(x, p, sp),
                     lambda x: image_pressure(x, p, sp, pressure_variant),
                     lambda x: v1_image_gradient(x, p, sp), label="v1")


def translation_flow(p, sp: SwimmerParams) -> FlowField:
    p = _as_unit(p)
    return FlowField(lambda x: v2_translation_velocity(x, p, sp),
                     lambda x: translation_pressure(x, p, sp),
                     lambda x: v2_translation_gradient(x, p, sp), label="v2")


# --------------------------------------------------------------------------
# surface traction
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TractionMoments:
    """Force, torque and first moment of the traction on a sphere."""

    force: np.ndarray
    torque: np.ndarray
    stresslet: np.ndarray
    quadrature: str = ""

    @property
    def stresslet_symmetric(self):
        return 0.5 * (self.stresslet + self.stresslet.T)

    @property
    def stresslet_deviatoric(self):
        S = self.stresslet_symmetric
        return S - np.trace(S) / 3 * np.eye(3)


def _fd_gradient(velocity, X, h):
    G = np.empty(X.shape + (3,))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        G[..., k] = (velocity(X + e) - velocity(X - e)) / (2 * h)
    return G


def _moments(flow, radius, quad, center, h_fd, mu, gradient):
    X, n, w = quad.on_sphere(radius, center)
    if gradient == "analytic":
        G = flow.gradient(X)
    else:
        G = _fd_gradient(flow.velocity, X, h_fd)
    P = flow.pressure(X)
    sig = mu * (G + np.swapaxes(G, -1, -2)) - P[:, None, None] * np.eye(3)
    t = np.einsum("nij,nj->ni", sig, n) * w[:, None]
    Y = X - (0 if center is None else np.asarray(center))
    force = t.sum(axis=0)
    torque = np.cross(t, Y).sum(axis=0)
    stress = np.einsum("ni,nj->ij", t, Y)
    return force, torque, stress


def traction_on_sphere(flow: FlowField, radius: float, quad: SurfaceQuadrature | None = None,
                       mu: float = 1.0, center=None, h_fd: float | None = None,
                       gradient: str = "fd", tol: float | None = None,
                       max_refinements: int = 3) -> TractionMoments:
    """Force, torque and stresslet of the traction of ``flow`` on a sphere.

    ``force = int sigma n``, ``torque = int (sigma n) x y``,
    ``stresslet = int (sigma n) (x) y`` with ``y`` measured from ``center``
    and ``sigma = mu (G + G^T) - P Id``.

    Parameters
    ----------
    flow : FlowField
        Must provide a pressure; the velocity must be the smooth exterior
        expression near the surface when ``gradient="fd"``.
    quad : SurfaceQuadrature, optional
        Defaults to the 32 x 64 product rule.
    h_fd : float, optional
        Finite-difference step, default ``1e-6 * radius``.
    gradient : {"fd", "analytic"}
        Velocity gradient by central differences or from ``flow.gradient``.
    tol : float, optional
        If given, the result is compared with a rule of twice the resolution
        (recursively, at most ``max_refinements`` times) until successive
        estimates agree within ``tol`` relative to the force-scale
        ``max(|force|, |stresslet|/radius)``.

    Raises
    ------
    QuadratureError
        If ``tol`` cannot be met.
    """
    if not flow.has_pressure:
        raise ValueError("traction requires a flow with pressure")
    if quad is None:
        quad = product_gauss()
    h_fd = 1e-6 * radius if h_fd is None else h_fd
    F, T, S = _moments(flow, radius, quad, center, h_fd, mu, gradient)
    if tol is None:
        return TractionMoments(F, T, S, quad.label)
    label = quad.label
    q2 = quad
    for _ in range(max_refinements):
        q2 = q2.refined()
        F2, T2, S2 = _moments(flow, radius, q2, center, h_fd, mu, gradient)
        scale = max(np.linalg.norm(F2), np.linalg.norm(S2) / radius, 1e-300)
        err = max(np.linalg.norm(F2 - F), np.linalg.norm(T2 - T) / radius,
                  np.linalg.norm(S2 - S) / radius) / scale
        F, T, S, label = F2, T2, S2, q2.label
        if err <= tol:
            return TractionMoments(F, T, S, label)
    raise QuadratureError(f"traction quadrature did not reach tol={tol:g} (last change {err:.3g})")


def swimmer_quadrature(sp: SwimmerParams, p, n_theta: int = 32, n_phi: int = 64) -> SurfaceQuadrature:
    """Surface rule adapted to the swimmer geometry.

    For well-separated images the product rule (polar axis along ``p``)
    suffices.  When ``beta`` is close to 1 both singularities approach the
    surface near ``a p``; a graded polar rule is returned instead.
    """
    gap = min(sp.beta - 1, 1 - 1 / sp.beta)
    if gap >= 0.25:
        return product_gauss(n_theta, n_phi, axis=p)
    return graded_polar(p, gap, n_per_panel=max(16, n_theta // 2), n_phi=max(16, n_phi // 2))


# --------------------------------------------------------------------------
# dipole expansion
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DipoleCoefficient:
    """Far-field dipole matrix ``C(p) = (alpha Jcal/mu) p p - Jprime Id``."""

    Cp: np.ndarray
    Jcal: float
    Jprime: float
    alpha: float
    mu: float = 1.0
    fitted_Jcal: float = float("nan")

    @property
    def trace_free(self):
        return self.Cp - np.trace(self.Cp) / 3 * np.eye(3)


@functools.lru_cache(maxsize=64)
def _calibrate_unit(beta: float, mu: float):
    """Fit the unit swimmer's far field as (4 pi/3) mu gradU(x) (c1 e3e3 - c0 Id).

    Returns (c1, c0, remainder_decay_exponent).
    """
    sp = SwimmerParams.unit(beta, FluidParams(mu))
    p = np.array([0.0, 0.0, 1.0])
    quad = product_gauss(4, 7)
    dirs = quad.nodes
    radii = np.array([200.0, 400.0, 800.0, 1600.0, 3200.0])
    est = []
    for R in radii:
        X = R * dirs
        v = elementary_velocity(X, p, sp)
        b1 = (4 * np.pi / 3) * mu * grad_U_apply(X, np.outer(p, p), FluidParams(mu))
        b0 = -(4 * np.pi / 3) * mu * grad_U_apply(X, np.eye(3), FluidParams(mu))
        A = np.column_stack([b1.ravel(), b0.ravel()])
        c, *_ = np.linalg.lstsq(A, v.ravel(), rcond=None)
        est.append(c)
    est = np.array(est)
    # remainder is O(R^-3) against an O(R^-2) model: c(R) = c_inf + O(1/R)
    inv = 1.0 / radii
    c_inf = np.array([np.polyfit(inv, est[:, k], 2)[-1] for k in range(2)])
    c1, c0 = c_inf
    # check the remainder decay along rays
    rr = np.geomspace(30.0, 3000.0, 8)
    worst = np.inf
    for d in dirs[:: max(1, len(dirs) // 6)]:
        X = rr[:, None] * d
        v = elementary_velocity(X, p, sp)
        model = (4 * np.pi / 3) * mu * grad_U_apply(X, c1 * np.outer(p, p) - c0 * np.eye(3),
                                                     FluidParams(mu))
        rem = np.linalg.norm(v - model, axis=1)
        if np.all(rem > 0):
            s, _, _ = loglog_slope(rr, rem)
            worst = min(worst, -s)
    return float(c1), float(c0), float(worst)


def calibrate_Jprime(sp: SwimmerParams):
    """Calibrated isotropic coefficient Jprime and the fitted Jcal for ``sp``.

    Returns
    -------
    Jprime, Jcal_fit, decay
        ``decay`` is the worst fitted decay rate of the far-field remainder.

    Raises
    ------
    CalibrationError
        If the remainder decays slower than ``|x|^-2.8``.
    """
    c1, c0, decay = _calibrate_unit(float(sp.beta), float(sp.mu))
    if not decay >= 2.8:
        raise CalibrationError(f"dipole remainder decays like |x|^-{decay:.3f}; expected 3")
    scale = sp.alpha * np.pi * sp.mu  # C(p) = (k_f/a^2) * unit coefficients
    Jprime = scale * c0
    Jcal_fit = scale * c1 * sp.mu / sp.alpha if sp.alpha != 0 else float("nan")
    return Jprime, Jcal_fit, decay


def dipole_decomposition(p, sp: SwimmerParams, lam: float | None = None,
                         N: int | None = None, calibrated: bool = True) -> DipoleCoefficient:
    """Dipole coefficient C(p) of the far field ``(lam/N) mu gradU(x) C(p)``.

    ``lam`` and ``N`` are only used to check ``a^3 = 3 lam/(4 pi N)``.
    With ``calibrated=False`` the analytic value ``Jprime = alpha Jcal/(3 mu)``
    is used instead of the far-field fit.
    """
    p = _as_unit(p)
    if lam is not None and N is not None:
        a_expected = radius_from_volume_fraction(lam, N)
        if not np.isclose(a_expected, sp.a, rtol=1e-12):
            raise DomainError(f"radius {sp.a} inconsistent with lam={lam}, N={N} (a={a_expected})")
    J = Jcal(sp.beta, sp.mu)
    if calibrated:
        Jp, Jfit, _ = calibrate_Jprime(sp)
    else:
        Jp, Jfit = sp.alpha * J / (3 * sp.mu), J
    Cp = sp.alpha * J / sp.mu * np.outer(p, p) - Jp * np.eye(3)
    return DipoleCoefficient(Cp=Cp, Jcal=J, Jprime=Jp, alpha=sp.alpha, mu=sp.mu, fitted_Jcal=Jfit)


def dipole_velocity(x, C, a, mu=1.0):
    """(lam/N) mu gradU(x) C with lam/N = (4/3) pi a^3."""
    return (4 * np.pi / 3) * a**3 * mu * grad_U_apply(x, C, FluidParams(mu))


def taylor_remainder(x, p, sp: SwimmerParams, lam: float | None = None, N: int | None = None,
                     dipole: DipoleCoefficient | None = None):
    """R[p](x) = v[p](x) - (lam/N) mu gradU(x) C(p)."""
    if dipole is None:
        dipole = dipole_decomposition(p, sp, lam, N)
    return elementary_velocity(x, p, sp) - dipole_velocity(x, dipole.Cp, sp.a, sp.mu)


# --------------------------------------------------------------------------
# passive strain solution
# --------------------------------------------------------------------------

def passive_strain_velocity(x, S, a):
    """Disturbance of a rigid ball in the linear strain ``S x``.

    ``w[S](x) = -5/2 (S:xx) a^3 x/|x|^5 - S x a^5/|x|^5 + 5/2 (S:xx) a^5 x/|x|^7``,
    which equals ``-S x`` on ``|x| = a``.
    """
    x = np.asarray(x, dtype=float)
    S = np.asarray(S, dtype=float)
    if not (np.allclose(S, S.T, atol=1e-12) and abs(np.trace(S)) < 1e-10 * (1 + np.abs(S).max())):
        raise DomainError("S must be symmetric and trace-free")
    r = np.linalg.norm(x, axis=-1)[..., None]
    if np.any(r < a * (1 - 1e-12)):
        raise DomainError("w[S] is defined for |x| >= a")
    sxx = np.einsum("ij,...i,...j->...", S, x, x)[..., None]
    Sx = x @ S.T
    return -2.5 * sxx * a**3 * x / r**5 - Sx * a**5 / r**5 + 2.5 * sxx * a**5 * x / r**7


def passive_strain_gradient(x, S, a):
    """Closed-form gradient of :func:`passive_strain_velocity`."""
    x = np.asarray(x, dtype=float)
    S = np.asarray(S, dtype=float)
    r = np.linalg.norm(x, axis=-1)[..., None, None]
    sxx = np.einsum("ij,...i,...j->...", S, x, x)[..., None, None]
    Sx = x @ S.T
    xi = x[..., :, None]
    xk = x[..., None, :]
    I = np.eye(3)
    dsxx = 2 * Sx[..., None, :]
    G1 = -2.5 * a**3 * (xi * dsxx / r**5 + sxx * I / r**5 - 5 * sxx * xi * xk / r**7)
    G2 = -a**5 * (S / r**5 - 5 * Sx[..., :, None] * xk / r**7)
    G3 = 2.5 * a**5 * (xi * dsxx / r**7 + sxx * I / r**7 - 7 * sxx * xi * xk / r**9)
    return G1 + G2 + G3
