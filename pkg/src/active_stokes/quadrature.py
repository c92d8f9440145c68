"""Quadrature rules on the unit sphere and the unit ball.

Sphere rules are products of Gauss-Legendre nodes in ``cos(theta)`` and a
uniform (trapezoidal) azimuthal grid.  The polar axis can be aligned with an
arbitrary direction, and a graded variant clusters nodes near the pole,
which is what is needed when singularities sit just inside or outside the
surface close to that pole.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .numerics import rotation_to


@dataclass(frozen=True)
class SurfaceQuadrature:
    """Quadrature on the unit sphere.

    Attributes
    ----------
    nodes : ndarray, shape (n, 3)
        Unit vectors.
    weights : ndarray, shape (n,)
        Sum to 4 pi.
    order : int
        Polynomial degree integrated exactly.
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int
    label: str = field(default="custom")
    recipe: tuple = field(default=(), compare=False)

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self):
        return self.weights.size

    def refined(self) -> "SurfaceQuadrature":
        """The same family of rule at twice the resolution in each direction."""
        if not self.recipe:
            raise ValueError("custom quadrature cannot be refined")
        kind, kw = self.recipe[0], dict(self.recipe[1])
        if kind == "product":
            kw["n_theta"] *= 2
            kw["n_phi"] *= 2
            return product_gauss(**kw)
        kw["n_per_panel"] *= 2
        kw["n_phi"] *= 2
        return graded_polar(**kw)

    def integrate(self, values):
        """Integrate samples taken at ``nodes`` (leading axis = node)."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))

    def on_sphere(self, radius, center=None):
        """Nodes, outward normals and area weights on a sphere of given radius."""
        c = np.zeros(3) if center is None else np.asarray(center, dtype=float)
        return c + radius * self.nodes, self.nodes, self.weights * radius**2


def _axis_key(axis):
    return None if axis is None else tuple(float(c) for c in np.asarray(axis).ravel())


def _rotate(nodes, axis):
    if axis is None:
        return nodes
    R = rotation_to(axis)
    return nodes @ R.T


def product_gauss(n_theta: int = 32, n_phi: int = 64, axis=None) -> SurfaceQuadrature:
    """Gauss-Legendre in cos(theta) times uniform azimuth.

    Exact for spherical polynomials of degree ``min(2 n_theta - 1, n_phi - 1)``.
    """
    t, w = leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    ct = np.repeat(t, n_phi)
    st = np.sqrt(1 - ct**2)
    ph = np.tile(phi, n_theta)
    nodes = np.column_stack([st * np.cos(ph), st * np.sin(ph), ct])
    weights = np.repeat(w, n_phi) * (2 * np.pi / n_phi)
    return SurfaceQuadrature(_rotate(nodes, axis), weights,
                             min(2 * n_theta - 1, n_phi - 1),
                             label=f"product_gauss({n_theta}x{n_phi})",
                             recipe=("product", (("n_theta", n_theta), ("n_phi", n_phi),
                                                 ("axis", _axis_key(axis)))))


def graded_polar(axis, gap: float, n_per_panel: int = 16, n_phi: int = 32,
                 ratio: float = 0.25) -> SurfaceQuadrature:
    """Polar-graded product rule for near-singular integrands.

    The polar angle is split into geometrically graded panels
    ``[0, t0], [t0, t0/ratio], ...`` up to ``pi``, with ``t0 ~ gap/4``,
    Gauss-Legendre (in theta, with the sin(theta) Jacobian) on each panel.
    Suitable when all singularities lie on the axis at a relative distance
    ``gap`` from the surface.  The declared order refers to the azimuthal
    resolution, which is the limiting factor for smooth data.
    """
    gap = max(float(gap), 1e-14)
    t0 = min(gap / 4, 0.25)
    edges = [0.0]
    t = t0
    while t < 0.5:
        edges.append(t)
        t /= ratio
    # uniform panels of width <= 0.5 on the rest of [0, pi]
    rest = np.linspace(edges[-1], np.pi, int(np.ceil((np.pi - edges[-1]) / 0.5)) + 1)
    edges = np.concatenate([edges, rest[1:]])
    x, w = leggauss(n_per_panel)
    th, wt = [], []
    for a0, b0 in zip(edges[:-1], edges[1:]):
        th.append(0.5 * (b0 - a0) * x + 0.5 * (a0 + b0))
        wt.append(0.5 * (b0 - a0) * w)
    th = np.concatenate(th)
    wt = np.concatenate(wt) * np.sin(th)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    ct = np.repeat(np.cos(th), n_phi)
    st = np.repeat(np.sin(th), n_phi)
    ph = np.tile(phi, th.size)
    nodes = np.column_stack([st * np.cos(ph), st * np.sin(ph), ct])
    weights = np.repeat(wt, n_phi) * (2 * np.pi / n_phi)
    return SurfaceQuadrature(_rotate(nodes, axis), weights, min(2 * n_per_panel - 1, n_phi - 1),
                             label=f"graded_polar(gap={gap:.3g},{th.size}x{n_phi})",
                             recipe=("graded", (("axis", _axis_key(axis)), ("gap", gap),
                                                ("n_per_panel", n_per_panel), ("n_phi", n_phi),
                                                ("ratio", ratio))))


@dataclass(frozen=True)
class BallQuadrature:
    """Tensor-product rule on the unit ball in spherical coordinates.

    Radial nodes are Gauss-Legendre on [0, 1] weighted by r^2, polar nodes are
    Gauss-Legendre in cos(theta), azimuthal nodes uniform.  ``n`` nodes per
    direction give ``n**3`` points; ``refine=True`` splits each of r, theta,
    phi in two (8 sub-cells).
    """

    n: int = 5
    refine: bool = False

    def rule(self):
        """Return (nodes (m, 3), weights (m,)) on the unit ball; weights sum to 4pi/3."""
        return _ball_rule(self.n, self.refine)


_BALL_CACHE: dict = {}


def _ball_rule(n, refine):
    key = (n, refine)
    if key in _BALL_CACHE:
        return _BALL_CACHE[key]
    x, w = leggauss(n)
    parts = 2 if refine else 1
    r_nodes, r_w, c_nodes, c_w, p_nodes, p_w = [], [], [], [], [], []
    for k in range(parts):
        lo, hi = k / parts, (k + 1) / parts
        r = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        r_nodes.append(r)
        r_w.append(0.5 * (hi - lo) * w * r**2)
        lo_c, hi_c = -1 + 2 * k / parts, -1 + 2 * (k + 1) / parts
        c_nodes.append(0.5 * (hi_c - lo_c) * x + 0.5 * (hi_c + lo_c))
        c_w.append(0.5 * (hi_c - lo_c) * w)
    r_nodes, r_w = np.concatenate(r_nodes), np.concatenate(r_w)
    c_nodes, c_w = np.concatenate(c_nodes), np.concatenate(c_w)
    n_phi = n * parts
    # offset azimuth by half a step so no node sits on phi = 0
    ph = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    R, C, P = np.meshgrid(r_nodes, c_nodes, ph, indexing="ij")
    WR, WC = np.meshgrid(r_w, c_w, indexing="ij")
    S = np.sqrt(1 - C**2)
    nodes = np.stack([R * S * np.cos(P), R * S * np.sin(P), R * C], axis=-1).reshape(-1, 3)
    weights = (WR[..., None] * WC[..., None] * (2 * np.pi / n_phi)
               * np.ones_like(P)).reshape(-1)
    _BALL_CACHE[key] = (nodes, weights)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights
