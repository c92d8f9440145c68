"""Discrete swimmer configurations and the sums built on them.

A configuration holds N centers and orientations of balls of radius
``a = (3 lam/(4 pi N))^(1/3)``.  Strict configurations satisfy the hard-core
separation ``min |x_i - x_j| >= c N^(-1/3)`` and the admissibility bound
``1 < beta < (c/2)(4 pi/3)^(1/3) lam^(-1/3)`` which keeps every point force
outside all particles.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import _nbody
from .density import Domain, OrientationDensity
from .errors import AdmissibilityError, DomainError, PackingError, SingularityError
from .flow import FlowField
from .quadrature import BallQuadrature
from .swimmer import SwimmerParams, radius_from_volume_fraction


def beta_max(sep_c, lam):
    """Upper admissibility bound (c/2)(4 pi/3)^(1/3) lam^(-1/3)."""
    return 0.5 * sep_c * (4 * np.pi / 3) ** (1 / 3) * lam ** (-1 / 3)


def check_admissible(beta, sep_c, lam):
    bmax = beta_max(sep_c, lam)
    if not (1 < beta < bmax):
        raise AdmissibilityError(
            f"beta={beta} violates 1 < beta < {bmax:.6g} for c={sep_c}, lambda={lam}")


@dataclass(frozen=True)
class SuspensionConfig:
    """An immutable particle configuration."""

    N: int
    lam: float
    centers: np.ndarray = field(repr=False)
    orientations: np.ndarray = field(repr=False)
    sep_c: float = 1.0
    beta: float = 2.0
    seed: int | None = None
    mode: str = "strict"
    domain: Domain = field(default_factory=Domain.unit_cube)

    def __post_init__(self):
        c = np.ascontiguousarray(self.centers, dtype=float)
        p = np.ascontiguousarray(self.orientations, dtype=float)
        if c.shape != (self.N, 3) or p.shape != (self.N, 3):
            raise DomainError("centers and orientations must both have shape (N, 3)")
        if not np.allclose(np.linalg.norm(p, axis=1), 1.0, atol=1e-12):
            raise DomainError("orientations must be unit vectors")
        if not (self.lam > 0):
            raise DomainError("volume fraction must be positive")
        c.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "orientations", p)

    @property
    def a(self):
        return radius_from_volume_fraction(self.lam, self.N)

    @property
    def force_points(self):
        """x_i + a beta p_i."""
        return self.centers + self.a * self.beta * self.orientations

    def swimmer(self, alpha=1.0, fluid=None) -> SwimmerParams:
        kw = {} if fluid is None else {"fluid": fluid}
        return SwimmerParams(alpha=alpha, beta=self.beta, a=self.a, **kw)

    def with_lambda(self, lam) -> "SuspensionConfig":
        """Same centers and orientations with a different volume fraction."""
        return SuspensionConfig(self.N, lam, self.centers, self.orientations, self.sep_c,
                                self.beta, self.seed, self.mode, self.domain)

    def transformed(self, R, shift=None) -> "SuspensionConfig":
        """Rigidly rotated (and shifted) copy; domain membership is not rechecked."""
        c = self.centers @ np.asarray(R).T
        if shift is not None:
            c = c + shift
        return SuspensionConfig(self.N, self.lam, c, self.orientations @ np.asarray(R).T,
                                self.sep_c, self.beta, self.seed, "relaxed", self.domain)

    # ---- snapshot -------------------------------------------------------
    def to_dict(self):
        return {
            "N": int(self.N), "lambda": float(self.lam), "a": float(self.a),
            "beta": float(self.beta), "sep_c": float(self.sep_c),
            "seed": None if self.seed is None else int(self.seed), "mode": self.mode,
            "domain": self.domain.to_dict(),
            "centers": self.centers.tolist(), "orientations": self.orientations.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(N=int(d["N"]), lam=float(d["lambda"]), centers=np.array(d["centers"], float),
                   orientations=np.array(d["orientations"], float), sep_c=float(d["sep_c"]),
                   beta=float(d["beta"]), seed=d.get("seed"), mode=d.get("mode", "strict"),
                   domain=Domain(**d["domain"]) if "domain" in d else Domain.unit_cube())

    def save(self, path):
        """Write a JSON snapshot; floats use shortest round-trip repr."""
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _dart_throw(draw, N, dmin, max_attempts, domain):
    """Sequential random addition with a hard-core distance, using a cell hash."""
    cell = dmin if dmin > 0 else 1.0
    grid: dict = {}
    pts = np.empty((N, 3))
    n = 0
    attempts = 0
    d2 = dmin * dmin
    buf = np.empty((0, 3))
    k = 0
    while n < N:
        if attempts >= max_attempts:
            raise PackingError(
                f"placed {n} of {N} particles after {attempts} attempts; "
                f"separation {dmin:.4g} is too large for this density")
        if k >= buf.shape[0]:
            buf = draw(max(256, N - n))
            k = 0
        x = buf[k]
        k += 1
        attempts += 1
        key = (int(np.floor(x[0] / cell)), int(np.floor(x[1] / cell)), int(np.floor(x[2] / cell)))
        ok = True
        if dmin > 0:
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dz in (-1, 0, 1):
                        for m in grid.get((key[0] + dx, key[1] + dy, key[2] + dz), ()):
                            y = pts[m]
                            if (x[0] - y[0]) ** 2 + (x[1] - y[1]) ** 2 + (x[2] - y[2]) ** 2 < d2:
                                ok = False
                                break
                        if not ok:
                            break
                    if not ok:
                        break
        if ok:
            pts[n] = x
            grid.setdefault(key, []).append(n)
            n += 1
    return pts, attempts


def sample_configuration(density: OrientationDensity, N: int, lam: float, sep_c: float,
                         beta: float, seed: int, mode: str = "strict",
                         max_attempts_factor: int = 200) -> SuspensionConfig:
    """Sample a configuration from ``density``.

    Centers are drawn from rho (rejection sampling); in ``strict`` mode a
    candidate is kept only if it lies at least ``sep_c N^(-1/3)`` from every
    accepted center (dart throwing), and ``beta`` must be admissible.  In
    ``relaxed`` mode centers are i.i.d.  Orientations are drawn from
    ``g(. | x_i)``.  Positions and orientations use independent streams
    spawned from ``seed``.

    Raises
    ------
    AdmissibilityError
        strict mode with inadmissible beta.
    PackingError
        more than ``max_attempts_factor * N`` candidates were needed.
    """
    if mode not in ("strict", "relaxed"):
        raise ValueError("mode must be 'strict' or 'relaxed'")
    if N < 1:
        raise DomainError("N must be positive")
    if mode == "strict":
        check_admissible(beta, sep_c, lam)
    ss_pos, ss_ori = np.random.SeedSequence(seed).spawn(2)
    rng_pos = np.random.default_rng(ss_pos)
    rng_ori = np.random.default_rng(ss_ori)
    if mode == "strict":
        dmin = sep_c * N ** (-1.0 / 3.0)
        centers, _ = _dart_throw(lambda m: density.sample_positions(m, rng_pos), N, dmin,
                                 max_attempts_factor * N, density.domain)
    else:
        centers = density.sample_positions(N, rng_pos)
    orient = density.sample_orientations(centers, rng_ori)
    return SuspensionConfig(N, lam, centers, orient, sep_c, beta, seed, mode, density.domain)


# --------------------------------------------------------------------------
# separation diagnostics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SeparationReport:
    min_gap: float
    eta: float
    good_indices: np.ndarray = field(repr=False)
    bad_indices: np.ndarray = field(repr=False)
    bad_fraction: float
    H2_ok: bool
    H2prime_ok: bool
    M_margin: float


def pair_distances_below(centers, r):
    """Index pairs (i < j) with |x_i - x_j| < r (cKDTree)."""
    tree = cKDTree(centers)
    return tree.query_pairs(r, output_type="ndarray")


def min_pair_distance(centers):
    if len(centers) < 2:
        return float("inf")
    d, _ = cKDTree(centers).query(centers, k=2)
    return float(d[:, 1].min())


def separation_report(cfg: SuspensionConfig, eta: float) -> SeparationReport:
    """Good/bad index partition for threshold ``eta N^(-1/3)``.

    ``i`` is good iff every other center is at distance ``>= eta N^(-1/3)``.
    ``H2_ok`` checks ``min gap >= c N^(-1/3)``; ``H2prime_ok`` checks
    ``min gap >= M a`` for some ``M > 2 beta`` and ``M_margin = min_gap/a - 2 beta``.
    """
    N = cfg.N
    thr = eta * N ** (-1.0 / 3.0)
    bad = np.zeros(N, dtype=bool)
    if N > 1:
        pairs = pair_distances_below(cfg.centers, thr)
        # query_pairs uses <= r; the good set requires >= thr, so only strict < is bad
        if len(pairs):
            d = np.linalg.norm(cfg.centers[pairs[:, 0]] - cfg.centers[pairs[:, 1]], axis=1)
            pairs = pairs[d < thr]
            bad[pairs[:, 0]] = True
            bad[pairs[:, 1]] = True
    gap = min_pair_distance(cfg.centers)
    margin = gap / cfg.a - 2 * cfg.beta
    return SeparationReport(
        min_gap=gap, eta=eta,
        good_indices=np.flatnonzero(~bad), bad_indices=np.flatnonzero(bad),
        bad_fraction=float(bad.mean()),
        H2_ok=bool(gap >= cfg.sep_c * N ** (-1.0 / 3.0) * (1 - 1e-12)),
        H2prime_ok=bool(margin > 0), M_margin=float(margin))


def bad_fraction_curve(cfg: SuspensionConfig, etas, alpha_sep: float = 1.0):
    """Rows (eta, bad_fraction, bad_fraction / eta**alpha_sep)."""
    rows = []
    for eta in etas:
        bf = separation_report(cfg, eta).bad_fraction
        rows.append((float(eta), bf, bf / eta**alpha_sep))
    return np.array(rows)


def rescaled_interaction_sums(centers, shift: float, subset=None, include_self: bool = False):
    """S_i = sum_j (shift + |y_i - y_j|)^(-4) with y = x N^(1/3), for i, j in ``subset``.

    Exact O(n^2) evaluation (compiled).  Returns the array of S_i.
    """
    x = np.asarray(centers, dtype=float)
    N = x.shape[0]
    idx = np.arange(N) if subset is None else np.asarray(subset)
    y = np.ascontiguousarray(x[idx] * N ** (1.0 / 3.0))
    return _nbody.shifted_inverse_quartic_sums(y, float(shift), bool(include_self))


def interaction_sum_diagnostics(cfg: SuspensionConfig, eta: float, M: float | None = None):
    """Scale-free interaction diagnostics for the good set.

    Returns a dict with

    - ``good_sup``: ``eta^4 sup_{i in G} sum_{j in G, j != i} (eta + |y_i - y_j|)^-4``
    - ``all_sup``: ``lam^(4/3) sup_i sum_{j != i} (Mt lam^(1/3) + |y_i - y_j|)^-4``
      with ``Mt = M (3/(4 pi))^(1/3)`` and ``M`` defaulting to the
      configuration's ``min_gap / a``.
    """
    rep = separation_report(cfg, eta)
    out = {"eta": eta, "n_good": int(rep.good_indices.size), "N": cfg.N}
    if rep.good_indices.size > 1:
        s = rescaled_interaction_sums(cfg.centers, eta, rep.good_indices)
        out["good_sup"] = float(eta**4 * s.max())
    else:
        out["good_sup"] = 0.0
    if M is None:
        M = rep.min_gap / cfg.a
    Mt = M * (3 / (4 * np.pi)) ** (1 / 3)
    s = rescaled_interaction_sums(cfg.centers, Mt * cfg.lam ** (1 / 3))
    out["all_sup"] = float(cfg.lam ** (4 / 3) * s.max())
    out["M"] = float(M)
    return out


# --------------------------------------------------------------------------
# method-of-reflections field
# --------------------------------------------------------------------------

def _soa(cfg):
    c = cfg.centers
    p = cfg.orientations
    return (np.ascontiguousarray(c[:, 0]), np.ascontiguousarray(c[:, 1]), np.ascontiguousarray(c[:, 2]),
            np.ascontiguousarray(p[:, 0]), np.ascontiguousarray(p[:, 1]), np.ascontiguousarray(p[:, 2]))


def u_app_evaluate(cfg: SuspensionConfig, sp: SwimmerParams, points, sing_tol: float | None = None):
    """u_N^app(x) = sum_i v[p_i](x - x_i) by direct summation.

    ``sp`` supplies alpha, beta and viscosity; its radius must match the
    configuration.

    Raises
    ------
    SingularityError
        If a point is within ``sing_tol`` (default ``1e-12 a``) of a force or
        image point; the message names the particle.
    """
    if not np.isclose(sp.a, cfg.a, rtol=1e-12):
        raise DomainError(f"swimmer radius {sp.a} does not match configuration radius {cfg.a}")
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    tol = 1e-12 * cfg.a if sing_tol is None else sing_tol
    bad = np.full(pts.shape[0], -1, dtype=np.int64)
    out = _nbody.uapp_velocity(pts, *_soa(cfg), sp.a, sp.beta, sp.kf, sp.mu, tol, bad)
    if np.any(bad >= 0):
        m = int(np.flatnonzero(bad >= 0)[0])
        raise SingularityError(f"evaluation point {m} hits a singular point of particle {int(bad[m])}")
    return out[0] if np.asarray(points).ndim == 1 else out


def u_app_gradient(cfg: SuspensionConfig, sp: SwimmerParams, points, skip=None):
    """Velocity gradient of u_N^app (optionally skipping one particle per point)."""
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    sk = np.full(pts.shape[0], -1, dtype=np.int64) if skip is None else np.asarray(skip, np.int64)
    G = _nbody.velocity_gradient_sum(pts, *_soa(cfg), sp.a, sp.beta, sp.kf, sp.mu, sk)
    return G.reshape(-1, 3, 3)


def u_app_flow(cfg: SuspensionConfig, sp: SwimmerParams) -> FlowField:
    return FlowField(lambda x: u_app_evaluate(cfg, sp, x),
                     gradient=lambda x: u_app_gradient(cfg, sp, x), label="u_app")


# --------------------------------------------------------------------------
# boundary-error functional
# --------------------------------------------------------------------------

def boundary_error_terms(cfg: SuspensionConfig, sp: SwimmerParams,
                         ball_quad: BallQuadrature = BallQuadrature(),
                         refine_factor: float | None = 4.0, frame=None):
    """Per-particle integrals int_{B_i} |D(h_i)|^2, h_i = sum_{j != i} v[p_j](. - x_j).

    Particles whose nearest neighbor is closer than ``refine_factor * a``
    use the 8-fold subdivided rule.  ``frame`` (a rotation matrix) rotates
    the reference ball rule, so that rotating a configuration together with
    its frame leaves every term unchanged up to round-off.
    """
    if not np.isclose(sp.a, cfg.a, rtol=1e-12):
        raise DomainError(f"swimmer radius {sp.a} does not match configuration radius {cfg.a}")
    if cfg.N == 1:
        return np.zeros(1)
    nodes, w = ball_quad.rule()
    fnodes, fw = BallQuadrature(ball_quad.n, True).rule()
    if frame is not None:
        R = np.asarray(frame, dtype=float)
        nodes, fnodes = nodes @ R.T, fnodes @ R.T
    if refine_factor is None:
        refine = np.zeros(cfg.N, dtype=np.bool_)
    else:
        d, _ = cKDTree(cfg.centers).query(cfg.centers, k=2)
        refine = d[:, 1] < refine_factor * cfg.a
    return _nbody.boundary_error_terms(*_soa(cfg), sp.a, sp.beta, sp.kf, sp.mu,
                                       np.ascontiguousarray(nodes), np.ascontiguousarray(w),
                                       np.ascontiguousarray(fnodes), np.ascontiguousarray(fw),
                                       refine)


def boundary_error_functional(cfg: SuspensionConfig, sp: SwimmerParams,
                              ball_quad: BallQuadrature = BallQuadrature(),
                              refine_factor: float | None = 4.0, frame=None) -> float:
    """sum_i int_{B_i} |D(h_i)|^2 dx (see :func:`boundary_error_terms`)."""
    return float(np.sum(boundary_error_terms(cfg, sp, ball_quad, refine_factor, frame)))
