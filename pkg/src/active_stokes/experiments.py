"""Reproducible experiment families and the runner behind the command line.

Each family turns a parameter block into a CSV table plus a list of named
checks (measured value, tolerance, pass/fail).  :func:`run_all` executes a
list of :class:`ExperimentSpec` (sequentially by default), writes ``<name>.csv`` and
``<name>.meta.yaml`` per experiment and aggregates the exit status: 0 iff
every check of every experiment passed.

What is measured
----------------
The runner measures only quantities computable without resolving the
N-sphere boundary-value problem: closed-form identities of the single
swimmer, the lambda^3 boundary-error functional, qualitative N-convergence
of the method-of-reflections field toward the effective flow, energy-sign
structure, the stationary orientation density and separation diagnostics.
The lambda^(5/3) remainder of the effective model and its o(lambda)
closeness are not measurable this way and are not asserted.
"""
from __future__ import annotations

import copy
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .density import OrientationDensity
from .effective import (VolumeGrid, active_stress, energy_dissipation, linear_flow, solve_w0)
from .errors import ActiveStokesError, AdmissibilityError, DomainError
from .fokker_planck import (anisotropy_condition, dirac_top_eigenvector, finite_volume_stationary,
                            galerkin_mass_drift, linear_response_coefficient,
                            stationary_orientation_density, top_eigenvector)
from .io import content_hash, to_builtin, write_csv, write_metadata
from .kernels import FluidParams, grad_U_apply
from .numerics import loglog_slope, random_traceless_symmetric, random_unit_vectors
from .quadrature import BallQuadrature, product_gauss
from .suspension import (beta_max, boundary_error_functional, interaction_sum_diagnostics, sample_configuration,
                         separation_report, u_app_evaluate)
from .swimmer import (SwimmerParams, dipole_decomposition, elementary_flow, elementary_velocity,
                      stresslet_coefficient, swimmer_quadrature, taylor_remainder, traction_on_sphere,
                      translation_flow)

FAMILIES = ("identity_checks", "dipole_remainder", "uapp_convergence", "boundary_error_scaling",
            "energy_signs", "fp_stationary", "separation_diagnostics")

RATE_NOTE = ("Only the lambda^3 boundary-error functional and qualitative N-convergence are "
             "measured; the lambda^(5/3) remainder and o(lambda) closeness of the effective "
             "model require the microscopic boundary solve and are not asserted.")

#: default parameter blocks, seeds and tolerances per family
DEFAULTS = {
    "identity_checks": dict(
        params=dict(betas=[1.5, 2.0, 4.0, 1.0001], radii=[0.5, 1.0], alpha=1.0, mu=1.0,
                    n_points=1000, n_surface=200),
        seeds=[0],
        tolerances=dict(force=1e-6, torque=1e-8, stresslet=1e-6, v2_stresslet=1e-8,
                        scaling=1e-12, no_slip=1e-8)),
    "dipole_remainder": dict(
        params=dict(beta=2.0, alpha=1.0, mu=1.0, a_list=[1e-3, 3e-3, 1e-2, 3e-2, 1e-1],
                    x_norm=1.0, n_rays=10, r_list=[20.0, 50.0, 100.0, 200.0, 500.0, 1000.0],
                    a_decay=1.0),
        seeds=[0],
        tolerances=dict(slope_a=0.1, decay=0.1)),
    "uapp_convergence": dict(
        params=dict(lam=0.01, N_list=[125, 1000, 8000], densities=["uniform", "dirac_aligned"],
                    beta=2.0, sep_c=0.6, alpha=1.0, shell=[1.0, 1.5], shell_radial=3,
                    shell_angular=[8, 16], interior_half_width=0.3, interior_points=4,
                    far_radius=8.0, w0_grid=16),
        seeds=list(range(10)),
        tolerances=dict(far_field=0.05)),
    "boundary_error_scaling": dict(
        params=dict(N=4096, lams=[1e-3, 3e-3, 1e-2, 3e-2, 1e-1], sep_c=0.85, beta=1.3,
                    alpha=1.0, ball_n=3, ball_refine=False, density="uniform"),
        seeds=list(range(5)),
        tolerances=dict(slope_target=3.0, slope=0.3)),
    "energy_signs": dict(
        params=dict(rate=1.0, lam=0.01, beta=2.0, alpha_abs=1.0, grid=24),
        seeds=[0],
        tolerances=dict(hemisphere_zero=1e-6)),
    "fp_stationary": dict(
        params=dict(Dr=1.0, weak_ratio=0.01, L=8, fv_grid=[128, 256], n_random=10,
                    xi_nonlinear=1.0, kappa=6.0),
        seeds=[0],
        tolerances=dict(linear_response=0.01, anisotropy=1e-13, mass=1e-13, hemisphere=1e-12)),
    "separation_diagnostics": dict(
        params=dict(N_list=[1000, 10000], lam=0.01, beta=2.0, sep_c=0.8, etas=[0.25, 0.5, 0.75],
                    alpha_sep=1.0),
        seeds=[0],
        tolerances=dict(stability_ratio=2.0)),
}

# families whose parameter block describes strict configurations: (lam keys, c key, beta key)
_ADMISSIBILITY = {
    "uapp_convergence": ("lam", "sep_c", "beta"),
    "boundary_error_scaling": ("lams", "sep_c", "beta"),
    "separation_diagnostics": ("lam", "sep_c", "beta"),
}


# --------------------------------------------------------------------------
# spec and report types
# --------------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    """One experiment: family id, parameter block, seeds, tolerances and output name."""

    id: str
    params: dict = field(default_factory=dict)
    seeds: list | None = None
    tolerances: dict = field(default_factory=dict)
    output: str | None = None
    strict: bool = True

    def __post_init__(self):
        if self.id not in FAMILIES:
            raise DomainError(f"unknown experiment id {self.id!r}; expected one of {FAMILIES}")

    @property
    def name(self):
        return self.output or self.id

    def resolved(self, tolerance_scale: float = 1.0, seed: int | None = None) -> "ExperimentSpec":
        """Defaults merged with the given values; tolerances scaled; seeds offset."""
        d = copy.deepcopy(DEFAULTS[self.id])
        params = {**d["params"], **(self.params or {})}
        seeds = list(d["seeds"] if self.seeds is None else self.seeds)
        if seed is not None:
            seeds = [int(seed) + k for k in range(len(seeds))]
        tols = {**d["tolerances"], **(self.tolerances or {})}
        tols = {k: (v * tolerance_scale if not k.endswith("_target") else v) for k, v in tols.items()}
        return ExperimentSpec(self.id, params, seeds, tols, self.output, self.strict)

    def validate(self):
        """Admissibility 1 < beta < (c/2)(4 pi/3)^(1/3) lambda^(-1/3) for strict families."""
        if not self.strict or self.id not in _ADMISSIBILITY:
            return
        lk, ck, bk = _ADMISSIBILITY[self.id]
        lams = np.atleast_1d(self.params[lk])
        lam = float(np.max(lams))
        bmax = beta_max(self.params[ck], lam)
        if not (1 < self.params[bk] < bmax):
            raise AdmissibilityError(
                f"{self.id}: beta={self.params[bk]} violates 1 < beta < {bmax:.6g} "
                f"(c={self.params[ck]}, lambda={lam})")

    def to_dict(self):
        d = {"id": self.id, "params": to_builtin(self.params), "tolerances": to_builtin(self.tolerances)}
        if self.seeds is not None:
            d["seeds"] = [int(s) for s in self.seeds]
        if self.output:
            d["output"] = self.output
        if not self.strict:
            d["strict"] = False
        return d

    @classmethod
    def from_dict(cls, d):
        if "id" not in d:
            raise DomainError("experiment entry needs an 'id'")
        return cls(id=d["id"], params=dict(d.get("params") or {}), seeds=d.get("seeds"),
                   tolerances=dict(d.get("tolerances") or {}), output=d.get("output"),
                   strict=bool(d.get("strict", True)))


@dataclass
class Check:
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    columns: list
    rows: list
    checks: list
    column_doc: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    error: str | None = None
    runtime: float = 0.0
    csv_sha1: str | None = None

    @property
    def passed(self):
        return self.error is None and all(c.passed for c in self.checks)

    def check(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _le(name, value, tol, detail=""):
    value = float(value)
    return Check(name, value, float(tol), bool(np.isfinite(value) and abs(value) <= tol), detail)


# --------------------------------------------------------------------------
# identity_checks
# --------------------------------------------------------------------------

def _family_identity_checks(P, seeds, tol):
    rng = np.random.default_rng(seeds[0])
    fluid = FluidParams(P["mu"])
    rows, checks = [], []
    worst = {k: 0.0 for k in ("force", "torque", "stresslet", "v2_stresslet", "scaling", "no_slip")}
    where = {}

    def note(kind, err, label):
        rows.append([kind, label, float(err), float(tol[kind]), bool(err <= tol[kind])])
        if not err <= worst[kind]:
            worst[kind] = float(err)
            where[kind] = label

    for beta in P["betas"]:
        p = random_unit_vectors(1, rng)[0]
        for a in P["radii"]:
            sp = SwimmerParams(P["alpha"], beta, a, fluid)
            label = f"beta={beta!r},a={a!r}"
            m = traction_on_sphere(elementary_flow(p, sp, exterior_formula=True), a,
                                   swimmer_quadrature(sp, p), mu=sp.mu)
            note("force", np.linalg.norm(m.force + sp.kf * p) / abs(sp.kf), label)
            note("torque", np.linalg.norm(m.torque) / abs(sp.kf), label)
            m2 = traction_on_sphere(translation_flow(p, sp), a, swimmer_quadrature(sp, p), mu=sp.mu)
            note("v2_stresslet", np.abs(m2.stresslet).max() / (abs(sp.kf) * a), label)
            n = random_unit_vectors(P["n_surface"], rng)
            v = elementary_velocity(a * n * (1 + 1e-14), p, sp, exterior_formula=True)
            note("no_slip", np.abs(v - sp.translation_speed * p).max() / (abs(sp.kf) / (sp.mu * a)), label)
            # scaling law v[p](a x; a) = (k_f / a) w[p](x; 1)
            su = SwimmerParams.unit(beta, fluid)
            x = rng.uniform(-4, 4, (P["n_points"], 3))
            lhs = elementary_velocity(a * x, p, sp)
            rhs = sp.kf / a * elementary_velocity(x, p, su)
            note("scaling", np.max(np.linalg.norm(lhs - rhs, axis=1) / np.linalg.norm(rhs, axis=1)), label)
        su = SwimmerParams.unit(beta, fluid)
        m = traction_on_sphere(elementary_flow(p, su, exterior_formula=True), 1.0,
                               swimmer_quadrature(su, p), mu=su.mu)
        c = stresslet_coefficient(beta)
        target = c * (np.outer(p, p) - np.eye(3) / 3)
        note("stresslet", np.linalg.norm(m.stresslet_deviatoric - target) / abs(c), f"beta={beta!r}")
    for k in worst:
        checks.append(_le(k, worst[k], tol[k], where.get(k, "")))
    cols = ["identity", "case", "error", "tol", "passed"]
    doc = {"identity": "force | torque | stresslet | v2_stresslet | no_slip | scaling",
           "error": "relative error (force/torque scaled by k_f, stresslet by its coefficient)"}
    return cols, rows, checks, doc, {}


# --------------------------------------------------------------------------
# dipole_remainder
# --------------------------------------------------------------------------

def _family_dipole_remainder(P, seeds, tol):
    rng = np.random.default_rng(seeds[0])
    fluid = FluidParams(P["mu"])
    p = random_unit_vectors(1, rng)[0]
    dirs = random_unit_vectors(P["n_rays"], rng)
    rows = []
    a_list = np.asarray(P["a_list"], float)
    slopes = []
    for k, d in enumerate(dirs):
        x = P["x_norm"] * d
        R = []
        for a in a_list:
            sp = SwimmerParams(P["alpha"], P["beta"], a, fluid)
            dip = dipole_decomposition(p, sp)
            R.append(np.linalg.norm(taylor_remainder(x, p, sp, dipole=dip)))
            rows.append(["a_sweep", k, float(a), float(P["x_norm"]), float(R[-1])])
        slopes.append(loglog_slope(a_list, R)[0])
    sp = SwimmerParams(P["alpha"], P["beta"], P["a_decay"], fluid)
    dip = dipole_decomposition(p, sp)
    r_list = np.asarray(P["r_list"], float)
    decays = []
    for k, d in enumerate(dirs):
        R = np.linalg.norm(taylor_remainder(r_list[:, None] * d, p, sp, dipole=dip), axis=1)
        for r, v in zip(r_list, R):
            rows.append(["r_sweep", k, float(sp.a), float(r), float(v)])
        decays.append(loglog_slope(r_list, R)[0])
    slopes, decays = np.array(slopes), np.array(decays)
    checks = [
        _le("slope_a", np.max(np.abs(slopes - 4.0)), tol["slope_a"],
            f"slopes in a: min {slopes.min():.4f}, max {slopes.max():.4f} (target 4)"),
        _le("decay", np.max(np.abs(decays + 3.0)), tol["decay"],
            f"decay exponents: min {decays.min():.4f}, max {decays.max():.4f} (target -3)"),
    ]
    cols = ["sweep", "ray", "a", "r", "remainder_norm"]
    doc = {"remainder_norm": "|v[p](x) - (lam/N) mu gradU(x) C(p)|"}
    meta = {"Jprime": dip.Jprime, "Jcal": dip.Jcal, "fitted_Jcal": dip.fitted_Jcal,
            "slopes_a": slopes, "decay_exponents": decays}
    return cols, rows, checks, doc, meta


# --------------------------------------------------------------------------
# uapp_convergence
# --------------------------------------------------------------------------

def _density(name, **kw):
    if name == "uniform":
        return OrientationDensity.uniform()
    if name == "dirac_aligned":
        return OrientationDensity.dirac_aligned(kw.get("p0", (0.0, 0.0, 1.0)))
    if name == "axisymmetric_smooth":
        return OrientationDensity.axisymmetric_smooth(kw.get("p0", (0.0, 0.0, 1.0)), kw.get("kappa", 2.0))
    raise DomainError(f"unsupported density {name!r}")


def _sub_seed(seed, *keys):
    return int(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(1)[0])


def shell_rule(r_in, r_out, n_radial=3, n_theta=8, n_phi=16):
    """Points and weights of a tensor rule on the shell r_in <= |x| <= r_out."""
    t, w = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * (r_out - r_in) * t + 0.5 * (r_out + r_in)
    wr = 0.5 * (r_out - r_in) * w * r**2
    q = product_gauss(n_theta, n_phi)
    X = (r[:, None, None] * q.nodes[None]).reshape(-1, 3)
    W = (wr[:, None] * q.weights[None]).ravel()
    return X, W


def jitter_away(points, sources, min_dist, rng, stencil=None, max_iter=100):
    """Move points (with their stencil) until every stencil point is >= min_dist from all sources."""
    from scipy.spatial import cKDTree
    pts = np.array(points, dtype=float)
    st = np.zeros((1, 3)) if stencil is None else np.asarray(stencil)
    tree = cKDTree(sources)
    for _ in range(max_iter):
        d, _ = tree.query((pts[:, None, :] + st[None]).reshape(-1, 3))
        bad = (d.reshape(pts.shape[0], -1) < min_dist).any(axis=1)
        if not bad.any():
            return pts
        pts[bad] += rng.uniform(-1, 1, (int(bad.sum()), 3)) * min_dist
    raise DomainError("could not move evaluation points away from the sources")


def _family_uapp_convergence(P, seeds, tol):
    lam = P["lam"]
    Xs, Ws = shell_rule(*P["shell"], P["shell_radial"], *P["shell_angular"])
    farq = product_gauss(4, 8)
    Xf = P["far_radius"] * farq.nodes
    g1 = np.linspace(-P["interior_half_width"], P["interior_half_width"], P["interior_points"])
    Xi = np.stack(np.meshgrid(g1, g1, g1, indexing="ij"), -1).reshape(-1, 3)
    rows, checks, meta = [], [], {"far_field_error": {}, "median_shell_distance": {}}
    ball_nodes, ball_w = BallQuadrature(3).rule()
    ball_w = ball_w / ball_w.sum()
    for dname in P["densities"]:
        dens = _density(dname)
        sp0 = SwimmerParams(P["alpha"], P["beta"], 1.0)
        stress = active_stress(dens, sp0)
        grid = VolumeGrid.for_domain(dens.domain, P["w0_grid"])
        w0 = solve_w0(stress, lam, grid=grid)
        w0_shell = w0(Xs)
        pred_far = lam * dens.domain.volume * grad_U_apply(Xf, stress(np.zeros(3)), FluidParams(sp0.mu))
        med = []
        for N in P["N_list"]:
            dist, mol = [], []
            for s in seeds:
                cfg = sample_configuration(dens, N, lam, P["sep_c"], P["beta"], _sub_seed(s, N),
                                           mode="strict")
                sp = cfg.swimmer(P["alpha"])
                u = u_app_evaluate(cfg, sp, Xs)
                d = float(np.sqrt(np.sum(Ws * np.sum((u - w0_shell) ** 2, axis=1))))
                st = cfg.a * ball_nodes
                rng = np.random.default_rng(_sub_seed(s, N, 7))
                Xj = jitter_away(Xi, cfg.force_points, cfg.a / 10, rng, stencil=st)
                pts = (Xj[:, None, :] + st[None]).reshape(-1, 3)
                um = np.einsum("q,pqi->pi", ball_w, u_app_evaluate(cfg, sp, pts).reshape(len(Xj), -1, 3))
                wm = np.einsum("q,pqi->pi", ball_w, w0(pts).reshape(len(Xj), -1, 3))
                dm = float(np.sqrt(np.mean(np.sum((um - wm) ** 2, axis=1)) * (2 * P["interior_half_width"]) ** 3))
                far = np.nan
                if not stress.is_zero:
                    uf = u_app_evaluate(cfg, sp, Xf)
                    far = float(np.linalg.norm(uf - pred_far) / np.linalg.norm(pred_far))
                    if N == max(P["N_list"]):
                        meta["far_field_error"].setdefault(dname, []).append(far)
                rows.append([dname, N, int(s), d, dm, far])
                dist.append(d)
                mol.append(dm)
            med.append(float(np.median(dist)))
        meta["median_shell_distance"][dname] = med
        dec = all(med[k + 1] < med[k] for k in range(len(med) - 1))
        checks.append(Check(f"monotone_{dname}", float(dec), 1.0, dec,
                            "median exterior-shell L2 distances: " + ", ".join(f"{m:.4g}" for m in med)))
        if dname in meta["far_field_error"]:
            fe = float(np.median(meta["far_field_error"][dname]))
            checks.append(_le(f"far_field_{dname}", fe, tol["far_field"],
                              f"median relative far-field gap at N={max(P['N_list'])}, |x|={P['far_radius']}"))
    cols = ["density", "N", "seed", "shell_l2", "interior_mollified_l2", "far_field_rel_error"]
    doc = {"shell_l2": "L2 distance |u_N^app - w0| over the exterior shell",
           "interior_mollified_l2": "L2 distance of ball-averaged (radius a) fields on an interior grid",
           "far_field_rel_error": "relative gap to lam |O| gradU(x) sigma_1 at the far radius (nan if sigma_1 = 0)"}
    return cols, rows, checks, doc, meta


# --------------------------------------------------------------------------
# boundary_error_scaling
# --------------------------------------------------------------------------

def boundary_error_sweep(P, seeds):
    """Functional values (seeds x lams) and the per-seed configurations' minimum gaps."""
    dens = _density(P["density"])
    lams = np.asarray(P["lams"], float)
    lam_ref = float(lams.max())
    bq = BallQuadrature(P["ball_n"], P["ball_refine"])
    vals = np.empty((len(seeds), len(lams)))
    for i, s in enumerate(seeds):
        cfg = sample_configuration(dens, P["N"], lam_ref, P["sep_c"], P["beta"], _sub_seed(s, P["N"]))
        for j, lam in enumerate(lams):
            c = cfg.with_lambda(float(lam))
            vals[i, j] = boundary_error_functional(c, c.swimmer(P["alpha"]), bq, None)
    return lams, vals


def _family_boundary_error_scaling(P, seeds, tol):
    lams, vals = boundary_error_sweep(P, seeds)
    med = np.median(vals, axis=0)
    slope, icpt, res = loglog_slope(lams, med)
    rows = [[int(s), float(l), float(v)] for s, row in zip(seeds, vals) for l, v in zip(lams, row)]
    local = np.diff(np.log(med)) / np.diff(np.log(lams))
    checks = [_le("slope", slope - tol["slope_target"], tol["slope"],
                  f"fitted slope {slope:.4f}; local slopes " + ", ".join(f"{x:.3f}" for x in local))]
    meta = {"slope": slope, "log_constant": icpt, "log_residuals": res, "median": med,
            "local_slopes": local}
    cols = ["seed", "lam", "functional"]
    doc = {"functional": "sum_i int_{B_i} |D(h_i)|^2 with h_i the field of all other swimmers"}
    return cols, rows, checks, doc, meta


# --------------------------------------------------------------------------
# energy_signs
# --------------------------------------------------------------------------

def _family_energy_signs(P, seeds, tol):
    r = P["rate"]
    G = r * np.diag([-0.5, -0.5, 1.0])
    flow = linear_flow(G, "extensional")
    _, ptop = top_eigenvector(G)
    grid = VolumeGrid(P["grid"])
    rows, checks = [], []
    for kind, alpha in (("pusher", -P["alpha_abs"]), ("puller", P["alpha_abs"])):
        sp = SwimmerParams(alpha, P["beta"], 1.0)
        e = energy_dissipation(flow, OrientationDensity.dirac_aligned(ptop), sp, P["lam"], grid)
        rows.append([kind, "dirac_top_eigenvector", alpha, e.viscous, e.active])
        ok = e.active > 0 if alpha < 0 else e.active < 0
        checks.append(Check(f"{kind}_sign", e.active, 0.0, bool(ok),
                            "active term must be > 0 (pusher injects)" if alpha < 0
                            else "active term must be < 0 (puller dissipates)"))
        checks.append(Check(f"{kind}_viscous_negative", e.viscous, 0.0, bool(e.viscous < 0)))
    # hemisphere-symmetric orientations: the strain is odd under the mirror p_2 -> -p_2
    D = r * (np.outer([1, 0, 0], [0, 1, 0]) + np.outer([0, 1, 0], [1, 0, 0]))
    hemi = OrientationDensity.hemisphere_symmetric(p0=np.array([1.0, 1.0, 0.0]) / np.sqrt(2),
                                                   mirror=(0.0, 1.0, 0.0))
    sp = SwimmerParams(-P["alpha_abs"], P["beta"], 1.0)
    e = energy_dissipation(linear_flow(D, "shear-strain"), hemi, sp, P["lam"], grid)
    rows.append(["pusher", "hemisphere_symmetric", sp.alpha, e.viscous, e.active])
    checks.append(_le("hemisphere_zero", abs(e.active) / abs(e.viscous), tol["hemisphere_zero"],
                      "|active| / |viscous|"))
    cols = ["swimmer", "density", "alpha", "viscous", "active"]
    doc = {"viscous": "-2 mu int (1 + 5/2 rho lam) |D(u)|^2", "active": "-lam int sigma_1 : D(u)"}
    return cols, rows, checks, doc, {"alpha_power": 1}


# --------------------------------------------------------------------------
# fp_stationary
# --------------------------------------------------------------------------

def _family_fp_stationary(P, seeds, tol):
    rng = np.random.default_rng(seeds[0])
    Dr = P["Dr"]
    rows, checks = [], []
    S = random_traceless_symmetric(rng)
    S /= np.linalg.norm(S)
    u1 = stationary_orientation_density(S, 0.0, Dr, P["L"])
    u2 = stationary_orientation_density(np.zeros((3, 3)), 1.0, Dr, P["L"])
    for name, F in (("xi_zero", u1), ("S_zero", u2)):
        dev = float(np.abs(F.coeffs[1:]).max()) if F.coeffs.size > 1 else 0.0
        ok = F.is_uniform and F.coeffs[0] == 1.0 / np.sqrt(4 * np.pi)
        rows.append([name, dev, 0.0, 0.0])
        checks.append(Check(f"{name}_uniform", dev, 0.0, bool(ok), "non-constant coefficients"))
    xi = P["weak_ratio"] * Dr / np.linalg.norm(S)
    F = stationary_orientation_density(S, xi, Dr, P["L"])
    c_sh = linear_response_coefficient(F, S, xi, Dr)
    fv = finite_volume_stationary(S, xi, Dr, *P["fv_grid"])
    c_fv = fv.linear_response_coefficient(S, xi, Dr)
    rel = abs(c_sh - c_fv) / abs(c_fv)
    rows.append(["linear_response", c_sh, c_fv, rel])
    checks.append(_le("linear_response", rel, tol["linear_response"],
                      f"spectral c={c_sh:.8f}, finite-volume c={c_fv:.8f}"))
    worst = 0.0
    for k in range(P["n_random"]):
        Sk = random_traceless_symmetric(rng)
        val = anisotropy_condition(dirac_top_eigenvector, Sk)
        lam_top = top_eigenvector(Sk)[0]
        err = abs(val - 4 * np.pi * lam_top) / (4 * np.pi * abs(lam_top))
        rows.append([f"anisotropy_dirac_{k}", val, 4 * np.pi * lam_top, err])
        worst = max(worst, err)
    checks.append(_le("anisotropy_dirac", worst, tol["anisotropy"], "relative gap to 4 pi lambda+"))
    # hemisphere-symmetric smooth density: mirror-odd strain gives zero
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    p0 = np.array([1.0, 1.0, 0.4]) / np.linalg.norm([1.0, 1.0, 0.4])
    q0 = p0 - 2 * (p0 @ e2) * e2
    kappa = P["kappa"]
    from .density import vmf_pdf

    def hemi(p):
        return 0.5 * (vmf_pdf(p, p0, kappa) + vmf_pdf(p, q0, kappa))

    Sodd = np.outer(e1, e2) + np.outer(e2, e1)
    v_odd = anisotropy_condition(hemi, Sodd)
    Sdiag = np.diag([1.0, -0.4, -0.6])
    v_diag = anisotropy_condition(hemi, Sdiag)
    ref = _dense_sphere_integral(lambda p: hemi(p) * np.einsum("ni,ij,nj->n", p, Sdiag, p))
    rows.append(["hemisphere_odd_S", v_odd, 0.0, abs(v_odd)])
    rows.append(["hemisphere_diag_S", v_diag, ref, abs(v_diag - ref)])
    checks.append(_le("hemisphere_odd_zero", abs(v_odd), tol["hemisphere"]))
    checks.append(_le("hemisphere_diag_oracle", abs(v_diag - ref) / abs(ref), 1e-6,
                      "product rule vs dense midpoint sphere grid"))
    drift = abs(galerkin_mass_drift(S, P["xi_nonlinear"], Dr, P["L"]))
    rows.append(["mass_drift", drift, 0.0, drift])
    checks.append(_le("mass_conservation", drift, tol["mass"]))
    Fn = stationary_orientation_density(S, P["xi_nonlinear"], Dr, 16)
    val = anisotropy_condition(Fn, S)
    rows.append(["stationary_anisotropy", val, 0.0, Fn.min_value])
    checks.append(Check("stationary_anisotropy_positive", val, 0.0, bool(val > 0),
                        f"xi={P['xi_nonlinear']}, min F={Fn.min_value:.3g}"))
    cols = ["case", "value", "reference", "error"]
    return cols, rows, checks, {}, {"c_spectral": c_sh, "c_finite_volume": c_fv,
                                    "c_linear_theory": 0.5}


def _dense_sphere_integral(fn, nt=1200, nph=2400):
    th = (np.arange(nt) + 0.5) * np.pi / nt
    ph = (np.arange(nph) + 0.5) * 2 * np.pi / nph
    total = 0.0
    for t in np.array_split(np.arange(nt), 12):
        T, PH = np.meshgrid(th[t], ph, indexing="ij")
        p = np.stack([np.sin(T) * np.cos(PH), np.sin(T) * np.sin(PH), np.cos(T)], -1).reshape(-1, 3)
        w = (np.sin(T) * (np.pi / nt) * (2 * np.pi / nph)).ravel()
        total += float(w @ fn(p))
    return total


# --------------------------------------------------------------------------
# separation_diagnostics
# --------------------------------------------------------------------------

def _family_separation_diagnostics(P, seeds, tol):
    rows, checks = [], []
    dens = OrientationDensity.uniform()
    sup = {eta: [] for eta in P["etas"]}
    empty_ok = True
    for s in seeds:
        for N in P["N_list"]:
            cfg = sample_configuration(dens, N, P["lam"], P["sep_c"], P["beta"], _sub_seed(s, N))
            for eta in P["etas"]:
                rep = separation_report(cfg, eta)
                ls = interaction_sum_diagnostics(cfg, eta)
                if eta < P["sep_c"] and rep.bad_indices.size:
                    empty_ok = False
                sup[eta].append(ls["good_sup"])
                rows.append([int(s), N, float(eta), int(rep.good_indices.size), rep.bad_fraction,
                             rep.bad_fraction / eta ** P["alpha_sep"], ls["good_sup"], ls["all_sup"],
                             bool(rep.H2_ok), bool(rep.H2prime_ok), rep.min_gap])
    ratio = max(max(v) / min(v) for v in sup.values())
    checks.append(_le("interaction_sum_stability", ratio, tol["stability_ratio"],
                      "max over eta of (largest / smallest) rescaled sup across N"))
    checks.append(Check("bad_set_empty_below_c", float(not empty_ok), 0.0, empty_ok))
    cols = ["seed", "N", "eta", "n_good", "bad_fraction", "bad_fraction_over_eta_pow",
            "good_sup", "all_sup", "H2_ok", "H2prime_ok", "min_gap"]
    doc = {"good_sup": "eta^4 sup_{i in G} sum_{j in G, j != i} (eta + |y_i - y_j|)^-4, y = x N^(1/3)",
           "all_sup": "lam^(4/3) sup_i sum_{j != i} (M~ lam^(1/3) + |y_i - y_j|)^-4"}
    return cols, rows, checks, doc, {"sup_by_eta": {str(k): v for k, v in sup.items()}}


_RUNNERS = {
    "identity_checks": _family_identity_checks,
    "dipole_remainder": _family_dipole_remainder,
    "uapp_convergence": _family_uapp_convergence,
    "boundary_error_scaling": _family_boundary_error_scaling,
    "energy_signs": _family_energy_signs,
    "fp_stationary": _family_fp_stationary,
    "separation_diagnostics": _family_separation_diagnostics,
}


# --------------------------------------------------------------------------
# runner
# --------------------------------------------------------------------------

def _versions():
    import numba
    import scipy
    return {"active_stokes": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def run_experiment(spec: ExperimentSpec, tolerance_scale: float = 1.0,
                   seed: int | None = None) -> ExperimentReport:
    """Resolve, validate and execute one experiment (no files written)."""
    rs = spec.resolved(tolerance_scale, seed)
    t0 = time.perf_counter()
    try:
        rs.validate()
        cols, rows, checks, doc, meta = _RUNNERS[rs.id](rs.params, rs.seeds, rs.tolerances)
        err = None
    except ActiveStokesError as exc:
        cols, rows, checks, doc, meta = ["error"], [], [], {}, {}
        err = f"{type(exc).__name__}: {exc}"
    return ExperimentReport(rs, cols, rows, checks, doc, meta, err, time.perf_counter() - t0)


def write_report(report: ExperimentReport, out_dir) -> tuple:
    """Write ``<name>.csv`` and ``<name>.meta.yaml``; returns their paths."""
    out = Path(out_dir)
    rs = report.spec
    csv_path = out / f"{rs.name}.csv"
    meta_path = out / f"{rs.name}.meta.yaml"
    header = {"experiment": rs.id, "input_hash": content_hash(rs.to_dict())}
    report.csv_sha1 = write_csv(csv_path, report.columns, report.rows, header, report.column_doc)
    meta = {
        "experiment": rs.id,
        "passed": report.passed,
        "error": report.error,
        "parameters": rs.params,
        "seeds": rs.seeds,
        "tolerances": rs.tolerances,
        "strict": rs.strict,
        "input_hash": content_hash(rs.to_dict()),
        "csv": csv_path.name,
        "csv_body_sha1": report.csv_sha1,
        "checks": [{"name": c.name, "value": c.value, "tol": c.tol, "passed": c.passed,
                    "detail": c.detail} for c in report.checks],
        "results": report.meta,
        "conventions": {
            "alpha_power": 1,
            "active_stress": "sigma_1 = alpha J int (pp - Id/3) f, J = (3 mu/4)(beta - 5/2 beta^-2 + 3/2 beta^-4)",
            "transmission_condition": "viscosity jump across the domain boundary not resolved "
                                      "(first-order perturbative effective solve)",
            "measured_rates": RATE_NOTE,
        },
        "runtime_seconds": round(report.runtime, 3),
        "versions": _versions(),
    }
    write_metadata(meta_path, meta)
    return csv_path, meta_path


@dataclass
class RunSummary:
    reports: list
    first_failure: str | None

    @property
    def exit_status(self):
        return 0 if all(r.passed for r in self.reports) else 1


def _run_and_write(spec, out_dir, tolerance_scale, seed):
    rep = run_experiment(spec, tolerance_scale, seed)
    if out_dir is not None:
        write_report(rep, out_dir)
    return rep


def run_all(specs, out_dir=None, tolerance_scale: float = 1.0, seed: int | None = None,
            log=None, jobs: int = 1) -> RunSummary:
    """Run experiments; failures are recorded and the rest still run.

    With ``jobs > 1`` independent experiments run in a process pool, each
    writing its own files; reports are collected in input order, so the
    summary (and every CSV body) is identical to a sequential run.
    """
    specs = list(specs)
    if jobs > 1 and len(specs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=min(jobs, len(specs))) as pool:
            futures = [pool.submit(_run_and_write, s, out_dir, tolerance_scale, seed) for s in specs]
            results = (f.result() for f in futures)
            return _collect(results, log)
    return _collect((_run_and_write(s, out_dir, tolerance_scale, seed) for s in specs), log)


def _collect(results, log):
    reports, first = [], None
    for rep in results:
        reports.append(rep)
        if not rep.passed and first is None:
            bad = rep.error or ", ".join(c.name for c in rep.checks if not c.passed)
            first = f"{rep.spec.name}: {bad}"
        if log is not None:
            log(rep)
    return RunSummary(reports, first)


def default_manifest() -> dict:
    """A manifest listing every family with its default parameters."""
    return {"experiments": [ExperimentSpec(fid, **copy.deepcopy(DEFAULTS[fid])).to_dict()
                            for fid in FAMILIES]}


def load_manifest(doc) -> list:
    """ExperimentSpec list from a parsed manifest (dict with 'experiments', or a list)."""
    if doc is None:
        return []
    items = doc.get("experiments", []) if isinstance(doc, dict) else doc
    return [ExperimentSpec.from_dict(d) for d in (items or [])]
