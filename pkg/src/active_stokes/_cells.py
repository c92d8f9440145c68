"""Compiled cell integrals of the Oseen tensor and its gradient.

For a cube cell ``C`` of side ``h`` centred at the origin and a displacement
``d`` we need

    IU[i, j]     = int_C U_ij(d - y) dy
    K[i, j, k]   = int_C (d_k U_ij)(d - y) dy

Both reduce to integrals of ``U`` over the six faces of the translated cell
``d - C``: ``K`` by the divergence theorem, ``IU`` by Euler's identity for the
degree -1 homogeneous kernel (``div(z U(z)) = 2 U(z)``).  The face integrals
of ``1/r`` and ``z_a z_b / r^3`` over a rectangle have closed-form
antiderivatives, evaluated at the four corners.  Far from the cell the
integrand is smooth and a corrected midpoint rule
``h^3 [f(d) + h^2/24 Lap f(d)]`` is used instead, which avoids the
cancellation of the corner sums at large distance.

All kernels are written for viscosity ``mu = 1``; callers divide by mu.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

_INV8PI = 1.0 / (8.0 * np.pi)

#: Chebyshev distance (in cells) up to which cell integrals are exact.
NEAR_CELLS = 5


@njit(cache=True, inline="always")
def _log_sum(a, r, b2):
    """ln(a + r) with r = sqrt(a^2 + b2), without cancellation for a < 0.

    Returns 0 when the argument vanishes; every such term carries a
    vanishing prefactor in the antiderivatives below.
    """
    if a >= 0.0:
        s = a + r
        return math.log(s) if s > 0.0 else 0.0
    if b2 <= 0.0:
        return 0.0
    return math.log(b2 / (r - a))


@njit(cache=True)
def _corner(u, v, w, out, sign):
    """Accumulate sign * antiderivatives at corner (u, v) of a face at height w.

    out = [I0, Iuu, Ivv, Iww, Iuv, Iuw, Ivw] for the integrands
    1/r, u^2/r^3, v^2/r^3, w^2/r^3, uv/r^3, uw/r^3, vw/r^3.
    """
    r2 = u * u + v * v + w * w
    if r2 == 0.0:
        return
    r = math.sqrt(r2)
    lv = _log_sum(v, r, u * u + w * w)
    lu = _log_sum(u, r, v * v + w * w)
    at = 0.0
    if w != 0.0:
        at = w * math.atan(u * v / (w * r))
    out[0] += sign * (u * lv + v * lu - at)
    out[1] += sign * (v * lu - at)
    out[2] += sign * (u * lv - at)
    out[3] += sign * at
    out[4] += sign * (-r)
    out[5] += sign * (-w * lv)
    out[6] += sign * (-w * lu)


@njit(cache=True)
def _face_U(d0, d1, d2, h, k, s, F):
    """F[i, j] = int over the face (axis k, side s = +-1) of d - C of U_ij(z) dz.

    Returns the face height w (signed normal coordinate).
    """
    d = (d0, d1, d2)
    a = (k + 1) % 3
    b = (k + 2) % 3
    w = d[k] + s * 0.5 * h
    u1 = d[a] - 0.5 * h
    u2 = d[a] + 0.5 * h
    v1 = d[b] - 0.5 * h
    v2 = d[b] + 0.5 * h
    I = np.zeros(7)
    _corner(u2, v2, w, I, 1.0)
    _corner(u1, v2, w, I, -1.0)
    _corner(u2, v1, w, I, -1.0)
    _corner(u1, v1, w, I, 1.0)
    for i in range(3):
        for j in range(3):
            F[i, j] = 0.0
        F[i, i] = I[0]
    F[a, a] += I[1]
    F[b, b] += I[2]
    F[k, k] += I[3]
    F[a, b] += I[4]
    F[b, a] += I[4]
    F[a, k] += I[5]
    F[k, a] += I[5]
    F[b, k] += I[6]
    F[k, b] += I[6]
    for i in range(3):
        for j in range(3):
            F[i, j] *= _INV8PI
    return w


@njit(cache=True)
def cell_exact(d0, d1, d2, h, IU, K):
    """Exact IU (3, 3) and K (3, 3, 3) for displacement d and cell side h."""
    F = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            IU[i, j] = 0.0
            for k in range(3):
                K[i, j, k] = 0.0
    for k in range(3):
        for s in (-1.0, 1.0):
            w = _face_U(d0, d1, d2, h, k, s, F)
            # outward normal s e_k; z . n = s * w
            for i in range(3):
                for j in range(3):
                    IU[i, j] += 0.5 * s * w * F[i, j]
                    K[i, j, k] += s * F[i, j]


@njit(cache=True)
def cell_far(d0, d1, d2, h, IU, K):
    """Corrected midpoint approximation of IU and K (d away from the cell)."""
    d = (d0, d1, d2)
    r2 = d0 * d0 + d1 * d1 + d2 * d2
    r = math.sqrt(r2)
    ir = 1.0 / r
    ir3 = ir * ir * ir
    ir5 = ir3 * ir * ir
    ir7 = ir5 * ir * ir
    v = h * h * h * _INV8PI
    c = h * h / 24.0
    for i in range(3):
        for j in range(3):
            dij = 1.0 if i == j else 0.0
            # U + c Lap U
            IU[i, j] = v * (dij * ir + d[i] * d[j] * ir3
                            + c * (2.0 * dij * ir3 - 6.0 * d[i] * d[j] * ir5))
            for k in range(3):
                dik = 1.0 if i == k else 0.0
                djk = 1.0 if j == k else 0.0
                g = (-dij * d[k] + dik * d[j] + djk * d[i]) * ir3 - 3.0 * d[i] * d[j] * d[k] * ir5
                lg = (-6.0 * (dij * d[k] + dik * d[j] + djk * d[i]) * ir5
                      + 30.0 * d[i] * d[j] * d[k] * ir7)
                K[i, j, k] = v * (g + c * lg)


@njit(cache=True)
def cell_integrals(d0, d1, d2, h, IU, K):
    """Dispatch to the exact or the far-field rule by Chebyshev distance."""
    m = max(abs(d0), abs(d1), abs(d2)) / h
    if m <= NEAR_CELLS + 0.5:
        cell_exact(d0, d1, d2, h, IU, K)
    else:
        cell_far(d0, d1, d2, h, IU, K)


@njit(cache=True, parallel=True)
def direct_sum(points, centers, h, g, tau, want_grad):
    """Sum of cell integrals against piecewise-constant data.

    Parameters
    ----------
    points : (n, 3) targets.
    centers : (m, 3) cell centres.
    g : (m, 3) vector data (Oseen convolution), or an empty (0, 3) array.
    tau : (m, 3, 3) tensor data (gradient convolution), or empty (0, 3, 3).
    want_grad : bool
        Also return the gradient of the Oseen part, ``sum_cells K[i,j,k] g_j``.

    Returns
    -------
    vel : (n, 3) ``sum IU g + sum K : tau`` (mu = 1)
    grad : (n, 3, 3) gradient of the Oseen part (zeros if not requested)
    """
    n = points.shape[0]
    m = centers.shape[0]
    has_g = g.shape[0] == m
    has_t = tau.shape[0] == m
    vel = np.zeros((n, 3))
    grad = np.zeros((n, 3, 3))
    for q in prange(n):
        IU = np.zeros((3, 3))
        K = np.zeros((3, 3, 3))
        acc = np.zeros(3)
        gacc = np.zeros((3, 3))
        for c in range(m):
            d0 = points[q, 0] - centers[c, 0]
            d1 = points[q, 1] - centers[c, 1]
            d2 = points[q, 2] - centers[c, 2]
            cell_integrals(d0, d1, d2, h, IU, K)
            for i in range(3):
                s = 0.0
                for j in range(3):
                    if has_g:
                        s += IU[i, j] * g[c, j]
                        if want_grad:
                            for k in range(3):
                                gacc[i, k] += K[i, j, k] * g[c, j]
                    if has_t:
                        for k in range(3):
                            s += K[i, j, k] * tau[c, j, k]
                acc[i] += s
        for i in range(3):
            vel[q, i] = acc[i]
            for k in range(3):
                grad[q, i, k] = gacc[i, k]
    return vel, grad


#: layouts of :func:`fill_kernel_table`
TABLE_SYM_K = 0    # 18 components: i * 6 + c, K[i,j,k] (+ K[i,k,j]) for the c-th (j<=k) pair
TABLE_GRAD_K = 1   # 27 components: (i * 3 + k) * 3 + j, K[i,j,k]
TABLE_U = 2        # 9 components: i * 3 + j, IU[i,j]


@njit(cache=True, parallel=True)
def fill_kernel_table(out, h, offset, shift, layout):
    """Write cell-integral kernels on a displacement lattice into ``out``.

    ``out`` has shape (ncomp, n0, n1, n2) (component-major, so that each
    component is contiguous for FFTs); entry ``[:, q0, q1, q2]`` is for the
    displacement ``(q - shift) * h + offset``.  Writing into a caller-owned
    buffer lets large tables be reused across calls.
    """
    n0, n1, n2 = out.shape[1], out.shape[2], out.shape[3]
    for q0 in prange(n0):
        IU = np.zeros((3, 3))
        K = np.zeros((3, 3, 3))
        for q1 in range(n1):
            for q2 in range(n2):
                d0 = (q0 - shift[0]) * h + offset[0]
                d1 = (q1 - shift[1]) * h + offset[1]
                d2 = (q2 - shift[2]) * h + offset[2]
                cell_integrals(d0, d1, d2, h, IU, K)
                if layout == 0:
                    for i in range(3):
                        c = 0
                        for j in range(3):
                            for k in range(j, 3):
                                # pairs ordered (0,0),(0,1),(0,2),(1,1),(1,2),(2,2)
                                v = K[i, j, k] if j == k else K[i, j, k] + K[i, k, j]
                                out[i * 6 + c, q0, q1, q2] = v
                                c += 1
                elif layout == 1:
                    for i in range(3):
                        for k in range(3):
                            for j in range(3):
                                out[(i * 3 + k) * 3 + j, q0, q1, q2] = K[i, j, k]
                else:
                    for i in range(3):
                        for j in range(3):
                            out[i * 3 + j, q0, q1, q2] = IU[i, j]
