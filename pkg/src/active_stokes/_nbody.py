"""Compiled N-body sums of the swimmer solution.

Sources are stored structure-of-arrays (``cx, cy, cz`` centers and ``px, py,
pz`` orientations) so that the inner loop over sources vectorizes.  Every
output value is reduced over sources in index order, independent of the
number of threads.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange

_INV8PI = 1.0 / (8.0 * np.pi)


@njit(cache=True, inline="always")
def _coefs(a, beta, kf, mu):
    g1 = 1.5 / beta - 0.5 / beta**3
    g2 = beta**-2 - beta**-4
    g3 = 0.25 / beta * (1.0 - beta**-2) ** 2
    s = kf * _INV8PI / mu
    # multipliers of Up(r1), Up(r2), dipA(r2), LUp(r2), Up(r0), LUp(r0)
    return (-s, s * g1, -s * g2 * a, s * g3 * a * a, s * (1.0 - g1), s * (1.0 - g1) * a * a / 6.0,
            kf * (1.0 - g1) / (6.0 * np.pi * mu * a))


@njit(cache=True, fastmath=True)
def uapp_velocity(points, cx, cy, cz, px, py, pz, a, beta, kf, mu, tol, bad):
    """Sum of v[p_j](x - x_j) over all sources, for every point.

    ``bad[m]`` is set to the index of a source whose singular point lies
    within ``tol`` of point ``m`` (else -1).
    """
    c1, c2, c3, c4, c5, c6, u2 = _coefs(a, beta, kf, mu)
    ab = a * beta
    aib = a / beta
    n = points.shape[0]
    N = cx.shape[0]
    out = np.zeros((n, 3))
    for m in prange(n):
        x0 = points[m, 0]
        y0 = points[m, 1]
        z0 = points[m, 2]
        vx = 0.0
        vy = 0.0
        vz = 0.0
        flag = -1
        for j in range(N):
            X = x0 - cx[j]
            Y = y0 - cy[j]
            Z = z0 - cz[j]
            p0 = px[j]
            p1 = py[j]
            p2 = pz[j]
            rr0 = X * X + Y * Y + Z * Z
            if rr0 <= a * a:
                vx += u2 * p0
                vy += u2 * p1
                vz += u2 * p2
                d2 = (X - aib * p0) ** 2 + (Y - aib * p1) ** 2 + (Z - aib * p2) ** 2
                if d2 < tol * tol:
                    flag = j
                continue
            # r1 = X - a beta p
            a1x = X - ab * p0
            a1y = Y - ab * p1
            a1z = Z - ab * p2
            q1 = a1x * a1x + a1y * a1y + a1z * a1z
            # r2 = X - a p / beta
            a2x = X - aib * p0
            a2y = Y - aib * p1
            a2z = Z - aib * p2
            q2 = a2x * a2x + a2y * a2y + a2z * a2z
            if q1 < tol * tol or q2 < tol * tol:
                flag = j
            i1 = 1.0 / np.sqrt(q1)
            i2 = 1.0 / np.sqrt(q2)
            i0 = 1.0 / np.sqrt(rr0)
            rp1 = a1x * p0 + a1y * p1 + a1z * p2
            rp2 = a2x * p0 + a2y * p1 + a2z * p2
            rp0 = X * p0 + Y * p1 + Z * p2
            i13 = i1 * i1 * i1
            i23 = i2 * i2 * i2
            i25 = i23 * i2 * i2
            i03 = i0 * i0 * i0
            i05 = i03 * i0 * i0
            # Up(r) = p/r + r (r.p)/r^3
            f1 = c1 * rp1 * i13
            f2 = c2 * rp2 * i23
            # dipA(r) = -3 ((r.p)^2 - r^2/3) r / r^5
            f3 = c3 * (-3.0) * (rp2 * rp2 - q2 / 3.0) * i25
            # LUp(r) = 2 p/r^3 - 6 r (r.p)/r^5
            f4 = c4 * (-6.0) * rp2 * i25
            f5 = c5 * rp0 * i03
            f6 = c6 * (-6.0) * rp0 * i05
            gp = c1 * i1 + c2 * i2 + 2.0 * c4 * i23 + c5 * i0 + 2.0 * c6 * i03
            g2 = f2 + f3 + f4
            g0 = f5 + f6
            vx += gp * p0 + f1 * a1x + g2 * a2x + g0 * X
            vy += gp * p1 + f1 * a1y + g2 * a2y + g0 * Y
            vz += gp * p2 + f1 * a1z + g2 * a2z + g0 * Z
        out[m, 0] = vx
        out[m, 1] = vy
        out[m, 2] = vz
        bad[m] = flag
    return out


@njit(cache=True, inline="always")
def _add_grad(G, c_up, c_dip, c_lup, rx, ry, rz, p0, p1, p2):
    """Accumulate gradients of c_up Up(r) + c_dip dipA(r) + c_lup LUp(r) into G (row-major 9)."""
    q = rx * rx + ry * ry + rz * rz
    ir = 1.0 / np.sqrt(q)
    ir2 = ir * ir
    ir3 = ir2 * ir
    ir5 = ir3 * ir2
    ir7 = ir5 * ir2
    rp = rx * p0 + ry * p1 + rz * p2
    r = (rx, ry, rz)
    p = (p0, p1, p2)
    axx = rp * rp - q / 3.0
    Ar = (rp * p0 - rx / 3.0, rp * p1 - ry / 3.0, rp * p2 - rz / 3.0)
    for i in range(3):
        for k in range(3):
            dik = 1.0 if i == k else 0.0
            gup = (-p[i] * r[k] + dik * rp + r[i] * p[k]) * ir3 - 3.0 * r[i] * r[k] * rp * ir5
            gdip = -3.0 * (2.0 * r[i] * Ar[k] * ir5 + axx * dik * ir5 - 5.0 * axx * r[i] * r[k] * ir7)
            glup = -6.0 * (p[i] * r[k] + dik * rp + r[i] * p[k]) * ir5 + 30.0 * r[i] * r[k] * rp * ir7
            G[3 * i + k] += c_up * gup + c_dip * gdip + c_lup * glup


@njit(cache=True)
def velocity_gradient_sum(points, cx, cy, cz, px, py, pz, a, beta, kf, mu, skip):
    """Sum of grad v[p_j](x - x_j) over sources ``j != skip[m]`` (row-major 3x3)."""
    c1, c2, c3, c4, c5, c6, u2 = _coefs(a, beta, kf, mu)
    ab = a * beta
    aib = a / beta
    n = points.shape[0]
    N = cx.shape[0]
    out = np.zeros((n, 9))
    G = np.zeros(9)
    for m in range(n):
        G[:] = 0.0
        for j in range(N):
            if j == skip[m]:
                continue
            X = points[m, 0] - cx[j]
            Y = points[m, 1] - cy[j]
            Z = points[m, 2] - cz[j]
            if X * X + Y * Y + Z * Z <= a * a:
                continue
            p0 = px[j]
            p1 = py[j]
            p2 = pz[j]
            _add_grad(G, c1, 0.0, 0.0, X - ab * p0, Y - ab * p1, Z - ab * p2, p0, p1, p2)
            _add_grad(G, c2, c3, c4, X - aib * p0, Y - aib * p1, Z - aib * p2, p0, p1, p2)
            _add_grad(G, c5, 0.0, c6, X, Y, Z, p0, p1, p2)
        out[m, :] = G
    return out


@njit(cache=True, fastmath=True)
def _strain_sum_point(x0, y0, z0, skip, cx, cy, cz, px, py, pz, a, ab, aib, c1, c2, c3, c4, c5, c6):
    """Symmetric gradient (6 components: xx yy zz xy xz yz) of sum_{j != skip} v[p_j]."""
    d00 = 0.0
    d11 = 0.0
    d22 = 0.0
    d01 = 0.0
    d02 = 0.0
    d12 = 0.0
    N = cx.shape[0]
    for j in range(N):
        X = x0 - cx[j]
        Y = y0 - cy[j]
        Z = z0 - cz[j]
        q0 = X * X + Y * Y + Z * Z
        live = 1.0 if (j != skip and q0 > a * a) else 0.0
        p0 = px[j]
        p1 = py[j]
        p2 = pz[j]
        # three singular centres: r1 (Stokeslet), r2 (image group), r0 (translation group)
        b1x = X - ab * p0
        b1y = Y - ab * p1
        b1z = Z - ab * p2
        b2x = X - aib * p0
        b2y = Y - aib * p1
        b2z = Z - aib * p2
        q1 = b1x * b1x + b1y * b1y + b1z * b1z
        q2 = b2x * b2x + b2y * b2y + b2z * b2z
        if live == 0.0:
            q0 = 1.0
            q1 = 1.0
            q2 = 1.0
        i1 = 1.0 / np.sqrt(q1)
        i2 = 1.0 / np.sqrt(q2)
        i0 = 1.0 / np.sqrt(q0)
        # --- Stokeslet part c Up(r): sym grad = c[(dik rp)/r^3 - 3 ri rk rp/r^5]
        #     (the antisymmetric -p_i r_k + r_i p_k drops out)
        rp1 = b1x * p0 + b1y * p1 + b1z * p2
        rp2 = b2x * p0 + b2y * p1 + b2z * p2
        rp0 = X * p0 + Y * p1 + Z * p2
        i13 = i1 * i1 * i1
        i15 = i13 * i1 * i1
        i23 = i2 * i2 * i2
        i25 = i23 * i2 * i2
        i27 = i25 * i2 * i2
        i03 = i0 * i0 * i0
        i05 = i03 * i0 * i0
        i07 = i05 * i0 * i0
        # isotropic coefficient (multiplies delta_ik)
        iso = live * (c1 * rp1 * i13 + c2 * rp2 * i23 + c5 * rp0 * i03
                      + c3 * (-3.0) * (rp2 * rp2 - q2 / 3.0) * i25
                      + c4 * (-6.0) * rp2 * i25 + c6 * (-6.0) * rp0 * i05)
        # r_i r_k coefficients for each centre
        k1 = live * (c1 * (-3.0) * rp1 * i15)
        k2 = live * (c2 * (-3.0) * rp2 * i25 + c3 * 15.0 * (rp2 * rp2 - q2 / 3.0) * i27
                     + c4 * 30.0 * rp2 * i27)
        k0 = live * (c5 * (-3.0) * rp0 * i05 + c6 * 30.0 * rp0 * i07)
        # sym(r (x) A r) terms of the dipole: -6 c3 sym(r_i (A r)_k)/r^5
        #   with A r = rp p - r/3 -> -6 c3 [rp sym(r_i p_k) - r_i r_k/3]/r^5
        # sym(p_i r_k) terms of LapU: -6 c4 * 2 sym(p_i r_k)/r^5 (each of the two)
        s2 = live * (-6.0 * c3 * rp2 * i25 - 12.0 * c4 * i25)
        s0 = live * (-12.0 * c6 * i05)
        k2 = k2 + live * (2.0 * c3 * i25)
        d00 += iso + k1 * b1x * b1x + k2 * b2x * b2x + k0 * X * X + s2 * b2x * p0 + s0 * X * p0
        d11 += iso + k1 * b1y * b1y + k2 * b2y * b2y + k0 * Y * Y + s2 * b2y * p1 + s0 * Y * p1
        d22 += iso + k1 * b1z * b1z + k2 * b2z * b2z + k0 * Z * Z + s2 * b2z * p2 + s0 * Z * p2
        d01 += (k1 * b1x * b1y + k2 * b2x * b2y + k0 * X * Y
                + 0.5 * s2 * (b2x * p1 + b2y * p0) + 0.5 * s0 * (X * p1 + Y * p0))
        d02 += (k1 * b1x * b1z + k2 * b2x * b2z + k0 * X * Z
                + 0.5 * s2 * (b2x * p2 + b2z * p0) + 0.5 * s0 * (X * p2 + Z * p0))
        d12 += (k1 * b1y * b1z + k2 * b2y * b2z + k0 * Y * Z
                + 0.5 * s2 * (b2y * p2 + b2z * p1) + 0.5 * s0 * (Y * p2 + Z * p1))
    return d00, d11, d22, d01, d02, d12


@njit(cache=True)
def strain_sum(points, skip, cx, cy, cz, px, py, pz, a, beta, kf, mu):
    """D(sum_{j != skip[m]} v[p_j])(points[m]) as 6 components (xx yy zz xy xz yz)."""
    c1, c2, c3, c4, c5, c6, u2 = _coefs(a, beta, kf, mu)
    out = np.zeros((points.shape[0], 6))
    for m in range(points.shape[0]):
        d = _strain_sum_point(points[m, 0], points[m, 1], points[m, 2], skip[m],
                              cx, cy, cz, px, py, pz, a, a * beta, a / beta,
                              c1, c2, c3, c4, c5, c6)
        for k in range(6):
            out[m, k] = d[k]
    return out


@njit(cache=True, parallel=True)
def boundary_error_terms(cx, cy, cz, px, py, pz, a, beta, kf, mu,
                         nodes, weights, fine_nodes, fine_weights, refine):
    """Per-particle integrals int_{B_i} |D(h_i)|^2 with h_i = sum_{j != i} v[p_j].

    ``nodes``/``weights`` is the unit-ball rule; particles with
    ``refine[i]`` use ``fine_nodes``/``fine_weights``.
    """
    c1, c2, c3, c4, c5, c6, u2 = _coefs(a, beta, kf, mu)
    N = cx.shape[0]
    out = np.zeros(N)
    a3 = a * a * a
    for i in prange(N):
        if refine[i]:
            nd = fine_nodes
            wt = fine_weights
        else:
            nd = nodes
            wt = weights
        acc = 0.0
        for q in range(nd.shape[0]):
            d = _strain_sum_point(cx[i] + a * nd[q, 0], cy[i] + a * nd[q, 1], cz[i] + a * nd[q, 2],
                                  i, cx, cy, cz, px, py, pz, a, a * beta, a / beta,
                                  c1, c2, c3, c4, c5, c6)
            sq = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + 2.0 * (d[3] * d[3] + d[4] * d[4] + d[5] * d[5])
            acc += wt[q] * sq
        out[i] = acc * a3
    return out


@njit(cache=True, parallel=True)
def shifted_inverse_quartic_sums(y, shift, include_self):
    """S_i = sum_j (shift + |y_i - y_j|)^-4 over all j (optionally skipping j = i)."""
    n = y.shape[0]
    out = np.empty(n)
    for i in prange(n):
        s = 0.0
        for j in range(n):
            if j == i and not include_self:
                continue
            d = np.sqrt((y[i, 0] - y[j, 0]) ** 2 + (y[i, 1] - y[j, 1]) ** 2 + (y[i, 2] - y[j, 2]) ** 2)
            t = shift + d
            t2 = t * t
            s += 1.0 / (t2 * t2)
        out[i] = s
    return out
