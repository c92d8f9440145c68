"""Small numerical helpers: finite differences and log-log fits."""
from __future__ import annotations

import numpy as np


def fd_jacobian(f, x, h=1e-6, order=2):
    """Jacobian ``J[i, k] = d f_i / d x_k`` by central differences.

    Parameters
    ----------
    f : callable
        Maps a (3,) array to an array of shape (m,).
    x : array_like, shape (3,)
    h : float
        Step.
    order : {2, 4}
        Accuracy order of the stencil.
    """
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        if order == 2:
            d = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h)
        elif order == 4:
            d = (-np.asarray(f(x + 2 * e)) + 8 * np.asarray(f(x + e))
                 - 8 * np.asarray(f(x - e)) + np.asarray(f(x - 2 * e))) / (12 * h)
        else:
            raise ValueError("order must be 2 or 4")
        cols.append(d)
    return np.stack(cols, axis=-1)


def fd_laplacian(f, x, h=1e-3, order=4):
    """Laplacian of ``f`` at ``x`` (component-wise) by central differences."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x))
    out = np.zeros_like(f0, dtype=float)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        if order == 2:
            out += (np.asarray(f(x + e)) - 2 * f0 + np.asarray(f(x - e))) / h**2
        elif order == 4:
            out += (-np.asarray(f(x + 2 * e)) + 16 * np.asarray(f(x + e)) - 30 * f0
                    + 16 * np.asarray(f(x - e)) - np.asarray(f(x - 2 * e))) / (12 * h**2)
        else:
            raise ValueError("order must be 2 or 4")
    return out


def fd_divergence_rows(F, x, h=1e-4):
    """Row-wise divergence ``sum_k d F_ik / d x_k`` of a matrix field."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(3)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        out += (np.asarray(F(x + e))[:, k] - np.asarray(F(x - e))[:, k]) / (2 * h)
    return out


def loglog_slope(x, y):
    """Least-squares slope and intercept of ``log y`` against ``log x``.

    Returns
    -------
    slope, intercept, residuals
        ``residuals`` are the pointwise deviations in log space.
    """
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    slope, icpt = np.polyfit(lx, ly, 1)
    return float(slope), float(icpt), ly - (slope * lx + icpt)


def random_unit_vectors(n, rng):
    """``n`` independent uniform points on the unit sphere."""
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_rotation(rng):
    """Uniformly distributed proper rotation matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rotation_to(p):
    """Rotation matrix ``R`` with ``R @ e3 = p`` (``p`` a unit vector)."""
    p = np.asarray(p, dtype=float)
    p = p / np.linalg.norm(p)
    e3 = np.array([0.0, 0.0, 1.0])
    c = float(p @ e3)
    if c > 1 - 1e-15:
        return np.eye(3)
    if c < -1 + 1e-15:
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(e3, p)
    s = np.linalg.norm(v)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx * ((1 - c) / s**2)


def random_traceless_symmetric(rng, scale=1.0):
    """Random symmetric trace-free 3x3 matrix."""
    A = rng.standard_normal((3, 3)) * scale
    A = 0.5 * (A + A.T)
    return A - np.trace(A) / 3 * np.eye(3)
