"""Singular Stokes kernels.

All functions accept a single point ``x`` of shape ``(3,)`` or a batch of
shape ``(n, 3)`` and return arrays with the matching leading dimension.

Notation::

    U(x)      = 1/(8 pi mu) (Id/|x| + x x^T/|x|^3)           Oseen tensor
    Ut(x)     = 1/(8 pi mu) (Id/(3|x|) - x x^T/|x|^3)
    LapU(x)   = 1/(8 pi mu) (2 Id/|x|^3 - 6 x x^T/|x|^5)
    gradU(x)A = -3/(8 pi mu) (A : x x^T) x / |x|^5
    M(x)A     = -(A x x^T + x x^T A + (A : x x^T) Id)/|x|^5
                + 5 (A : x x^T) x x^T/|x|^7

For trace-free ``A`` the contraction ``gradU(x)A`` equals
``d_k U_ij(x) A_jk`` and ``sym grad (y -> gradU(y)A) = 3/(8 pi mu) M(x)A``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularityError

EPS_SING = 1e-12


@dataclass(frozen=True)
class FluidParams:
    """Newtonian solvent.

    Parameters
    ----------
    mu : float
        Dynamic viscosity, must be positive.
    """

    mu: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise DomainError(f"viscosity must be positive, got {self.mu}")


DEFAULT_FLUID = FluidParams()


def _prep(x, eps):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {x.shape}")
    r = np.sqrt(np.einsum("...i,...i->...", x, x))
    if np.any(r < eps):
        raise SingularityError(f"kernel evaluated within {eps:g} of its singularity")
    return x, r


def _mu(fluid):
    return DEFAULT_FLUID.mu if fluid is None else fluid.mu


def oseen_U(x, fluid: FluidParams | None = None, eps: float = EPS_SING):
    """Oseen tensor (Stokeslet) U(x)."""
    x, r = _prep(x, eps)
    r = r[..., None, None]
    xx = x[..., :, None] * x[..., None, :]
    return (np.eye(3) / r + xx / r**3) / (8 * np.pi * _mu(fluid))


def oseen_tilde_U(x, fluid: FluidParams | None = None, eps: float = EPS_SING):
    """Trace-free companion tensor Ut(x) = (Id/(3|x|) - x x^T/|x|^3)/(8 pi mu)."""
    x, r = _prep(x, eps)
    r = r[..., None, None]
    xx = x[..., :, None] * x[..., None, :]
    return (np.eye(3) / (3 * r) - xx / r**3) / (8 * np.pi * _mu(fluid))


def laplacian_U(x, fluid: FluidParams | None = None, eps: float = EPS_SING):
    """Component-wise Laplacian of the Oseen tensor (potential dipole)."""
    x, r = _prep(x, eps)
    r = r[..., None, None]
    xx = x[..., :, None] * x[..., None, :]
    return (2 * np.eye(3) / r**3 - 6 * xx / r**5) / (8 * np.pi * _mu(fluid))


def grad_U_apply(x, A, fluid: FluidParams | None = None, eps: float = EPS_SING):
    """Stokes dipole contraction gradU(x)A = -3/(8 pi mu) (A:xx) x/|x|^5.

    This is ``(d_k U_ij) A_jk`` for symmetric trace-free ``A`` (a trace adds
    ``tr(A) x/(8 pi mu |x|^3)``, which is not included).  ``A`` is a single (3, 3) matrix or a batch matching ``x``.
    """
    x, r = _prep(x, eps)
    A = np.asarray(A, dtype=float)
    axx = np.einsum("...ij,...i,...j->...", A, x, x)
    return (-3.0 / (8 * np.pi * _mu(fluid))) * (axx / r**5)[..., None] * x


def M_apply(x, A, eps: float = EPS_SING, printed: bool = False):
    """Strain kernel of the Stokes dipole, without the 3/(8 pi mu) factor.

    Returns ``M(x)A`` such that the symmetric gradient of
    ``y -> grad_U_apply(y, A)`` equals ``3/(8 pi mu) M(x)A`` for symmetric
    ``A``::

        M(x)A = -(A x x^T + x x^T A)/|x|^5 - (A:xx) Id/|x|^5
                + 5 (A:xx) x x^T/|x|^7

    The result is symmetric and trace-free.

    Parameters
    ----------
    printed : bool
        If True return the abbreviated expression
        ``-2 A x x^T/|x|^5 + 5 (A:xx) x x^T/|x|^7`` that is sometimes quoted
        for this kernel.  It has the same homogeneity and decay but is
        neither symmetric nor trace-free, and is kept only for comparison.
    """
    x, r = _prep(x, eps)
    A = np.asarray(A, dtype=float)
    xx = x[..., :, None] * x[..., None, :]
    axx = np.einsum("...ij,...ij->...", A, xx)[..., None, None]
    r = r[..., None, None]
    if printed:
        return -2 * (A @ xx) / r**5 + 5 * axx * xx / r**7
    Axx = A @ xx
    return (-(Axx + np.swapaxes(Axx, -1, -2)) / r**5 - axx * np.eye(3) / r**5
            + 5 * axx * xx / r**7)


def stokes_pressure_monopole(x, f, eps: float = EPS_SING):
    """Pressure of the Stokeslet with force ``f``: f.x/(4 pi |x|^3)."""
    x, r = _prep(x, eps)
    return np.einsum("...i,...i->...", np.broadcast_to(f, x.shape), x) / (4 * np.pi * r**3)
