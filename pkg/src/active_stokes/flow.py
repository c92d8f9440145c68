"""Uniform evaluator interface for velocity fields."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class FlowField:
    """A velocity field with optional pressure and velocity gradient.

    Each callable takes points of shape ``(3,)`` or ``(n, 3)``.  ``gradient``
    returns ``G[..., i, k] = d u_i / d x_k``.
    """

    velocity: Callable
    pressure: Optional[Callable] = None
    gradient: Optional[Callable] = None
    label: str = "flow"
    meta: Optional[dict] = None

    def __call__(self, x):
        return self.velocity(x)

    @property
    def has_pressure(self):
        return self.pressure is not None

    @property
    def has_gradient(self):
        return self.gradient is not None

    def strain(self, x):
        """Symmetric gradient D(u) at ``x``."""
        if self.gradient is None:
            raise AttributeError(f"flow {self.label!r} has no gradient evaluator")
        G = self.gradient(x)
        return 0.5 * (G + np.swapaxes(G, -1, -2))

    def __add__(self, other: "FlowField") -> "FlowField":
        def vel(x):
            return self.velocity(x) + other.velocity(x)

        pres = grad = None
        if self.has_pressure and other.has_pressure:
            def pres(x):
                return self.pressure(x) + other.pressure(x)
        if self.has_gradient and other.has_gradient:
            def grad(x):
                return self.gradient(x) + other.gradient(x)
        return FlowField(vel, pres, grad, label=f"{self.label}+{other.label}")

    def scaled(self, s: float) -> "FlowField":
        """The field multiplied by a constant (pressure and gradient too)."""
        pres = None if self.pressure is None else (lambda x: s * self.pressure(x))
        grad = None if self.gradient is None else (lambda x: s * self.gradient(x))
        return FlowField(lambda x: s * self.velocity(x), pres, grad, label=f"{s:g}*{self.label}")
