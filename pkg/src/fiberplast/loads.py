"""Load paths ``f(t, x) = phi(t) g(x)`` from a small library of profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class TimeScaling:
    """``phi`` with derivative ``dphi(t, side)``.

    ``side = -1`` / ``+1`` request the left / right derivative at kinks, which
    interval-wise quadratures need; ``side = 0`` may return either.
    """

    name: str
    phi: Callable[[float], float]
    dphi_side: Callable[[float, int], float]
    lipschitz: float

    def dphi(self, t, side=0):
        return self.dphi_side(t, side)


def time_scaling(name, T=1.0, **params):
    """Named scalings; ``lipschitz`` bounds ``|phi'|`` on ``[0, T]``."""
    if name == "identity":
        return TimeScaling(name, lambda t: t, lambda t, side=0: 1.0, 1.0)
    if name == "quadratic":
        return TimeScaling(name, lambda t: t * t, lambda t, side=0: 2.0 * t, 2.0 * T)
    if name == "sine":
        w = float(params.get("omega", math.pi / (2.0 * T)))
        return TimeScaling(name, lambda t: math.sin(w * t), lambda t, side=0: w * math.cos(w * t), w)
    if name == "zero":
        return TimeScaling(name, lambda t: 0.0, lambda t, side=0: 0.0, 0.0)
    if name == "load_unload":
        # linear up to peak, then back down with the same slope
        tp = float(params.get("peak", 0.5 * T))
        return TimeScaling(
            name,
            lambda t: t if t <= tp else 2.0 * tp - t,
            lambda t, side=0: 1.0 if (t < tp or (t == tp and side < 0)) else -1.0,
            1.0,
        )
    raise ConfigurationError(f"unknown time scaling {name!r}")


def _bump(x, center, width):
    r2 = np.sum(((x - center) / width) ** 2, axis=1)
    out = np.zeros(len(x))
    inside = r2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


def load_profile(name, d, **params):
    """Spatial profiles ``g : (P, d) -> (P, d)``.

    ``constant``  : ``g = vector``
    ``axis_ramp`` : ``g = amplitude * x_axis * e_direction``
    ``bump``      : smooth compactly supported bump times ``vector``
    ``sine``      : ``amplitude * sin(pi x_axis / length) * e_direction``
    """
    if name == "constant":
        vec = np.asarray(params.get("vector", [1.0] * d), dtype=float)
        return lambda x: np.broadcast_to(vec, (len(x), d)).copy()
    if name == "axis_ramp":
        axis = int(params.get("axis", 0))
        direction = int(params.get("direction", 0))
        amp = float(params.get("amplitude", 1.0))

        def g(x):
            out = np.zeros((len(x), d))
            out[:, direction] = amp * x[:, axis]
            return out

        return g
    if name == "bump":
        vec = np.asarray(params.get("vector", [1.0] + [0.0] * (d - 1)), dtype=float)
        center = np.asarray(params.get("center", [0.5] * d), dtype=float)
        width = float(params.get("width", 0.5))
        return lambda x: _bump(np.atleast_2d(x), center, width)[:, None] * vec[None, :]
    if name == "sine":
        axis = int(params.get("axis", 0))
        direction = int(params.get("direction", 0))
        amp = float(params.get("amplitude", 1.0))
        length = float(params.get("length", 1.0))

        def g(x):
            out = np.zeros((len(x), d))
            out[:, direction] = amp * np.sin(np.pi * x[:, axis] / length)
            return out

        return g
    if name == "zero":
        return lambda x: np.zeros((len(x), d))
    raise ConfigurationError(f"unknown load profile {name!r}")


@dataclass
class LoadPath:
    """``f(t, x) = phi(t) g(x)`` with ``f_dot(t, x) = phi'(t) g(x)``."""

    profile: Callable
    scaling: TimeScaling = field(default_factory=lambda: time_scaling("identity"))

    @classmethod
    def zero(cls, d):
        return cls(load_profile("zero", d), time_scaling("zero"))

    def phi(self, t):
        return self.scaling.phi(t)

    def dphi(self, t, side=0):
        return self.scaling.dphi(t, side)

    def discretized_profile(self, lattice, order=3):
        from .lattice import discretize

        return discretize(self.profile, lattice, order)

    def lipschitz_constant(self, lattice):
        """``sup |phi'| * ||g_eps||_{L^2}`` on the lattice."""
        g = self.discretized_profile(lattice).flat()
        return self.scaling.lipschitz * math.sqrt(lattice.cell_volume * float(np.sum(g * g)))
