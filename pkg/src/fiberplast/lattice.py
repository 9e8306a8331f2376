"""Discrete domain, lattice fields and the difference/transfer operators.

Conventions
-----------
* Nodes are the points of ``eps * Z^d`` inside an axis aligned box. They are
  stored on a regular grid of shape ``lattice.shape`` in C order, so the flat
  node index order coincides with the lexicographic order of the integer
  coordinates.
* Fields are zero outside the lattice. Forward differences at the last node of
  an axis therefore read a zero neighbour.
* Gradients use the row convention: component ``[..., c, i]`` is the
  difference of value component ``c`` along axis ``i``.
* The *support* of a forward difference is larger than the lattice: the
  exterior node ``x - eps e_i`` sees ``w(x) / eps``. ``support_gradient``
  returns values on the padded grid of shape ``n_i + 1`` per axis; position 0
  along an axis is the exterior lower layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DomainError, QuadratureError

_SNAP = 1e-9


@dataclass(frozen=True)
class Box:
    """Axis aligned box ``prod [lower_i, upper_i]``.

    With ``upper_closed=False`` the upper faces are excluded, i.e. the box is
    ``prod [lower_i, upper_i)``. For dyadic ``eps`` and integer bounds this
    makes ``eps^d * #nodes == volume`` exactly.
    """

    lower: tuple
    upper: tuple
    upper_closed: bool = True

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or not lo:
            raise ConfigurationError("box bounds must be nonempty and of equal length")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ConfigurationError("box must be nonempty: upper > lower on every axis")

    @classmethod
    def unit(cls, d, upper_closed=True):
        return cls((0.0,) * d, (1.0,) * d, upper_closed)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def contains(self, points, tol=1e-12):
        pts = np.atleast_2d(points)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        ok = np.all(pts >= lo - tol, axis=1)
        if self.upper_closed:
            ok &= np.all(pts <= hi + tol, axis=1)
        else:
            ok &= np.all(pts < hi, axis=1)
        return ok


class Lattice:
    """The grid ``Q_eps = Q ∩ eps Z^d`` for a box ``Q``."""

    def __init__(self, box, eps):
        eps = float(eps)
        if not (0.0 < eps < 1.0):
            raise ConfigurationError(f"lattice spacing must satisfy 0 < eps < 1, got {eps}")
        if box.dim > 3:
            raise ConfigurationError("only d <= 3 is supported")
        self.box = box
        self.eps = eps
        self.d = box.dim
        first, counts = [], []
        for lo, hi in zip(box.lower, box.upper):
            kmin = math.ceil(lo / eps - _SNAP)
            if box.upper_closed:
                kmax = math.floor(hi / eps + _SNAP)
            else:
                kmax = math.ceil(hi / eps - _SNAP) - 1
            first.append(kmin)
            counts.append(max(kmax - kmin + 1, 0))
        self.offset = np.array(first, dtype=np.int64)
        self.shape = tuple(int(c) for c in counts)
        if min(self.shape) < 1:
            raise ConfigurationError("lattice has no nodes inside the domain")

    def __repr__(self):
        return f"Lattice(d={self.d}, eps={self.eps!r}, shape={self.shape})"

    def __eq__(self, other):
        return isinstance(other, Lattice) and self.box == other.box and self.eps == other.eps

    def __hash__(self):
        return hash((self.box, self.eps))

    @property
    def num_nodes(self):
        return int(np.prod(self.shape))

    @property
    def cell_volume(self):
        return self.eps**self.d

    @property
    def padded_shape(self):
        return tuple(n + 1 for n in self.shape)

    @cached_property
    def int_coords(self):
        """Integer coordinates ``x / eps`` of all nodes, shape ``(N, d)``."""
        axes = [np.arange(n, dtype=np.int64) + k for n, k in zip(self.shape, self.offset)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def coords(self):
        return self.int_coords * self.eps

    def node_index(self, int_coord):
        """Flat index of the node with integer coordinate ``int_coord``, or -1."""
        k = np.asarray(int_coord, dtype=np.int64) - self.offset
        if np.any(k < 0) or np.any(k >= np.array(self.shape)):
            return -1
        return int(np.ravel_multi_index(tuple(k), self.shape))

    def zeros(self, value_shape=()):
        return LatticeField(self, np.zeros(self.shape + tuple(value_shape)))

    def field(self, func):
        """Sample ``func(points) -> (N, ...)`` at the nodes."""
        vals = np.asarray(func(self.coords), dtype=float)
        return LatticeField(self, vals.reshape(self.shape + vals.shape[1:]))


def build_lattice(domain, eps):
    """Lattice of ``eps``-grid points inside ``domain`` (a :class:`Box`)."""
    return Lattice(domain, eps)


@dataclass
class LatticeField:
    """Values on the nodes of a lattice, zero outside.

    ``values`` has shape ``lattice.shape + value_shape``.
    """

    lattice: Lattice
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[: self.lattice.d] != self.lattice.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match lattice {self.lattice.shape}"
            )

    @property
    def value_shape(self):
        return self.values.shape[self.lattice.d :]

    @property
    def kind(self):
        return {0: "scalar", 1: "vector", 2: "matrix"}.get(len(self.value_shape), "tensor")

    def flat(self):
        """Values as ``(N, *value_shape)`` in flat node order."""
        return self.values.reshape((self.lattice.num_nodes,) + self.value_shape)

    def at(self, int_coord):
        """Value at integer coordinate ``int_coord``; zero off the lattice."""
        idx = self.lattice.node_index(int_coord)
        if idx < 0:
            return np.zeros(self.value_shape)
        return self.flat()[idx].copy()

    def check_plastic(self, tol=1e-12):
        """Raise if matrix values are not symmetric (and trace free for d > 1)."""
        v = self.flat()
        if v.ndim != 3:
            raise ValueError("plastic strain fields are matrix valued")
        if np.max(np.abs(v - np.swapaxes(v, 1, 2)), initial=0.0) > tol:
            raise ValueError("plastic strain is not symmetric")
        if self.lattice.d > 1 and np.max(np.abs(np.trace(v, axis1=1, axis2=2)), initial=0.0) > tol:
            raise ValueError("plastic strain is not trace free")

    def __add__(self, other):
        return LatticeField(self.lattice, self.values + _vals(other))

    def __sub__(self, other):
        return LatticeField(self.lattice, self.values - _vals(other))

    def __mul__(self, a):
        return LatticeField(self.lattice, self.values * a)

    __rmul__ = __mul__

    def __neg__(self):
        return LatticeField(self.lattice, -self.values)


def _vals(f):
    return f.values if isinstance(f, LatticeField) else f


# -- difference operators ------------------------------------------------------


def _pad_zero(values, d):
    pad = [(1, 1)] * d + [(0, 0)] * (values.ndim - d)
    return np.pad(values, pad)


def support_forward_difference(values, eps, axis, d=None):
    """Forward difference along ``axis`` on the padded support grid.

    Output shape is ``n_i + 1`` per spatial axis; position ``0`` along any axis
    is the exterior node just below the lattice.
    """
    d = values.ndim if d is None else d
    p = _pad_zero(values, d)
    hi = [slice(0, -1)] * d
    lo = [slice(0, -1)] * d
    hi[axis] = slice(1, None)
    return (p[tuple(hi)] - p[tuple(lo)]) / eps


def support_gradient(values, eps, d):
    """Stack of forward differences (last axis = direction) on the padded grid."""
    return np.stack([support_forward_difference(values, eps, i, d) for i in range(d)], axis=-1)


def _interior(arr, d):
    return arr[(slice(1, None),) * d]


def forward_difference(f, axis):
    """``(f(x + eps e_axis) - f(x)) / eps`` at every node, with zero extension.

    ``axis`` is zero based.
    """
    lat = f.lattice
    if not 0 <= axis < lat.d:
        raise ValueError(f"axis must be in [0, {lat.d})")
    sup = support_forward_difference(f.values, lat.eps, axis, lat.d)
    return LatticeField(lat, _interior(sup, lat.d))


def discrete_gradient(f):
    """Discrete gradient; ``[..., c, i]`` is the difference of component c along i."""
    lat = f.lattice
    return LatticeField(lat, _interior(support_gradient(f.values, lat.eps, lat.d), lat.d))


def symmetric_gradient(f):
    """Symmetric part ``(G + G^T) / 2`` of the discrete gradient of a vector field."""
    g = discrete_gradient(f).values
    return LatticeField(f.lattice, 0.5 * (g + np.swapaxes(g, -1, -2)))


def lattice_integral(f):
    """``eps^d`` times the sum of node values."""
    lat = f.lattice
    return lat.cell_volume * np.sum(f.values, axis=tuple(range(lat.d)))


# -- transfer operators --------------------------------------------------------


def _cell_index(q, eps, k0, n):
    """Node index whose half open cell ``(x - eps/2, x + eps/2]`` contains ``q``.

    Points on a cell face belong to the cell below it. Indices are clamped to
    the lattice so boundary cells cover the whole box.
    """
    r = q / eps - 0.5
    rr = np.round(r)
    r = np.where(np.abs(r - rr) < _SNAP, rr, r)
    k = np.ceil(r).astype(np.int64) - k0
    return np.clip(k, 0, n - 1)


class PiecewiseConstant:
    """The reconstruction of a lattice field: constant on each lattice cell."""

    def __init__(self, field):
        self.field = field
        self.lattice = field.lattice

    def cell_of(self, points):
        lat = self.lattice
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != lat.d:
            pts = pts.reshape(-1, lat.d)
        if not np.all(lat.box.contains(pts)):
            raise DomainError("reconstruction queried outside the domain")
        idx = [_cell_index(pts[:, i], lat.eps, lat.offset[i], lat.shape[i]) for i in range(lat.d)]
        return np.ravel_multi_index(tuple(idx), lat.shape)

    def __call__(self, points):
        return self.field.flat()[self.cell_of(points)]

    def resample(self, target):
        """Values at the nodes of another lattice on the same box."""
        vals = self(target.coords)
        return LatticeField(target, vals.reshape(target.shape + self.field.value_shape))

    def integral(self):
        """Exact integral over the box of the piecewise constant function."""
        lat = self.lattice
        vols = np.ones(lat.shape)
        for i in range(lat.d):
            lengths = _clamped_cell_lengths(lat, i)
            shape = [1] * lat.d
            shape[i] = -1
            vols = vols * lengths.reshape(shape)
        vshape = self.field.value_shape
        w = vols.reshape(lat.shape + (1,) * len(vshape))
        return np.sum(self.field.values * w, axis=tuple(range(lat.d)))


def _cell_bounds(lat, axis):
    """Clipped cell intervals along ``axis`` (boundary cells clamped to the box)."""
    x = (np.arange(lat.shape[axis]) + lat.offset[axis]) * lat.eps
    lo = np.maximum(x - lat.eps / 2, lat.box.lower[axis])
    hi = np.minimum(x + lat.eps / 2, lat.box.upper[axis])
    return x, lo, hi


def _clamped_cell_lengths(lat, axis):
    _, lo, hi = _cell_bounds(lat, axis)
    lo[0] = lat.box.lower[axis]
    hi[-1] = lat.box.upper[axis]
    return hi - lo


def reconstruct(f):
    """Piecewise constant reconstruction of a lattice field."""
    return PiecewiseConstant(f)


def discretize(g, lattice, order=3):
    """Cell averages of ``g`` over the cells clipped to the box.

    ``g`` maps an ``(P, d)`` array of points to ``(P,)`` or ``(P, ...)`` values.
    The average is a tensor Gauss-Legendre rule with ``order`` points per axis.
    """
    lat = lattice
    t, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    pts_axes, wts_axes = [], []
    for i in range(lat.d):
        _, lo, hi = _cell_bounds(lat, i)
        pts_axes.append(lo[:, None] + (hi - lo)[:, None] * t[None, :])
        wts_axes.append(np.broadcast_to(w, (lat.shape[i], order)))
    # all (node, quad point) combinations
    node_mesh = np.meshgrid(*[np.arange(n) for n in lat.shape], indexing="ij")
    q_mesh = np.meshgrid(*[np.arange(order)] * lat.d, indexing="ij")
    nodes = np.stack([m.ravel() for m in node_mesh], axis=1)
    qs = np.stack([m.ravel() for m in q_mesh], axis=1)
    P = np.empty((len(nodes), len(qs), lat.d))
    W = np.ones((len(nodes), len(qs)))
    for i in range(lat.d):
        P[:, :, i] = pts_axes[i][nodes[:, i][:, None], qs[:, i][None, :]]
        W *= wts_axes[i][nodes[:, i][:, None], qs[:, i][None, :]]
    vals = np.asarray(g(P.reshape(-1, lat.d)), dtype=float)
    vshape = vals.shape[1:]
    vals = vals.reshape((len(nodes), len(qs)) + vshape)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("non-finite values while discretizing")
    Wn = (W / W.sum(axis=1, keepdims=True)).reshape(W.shape + (1,) * len(vshape))
    avg = np.sum(vals * Wn, axis=1)
    return LatticeField(lat, avg.reshape(lat.shape + vshape))
