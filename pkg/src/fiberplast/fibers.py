"""Random long-range fiber graph.

Two distinct lattice points ``z1, z2`` (in integer coordinates) are joined with
probability ``|z1 - z2|^(-d - p s)``, independently over unordered pairs. Every
Bernoulli draw is a pure function of ``(seed, z1, z2)`` through a counter based
hash, so a graph does not depend on enumeration order or on how the pairs are
split across workers.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def fiber_param_violations(d, s, p):
    out = []
    if not (isinstance(d, (int, np.integer)) and d >= 1):
        out.append("d must be a positive integer")
        return out
    if not 0.0 < s < 1.0:
        out.append(f"s in (0, 1) violated (s = {s!r})")
    if not p >= 2.0:
        out.append(f"p >= 2 violated (p = {p!r})")
    if not d > p * s:
        out.append(f"d > ps violated (d = {d}, p*s = {p * s:.6g})")
    return out


@dataclass(frozen=True)
class FiberParams:
    d: int
    s: float
    p: float
    seed: int = 0

    def __post_init__(self):
        v = fiber_param_violations(self.d, self.s, self.p)
        if v:
            raise ConfigurationError("; ".join(v), v)
        if not 0 <= int(self.seed) <= _MASK64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.d > 2:
            # the admissible upper bound for p is ambiguous when d > 2
            bound = 2.0 * self.d / (self.d + 2.0 * (self.s - 1.0))
            if self.p > bound:
                warnings.warn(
                    f"p = {self.p} exceeds 2d/(d+2(s-1)) = {bound:.6g} for d = {self.d}",
                    stacklevel=2,
                )

    @property
    def exponent(self):
        """``d + p s``."""
        return self.d + self.p * self.s


def connection_probability(z1, z2, params):
    """``|z1 - z2|^(-d - p s)`` for distinct integer points, else 0."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    r = np.sqrt(np.sum((z1 - z2) ** 2, axis=-1))
    with np.errstate(divide="ignore"):
        prob = np.where(r > 0, np.where(r > 0, r, 1.0) ** (-params.exponent), 0.0)
    prob = np.clip(prob, 0.0, 1.0)
    return float(prob) if prob.ndim == 0 else prob


def edge_weight(x, y, eps, params):
    """``(|x - y| / eps)^(d + p s)`` for a present edge."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.sqrt(np.sum((x - y) ** 2, axis=-1))
    if np.any(r == 0):
        raise ValueError("edge weight needs distinct endpoints")
    w = (r / eps) ** params.exponent
    return float(w) if np.ndim(w) == 0 else w


def _splitmix(x):
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def _canonical(za, zb):
    """Order each pair lexicographically by integer coordinates."""
    za = np.asarray(za, dtype=np.int64)
    zb = np.asarray(zb, dtype=np.int64)
    d = za.shape[1]
    swap = np.zeros(len(za), dtype=bool)
    decided = np.zeros(len(za), dtype=bool)
    for i in range(d):
        lt = za[:, i] < zb[:, i]
        gt = za[:, i] > zb[:, i]
        swap |= ~decided & gt
        decided |= lt | gt
    lo = np.where(swap[:, None], zb, za)
    hi = np.where(swap[:, None], za, zb)
    return lo, hi


def pair_uniforms(seed, za, zb):
    """Uniform(0, 1) draws keyed by ``(seed, {za, zb})``; symmetric in the pair."""
    lo, hi = _canonical(za, zb)
    with np.errstate(over="ignore"):
        h = np.full(len(lo), _splitmix(np.uint64(int(seed) & _MASK64)), dtype=np.uint64)
        for col in np.concatenate([lo, hi], axis=1).T:
            h = _splitmix(h ^ col.astype(np.uint64))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass
class FiberGraph:
    """Sampled fibers: unordered node pairs ``edges[:, 0] < edges[:, 1]``."""

    lattice: object
    params: FiberParams
    edges: np.ndarray
    sigma: np.ndarray
    directions: np.ndarray

    @property
    def seed(self):
        return self.params.seed

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def lengths(self):
        """Integer-unit lengths ``|x - y| / eps``."""
        z = self.lattice.int_coords
        return np.sqrt(np.sum((z[self.edges[:, 1]] - z[self.edges[:, 0]]) ** 2, axis=1))

    def edge_set(self):
        return set(map(tuple, self.edges.tolist()))

    def degrees(self):
        return np.bincount(self.edges.ravel(), minlength=self.lattice.num_nodes)

    @classmethod
    def empty(cls, lattice, params):
        return cls.from_edges(lattice, params, np.zeros((0, 2), dtype=np.int64))

    @classmethod
    def from_edges(cls, lattice, params, edges):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        edges = np.sort(edges, axis=1)
        if len(edges):
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self edges are not allowed")
            edges = np.unique(edges, axis=0)
        z = lattice.int_coords
        diff = (z[edges[:, 1]] - z[edges[:, 0]]).astype(float)
        r = np.sqrt(np.sum(diff**2, axis=1))
        sigma = r**params.exponent
        directions = diff / r[:, None] if len(edges) else np.zeros((0, lattice.d))
        return cls(lattice, params, edges, sigma, directions)


def _pairs_for_rows(n, rows):
    i_parts, j_parts = [], []
    for i in rows:
        j = np.arange(i + 1, n, dtype=np.int64)
        i_parts.append(np.full(len(j), i, dtype=np.int64))
        j_parts.append(j)
    if not i_parts:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(i_parts), np.concatenate(j_parts)


def _sample_rows(lattice, params, rows):
    i, j = _pairs_for_rows(lattice.num_nodes, rows)
    z = lattice.int_coords
    prob = connection_probability(z[i], z[j], params)
    keep = pair_uniforms(params.seed, z[i], z[j]) < prob
    return np.stack([i[keep], j[keep]], axis=1)


def sample_fiber_graph(lattice, params, fast=False, workers=1, block=256):
    """Sample the fiber graph on ``lattice``.

    The default path draws every unordered pair from the counter based hash.
    ``fast=True`` instead draws a binomial count per offset class and places
    the edges uniformly; it has the same law but a different realisation.
    """
    if params.d != lattice.d:
        raise ConfigurationError("fiber dimension does not match the lattice")
    if fast:
        return _sample_by_offset_class(lattice, params)
    n = lattice.num_nodes
    chunks = [range(a, min(a + block, n)) for a in range(0, n, block)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda r: _sample_rows(lattice, params, r), chunks))
    else:
        parts = [_sample_rows(lattice, params, r) for r in chunks]
    edges = np.concatenate(parts) if parts else np.zeros((0, 2), np.int64)
    return FiberGraph.from_edges(lattice, params, edges)


def _offset_classes(shape):
    """Offsets ``delta`` (lexicographically positive) that fit inside ``shape``."""
    rng = [np.arange(-(n - 1), n) for n in shape]
    mesh = np.meshgrid(*rng, indexing="ij")
    deltas = np.stack([m.ravel() for m in mesh], axis=1)
    first = np.argmax(deltas != 0, axis=1)
    lead = deltas[np.arange(len(deltas)), first]
    return deltas[lead > 0]


def _sample_by_offset_class(lattice, params):
    rng = np.random.default_rng([int(params.seed), 0x5EED_F1BE])
    shape = np.array(lattice.shape)
    parts = []
    for delta in _offset_classes(lattice.shape):
        lo = np.maximum(0, -delta)
        hi = shape - np.maximum(0, delta)
        counts = hi - lo
        n_pairs = int(np.prod(counts))
        if n_pairs <= 0:
            continue
        prob = float(np.sqrt(np.sum(delta.astype(float) ** 2)) ** (-params.exponent))
        k = int(rng.binomial(n_pairs, min(prob, 1.0)))
        if k == 0:
            continue
        pick = rng.choice(n_pairs, size=k, replace=False)
        base = np.stack(np.unravel_index(pick, tuple(counts)), axis=1) + lo
        a = np.ravel_multi_index(tuple(base.T), lattice.shape)
        b = np.ravel_multi_index(tuple((base + delta).T), lattice.shape)
        parts.append(np.stack([a, b], axis=1))
    edges = np.concatenate(parts) if parts else np.zeros((0, 2), np.int64)
    return FiberGraph.from_edges(lattice, params, edges)


def expected_fiber_count(lattice, params):
    """Sum of connection probabilities over unordered pairs of distinct nodes."""
    shape = np.array(lattice.shape)
    total = 0.0
    for delta in _offset_classes(lattice.shape):
        n_pairs = float(np.prod(shape - np.abs(delta)))
        if n_pairs > 0:
            total += n_pairs * connection_probability(delta, np.zeros_like(delta), params)
    return total


def distance_classes(lattice):
    """Map integer distance ``|delta|`` to the number of unordered pairs at it."""
    shape = np.array(lattice.shape)
    out = {}
    for delta in _offset_classes(lattice.shape):
        n_pairs = int(np.prod(shape - np.abs(delta)))
        if n_pairs > 0:
            r = math.sqrt(float(np.sum(delta.astype(float) ** 2)))
            key = round(r, 12)
            out[key] = out.get(key, 0) + n_pairs
    return dict(sorted(out.items()))


# -- text format ---------------------------------------------------------------

_FORMAT_TAG = "fiberplast-graph 1"


def write_graph(graph, path, header_comments=()):
    """Write the line based graph format.

    Header: ``eps d s p seed nodes`` keys plus the box, one ``key value`` per
    line; then ``edges <count>`` and one ``i j sigma`` line per edge.
    """
    lat = graph.lattice
    prm = graph.params
    lines = [f"# {c}" for c in header_comments]
    lines += [
        _FORMAT_TAG,
        f"eps {lat.eps:.17g}",
        f"d {lat.d}",
        f"s {prm.s:.17g}",
        f"p {prm.p:.17g}",
        f"seed {int(prm.seed)}",
        f"nodes {lat.num_nodes}",
        "lower " + " ".join(f"{v:.17g}" for v in lat.box.lower),
        "upper " + " ".join(f"{v:.17g}" for v in lat.box.upper),
        f"upper_closed {int(lat.box.upper_closed)}",
        f"edges {graph.num_edges}",
    ]
    lines += [f"{i} {j} {s:.17g}" for (i, j), s in zip(graph.edges.tolist(), graph.sigma.tolist())]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_graph(path):
    """Inverse of :func:`write_graph`; rebuilds the lattice from the header."""
    from .lattice import Box, Lattice

    with open(path) as fh:
        raw = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    if raw[0] != _FORMAT_TAG:
        raise ValueError("not a fiber graph file")
    head = {}
    pos = 1
    while True:
        key, _, val = raw[pos].partition(" ")
        head[key] = val
        pos += 1
        if key == "edges":
            break
    box = Box(
        tuple(float(v) for v in head["lower"].split()),
        tuple(float(v) for v in head["upper"].split()),
        bool(int(head["upper_closed"])),
    )
    lat = Lattice(box, float(head["eps"]))
    params = FiberParams(int(head["d"]), float(head["s"]), float(head["p"]), int(head["seed"]))
    if lat.num_nodes != int(head["nodes"]):
        raise ValueError("node count in header does not match the lattice")
    n_edges = int(head["edges"])
    body = raw[pos : pos + n_edges]
    edges = np.array([[int(t) for t in ln.split()[:2]] for ln in body], dtype=np.int64).reshape(-1, 2)
    sigma = np.array([float(ln.split()[2]) for ln in body])
    graph = FiberGraph.from_edges(lat, params, edges)
    order = np.lexsort((edges[:, 1], edges[:, 0])) if n_edges else np.zeros(0, int)
    graph.sigma = sigma[order]
    return graph
