"""Discrete energies, dissipation, their first variations and the power.

Everything is assembled once per problem in :class:`DiscreteModel` as sparse
operators on flat state vectors ``y = (u, z)``:

* ``u`` is component major: ``u[c * N + n]`` is component ``c`` at node ``n``;
* ``z`` holds coordinates in the orthonormal plastic basis
  (:func:`fiberplast.material.plastic_basis`), also component major.

The local energy is a quadratic form ``y^T K y / 2``; the elastic term is
summed over the support of the forward differences (the lattice plus the
exterior layer below it), where the zero extension of ``u`` still produces a
strain.

The fiber energy is a double sum over ordered pairs, so every stored edge
counts twice. Since ``sigma / |x - y|^(d + p s) = eps^(-d - p s)`` for a
present edge, each edge contributes ``2 eps^(d - p s) |(u(x) - u(y)) . n|^p``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .lattice import LatticeField
from .material import FrobeniusDissipation, mandel_pairs, plastic_basis, plastic_mandel_basis, sym_dim


@dataclass
class EnergyBreakdown:
    e_nonlocal: float
    e_elastic: float
    e_hardening: float
    e_gradient: float
    work: float
    total: float

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict())


@dataclass
class State:
    """Displacement ``u`` (vector field) and plastic strain ``z`` (matrix field)."""

    u: LatticeField
    z: LatticeField

    @classmethod
    def zeros(cls, lattice):
        d = lattice.d
        return cls(lattice.zeros((d,)), lattice.zeros((d, d)))

    @property
    def lattice(self):
        return self.u.lattice


# -- sparse building blocks ----------------------------------------------------


def support_difference_matrices(lattice):
    """Sparse forward differences ``D_i`` from lattice nodes to the support grid.

    Rows index the padded grid (``n_i + 1`` per axis, position 0 exterior),
    columns the lattice nodes. Also returns the injection ``E`` of the lattice
    into the padded grid.
    """
    cache = lattice.__dict__.setdefault("_difference_ops", None)
    if cache is not None:
        return cache
    shape = np.array(lattice.shape)
    pshape = tuple(shape + 1)
    M = int(np.prod(pshape))
    N = lattice.num_nodes
    eps = lattice.eps
    pos = np.stack(np.unravel_index(np.arange(M), pshape), axis=1)
    j = pos - 1  # lattice index of the padded position

    def col_of(idx):
        ok = np.all((idx >= 0) & (idx < shape), axis=1)
        cols = np.full(len(idx), -1, dtype=np.int64)
        if np.any(ok):
            cols[ok] = np.ravel_multi_index(tuple(idx[ok].T), lattice.shape)
        return cols

    here = col_of(j)
    D = []
    for i in range(lattice.d):
        step = j.copy()
        step[:, i] += 1
        nxt = col_of(step)
        rows, cols, vals = [], [], []
        m = nxt >= 0
        rows.append(np.nonzero(m)[0])
        cols.append(nxt[m])
        vals.append(np.full(m.sum(), 1.0 / eps))
        m = here >= 0
        rows.append(np.nonzero(m)[0])
        cols.append(here[m])
        vals.append(np.full(m.sum(), -1.0 / eps))
        D.append(
            sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(M, N)
            )
        )
    m = here >= 0
    E = sp.csr_matrix((np.ones(m.sum()), (np.nonzero(m)[0], here[m])), shape=(M, N))
    coords = (j + lattice.offset) * eps
    out = (D, E, coords)
    lattice.__dict__["_difference_ops"] = out
    return out


def _block_diag_field(T, n):
    """Sparse block operator for a per-node ``(n, k, k)`` matrix field (component major)."""
    k = T.shape[1]
    return sp.bmat([[sp.diags(T[:, a, b]) for b in range(k)] for a in range(k)], format="csr")


class DiscreteModel:
    """Assembled discrete energy for one lattice, material, graph and load.

    ``graph=None`` means no fibers. ``p`` and ``s`` are taken from the graph
    parameters when a graph is given.
    """

    def __init__(self, lattice, material, graph=None, load=None, dissipation=None, p=2.0, s=0.5):
        self.lattice = lattice
        self.material = material
        self.graph = graph
        self.load = load
        self.dissipation = dissipation if dissipation is not None else FrobeniusDissipation(1.0)
        if graph is not None:
            p, s = graph.params.p, graph.params.s
        self.p = float(p)
        self.s = float(s)
        d = lattice.d
        if material.d != d:
            raise ValueError("material dimension does not match the lattice")
        self.d = d
        self.N = N = lattice.num_nodes
        self.w = lattice.cell_volume
        self.k = k = sym_dim(d)
        self.basis = plastic_basis(d)
        self.m = m = len(self.basis)
        self.nu = N * d
        self.nz = N * m

        D, E, sup_coords = support_difference_matrices(lattice)
        self.D, self.E = D, E
        self.M = M = E.shape[0]
        # Mandel symmetric gradient: (k*M) x (d*N), q-major rows
        blocks = [[None] * d for _ in range(k)]
        s2 = np.sqrt(2.0)
        for q, (a, b) in enumerate(mandel_pairs(d)):
            if a == b:
                blocks[q][a] = D[a]
            else:
                # sqrt2 * (d_b u_a + d_a u_b) / 2
                blocks[q][a] = D[b] / s2
                blocks[q][b] = D[a] / s2
        for q in range(k):
            for c in range(d):
                if blocks[q][c] is None:
                    blocks[q][c] = sp.csr_matrix((M, N))
        self.S = sp.bmat(blocks, format="csr")
        Bm = plastic_mandel_basis(d)  # (k, m)
        self.J = sp.bmat([[Bm[q, r] * E for r in range(m)] for q in range(k)], format="csr")
        self.Amat = _block_diag_field(material.A_at(sup_coords), M)
        Hm = material.H_at(lattice.coords)
        Hz = np.einsum("qr,nqs,st->nrt", Bm, Hm, Bm)
        self.Hmat = _block_diag_field(Hz, N)
        self.Gz = sp.bmat(
            [[D[i] if r == c else sp.csr_matrix((M, N)) for c in range(m)] for r in range(m) for i in range(d)],
            format="csr",
        )
        w = self.w
        SA = self.S.T @ self.Amat
        self.K_uu = (2.0 * w * (SA @ self.S)).tocsc()
        self.K_uz = (-2.0 * w * (SA @ self.J)).tocsc()
        self.K_zu = self.K_uz.T.tocsc()
        self.K_zz = (
            2.0 * w * (self.J.T @ self.Amat @ self.J + self.Hmat + material.kappa * (self.Gz.T @ self.Gz))
        ).tocsc()

        # fibers
        if graph is not None and graph.num_edges:
            ne = graph.num_edges
            rows = np.repeat(np.arange(ne), 2 * d)
            cols, vals = [], []
            a, b = graph.edges[:, 0], graph.edges[:, 1]
            cols = np.empty((ne, 2 * d), dtype=np.int64)
            vals = np.empty((ne, 2 * d))
            for c in range(d):
                cols[:, 2 * c] = c * N + a
                cols[:, 2 * c + 1] = c * N + b
                vals[:, 2 * c] = -graph.directions[:, c]
                vals[:, 2 * c + 1] = graph.directions[:, c]
            # w_e = (u(b) - u(a)) . n_e  with n_e pointing from a to b
            self.P = sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(ne, self.nu))
        else:
            self.P = sp.csr_matrix((0, self.nu))
        self.c_fiber = 2.0 * lattice.eps ** (d - self.p * self.s)

        # load
        if load is not None:
            g = load.discretized_profile(lattice).flat()  # (N, d)
            self.ell_g = w * g.T.ravel()
        else:
            self.ell_g = np.zeros(self.nu)

    # -- conversions -----------------------------------------------------------

    def pack(self, state):
        u = state.u.flat().T.ravel()
        zc = np.einsum("nij,rij->nr", state.z.flat(), self.basis)
        return np.concatenate([u, zc.T.ravel()])

    def unpack(self, y):
        lat = self.lattice
        u = y[: self.nu].reshape(self.d, self.N).T
        zc = y[self.nu :].reshape(self.m, self.N).T
        Z = np.einsum("nr,rij->nij", zc, self.basis)
        return State(
            LatticeField(lat, u.reshape(lat.shape + (self.d,))),
            LatticeField(lat, Z.reshape(lat.shape + (self.d, self.d))),
        )

    def split(self, y):
        return y[: self.nu], y[self.nu :]

    def zero_vector(self):
        return np.zeros(self.nu + self.nz)

    def z_nodes(self, z):
        """Plastic coordinates as ``(N, m)``."""
        return z.reshape(self.m, self.N).T

    # -- energies --------------------------------------------------------------

    def load_vector(self, t):
        if self.load is None:
            return np.zeros(self.nu)
        return self.load.phi(t) * self.ell_g

    def fiber_stretch(self, u):
        return self.P @ u

    def e_nonlocal(self, u):
        if self.P.shape[0] == 0:
            return 0.0
        return self.c_fiber * float(np.sum(np.abs(self.P @ u) ** self.p))

    def local_terms(self, u, z):
        e = self.S @ u - self.J @ z
        el = self.w * float(e @ (self.Amat @ e))
        hard = self.w * float(z @ (self.Hmat @ z))
        gz = self.Gz @ z
        grad = self.w * self.material.kappa * float(gz @ gz)
        return el, hard, grad

    def breakdown(self, t, y):
        u, z = self.split(y)
        ev = self.e_nonlocal(u)
        el, hard, grad = self.local_terms(u, z)
        work = float(self.load_vector(t) @ u)
        return EnergyBreakdown(ev, el, hard, grad, work, ev + el + hard + grad - work)

    def energy(self, t, y):
        return self.breakdown(t, y).total

    def grad_nonlocal(self, u):
        if self.P.shape[0] == 0:
            return np.zeros(self.nu)
        wv = self.P @ u
        return self.c_fiber * self.p * (self.P.T @ (np.abs(wv) ** (self.p - 2.0) * wv))

    def hess_nonlocal(self, u):
        if self.P.shape[0] == 0:
            return sp.csc_matrix((self.nu, self.nu))
        wv = self.P @ u
        coef = self.c_fiber * self.p * (self.p - 1.0) * np.abs(wv) ** (self.p - 2.0)
        return (self.P.T @ sp.diags(coef) @ self.P).tocsc()

    def grad_u(self, t, y):
        u, z = self.split(y)
        return self.K_uu @ u + self.K_uz @ z + self.grad_nonlocal(u) - self.load_vector(t)

    def grad_z(self, t, y):
        u, z = self.split(y)
        return self.K_zu @ u + self.K_zz @ z

    def power(self, t, y, side=0):
        """``d/dt E(t, y) = -eps^d sum f_dot(t) . u`` (one-sided at load kinks via ``side``)."""
        if self.load is None:
            return 0.0
        u, _ = self.split(y)
        return -self.load.dphi(t, side) * float(self.ell_g @ u)

    # -- dissipation -----------------------------------------------------------

    def psi(self, dz):
        """``eps^d sum rho(dz(x))`` for plastic coordinates ``dz``."""
        zc = self.z_nodes(dz)
        if isinstance(self.dissipation, FrobeniusDissipation):
            return self.w * self.dissipation.yield_stress * float(np.sum(np.sqrt(np.sum(zc * zc, axis=1))))
        Z = np.einsum("nr,rij->nij", zc, self.basis)
        return self.w * float(np.sum(self.dissipation.density(Z)))

    def prox_psi(self, v, alpha):
        """``argmin_w |w - v|^2 / 2 + alpha * Psi(w)`` on plastic coordinates."""
        zc = self.z_nodes(v)
        tau = alpha * self.w
        if isinstance(self.dissipation, FrobeniusDissipation):
            nrm = np.sqrt(np.sum(zc * zc, axis=1))
            thr = tau * self.dissipation.yield_stress
            scale = np.where(nrm > thr, 1.0 - thr / np.where(nrm > thr, nrm, 1.0), 0.0)
            out = zc * scale[:, None]
        else:
            Z = np.einsum("nr,rij->nij", zc, self.basis)
            out = np.einsum("nij,rij->nr", self.dissipation.prox(Z, tau), self.basis)
        return out.T.ravel()

    # -- norms -----------------------------------------------------------------

    def norm_terms(self, y):
        """Squared pieces of the discrete state norm.

        Returns ``(E_V(u)^(2/p), |grad u|^2, |z|^2, |grad z|^2)`` with
        ``eps^d`` weights and gradients over the full support.
        """
        u, z = self.split(y)
        gu = sum((sp.kron(sp.eye(self.d), Di) @ u) @ (sp.kron(sp.eye(self.d), Di) @ u) for Di in self.D)
        gz = self.Gz @ z
        ev = self.e_nonlocal(u)
        return (
            ev ** (2.0 / self.p) if ev > 0 else 0.0,
            self.w * float(gu),
            self.w * float(z @ z),
            self.w * float(gz @ gz),
        )

    def state_norm(self, y):
        return float(np.sqrt(sum(self.norm_terms(y))))


# -- field level API ------------------------------------------------------------


def _model(lattice, material, graph=None, load=None, dissipation=None):
    return DiscreteModel(lattice, material, graph, load, dissipation)


def _check_same(*fields):
    lat = fields[0].lattice
    for f in fields[1:]:
        if f.lattice != lat:
            raise ValueError("fields live on different lattices")
    return lat


def local_energy(u, z, material, breakdown=False):
    """Local elastoplastic energy; with ``breakdown`` also the three terms."""
    lat = _check_same(u, z)
    mod = _model(lat, material)
    y = mod.pack(State(u, z))
    terms = mod.local_terms(*mod.split(y))
    total = sum(terms)
    if breakdown:
        return total, dict(zip(("e_elastic", "e_hardening", "e_gradient"), terms))
    return total


def nonlocal_energy(u, graph, literal=False):
    """Fiber energy of ``u`` on ``graph`` (each edge counted for both orders).

    ``literal=True`` evaluates the weighted double sum with ``sigma`` and
    ``|x - y|`` explicitly instead of the cancelled prefactor.
    """
    lat = _check_same(u)
    if graph.lattice != lat:
        raise ValueError("graph and field live on different lattices")
    prm = graph.params
    if graph.num_edges == 0:
        return 0.0
    vals = u.flat()
    a, b = graph.edges[:, 0], graph.edges[:, 1]
    wv = np.sum((vals[b] - vals[a]) * graph.directions, axis=1)
    if not literal:
        return 2.0 * lat.eps ** (lat.d - prm.p * prm.s) * float(np.sum(np.abs(wv) ** prm.p))
    r = np.sqrt(np.sum((lat.coords[b] - lat.coords[a]) ** 2, axis=1))
    terms = graph.sigma * np.abs(wv) ** prm.p / r**prm.exponent
    return lat.eps ** (2 * lat.d) * 2.0 * float(np.sum(terms))


def load_work(t, u, load):
    """``eps^d sum f_eps(t, x) . u(x)`` with ``f_eps`` the cell averages of ``f(t)``."""
    lat = u.lattice
    g = load.discretized_profile(lat).flat()
    return lat.cell_volume * load.phi(t) * float(np.sum(g * u.flat()))


def total_energy(t, state, material, graph=None, load=None):
    mod = _model(state.lattice, material, graph, load)
    return mod.breakdown(t, mod.pack(state))


def dissipation(dz, law):
    """``eps^d sum rho(dz(x))``."""
    lat = dz.lattice
    return lat.cell_volume * float(np.sum(law.density(dz.flat())))


def grad_u_energy(t, state, material, graph=None, load=None):
    """First variation of the energy in ``u`` as a vector field.

    The pairing ``sum grad . v`` over nodes and components is the directional
    derivative in direction ``v``.
    """
    mod = _model(state.lattice, material, graph, load)
    g = mod.grad_u(t, mod.pack(state))
    lat = state.lattice
    return LatticeField(lat, g.reshape(mod.d, mod.N).T.reshape(lat.shape + (mod.d,)))


def grad_z_smooth(t, state, material, graph=None, load=None):
    """First variation of the smooth energy in ``z``, projected on the plastic space."""
    mod = _model(state.lattice, material, graph, load)
    g = mod.grad_z(t, mod.pack(state))
    zc = mod.z_nodes(g)
    Z = np.einsum("nr,rij->nij", zc, mod.basis)
    lat = state.lattice
    return LatticeField(lat, Z.reshape(lat.shape + (mod.d, mod.d)))


def power(t, state, load):
    """``-eps^d sum f_dot(t, x) . u(x)``."""
    lat = state.lattice
    g = load.discretized_profile(lat).flat()
    return -lat.cell_volume * load.dphi(t) * float(np.sum(g * state.u.flat()))
