"""Material law: elasticity and hardening tensors, dissipation density.

Fourth order tensors acting on symmetric matrices are stored as symmetric
matrices in the Mandel basis (normal components, then ``sqrt(2) * X_ij`` for
``i < j``), which is orthonormal for the Frobenius product. Extreme
eigenvalues are therefore the eigenvalues of that matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np

from .errors import ConfigurationError

_SQRT2 = math.sqrt(2.0)


def mandel_pairs(d):
    """Index pairs of the Mandel basis: diagonal first, then ``i < j``."""
    pairs = [(i, i) for i in range(d)]
    if d == 2:
        pairs.append((0, 1))
    elif d == 3:
        pairs += [(1, 2), (0, 2), (0, 1)]
    return pairs


def sym_dim(d):
    return d * (d + 1) // 2


def to_mandel(X):
    """Symmetric matrices ``(..., d, d)`` to Mandel vectors ``(..., k)``."""
    X = np.asarray(X, dtype=float)
    d = X.shape[-1]
    comps = []
    for i, j in mandel_pairs(d):
        if i == j:
            comps.append(X[..., i, i])
        else:
            comps.append(0.5 * _SQRT2 * (X[..., i, j] + X[..., j, i]))
    return np.stack(comps, axis=-1)


def from_mandel(v, d):
    v = np.asarray(v, dtype=float)
    X = np.zeros(v.shape[:-1] + (d, d))
    for q, (i, j) in enumerate(mandel_pairs(d)):
        if i == j:
            X[..., i, i] = v[..., q]
        else:
            X[..., i, j] = X[..., j, i] = v[..., q] / _SQRT2
    return X


def plastic_basis(d):
    """Frobenius orthonormal basis of the plastic strain space, shape ``(m, d, d)``.

    For ``d >= 2`` this is the space of symmetric trace free matrices. In one
    dimension that space is trivial, so the full 1x1 space is used instead and
    the one dimensional model carries scalar plasticity.
    """
    if d == 1:
        return np.ones((1, 1, 1))
    basis = []
    for i in range(d - 1):
        # Helmert-type orthonormal trace free diagonals
        diag = np.zeros(d)
        diag[: i + 1] = 1.0
        diag[i + 1] = -(i + 1)
        diag /= np.linalg.norm(diag)
        basis.append(np.diag(diag))
    for i in range(d):
        for j in range(i + 1, d):
            B = np.zeros((d, d))
            B[i, j] = B[j, i] = 1.0 / _SQRT2
            basis.append(B)
    return np.array(basis)


def plastic_mandel_basis(d):
    """Plastic basis as columns in Mandel coordinates, shape ``(k, m)``."""
    return to_mandel(plastic_basis(d)).T


def project_sym0(M):
    """Orthogonal projection onto symmetric trace free matrices."""
    M = np.asarray(M, dtype=float)
    d = M.shape[-1]
    S = 0.5 * (M + np.swapaxes(M, -1, -2))
    tr = np.trace(S, axis1=-2, axis2=-1)
    return S - (tr / d)[..., None, None] * np.eye(d)


def project_plastic(M):
    """Projection onto the plastic strain space (see :func:`plastic_basis`)."""
    M = np.asarray(M, dtype=float)
    if M.shape[-1] == 1:
        return M.copy()
    return project_sym0(M)


@dataclass(frozen=True)
class Tensor4:
    """Symmetric fourth order tensor on ``Sym(d)`` in Mandel form."""

    mandel: np.ndarray

    def __post_init__(self):
        m = np.array(self.mandel, dtype=float)
        k = m.shape[0]
        if m.shape != (k, k) or k not in (1, 3, 6):
            raise ConfigurationError("Mandel matrix must be 1x1, 3x3 or 6x6")
        if np.max(np.abs(m - m.T)) > 1e-12 * max(1.0, np.max(np.abs(m))):
            raise ConfigurationError("fourth order tensor must have major symmetry")
        object.__setattr__(self, "mandel", 0.5 * (m + m.T))

    @property
    def d(self):
        return {1: 1, 3: 2, 6: 3}[self.mandel.shape[0]]

    @classmethod
    def isotropic(cls, d, lame_lambda, lame_mu):
        """``T : X = 2 mu X + lambda tr(X) Id``."""
        k = sym_dim(d)
        m = np.zeros(k)
        m[:d] = 1.0
        return cls(2.0 * lame_mu * np.eye(k) + lame_lambda * np.outer(m, m))

    @classmethod
    def identity(cls, d, scale=1.0):
        return cls(scale * np.eye(sym_dim(d)))

    @classmethod
    def from_voigt(cls, d, C):
        """Stiffness in Voigt notation (engineering shear strains)."""
        C = np.asarray(C, dtype=float)
        k = sym_dim(d)
        if C.shape != (k, k):
            raise ConfigurationError(f"Voigt matrix must be {k}x{k} for d={d}")
        w = np.array([1.0 if i == j else _SQRT2 for i, j in mandel_pairs(d)])
        return cls(C * np.outer(w, w))

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.mandel)

    @property
    def lam_min(self):
        return float(self.eigenvalues[0])

    @property
    def lam_max(self):
        return float(self.eigenvalues[-1])


def _check_symmetric(X, tol=1e-12):
    X = np.asarray(X, dtype=float)
    scale = max(1.0, float(np.max(np.abs(X), initial=0.0)))
    if np.max(np.abs(X - np.swapaxes(X, -1, -2)), initial=0.0) > tol * scale:
        raise ValueError("argument must be a symmetric matrix")
    return X


def apply_tensor(T, X):
    """``T : X`` for symmetric ``X`` (batched over leading axes)."""
    X = _check_symmetric(X)
    d = X.shape[-1]
    return from_mandel(to_mandel(X) @ T.mandel.T, d)


def quadratic_form(T, X):
    """``X : T : X``."""
    X = _check_symmetric(X)
    v = to_mandel(X)
    return np.einsum("...i,ij,...j->...", v, T.mandel, v)


class DissipationLaw(Protocol):
    """A convex, positively 1-homogeneous density with an exact prox."""

    def density(self, v): ...

    def prox(self, v, tau): ...


@dataclass(frozen=True)
class FrobeniusDissipation:
    """``rho(v) = yield_stress * |v|_F``."""

    yield_stress: float

    def __post_init__(self):
        if not self.yield_stress > 0:
            raise ConfigurationError("yield stress must be positive")

    def density(self, v):
        v = np.asarray(v, dtype=float)
        return self.yield_stress * np.sqrt(np.sum(v * v, axis=(-2, -1)))

    def prox(self, v, tau):
        """``argmin_w |w - v|^2 / 2 + tau * rho(w)``; ties at the yield ball go to 0."""
        if not tau > 0:
            raise ValueError("prox parameter must be positive")
        v = np.asarray(v, dtype=float)
        nrm = np.sqrt(np.sum(v * v, axis=(-2, -1)))
        thr = tau * self.yield_stress
        scale = np.where(nrm > thr, 1.0 - thr / np.where(nrm > thr, nrm, 1.0), 0.0)
        return v * scale[..., None, None]


def dissipation_density(v, law):
    return law.density(v)


def prox_dissipation(v, tau, law):
    return law.prox(v, tau)


@dataclass(frozen=True)
class MaterialTensors:
    """Elasticity ``A``, hardening ``H`` and gradient coefficient ``kappa``.

    ``A_field`` and ``H_field`` optionally make the tensors space dependent:
    callables mapping ``(P, d)`` points to ``(P, k, k)`` Mandel matrices. The
    constant tensors then only serve for the reported eigenvalue bounds, and
    the fields must respect them.
    """

    A: Tensor4
    H: Tensor4
    kappa: float
    A_field: Optional[Callable] = field(default=None, compare=False)
    H_field: Optional[Callable] = field(default=None, compare=False)

    @property
    def d(self):
        return self.A.d

    @property
    def lam_A_min(self):
        return self.A.lam_min

    @property
    def lam_A_max(self):
        return self.A.lam_max

    @property
    def lam_H_min(self):
        return self.H.lam_min

    @property
    def lam_H_max(self):
        return self.H.lam_max

    def A_at(self, points):
        if self.A_field is None:
            return np.broadcast_to(self.A.mandel, (len(points),) + self.A.mandel.shape)
        return np.asarray(self.A_field(points), dtype=float)

    def H_at(self, points):
        if self.H_field is None:
            return np.broadcast_to(self.H.mandel, (len(points),) + self.H.mandel.shape)
        return np.asarray(self.H_field(points), dtype=float)

    def ellipticity(self):
        """The coercivity constant ``nu`` of the local energy.

        ``nu = min(lA lH cK / (lH + 2 lA), lH / 2, kappa)``, without the Korn
        factor ``cK`` (callers multiply the first entry by it).
        """
        la, lh = self.lam_A_min, self.lam_H_min
        return la * lh / (lh + 2.0 * la), min(lh / 2.0, self.kappa)


def validate_parameters(material, fibers=None, dissipation=None):
    """List every violated parameter relation; empty when all hold."""
    out = []
    if material.A.d != material.H.d:
        out.append("A and H must act on the same dimension")
    if not material.lam_A_min > 0:
        out.append(f"0 < lambda_A_min violated (lambda_A_min = {material.lam_A_min:.6g})")
    if not material.lam_H_min > 0:
        out.append(f"0 < lambda_H_min violated (lambda_H_min = {material.lam_H_min:.6g})")
    if not material.lam_A_min < material.lam_H_min:
        out.append(
            "0 < lambda_A_min < lambda_H_min violated "
            f"(lambda_A_min = {material.lam_A_min:.6g}, lambda_H_min = {material.lam_H_min:.6g})"
        )
    if not material.kappa > 0:
        out.append(f"kappa > 0 violated (kappa = {material.kappa!r})")
    if dissipation is not None and not getattr(dissipation, "yield_stress", 1.0) > 0:
        out.append("yield stress > 0 violated")
    if fibers is not None:
        from .fibers import fiber_param_violations

        out += fiber_param_violations(fibers.d, fibers.s, fibers.p)
        if fibers.d != material.d:
            out.append(f"fiber dimension {fibers.d} does not match material dimension {material.d}")
    return out
