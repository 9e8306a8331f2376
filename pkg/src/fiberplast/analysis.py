"""Empirical verifiers for the discrete inequalities and convergence studies.

Where a sharp constant is cheap to obtain (small lattices) it is computed
from a dense generalized eigenproblem and random trials are checked against
it; otherwise the reported constant is the empirical maximum.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .continuum import QuadratureSpec, continuum_nonlocal_energy, wsp_seminorm, xps_seminorm
from .energy import DiscreteModel, State, nonlocal_energy, support_difference_matrices
from .errors import ConfigurationError
from .fibers import FiberParams, sample_fiber_graph
from .lattice import Box, Lattice, LatticeField, PiecewiseConstant, discrete_gradient, discretize
from .material import mandel_pairs, quadratic_form, sym_dim


@dataclass
class InequalityReport:
    name: str
    trials: int
    worst_ratio: float
    constant: float
    violations: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.violations

    def to_dict(self):
        return {**asdict(self), "ok": self.ok}

    def to_json(self):
        return json.dumps(self.to_dict(), default=float)


# -- lattice operators ------------------------------------------------------------


class _Operators:
    """Dense quadratic forms on a small lattice (component-major vectors)."""

    def __init__(self, lattice):
        D, E, _ = support_difference_matrices(lattice)
        d = lattice.d
        self.lattice, self.d, self.w = lattice, d, lattice.cell_volume
        self.N = lattice.num_nodes
        Id = sp.eye(d)
        lap_Z = sum(Di.T @ Di for Di in D)
        DQ = [E.T @ Di for Di in D]
        lap_Q = sum(Di.T @ Di for Di in DQ)
        self.scalar_lap_Z = lap_Z.toarray()
        self.grad_Z = sp.kron(Id, lap_Z).toarray()
        self.grad_Q = sp.kron(Id, lap_Q).toarray()
        self.S_Z = self._sym(D)
        self.S_Q = self._sym(DQ)

    def _sym(self, D):
        d = self.d
        s2 = math.sqrt(2.0)
        rows = []
        for a, b in mandel_pairs(d):
            blocks = [sp.csr_matrix(D[0].shape) for _ in range(d)]
            if a == b:
                blocks[a] = D[a]
            else:
                blocks[a] = D[b] / s2
                blocks[b] = D[a] / s2
            rows.append(blocks)
        S = sp.bmat(rows).toarray()
        return S.T @ S


def _random_fields(rng, lattice, n):
    """Component-major vector fields: Gaussian, smooth and single-node spikes, cycling."""
    N, d = lattice.num_nodes, lattice.d
    x = lattice.coords
    out = []
    for i in range(n):
        kind = i % 3
        if kind == 0:
            v = rng.standard_normal((N, d))
        elif kind == 1:
            k = rng.integers(1, 4, size=d)
            ph = rng.uniform(0, 2 * np.pi, size=d)
            base = np.prod(np.sin(np.pi * k * x + ph), axis=1)
            v = base[:, None] * rng.standard_normal(d)[None, :]
        else:
            v = np.zeros((N, d))
            v[rng.integers(N)] = rng.standard_normal(d)
        out.append(v.T.ravel())
    return out


def _max_gen_eig(Anum, Bden):
    """Largest ``lambda`` with ``A v = lambda B v``; ``inf`` if ``B`` is singular."""
    w = sla.eigvalsh(Bden)
    if w[0] <= 1e-12 * w[-1]:
        return math.inf
    return float(sla.eigh(Anum, Bden, eigvals_only=True)[-1])


def _min_gen_eig(Anum, Bden):
    return float(sla.eigh(Anum, Bden, eigvals_only=True)[0])


def verify_discrete_korn(lattice, trials=1000, seed=0, rel_tol=1e-10):
    """``sum_Q |grad u|^2 <= C sum_Q |sym grad u|^2`` for zero-extended ``u``."""
    ops = _Operators(lattice)
    C = _max_gen_eig(ops.grad_Q, ops.S_Q)
    rng = np.random.default_rng(seed)
    ratios, viol = [], []
    for v in _random_fields(rng, lattice, trials):
        lhs, rhs = v @ ops.grad_Q @ v, v @ ops.S_Q @ v
        if rhs <= 0 and lhs <= 0:
            continue
        r = lhs / rhs
        ratios.append(r)
        if lhs > C * rhs + rel_tol * max(lhs, 1.0):
            viol.append({"lhs": lhs, "rhs": rhs})
    half = max(1, len(ratios) // 2)
    return InequalityReport(
        "discrete_korn",
        trials,
        float(max(ratios)),
        C,
        viol,
        {"empirical_max_half": float(max(ratios[:half])), "empirical_max": float(max(ratios))},
    )


def poincare_constant(lattice, p):
    """Rigorous constant for the mixed-exponent Poincare inequality.

    Exact for ``p = 2``. For ``p > 2`` it interpolates between the sharp
    ``L^2`` and ``L^inf`` constants; for ``p < 2`` it uses Holder on the
    finite lattice.
    """
    ops = _Operators(lattice)
    w, N = ops.w, ops.N
    L = w * ops.scalar_lap_Z
    C2 = math.sqrt(_max_gen_eig(w * np.eye(N), L))
    if p == 2:
        return C2
    Cinf = math.sqrt(float(np.max(np.diag(np.linalg.inv(L)))))
    if p > 2:
        return Cinf ** (1.0 - 2.0 / p) * C2 ** (2.0 / p)
    return (w * N) ** (1.0 / p - 0.5) * C2


def _poincare_sides(lattice, u, p):
    """``(eps^d sum_Q |u|^p)^(1/p)`` and ``(eps^d sum_Z |grad u|^2)^(1/2)`` for ``u`` of shape ``(N, d)``."""
    w = lattice.cell_volume
    D, _, _ = support_difference_matrices(lattice)
    lhs = (w * np.sum(np.sqrt(np.sum(u * u, axis=1)) ** p)) ** (1.0 / p)
    rhs = math.sqrt(w * sum(float(np.sum((Di @ u) ** 2)) for Di in D))
    return lhs, rhs


def verify_poincare(lattice, p, trials=1000, seed=0, rel_tol=1e-10):
    """Mixed-exponent discrete Poincare inequality."""
    d = lattice.d
    if p < 1 or (d > 2 and p >= 2 * d / (d - 2)):
        raise ConfigurationError(f"Poincare exponent p = {p} outside [1, 2d/(d-2))")
    C = poincare_constant(lattice, p)
    rng = np.random.default_rng(seed)
    ratios, viol = [], []
    N = lattice.num_nodes
    for v in _random_fields(rng, lattice, trials):
        u = v.reshape(d, N).T
        lhs, rhs = _poincare_sides(lattice, u, p)
        if rhs == 0:
            continue
        ratios.append(lhs / rhs)
        if lhs > C * rhs * (1 + rel_tol):
            viol.append({"lhs": lhs, "rhs": rhs})
    return InequalityReport("discrete_poincare", trials, float(max(ratios)), C, viol, {"p": p})


def verify_korn_plasticity(lattice, material, trials=1000, seed=0, korn_constant=None, rel_tol=1e-10):
    """``eps^d sum_Q |grad u|^2 <= C E_loc(u, z)`` plus the analytic bound on ``C``."""
    model = DiscreteModel(lattice, material)
    ops = _Operators(lattice)
    nu, nz = model.nu, model.nz
    K = sp.bmat([[model.K_uu, model.K_uz], [model.K_zu, model.K_zz]]).toarray()
    G = np.zeros_like(K)
    G[:nu, :nu] = ops.w * ops.grad_Q
    C = _max_gen_eig(G, 0.5 * K)
    if korn_constant is None:
        korn_constant = _max_gen_eig(ops.grad_Q, ops.S_Q)
    bound = 2.0 * korn_constant / material.lam_A_min
    rng = np.random.default_rng(seed)
    ratios, viol = [], []
    for i in range(trials):
        y = rng.standard_normal(nu + nz) * (10.0 ** rng.uniform(-3, 3))
        if i % 4 == 3:
            # elastic strain removed where possible: z close to the symmetric gradient
            y[nu:] = np.linalg.lstsq(model.J.toarray(), model.S @ y[:nu], rcond=None)[0]
        lhs = float(y @ G @ y)
        rhs = 0.5 * float(y @ K @ y)
        if rhs <= 0:
            continue
        ratios.append(lhs / rhs)
        if lhs > C * rhs * (1 + rel_tol) + 1e-300:
            viol.append({"lhs": lhs, "rhs": rhs})
    if C > bound * (1 + 1e-10):
        viol.append({"constant": C, "analytic_bound": bound})
    return InequalityReport(
        "korn_plasticity", trials, float(max(ratios)), C, viol, {"analytic_bound": bound, "korn_constant": korn_constant}
    )


def korn_h1_constant(lattice):
    """Largest ``c_K`` with ``|sym grad h|^2 >= c_K |h|_{H^1}^2`` (sums over the support)."""
    ops = _Operators(lattice)
    H1 = np.eye(ops.N * ops.d) + ops.grad_Z
    return _min_gen_eig(ops.S_Z, H1)


def coercivity_constant(lattice, material):
    """``nu`` and the Korn factor ``c_K`` it is built from."""
    cK = korn_h1_constant(lattice)
    a, b = material.ellipticity()
    return min(a * cK, b), cK


def verify_coercivity(lattice, material, trials=1000, seed=0, rel_tol=1e-10):
    """``lA |sym grad h - w|^2 + lH |w|^2 >= nu (|h|_H1^2 + |w|_H1^2) - kappa |grad w|^2``."""
    model = DiscreteModel(lattice, material)
    ops = _Operators(lattice)
    nu_, cK = coercivity_constant(lattice, material)
    N, d, m = model.N, model.d, model.m
    w = model.w
    la, lh, kap = material.lam_A_min, material.lam_H_min, material.kappa
    Sv = model.S.toarray()
    J = model.J.toarray()
    Gz = model.Gz.toarray()
    rng = np.random.default_rng(seed)
    worst, viol = math.inf, []
    for _ in range(trials):
        h = rng.standard_normal(N * d) * (10.0 ** rng.uniform(-2, 2))
        z = rng.standard_normal(N * m) * (10.0 ** rng.uniform(-2, 2))
        e = Sv @ h - J @ z
        gz = Gz @ z
        lhs = w * (la * e @ e + lh * z @ z)
        rhs = nu_ * (w * (h @ h) + w * (h @ ops.grad_Z @ h) + w * (z @ z) + w * (gz @ gz)) - kap * w * (gz @ gz)
        scale = abs(lhs) + abs(rhs)
        worst = min(worst, (lhs - rhs) / max(scale, 1e-300))
        if lhs < rhs - rel_tol * scale:
            viol.append({"lhs": lhs, "rhs": rhs})
    return InequalityReport("coercivity", trials, float(worst), nu_, viol, {"c_K": cK})


def verify_fractional_korn(functions, p, s, box, quad=QuadratureSpec(), tol=1e-8):
    """Left inequality ``[u]_X <= [u]_W`` on every function; right constant estimated.

    ``functions`` maps names to callables. Functions with vanishing ``[u]_X``
    but positive ``[u]_W`` (rigid rotations) are excluded from the constant
    and listed in the details.
    """
    viol, ratios, excluded, values = [], [], [], {}
    for name, f in functions.items():
        X = xps_seminorm(f, p, s, box, quad)
        W = wsp_seminorm(f, p, s, box, quad)
        values[name] = (X, W)
        if X > W + tol:
            viol.append({"function": name, "X": X, "W": W})
        if X > 1e-8 * max(W, 1e-300):
            ratios.append(W / X)
        elif W > tol:
            excluded.append(name)
    C = float(max(ratios)) if ratios else math.nan
    return InequalityReport(
        "fractional_korn", len(functions), C, C, viol, {"excluded_rigid": excluded, "values": values}
    )


def verify_lindqvist(p, trials=100_000, dim=3, seed=0, rel_tol=1e-10):
    """``|w2|^p >= |w1|^p + p |w1|^(p-2) w1.(w2-w1) + |w2-w1|^p / (2^(p-1)-1)``; equality at ``p = 2``."""
    if p < 2:
        raise ValueError("the inequality needs p >= 2")
    rng = np.random.default_rng(seed)
    w1 = rng.standard_normal((trials, dim)) * 10.0 ** rng.uniform(-3, 3, size=(trials, 1))
    w2 = rng.standard_normal((trials, dim)) * 10.0 ** rng.uniform(-3, 3, size=(trials, 1))
    # near-coincident and anti-parallel pairs
    q = trials // 4
    w2[:q] = w1[:q] * (1 + 1e-3 * rng.standard_normal((q, 1)))
    w2[q : 2 * q] = -w1[q : 2 * q] * rng.uniform(0.1, 10, size=(q, 1))
    n1 = np.linalg.norm(w1, axis=1)
    n2 = np.linalg.norm(w2, axis=1)
    dw = w2 - w1
    lin = p * n1 ** (p - 2) * np.sum(w1 * dw, axis=1)
    rem = np.linalg.norm(dw, axis=1) ** p / (2 ** (p - 1) - 1)
    lhs = n2**p
    rhs = n1**p + lin + rem
    scale = n1**p + np.abs(lin) + rem + lhs
    gap = (lhs - rhs) / scale
    if p == 2:
        bad = np.nonzero(np.abs(gap) > rel_tol)[0]
    else:
        bad = np.nonzero(gap < -rel_tol)[0]
    viol = [{"index": int(i), "gap": float(gap[i])} for i in bad[:20]]
    return InequalityReport(
        f"lindqvist_p{p:g}", trials, float(np.min(gap)), float(np.max(np.abs(gap)) if p == 2 else np.min(gap)), viol,
        {"n_violations": int(len(bad))},
    )


def verify_eigenvalue_bounds(tensors, trials=10_000, seed=0, rel_tol=1e-10):
    """``lmin |v|^2 <= v : T : v <= lmax |v|^2`` for symmetric ``v``."""
    rng = np.random.default_rng(seed)
    viol, worst = [], math.inf
    for T in tensors:
        d = T.d
        M = rng.standard_normal((trials, d, d)) * 10.0 ** rng.uniform(-3, 3, size=(trials, 1, 1))
        V = 0.5 * (M + np.swapaxes(M, 1, 2))
        q = quadratic_form(T, V)
        n2 = np.sum(V * V, axis=(1, 2))
        lo, hi = T.lam_min * n2, T.lam_max * n2
        scale = np.abs(q) + np.abs(lo) + np.abs(hi)
        g = np.minimum(q - lo, hi - q) / scale
        worst = min(worst, float(np.min(g)))
        bad = np.nonzero(g < -rel_tol)[0]
        viol += [{"tensor_dim": d, "index": int(i)} for i in bad[:10]]
    return InequalityReport("eigenvalue_bounds", trials * len(tensors), worst, worst, viol)


def random_spd_tensor(d, rng, lo=0.5, hi=5.0):
    from .material import Tensor4

    k = sym_dim(d)
    Q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    return Tensor4(Q @ np.diag(rng.uniform(lo, hi, size=k)) @ Q.T)


# -- Monte Carlo homogenization ---------------------------------------------------------


@dataclass
class MonteCarloResult:
    eps: float
    n_seeds: int
    mean: float
    std_error: float
    ci99: tuple
    samples: np.ndarray = field(repr=False)


def monte_carlo_nonlocal(u, eps, n_seeds, s, p, box, seeds=None, fast=False, discretize_order=3):
    """Mean and normal 99% interval of ``E_V(discretize(u))`` over independent graphs."""
    lat = Lattice(box, eps)
    uf = discretize(u, lat, discretize_order)
    seeds = range(n_seeds) if seeds is None else seeds
    vals = []
    for sd in seeds:
        g = sample_fiber_graph(lat, FiberParams(lat.d, s, p, seed=sd), fast=fast)
        vals.append(nonlocal_energy(uf, g))
    vals = np.asarray(vals)
    n = len(vals)
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    z = 2.5758293035489004
    return MonteCarloResult(eps, n, mean, se, (mean - z * se, mean + z * se), vals)


def expected_nonlocal_energy(u, eps, s, p, box, discretize_order=3):
    """Exact expectation of ``E_V(discretize(u))`` over the edge law."""
    lat = Lattice(box, eps)
    uf = discretize(u, lat, discretize_order).flat()
    zc = lat.int_coords
    d = lat.d
    tot = 0.0
    for i in range(lat.num_nodes - 1):
        dz = (zc[i + 1 :] - zc[i]).astype(float)
        r = np.sqrt(np.sum(dz * dz, axis=1))
        prob = np.minimum(1.0, r ** (-(d + p * s)))
        n = dz / r[:, None]
        wv = np.sum((uf[i + 1 :] - uf[i]) * n, axis=1)
        tot += float(np.sum(prob * np.abs(wv) ** p))
    return 2.0 * eps ** (d - p * s) * tot


# -- evolution convergence -----------------------------------------------------------


@dataclass
class StudyConfig:
    """Everything needed to run one discrete evolution at a given ``eps`` and seed."""

    box: Box
    material: object
    dissipation: object
    load: object
    s: float
    p: float
    T: float = 1.0
    steps: int = 8
    solver: object = None
    z0: Optional[Callable] = None  # initial plastic strain; u starts at the matching equilibrium
    fibers: bool = True


@dataclass
class ConvergenceRecord:
    eps: float
    seed: int
    t: float
    dist_u: float
    dist_grad_u: float
    dist_z: float
    dist_grad_z: float
    norm_u: float
    energy: float


def eps_seed(seed, eps):
    """Independent graph seed for each lattice spacing."""
    return int(np.random.SeedSequence([int(seed), int(round(1.0 / eps))]).generate_state(1, dtype=np.uint64)[0] >> 1)


def run_study_case(cfg, eps, seed):
    """Solve one evolution; returns ``(model, trajectory, report)``."""
    from .solver import SolverContext, TimeGrid, find_stable_initial, solve_evolution

    lat = Lattice(cfg.box, eps)
    graph = None
    if cfg.fibers:
        graph = sample_fiber_graph(lat, FiberParams(lat.d, cfg.s, cfg.p, seed=eps_seed(seed, eps)))
    model = DiscreteModel(lat, cfg.material, graph, cfg.load, cfg.dissipation, p=cfg.p, s=cfg.s)
    ctx = SolverContext(model, cfg.solver)
    z_init = discretize(cfg.z0, lat) if cfg.z0 is not None else None
    y0 = find_stable_initial(ctx, z_init)
    traj, rep = solve_evolution(TimeGrid(cfg.T, cfg.steps), y0, ctx, check_initial=False)
    return model, traj, rep


def _fields(model, y):
    st = model.unpack(y)
    zc = LatticeField(model.lattice, model.z_nodes(y[model.nu :]).reshape(model.lattice.shape + (model.m,)))
    return st.u, discrete_gradient(st.u), zc, discrete_gradient(zc)


def _dist(coarse, fine):
    vals = PiecewiseConstant(coarse)(fine.lattice.coords)
    diff = vals.reshape(fine.flat().shape) - fine.flat()
    return math.sqrt(fine.lattice.cell_volume * float(np.sum(diff * diff)))


def convergence_study(eps_list, seeds, cfg, eps_ref, snapshots=None):
    """Distances of reconstructed solutions to a fine reference, per ``(eps, seed, t)``.

    Each seed gets its own reference solve at ``eps_ref``; graphs at different
    spacings are sampled independently. Snapshots default to all grid times
    after ``t = 0``.
    """
    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigurationError("eps list must be strictly decreasing")
    if not eps_ref < eps_list[-1]:
        raise ConfigurationError("reference spacing must be finer than every eps in the list")
    records = []
    for seed in seeds:
        mref, tref, _ = run_study_case(cfg, eps_ref, seed)
        t = tref.grid.t
        ks = range(1, len(t)) if snapshots is None else [int(np.argmin(np.abs(t - ts))) for ts in snapshots]
        ref_fields = {k: _fields(mref, tref.states[k]) for k in ks}
        for eps in eps_list:
            m, tr, _ = run_study_case(cfg, eps, seed)
            for k in ks:
                fc = _fields(m, tr.states[k])
                fr = ref_fields[k]
                dists = [_dist(a, b) for a, b in zip(fc, fr)]
                u = fc[0].flat()
                records.append(
                    ConvergenceRecord(
                        eps,
                        int(seed),
                        float(t[k]),
                        *dists,
                        math.sqrt(m.w * float(np.sum(u * u))),
                        tr.breakdowns[k].total,
                    )
                )
    return records


DISTANCES = ("dist_u", "dist_grad_u", "dist_z", "dist_grad_z")


def median_table(records):
    """``{(t, eps): {distance: median over seeds}}``."""
    groups = {}
    for r in records:
        groups.setdefault((r.t, r.eps), []).append(r)
    return {key: {name: float(np.median([getattr(r, name) for r in rs])) for name in DISTANCES} for key, rs in groups.items()}


def medians_decreasing(records):
    """``(ok, failures)``: medians strictly decreasing along decreasing ``eps`` at every snapshot."""
    tab = median_table(records)
    times = sorted({t for t, _ in tab})
    fails = []
    for t in times:
        eps = sorted({e for tt, e in tab if tt == t}, reverse=True)
        for name in DISTANCES:
            seq = [tab[(t, e)][name] for e in eps]
            if not all(b < a for a, b in zip(seq, seq[1:])):
                fails.append({"t": t, "distance": name, "medians": seq})
    return not fails, fails


def write_records_csv(records, path, header_comments=()):
    cols = ["eps", "seed", "t", *DISTANCES, "norm_u", "energy"]
    with open(path, "w") as fh:
        for c in header_comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(cols) + "\n")
        for r in records:
            vals = [getattr(r, c) for c in cols]
            fh.write(",".join(str(v) if isinstance(v, int) else "%.17g" % v for v in vals) + "\n")


# -- time regularity ------------------------------------------------------------------


def lipschitz_rates(trajectory, model):
    """Per-step rates ``|y_k - y_{k-1}| / dt`` in the discrete state norm."""
    t = trajectory.grid.t
    return np.array(
        [model.state_norm(b - a) / (t1 - t0) for a, b, t0, t1 in zip(trajectory.states, trajectory.states[1:], t, t[1:])]
    )


def lipschitz_estimate(trajectory, model):
    """Max over adjacent snapshots of the discrete state-norm difference over ``dt``."""
    rates = lipschitz_rates(trajectory, model)
    return float(np.max(rates)) if len(rates) else 0.0
