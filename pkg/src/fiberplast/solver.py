"""Time-incremental minimization for the discrete rate-independent system.

Each step solves ``min_y E(t_k, y) + Psi(z - z_prev)``. The ``u`` block is
eliminated exactly (a factorized linear solve for ``p = 2``, damped Newton
otherwise), and the remaining problem in ``z`` is a smooth convex function
plus the separable dissipation, handled by proximal gradient steps with a
Barzilai-Borwein step size and monotone backtracking. An active-set Newton
polish on the smooth part speeds up the final convergence; it is accepted
only when it lowers the objective.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .energy import EnergyBreakdown, State
from .errors import ConfigurationError, SolverError
from .lattice import discretize


@dataclass(frozen=True)
class TimeGrid:
    T: float
    steps: int
    times: Optional[tuple] = None

    def __post_init__(self):
        if self.times is None:
            if not (self.T > 0 and self.steps >= 1):
                raise ConfigurationError("time grid needs T > 0 and at least one step")
            object.__setattr__(self, "times", tuple(np.linspace(0.0, self.T, self.steps + 1)))
        t = np.asarray(self.times, dtype=float)
        if len(t) != self.steps + 1 or t[0] != 0.0 or not np.all(np.diff(t) > 0) or abs(t[-1] - self.T) > 1e-14:
            raise ConfigurationError("time partition must satisfy 0 = t_0 < ... < t_N = T")

    @property
    def t(self):
        return np.asarray(self.times)


@dataclass
class SolverConfig:
    """Tolerances are relative to the problem scale ``|l(t)| + eps^d sigma_y sqrt(N)``."""

    tol: float = 1e-10
    max_iter: int = 20000
    newton_tol: float = 1e-13
    max_newton: int = 80
    polish_every: int = 8
    init: str = "previous"  # or "zero", "random"
    init_seed: int = 0
    init_scale: float = 1.0

    def __post_init__(self):
        if self.init not in ("previous", "zero", "random"):
            raise ConfigurationError(f"unknown inner initialization {self.init!r}")
        if not self.tol > 0:
            raise ConfigurationError("solver tolerance must be positive")


@dataclass
class StepInfo:
    iterations: int
    r_u: float
    r_z: float
    scale: float
    objective: float
    start_objective: float
    history: List[float] = field(default_factory=list)  # objective after each inner iteration


class SolverContext:
    """An isolated solve context: the assembled model plus solver caches."""

    def __init__(self, model, config=None):
        self.model = model
        self.config = config if config is not None else SolverConfig()
        m = model
        self._quadratic = m.p == 2.0
        if self._quadratic:
            Ku = m.K_uu + 2.0 * m.c_fiber * (m.P.T @ m.P) if m.P.shape[0] else m.K_uu
            self._Ku = sp.csc_matrix(Ku)
            self._lu = splu(self._Ku)
        # Gershgorin bound on the z Hessian, which dominates the reduced one
        self.L_z = float(np.max(np.abs(m.K_zz).sum(axis=1))) if m.nz else 1.0
        self._rng = np.random.default_rng(self.config.init_seed)

    # -- problem scale -------------------------------------------------------

    def scale(self, t):
        m = self.model
        ys = getattr(m.dissipation, "yield_stress", 1.0)
        return float(np.linalg.norm(m.load_vector(t)) + m.w * ys * np.sqrt(m.N))

    # -- u block ---------------------------------------------------------------

    def solve_u(self, t, z, u0=None):
        """Exact minimizer of ``E(t, ., z)``."""
        m = self.model
        rhs = m.load_vector(t) - m.K_uz @ z
        if self._quadratic:
            return self._lu.solve(rhs)
        u = np.zeros(m.nu) if u0 is None else u0.copy()
        y = np.concatenate([u, z])
        f = m.energy(t, y)
        tol = self.config.newton_tol * max(self.scale(t), 1e-300)
        for _ in range(self.config.max_newton):
            g = m.grad_u(t, y)
            gn = np.linalg.norm(g)
            if gn <= tol:
                break
            Hm = sp.csc_matrix(m.K_uu + m.hess_nonlocal(u))
            step = splu(Hm).solve(-g)
            slope = float(g @ step)
            if -slope <= 1e-14 * abs(f):
                # decrease below energy roundoff: full step if it reduces the gradient
                yt = np.concatenate([u + step, z])
                if not np.linalg.norm(m.grad_u(t, yt)) < gn:
                    break
                lam, ft = 1.0, m.energy(t, yt)
            else:
                lam = 1.0
                while True:
                    yt = np.concatenate([u + lam * step, z])
                    ft = m.energy(t, yt)
                    if ft <= f + 1e-4 * lam * slope:
                        break
                    lam *= 0.5
                    if lam < 1e-12:
                        raise SolverError("line search failed in the u block", diagnostics={"grad": gn, "t": t})
            u, y, f = u + lam * step, yt, ft
        if not np.all(np.isfinite(u)):
            raise SolverError("non-finite displacement in the u block")
        return u

    def _reduced_hessian_columns(self, t, u, cols):
        """Dense ``S[:, cols]`` of the reduced Hessian ``K_zz - K_zu Ku^-1 K_uz``."""
        m = self.model
        Kz = m.K_uz[:, cols].toarray()
        if self._quadratic:
            X = self._lu.solve(Kz)
        else:
            X = splu(sp.csc_matrix(m.K_uu + m.hess_nonlocal(u))).solve(Kz)
        return m.K_zz[:, cols].toarray() - m.K_zu @ X

    # -- z block ---------------------------------------------------------------

    def _eval(self, t, z, u0):
        m = self.model
        u = self.solve_u(t, z, u0)
        y = np.concatenate([u, z])
        F = m.energy(t, y)
        if not np.isfinite(F):
            raise SolverError("energy evaluated to NaN or infinity")
        return u, F, m.grad_z(t, y)

    def _prox(self, v, z_prev, alpha):
        return z_prev + self.model.prox_psi(v - z_prev, alpha)

    def _residual_z(self, z, g, z_prev):
        a = 1.0 / self.L_z
        return float(np.linalg.norm(z - self._prox(z - a * g, z_prev, a)) / a)

    def _polish(self, t, z, u, g, z_prev, F, obj):
        """Newton step on the smooth optimality system over the active nodes."""
        m = self.model
        dz = m.z_nodes(z - z_prev)
        nrm = np.sqrt(np.sum(dz * dz, axis=1))
        active = np.nonzero(nrm > 0)[0]
        if len(active) == 0:
            return None
        cols = np.concatenate([r * m.N + active for r in range(m.m)])
        S = self._reduced_hessian_columns(t, u, cols)[cols]
        ys = m.w * m.dissipation.yield_stress
        n = dz[active] / nrm[active, None]  # (A, m)
        # residual and curvature of the dissipation on active nodes
        R_nodes = m.z_nodes(g)[active] + ys * n
        Jd = np.zeros((len(cols), len(cols)))
        A = len(active)
        for ia in range(A):
            P = (np.eye(m.m) - np.outer(n[ia], n[ia])) * ys / nrm[active[ia]]
            idx = [r * A + ia for r in range(m.m)]
            Jd[np.ix_(idx, idx)] = P
        # cols are in (r, node) order, as is idx
        Rv = R_nodes.T.ravel()
        try:
            step = np.linalg.solve(S + Jd, -Rv)
        except np.linalg.LinAlgError:
            return None
        zt = z.copy()
        zt[cols] += step
        ut, Ft, gt = self._eval(t, zt, u)
        objt = Ft + m.psi(zt - z_prev)
        if objt <= obj:
            return zt, ut, Ft, gt, objt
        return None

    def step(self, t, y_prev):
        """``argmin E(t, y) + Psi(z - z_prev)`` starting from ``y_prev``."""
        m, cfg = self.model, self.config
        u_prev, z_prev = m.split(np.asarray(y_prev, dtype=float))
        scale = max(self.scale(t), 1e-300)
        tol = cfg.tol * scale
        start_obj = m.energy(t, y_prev)
        if cfg.init == "previous":
            z = z_prev.copy()
            u0 = u_prev
        elif cfg.init == "zero":
            z = np.zeros_like(z_prev)
            u0 = np.zeros_like(u_prev)
        else:
            amp = cfg.init_scale * max(np.max(np.abs(z_prev), initial=0.0), 1e-3)
            z = z_prev + amp * self._rng.standard_normal(z_prev.shape)
            u0 = u_prev + cfg.init_scale * max(np.max(np.abs(u_prev), initial=0.0), 1e-3) * self._rng.standard_normal(
                u_prev.shape
            )
        u, F, g = self._eval(t, z, u0)
        obj = F + m.psi(z - z_prev)
        history = [obj]
        alpha = 1.0 / self.L_z
        it = 0
        r_z = self._residual_z(z, g, z_prev)
        while r_z > tol:
            if it >= cfg.max_iter:
                raise SolverError(
                    f"z block did not converge in {cfg.max_iter} iterations",
                    diagnostics={"r_z": r_z, "tol": tol, "t": t},
                )
            it += 1
            if cfg.polish_every and it % cfg.polish_every == 0:
                res = self._polish(t, z, u, g, z_prev, F, obj)
                if res is not None:
                    zt, ut, Ft, gt, objt = res
                    rt = self._residual_z(zt, gt, z_prev)
                    if rt < r_z:
                        z, u, F, g, obj, r_z = zt, ut, Ft, gt, objt, rt
                        history.append(obj)
                        continue
            while True:
                zt = self._prox(z - alpha * g, z_prev, alpha)
                d = zt - z
                ut, Ft, gt = self._eval(t, zt, u)
                if Ft <= F + g @ d + (d @ d) / (2.0 * alpha) + 1e-15 * abs(F) or alpha <= 1.0 / self.L_z:
                    break
                alpha = max(0.5 * alpha, 1.0 / self.L_z)
            sdiff, gdiff = zt - z, gt - g
            z, u, F, g = zt, ut, Ft, gt
            obj = F + m.psi(z - z_prev)
            history.append(obj)
            r_z = self._residual_z(z, g, z_prev)
            sy = float(sdiff @ gdiff)
            alpha = float(sdiff @ sdiff) / sy if sy > 0 else 1.0 / self.L_z
            alpha = min(max(alpha, 1.0 / self.L_z), 1e6 / self.L_z)
        y = np.concatenate([u, z])
        r_u = float(np.linalg.norm(m.grad_u(t, y)))
        if r_u > max(tol, 1e3 * cfg.newton_tol * scale):
            raise SolverError("u block residual above tolerance", diagnostics={"r_u": r_u, "tol": tol, "t": t})
        self.last_info = StepInfo(it, r_u, r_z, scale, obj, start_obj, history)
        return y


# -- trajectories ------------------------------------------------------------------


@dataclass
class Trajectory:
    grid: TimeGrid
    states: List[np.ndarray]
    psi_increments: np.ndarray
    breakdowns: List[EnergyBreakdown]
    power: np.ndarray
    work_integral: np.ndarray
    inner_iters: List[int]

    @property
    def psi_cumulative(self):
        return np.cumsum(self.psi_increments)

    def state(self, k, model):
        return model.unpack(self.states[k])


@dataclass
class SolveReport:
    inner_iters: List[int]
    residuals: List[tuple]
    stability: Optional[object]
    balance_residual: float
    balance_relative: float
    wall_time: float
    status: str = "converged"


def _vec(y, model):
    return model.pack(y) if isinstance(y, State) else np.asarray(y, dtype=float)


def incremental_step(t_k, y_prev, context):
    """One incremental minimization step; returns the type it was given."""
    y = context.step(t_k, _vec(y_prev, context.model))
    return context.model.unpack(y) if isinstance(y_prev, State) else y


def find_stable_initial(context, z_init=None):
    """Minimizer of ``E(0, .) + Psi(. - z_init)`` (``z_init`` defaults to 0)."""
    m = context.model
    y0 = m.zero_vector()
    if z_init is not None:
        if hasattr(z_init, "lattice"):
            y0 = m.pack(State(m.lattice.zeros((m.d,)), z_init))
        else:
            y0[m.nu :] = np.asarray(z_init, dtype=float)
    return context.step(0.0, y0)


def solve_evolution(grid, y0, context, check_initial=True, n_competitors=50):
    """Sequential incremental minimization over ``grid`` starting at ``y0``."""
    m = context.model
    start = time.perf_counter()
    y0 = _vec(y0, m)
    stab = None
    if check_initial:
        stab = check_stability(context, 0.0, y0, n_competitors=n_competitors, seed=0)
        if not stab.stable:
            raise SolverError(
                "initial state is not stable at t = 0", step=0, diagnostics={"worst_margin": stab.worst_margin}
            )
    t = grid.t
    states = [y0]
    psi = [0.0]
    iters = [0]
    residuals = [(0.0, 0.0)]
    for k in range(1, len(t)):
        try:
            y = context.step(t[k], states[-1])
        except SolverError as err:
            err.step = k
            raise
        info = context.last_info
        psi.append(m.psi(y[m.nu :] - states[-1][m.nu :]))
        states.append(y)
        iters.append(info.iterations)
        residuals.append((info.r_u, info.r_z))
    breakdowns = [m.breakdown(tk, y) for tk, y in zip(t, states)]
    pw = np.array([m.power(tk, y) for tk, y in zip(t, states)])
    # trapezoid on each interval with one-sided derivatives at its ends
    right = np.array([m.power(t[k - 1], states[k - 1], +1) for k in range(1, len(t))])
    left = np.array([m.power(t[k], states[k], -1) for k in range(1, len(t))])
    work = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (right + left))])
    traj = Trajectory(grid, states, np.array(psi), breakdowns, pw, work, iters)
    bal = energy_balance_residual(traj, context)
    report = SolveReport(iters, residuals, stab, bal.absolute, bal.relative, time.perf_counter() - start)
    return traj, report


@dataclass
class BalanceResult:
    absolute: float
    relative: float
    per_step: np.ndarray
    scale: float


def energy_scale(breakdown):
    b = breakdown
    return abs(b.e_nonlocal) + abs(b.e_elastic) + abs(b.e_hardening) + abs(b.e_gradient) + abs(b.work)


def energy_balance_residual(trajectory, context=None):
    """``max_k |E_k + sum Psi_j - E_0 - trapezoid(power)|`` (absolute and relative)."""
    tr = trajectory
    E = np.array([b.total for b in tr.breakdowns])
    res = E + tr.psi_cumulative - E[0] - tr.work_integral
    scale = max(max(energy_scale(b) for b in tr.breakdowns), float(tr.psi_cumulative[-1]))
    ab = float(np.max(np.abs(res)))
    return BalanceResult(ab, ab / scale if scale > 0 else 0.0, res, scale)


def riemann_bounds(trajectory, context):
    """Two-sided incremental energy estimate.

    Returns ``(lower, middle, upper)`` arrays with
    ``middle_k = E_k + sum_{j<=k} Psi_j - E_0`` and ``lower``/``upper`` the
    Riemann-Stieltjes sums of the power evaluated at ``y_j`` and ``y_{j-1}``.
    """
    m = context.model
    t = trajectory.grid.t
    phis = np.array([m.load.phi(tk) if m.load is not None else 0.0 for tk in t])
    pair = np.array([-float(m.ell_g @ y[: m.nu]) for y in trajectory.states])
    dphi = np.diff(phis)
    lower = np.concatenate([[0.0], np.cumsum(dphi * pair[1:])])
    upper = np.concatenate([[0.0], np.cumsum(dphi * pair[:-1])])
    E = np.array([b.total for b in trajectory.breakdowns])
    middle = E + trajectory.psi_cumulative - E[0]
    return lower, middle, upper


# -- stability sampling ---------------------------------------------------------------


@dataclass
class StabilityReport:
    n_competitors: int
    worst_margin: float
    tolerance: float
    violations: list = field(default_factory=list)

    @property
    def stable(self):
        return not self.violations


def _smooth_field(lattice, rng, shape, modes=3):
    d = lattice.d
    k = rng.integers(1, modes + 1, size=d)
    ph = rng.uniform(0, 2 * np.pi, size=d)
    amp = rng.standard_normal(shape)
    lo = np.asarray(lattice.box.lower)
    L = np.asarray(lattice.box.upper) - lo

    def g(x):
        s = np.prod(np.sin(np.pi * k * (x - lo) / L + ph), axis=1)
        return s.reshape((-1,) + (1,) * len(shape)) * amp

    return discretize(g, lattice).flat()


def competitor_directions(context, t, y, n, rng):
    """Perturbation directions of several families, unnormalized."""
    m = context.model
    yy = np.asarray(y, dtype=float)
    dirs = []
    gu = m.grad_u(t, yy)
    gz = m.grad_z(t, yy)
    fam = 0
    while len(dirs) < n:
        kind = fam % 5
        fam += 1
        v = np.zeros_like(yy)
        if kind == 0:
            v = rng.standard_normal(yy.shape)
        elif kind == 1:
            v[: m.nu] = rng.standard_normal(m.nu)
        elif kind == 2:
            v[m.nu :] = rng.standard_normal(m.nz)
        elif kind == 3:
            su = _smooth_field(m.lattice, rng, (m.d,))
            v[: m.nu] = su.T.ravel()
            if m.nz:
                sz = _smooth_field(m.lattice, rng, (m.m,))
                v[m.nu :] = sz.T.ravel()
        else:
            v[: m.nu] = -gu
            v[m.nu :] = -gz * rng.uniform(0.0, 1.0)
        nv = np.linalg.norm(v)
        if nv > 0:
            dirs.append(v / nv)
    return dirs


def check_stability(context, t, y, n_competitors=200, radii=(1e-4, 1e-3, 1e-2, 1e-1, 1.0), seed=0, rel_tol=1e-8):
    """Sample competitors ``y + r v`` and test ``E(t, y) <= E(t, y~) + Psi(z~ - z) + tol``."""
    m = context.model
    y = _vec(y, m)
    rng = np.random.default_rng(seed)
    b = m.breakdown(t, y)
    E0 = b.total
    ystate = max(np.linalg.norm(y), 1.0)
    scale = max(energy_scale(b), context.scale(t) * ystate, 1e-300)
    tol = rel_tol * scale
    dirs = competitor_directions(context, t, y, n_competitors, rng)
    worst = np.inf
    viol = []
    for i, v in enumerate(dirs):
        r = radii[i % len(radii)] * ystate
        yt = y + r * v
        margin = m.energy(t, yt) + m.psi(yt[m.nu :] - y[m.nu :]) - E0
        worst = min(worst, margin)
        if margin < -tol:
            viol.append({"index": i, "radius": r, "margin": margin})
    return StabilityReport(len(dirs), float(worst), tol, viol)


def write_trajectory_csv(trajectory, path, balance=None, header_comments=()):
    cols = [
        "t",
        "e_nonlocal",
        "e_elastic",
        "e_hardening",
        "e_gradient",
        "work",
        "total",
        "psi_increment",
        "psi_cumulative",
        "balance_residual",
        "inner_iters",
    ]
    bal = balance.per_step if balance is not None else energy_balance_residual(trajectory).per_step
    cum = trajectory.psi_cumulative
    with open(path, "w") as fh:
        for c in header_comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(cols) + "\n")
        for k, tk in enumerate(trajectory.grid.t):
            b = trajectory.breakdowns[k]
            vals = [tk, b.e_nonlocal, b.e_elastic, b.e_hardening, b.e_gradient, b.work, b.total]
            vals += [trajectory.psi_increments[k], cum[k], bal[k]]
            fh.write(",".join("%.17g" % v for v in vals) + f",{trajectory.inner_iters[k]}\n")


def write_state_text(state, path, header_comments=()):
    """Node coordinates, ``u`` and ``z`` (row-major matrix entries) as text."""
    lat = state.lattice
    data = np.hstack([lat.coords, state.u.flat(), state.z.flat().reshape(lat.num_nodes, -1)])
    header = "\n".join(list(header_comments) + ["x_0..x_d-1, u_0..u_d-1, z_00..z_dd"])
    np.savetxt(path, data, fmt="%.17g", header=header)
