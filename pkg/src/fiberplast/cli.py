"""Command line entry point: ``fiberplast {simulate,fibers,verify,converge}``.

Exit codes: 0 success, 1 invariant violation, 2 configuration error,
3 solver or quadrature failure. Every output file starts with comment
lines carrying the tool version and the hash of the effective
configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import ConfigurationError, QuadratureError, SolverError

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
OUT_ENV = "FIBERPLAST_OUT"
SUITES = ("lindqvist", "eigenvalues", "korn", "poincare", "korn_plasticity", "coercivity", "fractional_korn")


def _header(cfg):
    return [f"fiberplast {__version__}", f"config_sha256 {cfg.hash}"]


def _out_dir(args, cfg):
    out = args.out or os.environ.get(OUT_ENV) or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path, cfg, payload):
    doc = {"tool": f"fiberplast {__version__}", "config_sha256": cfg.hash, **payload}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


def _graph(cfg, lattice, seed, threads):
    from .fibers import FiberParams, sample_fiber_graph

    if not cfg.fibers:
        return None
    return sample_fiber_graph(lattice, FiberParams(lattice.d, cfg.s, cfg.p, seed=seed), workers=threads)


def _solver_config(cfg):
    from .solver import SolverConfig

    return SolverConfig(**cfg.solver)


def cmd_simulate(cfg, args):
    from .energy import DiscreteModel
    from .solver import (
        SolverContext,
        TimeGrid,
        check_stability,
        energy_balance_residual,
        find_stable_initial,
        riemann_bounds,
        solve_evolution,
        write_trajectory_csv,
    )

    out = _out_dir(args, cfg)
    lat = cfg.lattice()
    graph = _graph(cfg, lat, cfg.seed, args.threads)
    model = DiscreteModel(lat, cfg.material, graph, cfg.load, cfg.dissipation, p=cfg.p, s=cfg.s)
    ctx = SolverContext(model, _solver_config(cfg))
    start = time.perf_counter()
    y0 = find_stable_initial(ctx)
    traj, rep = solve_evolution(TimeGrid(cfg.time["T"], cfg.time["steps"]), y0, ctx, check_initial=False)
    n = cfg.stability["competitors"]
    stab = [check_stability(ctx, t, y, n, seed=k) for k, (t, y) in enumerate(zip(traj.grid.t, traj.states))]
    lo, mid, up = riemann_bounds(traj, ctx)
    bal = energy_balance_residual(traj, ctx)
    tol = 1e-8 * max(bal.scale, 1e-300)
    failures = []
    if not all(s.stable for s in stab):
        failures.append({"invariant": "stability", "steps": [k for k, s in enumerate(stab) if not s.stable]})
    if np.any(lo > mid + tol) or np.any(mid > up + tol):
        failures.append({"invariant": "two-sided energy estimate"})
    if np.any(traj.psi_increments < 0):
        failures.append({"invariant": "nonnegative dissipation"})
    write_trajectory_csv(traj, os.path.join(out, "trajectory.csv"), bal, _header(cfg))
    _write_json(
        os.path.join(out, "report.json"),
        cfg,
        {
            "command": "simulate",
            "status": "ok" if not failures else "invariant_violation",
            "failures": failures,
            "inner_iters": rep.inner_iters,
            "residuals": [list(r) for r in rep.residuals],
            "balance_residual": bal.absolute,
            "balance_relative": bal.relative,
            "num_edges": 0 if graph is None else graph.num_edges,
            "stability_worst_margin": min(s.worst_margin for s in stab),
            "wall_time": time.perf_counter() - start,
        },
    )
    return EXIT_OK if not failures else EXIT_INVARIANT


def cmd_fibers(cfg, args):
    from .fibers import FiberParams, expected_fiber_count, sample_fiber_graph, write_graph

    out = _out_dir(args, cfg)
    lat = cfg.lattice()
    prm = FiberParams(lat.d, cfg.s, cfg.p, seed=cfg.seed)
    g = sample_fiber_graph(lat, prm, workers=args.threads)
    write_graph(g, os.path.join(out, "graph.txt"), _header(cfg))
    deg = np.bincount(g.degrees(), minlength=1)
    with open(os.path.join(out, "degree_histogram.csv"), "w") as fh:
        fh.writelines(f"# {h}\n" for h in _header(cfg))
        fh.write("degree,count\n")
        fh.writelines(f"{k},{c}\n" for k, c in enumerate(deg))
    lengths = g.lengths
    uniq, counts = np.unique(np.round(lengths, 12), return_counts=True) if len(lengths) else ([], [])
    with open(os.path.join(out, "length_histogram.csv"), "w") as fh:
        fh.writelines(f"# {h}\n" for h in _header(cfg))
        fh.write("length_lattice_units,count\n")
        fh.writelines("%.17g,%d\n" % (u, c) for u, c in zip(uniq, counts))
    _write_json(
        os.path.join(out, "fibers.json"),
        cfg,
        {"command": "fibers", "num_edges": g.num_edges, "expected_edges": expected_fiber_count(lat, prm)},
    )
    return EXIT_OK


def run_suites(cfg, suites, trials, lindqvist_trials):
    from .analysis import (
        random_spd_tensor,
        verify_coercivity,
        verify_discrete_korn,
        verify_eigenvalue_bounds,
        verify_fractional_korn,
        verify_korn_plasticity,
        verify_lindqvist,
        verify_poincare,
    )

    lat = cfg.lattice()
    reports = []
    korn = None
    for name in suites:
        if name == "lindqvist":
            reports += [verify_lindqvist(p, lindqvist_trials) for p in (2.0, 3.0, 4.0)]
        elif name == "eigenvalues":
            rng = np.random.default_rng(cfg.seed)
            tensors = [cfg.material.A, cfg.material.H] + [random_spd_tensor(d, rng) for d in (1, 2, 3)]
            reports.append(verify_eigenvalue_bounds(tensors, trials))
        elif name == "korn":
            korn = verify_discrete_korn(lat, trials)
            reports.append(korn)
        elif name == "poincare":
            reports += [verify_poincare(lat, p, trials) for p in (1.0, 2.0, cfg.p)]
        elif name == "korn_plasticity":
            kc = korn.constant if korn is not None else None
            reports.append(verify_korn_plasticity(lat, cfg.material, trials, korn_constant=kc))
        elif name == "coercivity":
            reports.append(verify_coercivity(lat, cfg.material, trials))
        elif name == "fractional_korn":
            reports.append(verify_fractional_korn(smooth_test_functions(lat.d), cfg.p, cfg.s, cfg.box))
    return reports


def smooth_test_functions(d):
    """Named smooth vector fields for the fractional seminorm comparison."""
    fs = {
        "affine": lambda x: x @ (np.eye(d) + 0.3 * np.triu(np.ones((d, d)), 1)),
        "sine": lambda x: np.sin(np.pi * x) * np.arange(1, d + 1),
        "bump": lambda x: (np.prod(x * (1 - x), axis=1)[:, None] * np.ones(d)),
    }
    if d == 2:
        fs["rotation"] = lambda x: np.stack([-x[:, 1], x[:, 0]], axis=1)
    return fs


def cmd_verify(cfg, args):
    out = _out_dir(args, cfg)
    suites = SUITES if args.suite == "all" else (args.suite,)
    reports = run_suites(cfg, suites, cfg.verify["trials"], cfg.verify["lindqvist_trials"])
    bad = [r.name for r in reports if not r.ok]
    _write_json(
        os.path.join(out, "inequalities.json"),
        cfg,
        {"command": "verify", "reports": [r.to_dict() for r in reports], "failed": bad},
    )
    return EXIT_OK if not bad else EXIT_INVARIANT


def cmd_converge(cfg, args):
    from .analysis import (
        StudyConfig,
        convergence_study,
        median_table,
        medians_decreasing,
        monte_carlo_nonlocal,
        write_records_csv,
    )
    from .continuum import continuum_nonlocal_energy
    from .lattice import Box

    out = _out_dir(args, cfg)
    amp = cfg.converge["z0_amplitude"]
    d = cfg.d
    z0 = None
    if amp:
        lo = np.asarray(cfg.box.lower)
        L = np.asarray(cfg.box.upper) - lo
        B = np.eye(d) if d == 1 else np.diag([1.0, -1.0] + [0.0] * (d - 2))

        def z0(x):
            return amp * np.prod(np.sin(np.pi * (x - lo) / L), axis=1)[:, None, None] * B

    study = StudyConfig(
        cfg.box,
        cfg.material,
        cfg.dissipation,
        cfg.load,
        cfg.s,
        cfg.p,
        cfg.time["T"],
        cfg.time["steps"],
        _solver_config(cfg),
        z0,
        cfg.fibers,
    )
    records = convergence_study(cfg.eps_list, cfg.seeds, study, cfg.converge["eps_ref"])
    write_records_csv(records, os.path.join(out, "convergence.csv"), _header(cfg))
    ok_med, fails = medians_decreasing(records)
    # Monte Carlo of the fiber energy for u(x) = x on a half-open box
    mc_box = Box(cfg.box.lower, cfg.box.upper, upper_closed=False)
    ident = lambda x: np.asarray(x, dtype=float)  # noqa: E731
    target = continuum_nonlocal_energy(ident, cfg.p, cfg.s, mc_box)
    mc = [monte_carlo_nonlocal(ident, e, cfg.converge["mc_seeds"], cfg.s, cfg.p, mc_box) for e in cfg.converge["mc_eps"]]
    with open(os.path.join(out, "monte_carlo.csv"), "w") as fh:
        fh.writelines(f"# {h}\n" for h in _header(cfg))
        fh.write("eps,n_seeds,mean,std_error,ci99_low,ci99_high,continuum,gap\n")
        for r in mc:
            vals = (r.eps, r.mean, r.std_error, r.ci99[0], r.ci99[1], target, r.mean - target)
            fh.write("%.17g,%d," % (vals[0], r.n_seeds) + ",".join("%.17g" % v for v in vals[1:]) + "\n")
    gaps = [abs(r.mean - target) for r in mc]
    ok_mc = all(b < a for a, b in zip(gaps, gaps[1:])) and gaps[-1] <= 3.0 * mc[-1].std_error
    tab = median_table(records)
    _write_json(
        os.path.join(out, "converge.json"),
        cfg,
        {
            "command": "converge",
            "medians_decreasing": ok_med,
            "median_failures": fails,
            "medians": [{"t": t, "eps": e, **v} for (t, e), v in sorted(tab.items())],
            "monte_carlo_ok": ok_mc,
            "continuum_value": target,
        },
    )
    return EXIT_OK if ok_med and ok_mc else EXIT_INVARIANT


COMMANDS = {"simulate": cmd_simulate, "fibers": cmd_fibers, "verify": cmd_verify, "converge": cmd_converge}


def build_parser():
    ap = argparse.ArgumentParser(prog="fiberplast", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"fiberplast {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
        p.add_argument("--out", metavar="DIR", help=f"output directory (overrides ${OUT_ENV} and the config)")
        p.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads for fiber sampling")
        p.add_argument("--seed", type=int, metavar="OVERRIDE", help="replace the configured seed(s)")
        if name == "verify":
            p.add_argument("--suite", choices=("all",) + SUITES, default="all")
    return ap


def main(argv=None):
    from .config import parse_config

    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be at least 1")
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        return COMMANDS[args.command](cfg, args)
    except ConfigurationError as err:
        json.dump({"status": "configuration_error", "errors": err.violations}, sys.stderr, indent=2)
        sys.stderr.write("\n")
        return EXIT_CONFIG
    except SolverError as err:
        json.dump(
            {"status": "solver_failure", "message": str(err), "step": err.step, "diagnostics": err.diagnostics},
            sys.stderr,
            indent=2,
            default=_json_default,
        )
        sys.stderr.write("\n")
        return EXIT_SOLVER
    except QuadratureError as err:
        json.dump({"status": "numerical_failure", "message": str(err)}, sys.stderr, indent=2)
        sys.stderr.write("\n")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
