"""Shared problem instances for the test suite."""

import numpy as np

from fiberplast.energy import DiscreteModel
from fiberplast.fibers import FiberParams, sample_fiber_graph
from fiberplast.lattice import Box, Lattice
from fiberplast.loads import LoadPath, load_profile, time_scaling
from fiberplast.material import FrobeniusDissipation, MaterialTensors, Tensor4
from fiberplast.solver import SolverConfig, SolverContext, TimeGrid, solve_evolution

PLASTIC_YIELD = 0.05
ELASTIC_YIELD = 1e6


def ramp_model(p=2.0, yield_stress=PLASTIC_YIELD, scaling="identity", eps=1 / 16, s=0.25, fibers=True):
    """1-D bar under a uniform body force ramped in time."""
    lat = Lattice(Box.unit(1), eps)
    mat = MaterialTensors(Tensor4.identity(1, 1.0), Tensor4.identity(1, 2.0), 0.05)
    load = LoadPath(load_profile("constant", 1, vector=[1.0]), time_scaling(scaling))
    graph = sample_fiber_graph(lat, FiberParams(1, s, p, seed=1)) if fibers else None
    return DiscreteModel(lat, mat, graph, load, FrobeniusDissipation(yield_stress), p=p, s=s)


def plate_model(p=3.0):
    """2-D plate with fibers under a bump load."""
    lat = Lattice(Box.unit(2), 1 / 8)
    mat = MaterialTensors(Tensor4.isotropic(2, 1.0, 1.0), Tensor4.identity(2, 5.0), 0.1)
    load = LoadPath(load_profile("bump", 2, vector=[20.0, 10.0]))
    graph = sample_fiber_graph(lat, FiberParams(2, 0.5, p, seed=1))
    return DiscreteModel(lat, mat, graph, load, FrobeniusDissipation(0.5))


def solve(model, steps, config=None, T=1.0):
    ctx = SolverContext(model, config)
    traj, rep = solve_evolution(TimeGrid(T, steps), model.zero_vector(), ctx)
    return ctx, traj, rep


def random_state(model, rng, scale=0.1):
    return scale * rng.standard_normal(model.nu + model.nz)
