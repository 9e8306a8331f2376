"""Discrete elastoplasticity with random long-range fibers.

A lattice model of gradient plasticity with hardening, coupled to a
nonlocal p-growth energy on randomly sampled fiber links, solved as a
rate-independent evolution by incremental minimization.
"""

__version__ = "0.1.0"

from .energy import DiscreteModel, EnergyBreakdown, State, total_energy  # noqa: E402
from .errors import ConfigurationError, DomainError, QuadratureError, SolverError  # noqa: E402
from .fibers import FiberGraph, FiberParams, sample_fiber_graph  # noqa: E402
from .lattice import Box, Lattice, LatticeField, build_lattice  # noqa: E402
from .loads import LoadPath, load_profile, time_scaling  # noqa: E402
from .material import FrobeniusDissipation, MaterialTensors, Tensor4, validate_parameters  # noqa: E402
from .solver import SolverConfig, SolverContext, TimeGrid, solve_evolution  # noqa: E402

__all__ = [
    "Box",
    "ConfigurationError",
    "DiscreteModel",
    "DomainError",
    "EnergyBreakdown",
    "FiberGraph",
    "FiberParams",
    "FrobeniusDissipation",
    "Lattice",
    "LatticeField",
    "LoadPath",
    "MaterialTensors",
    "QuadratureError",
    "SolverConfig",
    "SolverContext",
    "SolverError",
    "State",
    "Tensor4",
    "TimeGrid",
    "build_lattice",
    "load_profile",
    "sample_fiber_graph",
    "solve_evolution",
    "time_scaling",
    "total_energy",
    "validate_parameters",
]
