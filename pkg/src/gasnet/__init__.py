"""Transient simulation of passive gas pipeline networks."""

from .dae import DaeSystem, Scenario, Signal, assemble_dae, discretize
from .fvm import DEFAULT_C, assemble_operators, build_grid
from .graph import (
    GraphError,
    LongPipe,
    NetworkGraph,
    Node,
    Pipe,
    SmoothedGraph,
    count_extras,
    df_order,
    orient_dag,
    prepare,
    smooth,
    validate_and_normalize,
)
from .sim import (
    SolverConfig,
    SolverError,
    constant_state,
    implicit_euler_simulate,
    initial_state,
    steady_state,
)

__all__ = [
    "DEFAULT_C",
    "DaeSystem",
    "GraphError",
    "LongPipe",
    "NetworkGraph",
    "Node",
    "Pipe",
    "Scenario",
    "Signal",
    "SmoothedGraph",
    "SolverConfig",
    "SolverError",
    "constant_state",
    "assemble_dae",
    "assemble_operators",
    "build_grid",
    "count_extras",
    "df_order",
    "discretize",
    "implicit_euler_simulate",
    "initial_state",
    "orient_dag",
    "prepare",
    "smooth",
    "steady_state",
    "validate_and_normalize",
]
