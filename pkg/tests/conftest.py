"""Shared fixtures: fork network, single pipe, assembled systems."""

from pathlib import Path

import numpy as np
import pytest

from gasnet.dae import Scenario, Signal, assemble_dae, discretize
from gasnet.graph import NetworkGraph, Node, Pipe, prepare

REPO = Path(__file__).resolve().parents[1]
NETWORKS = REPO / "networks"

BAR = 1.0e5


def fork_network() -> NetworkGraph:
    """Two supplies feeding one demand through a single junction (node 04)."""
    nodes = [Node("01", "supply"), Node("10", "supply"), Node("06", "demand")] + [
        Node(f"{i:02d}", "interior") for i in (2, 3, 4, 5, 7, 8, 9)
    ]
    legs = [
        ("p1", "01", "02"), ("p2", "02", "03"), ("p3", "03", "04"),
        ("p4", "10", "09"), ("p5", "09", "08"), ("p6", "08", "07"),
        ("p7", "07", "04"), ("p8", "04", "05"), ("p9", "05", "06"),
    ]
    pipes = [Pipe(pid, a, b, 500.0, 0.5, 0.01) for pid, a, b in legs]
    return NetworkGraph(nodes=tuple(nodes), pipes=tuple(pipes))


def build_system(raw: NetworkGraph, mesh: float = 100.0, c: float | None = None):
    sg = prepare(raw)
    if c is None:
        grids, ops = discretize(sg, mesh)
    else:
        grids, ops = discretize(sg, mesh, c)
    return assemble_dae(sg, grids, ops), grids


def fork_scenario(p2_bar: float = 30.0, horizon: float = 200.0, tau: float = 2.0):
    return Scenario(
        supply_pressure={
            "01": Signal.constant(30.0 * BAR),
            "10": Signal.constant(p2_bar * BAR),
        },
        demand_flow={"06": Signal.constant(30.0)},
        horizon=horizon,
        tau=tau,
    )


@pytest.fixture(scope="session")
def fork_sys():
    sys_, _ = build_system(fork_network())
    return sys_


@pytest.fixture(scope="session")
def single_pipe_sys():
    nodes = (Node("s", "supply"), Node("d", "demand"))
    pipes = (Pipe("main", "s", "d", 10000.0, 0.5, 0.01),)
    sys_, _ = build_system(NetworkGraph(nodes=nodes, pipes=pipes), mesh=500.0)
    return sys_


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
