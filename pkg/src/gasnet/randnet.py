"""Random network generation for property tests and structure checks.

Networks are built junction-first: a random connected multigraph over the
junction nodes, boundary nodes attached until every junction connects at
least three pipes, and junction-junction edges optionally expanded into
chains of degree-2 interior nodes so smoothing has real work to do.
"""

from __future__ import annotations

import numpy as np

from .graph import DEMAND, INTERIOR, SUPPLY, NetworkGraph, Node, Pipe


def random_network(
    rng: np.random.Generator,
    n_junctions: int = 3,
    extra_edges: int = 2,
    chain_nodes: tuple[int, int] = (0, 3),
    length_range: tuple[float, float] = (100.0, 400.0),
) -> NetworkGraph:
    """Connected raw network with the requested number of junction nodes."""

    def geometry():
        return (
            float(rng.uniform(*length_range)),
            float(rng.uniform(0.3, 0.7)),
            float(rng.uniform(0.005, 0.02)),
        )

    nodes: list[Node] = []
    pipes: list[Pipe] = []
    serial = [0]

    def new_pipe(frm: str, to: str) -> None:
        length, diam, lam = geometry()
        serial[0] += 1
        pipes.append(Pipe(f"e{serial[0]:03d}", frm, to, length, diam, lam))

    def new_chain(frm: str, to: str) -> None:
        """Edge expanded through 0..k fresh degree-2 interior nodes."""
        k = int(rng.integers(chain_nodes[0], chain_nodes[1] + 1))
        prev = frm
        for _ in range(k):
            serial[0] += 1
            nid = f"v{serial[0]:03d}"
            nodes.append(Node(nid, INTERIOR))
            new_pipe(prev, nid)
            prev = nid
        new_pipe(prev, to)

    if n_junctions == 0:
        nodes.append(Node("s1", SUPPLY))
        nodes.append(Node("d1", DEMAND))
        new_chain("s1", "d1")
        return NetworkGraph(nodes=tuple(nodes), pipes=tuple(pipes))

    junctions = [f"j{i:02d}" for i in range(n_junctions)]
    nodes.extend(Node(j, INTERIOR) for j in junctions)
    for i in range(1, n_junctions):
        other = junctions[int(rng.integers(0, i))]
        new_chain(other, junctions[i])
    for _ in range(extra_edges):
        if n_junctions < 2:
            break
        i, j = rng.choice(n_junctions, size=2, replace=False)
        new_chain(junctions[int(i)], junctions[int(j)])

    degree = {j: 0 for j in junctions}
    for p in pipes:
        for nid in (p.from_node, p.to_node):
            if nid in degree:
                degree[nid] += 1

    n_bnd = 0

    def attach_boundary(junction: str, kind: str) -> None:
        nonlocal n_bnd
        n_bnd += 1
        nid = f"{'s' if kind == SUPPLY else 'd'}{n_bnd:02d}"
        nodes.append(Node(nid, kind))
        if kind == SUPPLY:
            new_chain(nid, junction)
        else:
            new_chain(junction, nid)
        degree[junction] += 1

    attach_boundary(junctions[0], SUPPLY)
    attach_boundary(junctions[-1], DEMAND)
    for j in junctions:
        while degree[j] < 3:
            kind = SUPPLY if rng.random() < 0.4 else DEMAND
            attach_boundary(j, kind)

    return NetworkGraph(nodes=tuple(nodes), pipes=tuple(pipes))
