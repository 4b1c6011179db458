"""Gas network graphs.

A raw network is a connected multigraph of nodes (supply, demand, interior)
and pipes with physical parameters.  Before discretization it is normalized
(every boundary node gets degree 1), smoothed (chains of degree-2 interior
nodes collapse into long pipes that keep per-segment data), oriented into a
DAG, and finally given a direction-following (DF) edge ordering in which
every node's incoming pipes precede its outgoing pipes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

SUPPLY = "supply"
DEMAND = "demand"
INTERIOR = "interior"

JUNCTION = "junction"

_KINDS = (SUPPLY, DEMAND, INTERIOR)


class GraphError(ValueError):
    """A network failed structural validation."""


@dataclass(frozen=True)
class Node:
    id: str
    kind: str

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise GraphError(f"node {self.id!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Pipe:
    id: str
    from_node: str
    to_node: str
    length: float
    diameter: float
    friction: float
    directed: bool = False

    @property
    def area(self) -> float:
        return math.pi * self.diameter**2 / 4.0


@dataclass(frozen=True)
class Segment:
    """One physical pipe inside a long pipe, in flow direction."""

    length: float
    diameter: float
    friction: float

    @property
    def area(self) -> float:
        return math.pi * self.diameter**2 / 4.0


@dataclass(frozen=True)
class LongPipe:
    """Edge of the smoothed graph, possibly several physical segments.

    ``kind`` is "supply" if the pipe leaves a supply node, "demand" if it
    enters a demand node, "junction" otherwise.  ``order`` is the DF order
    index (1-based), set by :func:`df_order`.
    """

    id: str
    from_node: str
    to_node: str
    segments: tuple[Segment, ...]
    kind: str
    directed: bool = True
    order: int | None = None

    @property
    def total_length(self) -> float:
        return sum(s.length for s in self.segments)

    def reversed(self) -> "LongPipe":
        return replace(
            self,
            from_node=self.to_node,
            to_node=self.from_node,
            segments=tuple(reversed(self.segments)),
        )


@dataclass(frozen=True)
class NetworkGraph:
    nodes: tuple[Node, ...]
    pipes: tuple[Pipe, ...]

    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def adjacency(self) -> dict[str, list[Pipe]]:
        adj: dict[str, list[Pipe]] = {n.id: [] for n in self.nodes}
        for p in self.pipes:
            adj[p.from_node].append(p)
            adj[p.to_node].append(p)
        return adj


@dataclass(frozen=True)
class SmoothedGraph:
    """Junction-only network: supply, demand and junction nodes plus long pipes."""

    nodes: tuple[Node, ...]
    long_pipes: tuple[LongPipe, ...]

    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def junctions(self) -> list[Node]:
        return [n for n in self.nodes if n.kind == INTERIOR]

    def incoming(self, node_id: str) -> list[LongPipe]:
        return [p for p in self.long_pipes if p.to_node == node_id]

    def outgoing(self, node_id: str) -> list[LongPipe]:
        return [p for p in self.long_pipes if p.from_node == node_id]


def _check_positive(pipe: Pipe) -> None:
    if pipe.length <= 0 or pipe.diameter <= 0 or pipe.friction <= 0:
        raise GraphError(
            f"pipe {pipe.id!r}: length, diameter and friction must be positive"
        )


def _check_connected(g: NetworkGraph) -> None:
    if not g.nodes:
        raise GraphError("empty graph")
    adj = g.adjacency()
    seen = {g.nodes[0].id}
    stack = [g.nodes[0].id]
    while stack:
        nid = stack.pop()
        for p in adj[nid]:
            for other in (p.from_node, p.to_node):
                if other not in seen:
                    seen.add(other)
                    stack.append(other)
    if len(seen) != len(g.nodes):
        missing = sorted(n.id for n in g.nodes if n.id not in seen)
        raise GraphError(f"graph is disconnected (unreached nodes: {missing})")


def validate_and_normalize(raw: NetworkGraph, stub_length: float = 1.0) -> NetworkGraph:
    """Validate the raw network and enforce degree-1 boundary nodes.

    A supply or demand node attached to more than one pipe gets a short stub
    pipe (default 1 m, diameter and friction copied from an adjacent pipe);
    the original node becomes interior and the new node carries the boundary
    role.  Boundary pipes are (re)directed away from supply and towards
    demand.  The operation is idempotent.
    """
    nodes = {n.id: n for n in raw.nodes}
    if len(nodes) != len(raw.nodes):
        raise GraphError("duplicate node ids")
    pipe_ids = {p.id for p in raw.pipes}
    if len(pipe_ids) != len(raw.pipes):
        raise GraphError("duplicate pipe ids")
    for p in raw.pipes:
        _check_positive(p)
        if p.from_node == p.to_node:
            raise GraphError(f"pipe {p.id!r} is a self-loop")
        if p.from_node not in nodes or p.to_node not in nodes:
            raise GraphError(f"pipe {p.id!r} references an unknown node")
    if not any(n.kind == SUPPLY for n in raw.nodes):
        raise GraphError("network has no supply node")
    if not any(n.kind == DEMAND for n in raw.nodes):
        raise GraphError("network has no demand node")
    _check_connected(raw)

    adj = raw.adjacency()
    new_nodes: dict[str, Node] = dict(nodes)
    new_pipes: list[Pipe] = list(raw.pipes)

    for node in sorted(raw.nodes, key=lambda n: n.id):
        if node.kind == INTERIOR:
            if len(adj[node.id]) == 1:
                raise GraphError(f"interior node {node.id!r} is a dead end")
            continue
        degree = len(adj[node.id])
        if degree == 1:
            continue
        # boundary node with several pipes: move the role onto a stub node
        template = min(adj[node.id], key=lambda p: p.id)
        stub_id = f"{node.id}.b"
        if stub_id in new_nodes:
            raise GraphError(f"cannot create stub node {stub_id!r}: id taken")
        new_nodes[node.id] = Node(node.id, INTERIOR)
        new_nodes[stub_id] = Node(stub_id, node.kind)
        if node.kind == SUPPLY:
            frm, to = stub_id, node.id
        else:
            frm, to = node.id, stub_id
        new_pipes.append(
            Pipe(
                id=f"{node.id}.stub",
                from_node=frm,
                to_node=to,
                length=stub_length,
                diameter=template.diameter,
                friction=template.friction,
                directed=True,
            )
        )

    # fix orientation of boundary pipes
    out: list[Pipe] = []
    for p in new_pipes:
        fk = new_nodes[p.from_node].kind
        tk = new_nodes[p.to_node].kind
        if tk == SUPPLY or fk == DEMAND:
            p = replace(p, from_node=p.to_node, to_node=p.from_node, directed=True)
        elif fk == SUPPLY or tk == DEMAND:
            p = replace(p, directed=True)
        out.append(p)

    return NetworkGraph(
        nodes=tuple(sorted(new_nodes.values(), key=lambda n: n.id)),
        pipes=tuple(sorted(out, key=lambda p: p.id)),
    )


def smooth(g: NetworkGraph) -> SmoothedGraph:
    """Collapse every maximal chain of degree-2 interior nodes into a long pipe.

    Segment data (length, diameter, friction) is preserved per original pipe
    in path order; the removed vertices become discretization points later.
    """
    nodes = g.node_map()
    adj = g.adjacency()
    keep = {
        n.id
        for n in g.nodes
        if n.kind != INTERIOR or len(adj[n.id]) >= 3
    }
    if not keep:
        raise GraphError("network has no boundary or junction node")

    consumed: set[str] = set()
    long_pipes: list[LongPipe] = []

    def walk(start: str, first: Pipe) -> None:
        """Follow a chain from a kept node through degree-2 interior nodes."""
        chain: list[Pipe] = []
        forward: list[bool] = []
        here, pipe = start, first
        while True:
            chain.append(pipe)
            fwd = pipe.from_node == here
            forward.append(fwd)
            nxt = pipe.to_node if fwd else pipe.from_node
            if nxt in keep:
                end = nxt
                break
            here = nxt
            (pipe,) = [p for p in adj[nxt] if p is not pipe]
        # direction constraints from pre-directed members
        want: set[bool] = set()
        for p, fwd in zip(chain, forward):
            if p.directed:
                want.add(fwd)
        if want == {True, False}:
            ids = [p.id for p in chain]
            raise GraphError(f"conflicting fixed directions in chain {ids}")
        if want == {False}:
            chain.reverse()
            forward = [not f for f in reversed(forward)]
            start, end = end, start
        segments = tuple(Segment(p.length, p.diameter, p.friction) for p in chain)
        if nodes[start].kind == SUPPLY:
            kind = SUPPLY
        elif nodes[end].kind == DEMAND:
            kind = DEMAND
        else:
            kind = JUNCTION
        long_pipes.append(
            LongPipe(
                id=min(p.id for p in chain),
                from_node=start,
                to_node=end,
                segments=segments,
                kind=kind,
                directed=bool(want),
            )
        )
        consumed.update(p.id for p in chain)

    for nid in sorted(keep):
        for pipe in sorted(adj[nid], key=lambda p: p.id):
            if pipe.id not in consumed:
                walk(nid, pipe)

    if len(consumed) != len(g.pipes):
        left = sorted(p.id for p in g.pipes if p.id not in consumed)
        raise GraphError(f"pipes not reachable from a kept node: {left}")

    kept_nodes = tuple(nodes[nid] for nid in sorted(keep))
    return SmoothedGraph(nodes=kept_nodes, long_pipes=tuple(sorted(long_pipes, key=lambda p: p.id)))


def _node_order(sg: SmoothedGraph, directed_only: bool) -> dict[str, int]:
    """Topological order of the nodes, Kahn-style, seeded at supply nodes.

    With ``directed_only`` the undirected long pipes are ignored (used before
    orientation); among ready nodes we prefer supply nodes in id order, then
    nodes adjacent to the already ordered set, so the order expands outwards
    from the supplies.
    """
    node_ids = [n.id for n in sg.nodes]
    kind = {n.id: n.kind for n in sg.nodes}
    indeg = {nid: 0 for nid in node_ids}
    succ: dict[str, list[str]] = {nid: [] for nid in node_ids}
    neighbors: dict[str, set[str]] = {nid: set() for nid in node_ids}
    for p in sg.long_pipes:
        neighbors[p.from_node].add(p.to_node)
        neighbors[p.to_node].add(p.from_node)
        if p.directed or not directed_only:
            indeg[p.to_node] += 1
            succ[p.from_node].append(p.to_node)

    ready = {nid for nid in node_ids if indeg[nid] == 0}
    placed: set[str] = set()
    order: dict[str, int] = {}
    while ready:
        supplies = sorted(n for n in ready if kind[n] == SUPPLY)
        if supplies:
            nxt = supplies[0]
        else:
            touched = sorted(n for n in ready if neighbors[n] & placed)
            nxt = touched[0] if touched else min(ready)
        ready.discard(nxt)
        order[nxt] = len(order)
        placed.add(nxt)
        for s in succ[nxt]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.add(s)
    if len(order) != len(node_ids):
        raise GraphError("directed pipes contain a cycle")
    return order


def orient_dag(sg: SmoothedGraph) -> SmoothedGraph:
    """Direct every undirected long pipe so the smoothed graph becomes a DAG.

    Nodes are topologically ordered using only the pre-directed pipes;
    undirected pipes are then pointed from the lower-order endpoint to the
    higher-order one.  Pre-fixed directions never change.
    """
    order = _node_order(sg, directed_only=True)
    pipes = []
    for p in sg.long_pipes:
        if not p.directed:
            if order[p.from_node] > order[p.to_node]:
                p = p.reversed()
            p = replace(p, directed=True)
        pipes.append(p)
    out = SmoothedGraph(nodes=sg.nodes, long_pipes=tuple(pipes))
    _node_order(out, directed_only=False)  # raises on a directed cycle
    return out


def df_order(sg: SmoothedGraph) -> SmoothedGraph:
    """Assign the direction-following ordering: pipes sorted by starting node.

    Pipes are ordered by the topological order of their start node, ties
    broken by pipe id, so at every node all incoming pipes get a strictly
    lower order index than all outgoing ones.
    """
    if not all(p.directed for p in sg.long_pipes):
        raise GraphError("df_order requires a fully directed graph")
    order = _node_order(sg, directed_only=False)
    ranked = sorted(sg.long_pipes, key=lambda p: (order[p.from_node], p.id))
    pipes = tuple(replace(p, order=i + 1) for i, p in enumerate(ranked))
    return SmoothedGraph(nodes=sg.nodes, long_pipes=pipes)


def count_extras(sg: SmoothedGraph) -> tuple[int, int]:
    """Extra flow variables and algebraic constraint counts (n_e, n_a).

    One extra terminal-flow unknown per supply and junction pipe; one
    mass-balance row plus (n_in - 1) pressure-equality rows per junction
    node.  Both counts equal n_s + n_j; the degenerate single-pipe network
    needs neither.
    """
    if len(sg.long_pipes) == 1:
        return 0, 0
    n_e = sum(1 for p in sg.long_pipes if p.kind in (SUPPLY, JUNCTION))
    n_a = sum(len(sg.incoming(n.id)) for n in sg.junctions())
    return n_e, n_a


def prepare(raw: NetworkGraph, stub_length: float = 1.0) -> SmoothedGraph:
    """Full pipeline: normalize, smooth, orient and DF-order a raw network."""
    return df_order(orient_dag(smooth(validate_and_normalize(raw, stub_length))))
