"""Max-flow / min-cut on capacitated s-t graphs (Dinic's algorithm).

Arcs are directed with an implicit reverse arc of zero residual capacity;
call :meth:`FlowGraph.add_edge` twice for symmetric capacity.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .errors import InvalidInputError

_EPS = 1e-12


class FlowGraph:
    """Adjacency-list residual network with float capacities."""

    def __init__(self, node_count: int):
        if node_count < 2:
            raise InvalidInputError("flow graph needs at least source and sink")
        self.node_count = node_count
        self.head: list[list[int]] = [[] for _ in range(node_count)]
        self.to: list[int] = []
        self.cap: list[float] = []

    def add_edge(self, u: int, v: int, cap: float) -> None:
        if not (0 <= u < self.node_count and 0 <= v < self.node_count):
            raise InvalidInputError(f"arc ({u}, {v}) outside node range")
        if not np.isfinite(cap) or cap < 0:
            raise InvalidInputError(f"arc capacity must be finite and >= 0, got {cap}")
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(float(cap))
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0.0)


def _bfs_levels(g: FlowGraph, s: int, t: int):
    level = [-1] * g.node_count
    level[s] = 0
    q = deque([s])
    while q:
        u = q.popleft()
        for a in g.head[u]:
            v = g.to[a]
            if level[v] < 0 and g.cap[a] > _EPS:
                level[v] = level[u] + 1
                q.append(v)
    return level if level[t] >= 0 else None


def _blocking_flow(g: FlowGraph, s: int, t: int, level, it):
    """Iterative DFS pushing flow along level-graph paths until blocked."""
    total = 0.0
    path: list[int] = []
    u = s
    while True:
        if u == t:
            bottleneck = min(g.cap[a] for a in path)
            for a in path:
                g.cap[a] -= bottleneck
                g.cap[a ^ 1] += bottleneck
            total += bottleneck
            path = []
            u = s
            continue
        arc = -1
        while it[u] < len(g.head[u]):
            a = g.head[u][it[u]]
            v = g.to[a]
            if g.cap[a] > _EPS and level[v] == level[u] + 1:
                arc = a
                break
            it[u] += 1
        if arc >= 0:
            path.append(arc)
            u = g.to[arc]
        else:
            level[u] = -1  # dead end within this phase
            if u == s:
                return total
            back = path.pop()
            u = g.to[back ^ 1]
            it[u] += 1


def max_flow_min_cut(g: FlowGraph, source: int, sink: int):
    """Maximum s-t flow and the source side of a minimum cut.

    Returns ``(flow_value, source_side)`` where ``source_side`` is a boolean
    array over nodes. The graph's residual capacities are consumed.
    """
    if source == sink:
        raise InvalidInputError("source and sink must differ")
    flow = 0.0
    while True:
        level = _bfs_levels(g, source, sink)
        if level is None:
            break
        it = [0] * g.node_count
        flow += _blocking_flow(g, source, sink, level, it)
    side = np.zeros(g.node_count, dtype=bool)
    side[source] = True
    q = deque([source])
    while q:
        u = q.popleft()
        for a in g.head[u]:
            v = g.to[a]
            if not side[v] and g.cap[a] > _EPS:
                side[v] = True
                q.append(v)
    return flow, side
