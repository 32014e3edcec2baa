"""Interaction graph of the simulated lattice merged with the 1D device.

At time ``t`` the vertices are the system rows ``1..t``, the bath and the sink;
simulated edges join horizontally and vertically adjacent system sites, device
edges form the ladder of the device (bath chain, bath–sink rungs, bath–system
rungs at the frontier row ``t``).  With the ``SURFACE_CODE`` layout the
ancillas of transition ``t`` are added as stars onto the plaquette corners
they couple to.
"""

from __future__ import annotations

import enum
from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass, field

from .core import QubitId, Register, bath, sink, system


class DeviceLayout(enum.Enum):
    LADDER = "ladder"
    SURFACE_CODE = "surface-code"


UNREACHABLE = float("inf")
"""Distance between vertices in different components."""


def _edge(u: QubitId, v: QubitId) -> frozenset:
    return frozenset((u, v))


@dataclass(frozen=True, eq=False)
class InteractionGraph:
    """Undirected graph with an all-pairs distance table built at construction."""

    vertices: frozenset
    edges: frozenset
    time: int
    sim_edges: frozenset = frozenset()
    dev_edges: frozenset = frozenset()
    _dist: dict = field(default_factory=dict, repr=False)
    _adj: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for e in self.edges:
            if not e <= self.vertices:
                raise ValueError("edge endpoint is not a vertex")
        adj = {v: set() for v in self.vertices}
        for e in self.edges:
            u, v = tuple(e)
            adj[u].add(v)
            adj[v].add(u)
        self._adj.update(adj)
        for s in self.vertices:
            self._dist[s] = _bfs(adj, s)

    def neighbors(self, v: QubitId) -> set:
        return set(self._adj[v])

    def distances_from(self, v: QubitId) -> dict:
        if v not in self.vertices:
            raise KeyError(f"{v} is not a vertex")
        return self._dist[v]

    def to_edge_list(self) -> str:
        """One ``u v`` pair per line, sorted."""
        lines = sorted(" ".join(sorted(str(q) for q in e)) for e in self.edges)
        return "\n".join(lines) + ("\n" if lines else "")

    @property
    def diameter(self) -> float:
        return max((d for row in self._dist.values() for d in row.values()), default=0)


def _bfs(adj: dict, s) -> dict:
    dist = {s: 0}
    queue = deque([s])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def parse_edge_list(text: str) -> set:
    return {_edge(QubitId.parse(a), QubitId.parse(b))
            for a, b in (ln.split() for ln in text.splitlines() if ln.strip())}


def build_interaction_graph(t: int, lx: int, ly: int,
                            device_layout: DeviceLayout | str = DeviceLayout.LADDER) -> InteractionGraph:
    """Merged simulated/device graph at row ``t``."""
    layout = DeviceLayout(device_layout)
    if lx < 2:
        raise ValueError("lx must be at least 2")
    if not 1 <= t <= ly:
        raise ValueError(f"t={t} outside [1, {ly}]")
    sim_v = {system(r, c) for r in range(1, t + 1) for c in range(lx)}
    sim_e = set()
    for r in range(1, t + 1):
        for c in range(lx):
            if c + 1 < lx:
                sim_e.add(_edge(system(r, c), system(r, c + 1)))
            if r + 1 <= t:
                sim_e.add(_edge(system(r, c), system(r + 1, c)))
    B = [bath(c) for c in range(lx)]
    K = [sink(t, c) for c in range(lx)]
    dev_v = set(B) | set(K)
    dev_e = set()
    for c in range(lx):
        if c + 1 < lx:
            dev_e.add(_edge(B[c], B[c + 1]))
        dev_e.add(_edge(B[c], K[c]))
        dev_e.add(_edge(B[c], system(t, c)))
    if layout is DeviceLayout.SURFACE_CODE:
        from .circuits import surface_code_transition

        tm = surface_code_transition(lx, t, ly)
        for g in tm.circuit.gates():
            anc = [q for q in g.qubits if q.register is Register.ANCILLA]
            if anc:
                (a,) = anc
                (other,) = [q for q in g.qubits if q != a]
                dev_v.add(a)
                dev_e.add(_edge(a, other))
        dev_v |= {q for e in dev_e for q in e}
    return InteractionGraph(frozenset(sim_v | dev_v), frozenset(sim_e | dev_e), t,
                            frozenset(sim_e), frozenset(dev_e))


def graph_distance(g: InteractionGraph, u: QubitId, v: QubitId) -> float:
    """Shortest-path length, or :data:`UNREACHABLE`."""
    if v not in g.vertices:
        raise KeyError(f"{v} is not a vertex")
    return g.distances_from(u).get(v, UNREACHABLE)


@dataclass(frozen=True)
class Ball:
    center: QubitId
    radius: int
    members: frozenset


def ball(g: InteractionGraph, center: QubitId, radius: int) -> Ball:
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    d = g.distances_from(center)
    return Ball(center, radius, frozenset(v for v, k in d.items() if k <= radius))


def grow_support(support: Iterable[QubitId], d: int, g: InteractionGraph) -> frozenset:
    """All vertices within distance ``d`` of ``support``."""
    if d < 0:
        raise ValueError("d must be nonnegative")
    out = set()
    for s in support:
        out |= ball(g, s, d).members
    return frozenset(out)


def transition_graph(tm, extra: Iterable[QubitId] = ()) -> InteractionGraph:
    """Graph whose edges are the two-qubit gate couplings of one transition.

    This is the device graph restricted to what a transition actually uses and
    is the natural metric for the light cone of its dual.
    """
    verts = set(tm.bath) | set(tm.system) | set(tm.sink) | set(extra)
    edges = {_edge(*g.qubits) for g in tm.circuit.gates() if len(g.qubits) == 2}
    return InteractionGraph(frozenset(verts), frozenset(edges), tm.row, frozenset(), frozenset(edges))
