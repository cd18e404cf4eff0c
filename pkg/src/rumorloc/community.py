"""Louvain clustering and the gateway graph built on top of it."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGatewayError, ValidationError
from .graph import NodeId, SocialGraph

ClusterId = int


@dataclass(frozen=True)
class Partition:
    cluster_of: dict[NodeId, ClusterId]
    clusters: dict[ClusterId, frozenset]
    modularity: float

    @classmethod
    def from_labels(cls, g: SocialGraph, labels: dict[NodeId, object]) -> "Partition":
        """Canonical ids: clusters numbered by their smallest member."""
        groups: dict[object, list[NodeId]] = {}
        for v in g.nodes.tolist():
            groups.setdefault(labels[v], []).append(v)
        ordered = sorted(groups.values(), key=min)
        cluster_of = {}
        clusters = {}
        for cid, members in enumerate(ordered):
            clusters[cid] = frozenset(members)
            for v in members:
                cluster_of[v] = cid
        return cls(cluster_of, clusters, modularity(g, cluster_of))

    def __len__(self):
        return len(self.clusters)


def modularity(g: SocialGraph, cluster_of: dict[NodeId, ClusterId]) -> float:
    """Newman modularity with unit edge weights."""
    m = g.n_edges
    if m == 0:
        return 0.0
    internal: dict[ClusterId, int] = {}
    degree: dict[ClusterId, int] = {}
    for u, v, _ in g.edges:
        cu, cv = cluster_of[u], cluster_of[v]
        if cu == cv:
            internal[cu] = internal.get(cu, 0) + 1
        degree[cu] = degree.get(cu, 0) + 1
        degree[cv] = degree.get(cv, 0) + 1
    q = 0.0
    for c in sorted(degree):
        q += internal.get(c, 0) / m - (degree[c] / (2.0 * m)) ** 2
    return q


def _one_level(adj, k, m2, rng):
    """Local-move phase on a weighted level graph.  Returns community labels."""
    n = len(adj)
    comm = list(range(n))
    tot = list(k)
    improved = False
    moved = True
    order = rng.permutation(n).tolist()
    while moved:
        moved = False
        for i in order:
            ci = comm[i]
            ki = k[i]
            links: dict[int, float] = {}
            for j, w in adj[i].items():
                cj = comm[j]
                links[cj] = links.get(cj, 0.0) + w
            tot[ci] -= ki
            best = ci
            best_gain = links.get(ci, 0.0) - tot[ci] * ki / m2
            for c in sorted(links):
                gain = links[c] - tot[c] * ki / m2
                if gain > best_gain + 1e-12:
                    best, best_gain = c, gain
            tot[best] += ki
            if best != ci:
                comm[i] = best
                moved = True
                improved = True
    return comm, improved


def louvain_partition(g: SocialGraph, seed: int = 0) -> Partition:
    """Greedy modularity optimisation by local moves and aggregation.

    Edges count with weight 1 regardless of their delay.  Node visiting
    order at each level comes from ``seed``, so the result is reproducible.
    """
    if g.n_nodes == 0:
        raise ValidationError("louvain_partition needs a nonempty graph")
    rng = np.random.default_rng(seed)
    n = g.n_nodes
    adj: list[dict[int, float]] = [dict() for _ in range(n)]
    for u, v, _ in g.edges:
        iu, iv = g.index(u), g.index(v)
        adj[iu][iv] = 1.0
        adj[iv][iu] = 1.0
    loops = [0.0] * n
    member = list(range(n))  # original index -> current level node
    m2 = 2.0 * g.n_edges
    if m2 == 0:
        return Partition.from_labels(g, {int(v): i for i, v in enumerate(g.nodes)})

    while True:
        k = [sum(a.values()) + loops[i] for i, a in enumerate(adj)]
        comm, improved = _one_level(adj, k, m2, rng)
        if not improved:
            break
        relabel = {c: r for r, c in enumerate(sorted(set(comm)))}
        comm = [relabel[c] for c in comm]
        member = [comm[x] for x in member]
        nc = len(relabel)
        new_adj: list[dict[int, float]] = [dict() for _ in range(nc)]
        new_loops = [0.0] * nc
        for i in range(len(adj)):
            ci = comm[i]
            new_loops[ci] += loops[i]
            for j, w in adj[i].items():
                cj = comm[j]
                if ci == cj:
                    new_loops[ci] += w
                else:
                    new_adj[ci][cj] = new_adj[ci].get(cj, 0.0) + w
        adj, loops = new_adj, new_loops

    labels = {int(g.nodes[i]): member[i] for i in range(n)}
    return Partition.from_labels(g, labels)


@dataclass(frozen=True)
class GatewayGraph:
    """Gateway nodes and the original edges running between them.

    ``parent`` is the full graph the gateways were drawn from; stage-one
    likelihoods measure paths there because the induced gateway graph is in
    general disconnected.
    """

    graph: SocialGraph
    cluster_of: dict[NodeId, ClusterId]
    parent: SocialGraph = field(repr=False)
    partition: Partition = field(repr=False)

    @property
    def nodes(self) -> list[NodeId]:
        return self.graph.nodes.tolist()


def build_gateway_graph(g: SocialGraph, p: Partition) -> GatewayGraph:
    missing = [v for v in g.nodes.tolist() if v not in p.cluster_of]
    if missing:
        raise ValidationError(f"partition does not cover nodes {missing[:5]}")
    gate = set()
    for u, v, _ in g.edges:
        if p.cluster_of[u] != p.cluster_of[v]:
            gate.add(u)
            gate.add(v)
    if not gate:
        raise EmptyGatewayError("partition has no between-cluster edges")
    edges = [(u, v, d) for u, v, d in g.edges if u in gate and v in gate]
    gw = SocialGraph(gate, edges)
    return GatewayGraph(gw, {v: p.cluster_of[v] for v in sorted(gate)}, g, p)
