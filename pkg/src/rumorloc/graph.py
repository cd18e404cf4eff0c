"""Weighted social graph with Gaussian edge delays, shortest paths and centrality."""
from __future__ import annotations

import math
import threading
from collections import OrderedDict, deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, TextIO

import numpy as np

from . import kernels
from .errors import NotFoundError, ParseError, ValidationError

NodeId = int


@dataclass(frozen=True)
class EdgeDelay:
    """Gaussian delay on an edge: ``N(mean, variance)`` in time units."""

    mean: float
    variance: float

    def __post_init__(self):
        if not (self.mean > 0 and math.isfinite(self.mean)):
            raise ValidationError(f"edge delay mean must be > 0, got {self.mean}")
        if not (self.variance >= 0 and math.isfinite(self.variance)):
            raise ValidationError(f"edge delay variance must be >= 0, got {self.variance}")


class SocialGraph:
    """Immutable undirected graph over integer node ids.

    Internally nodes are relabelled ``0..n-1`` in increasing id order, so
    index order and id order coincide and every tie-break by index is a
    tie-break by node id.  Adjacency is stored in CSR form with the delay
    mean and variance of each half-edge alongside.
    """

    def __init__(self, nodes: Iterable[NodeId], edges: Iterable[tuple[NodeId, NodeId, EdgeDelay]]):
        edges = list(edges)
        node_set = set(int(v) for v in nodes)
        seen = {}
        for u, v, delay in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValidationError(f"self-loop on node {u}")
            key = (u, v) if u < v else (v, u)
            if key in seen:
                raise ValidationError(f"duplicate edge {key}")
            seen[key] = delay
            node_set.update(key)
        self._nodes = np.array(sorted(node_set), dtype=np.int64)
        self._index = {int(v): i for i, v in enumerate(self._nodes)}
        self._edges = [(u, v, d) for (u, v), d in seen.items()]
        self._build_csr()

    def _build_csr(self):
        n = len(self._nodes)
        m = len(self._edges)
        src = np.empty(2 * m, dtype=np.int64)
        dst = np.empty(2 * m, dtype=np.int64)
        eid = np.empty(2 * m, dtype=np.int64)
        mean = np.empty(m)
        var = np.empty(m)
        for e, (u, v, d) in enumerate(self._edges):
            iu, iv = self._index[u], self._index[v]
            src[2 * e], dst[2 * e] = iu, iv
            src[2 * e + 1], dst[2 * e + 1] = iv, iu
            eid[2 * e] = eid[2 * e + 1] = e
            mean[e] = d.mean
            var[e] = d.variance
        order = np.lexsort((dst, src))
        self.indices = np.ascontiguousarray(dst[order])
        self.edge_ids = np.ascontiguousarray(eid[order])
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=self.indptr[1:])
        self.edge_mean = mean
        self.edge_var = var
        self.half_mean = np.ascontiguousarray(mean[self.edge_ids])
        self.half_var = np.ascontiguousarray(var[self.edge_ids])
        for arr in (self.indices, self.edge_ids, self.indptr, self.edge_mean,
                    self.edge_var, self.half_mean, self.half_var, self._nodes):
            arr.flags.writeable = False

    # -- basic queries -------------------------------------------------
    @property
    def nodes(self) -> np.ndarray:
        return self._nodes

    @property
    def edges(self) -> list[tuple[NodeId, NodeId, EdgeDelay]]:
        return list(self._edges)

    @property
    def n_nodes(self) -> int:
        return len(self._nodes)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def __len__(self):
        return len(self._nodes)

    def __contains__(self, v):
        return int(v) in self._index

    def index(self, v: NodeId) -> int:
        try:
            return self._index[int(v)]
        except KeyError:
            raise NotFoundError(f"node {v} not in graph") from None

    def node_at(self, i: int) -> NodeId:
        return int(self._nodes[i])

    def neighbors(self, v: NodeId) -> list[NodeId]:
        i = self.index(v)
        return [int(self._nodes[j]) for j in self.indices[self.indptr[i]:self.indptr[i + 1]]]

    def degree(self, v: NodeId) -> int:
        i = self.index(v)
        return int(self.indptr[i + 1] - self.indptr[i])

    def delay(self, u: NodeId, v: NodeId) -> EdgeDelay:
        iu, iv = self.index(u), self.index(v)
        lo, hi = self.indptr[iu], self.indptr[iu + 1]
        pos = lo + np.searchsorted(self.indices[lo:hi], iv)
        if pos >= hi or self.indices[pos] != iv:
            raise NotFoundError(f"no edge ({u}, {v})")
        return self._edges[self.edge_ids[pos]][2]

    def has_edge(self, u: NodeId, v: NodeId) -> bool:
        try:
            self.delay(u, v)
        except NotFoundError:
            return False
        return True

    def subgraph(self, nodes: Iterable[NodeId]) -> "SocialGraph":
        keep = {int(v) for v in nodes}
        missing = keep.difference(self._index)
        if missing:
            raise NotFoundError(f"nodes not in graph: {sorted(missing)[:5]}")
        sub = [(u, v, d) for u, v, d in self._edges if u in keep and v in keep]
        return SocialGraph(keep, sub)

    def with_delays(self, delays: Iterable[EdgeDelay]) -> "SocialGraph":
        """Same topology, new per-edge delays (in ``edges`` order)."""
        delays = list(delays)
        if len(delays) != self.n_edges:
            raise ValidationError("need one delay per edge")
        return SocialGraph(self._nodes.tolist(), [(u, v, d) for (u, v, _), d in zip(self._edges, delays)])

    def __repr__(self):
        return f"SocialGraph(n_nodes={self.n_nodes}, n_edges={self.n_edges})"


def load_edge_list(stream: TextIO, default_delay: EdgeDelay = EdgeDelay(1.0, 0.1)) -> SocialGraph:
    """Parse ``u v [mean] [variance]`` lines; ``#`` starts a comment.

    Repeated edges keep their first occurrence.
    """
    edges = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2 or len(parts) > 4:
            raise ParseError(f"line {lineno}: expected 'u v [mean] [variance]', got {raw.strip()!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
            mean = float(parts[2]) if len(parts) > 2 else default_delay.mean
            var = float(parts[3]) if len(parts) > 3 else default_delay.variance
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric field in {raw.strip()!r}") from None
        if u == v:
            raise ParseError(f"line {lineno}: self-loop on node {u}")
        try:
            delay = EdgeDelay(mean, var)
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
        key = (u, v) if u < v else (v, u)
        edges.setdefault(key, delay)
    return SocialGraph((), [(u, v, d) for (u, v), d in edges.items()])


def save_edge_list(g: SocialGraph, stream: TextIO) -> None:
    for u, v, d in g.edges:
        stream.write(f"{u} {v} {d.mean!r} {d.variance!r}\n")


class ShortestPathTree:
    """Dijkstra tree under cumulative mean delay, rooted at ``root``."""

    def __init__(self, g: SocialGraph, root: NodeId, dist_mean, dist_var, parent):
        self.graph = g
        self.root = int(root)
        self.mean_arr = dist_mean
        self.var_arr = dist_var
        self.parent_arr = parent
        for arr in (dist_mean, dist_var, parent):
            arr.flags.writeable = False

    def reachable(self, v: NodeId) -> bool:
        return bool(np.isfinite(self.mean_arr[self.graph.index(v)]))

    @cached_property
    def dist_mean(self) -> dict[NodeId, float]:
        return {int(v): float(d) for v, d in zip(self.graph.nodes, self.mean_arr)}

    @cached_property
    def dist_var(self) -> dict[NodeId, float]:
        return {int(v): float(d) for v, d in zip(self.graph.nodes, self.var_arr)}

    @cached_property
    def parent(self) -> dict[NodeId, NodeId]:
        nodes = self.graph.nodes
        return {int(nodes[i]): int(nodes[p]) for i, p in enumerate(self.parent_arr) if p >= 0}

    def path(self, v: NodeId) -> list[NodeId]:
        """Node sequence from the root to ``v``."""
        i = self.graph.index(v)
        if not np.isfinite(self.mean_arr[i]):
            raise NotFoundError(f"node {v} unreachable from {self.root}")
        out = []
        while i >= 0:
            out.append(self.graph.node_at(i))
            i = self.parent_arr[i]
        return out[::-1]

    def path_edges(self, v: NodeId) -> list[tuple[NodeId, NodeId]]:
        p = self.path(v)
        return list(zip(p[:-1], p[1:]))


def shortest_path_tree(g: SocialGraph, root: NodeId) -> ShortestPathTree:
    """Dijkstra under mean delay; ties go to the smaller parent id."""
    r = g.index(root)
    dm, dv, par = kernels.sssp(g.indptr, g.indices, g.half_mean, g.half_var, r)
    return ShortestPathTree(g, root, dm, dv, par)


class PathCache:
    """Lazily computed shortest-path trees keyed by root index.

    Arrays are stored raw (index space) for the estimator's inner loops.
    """

    MEMO_SIZE = 32

    def __init__(self, g: SocialGraph):
        self.graph = g
        self._trees: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._memo: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def memo_get(self, key):
        """Small LRU store for results derived from these trees."""
        with self._lock:
            hit = self._memo.get(key)
            if hit is not None:
                self._memo.move_to_end(key)
            return hit

    def memo_put(self, key, value):
        with self._lock:
            self._memo[key] = value
            while len(self._memo) > self.MEMO_SIZE:
                self._memo.popitem(last=False)

    def arrays(self, root_index: int):
        hit = self._trees.get(root_index)
        if hit is None:
            g = self.graph
            hit = kernels.sssp(g.indptr, g.indices, g.half_mean, g.half_var, root_index)
            self._trees[root_index] = hit
        return hit

    def tree(self, root: NodeId) -> ShortestPathTree:
        dm, dv, par = self.arrays(self.graph.index(root))
        return ShortestPathTree(self.graph, root, dm.copy(), dv.copy(), par.copy())


def betweenness_centrality(g: SocialGraph) -> dict[NodeId, float]:
    """Exact betweenness under mean-delay weights.

    Ordered-pair sums divided by ``(n-1)(n-2)``.  Graphs with fewer than three
    nodes have no interior positions and yield an empty map.
    """
    n = g.n_nodes
    if n < 3:
        return {}
    raw = kernels.betweenness(g.indptr, g.indices, g.half_mean)
    raw = raw / ((n - 1) * (n - 2))
    return {int(v): float(s) for v, s in zip(g.nodes, raw)}


def select_sensors(g: SocialGraph, k: int, scores: dict[NodeId, float]) -> list[NodeId]:
    """Top-``k`` nodes by score, ties to the smaller id.  First entry is the reference."""
    if k < 2 or k > g.n_nodes:
        raise ValueError(f"need 2 <= k <= {g.n_nodes}, got {k}")
    ranked = sorted((int(v) for v in g.nodes), key=lambda v: (-scores.get(v, 0.0), v))
    return ranked[:k]


def chain_order(g: SocialGraph, sensors: Sequence[NodeId], cache: "PathCache | None" = None) -> list[NodeId]:
    """Reorder sensors into a greedy nearest-neighbour chain from the first one.

    Consecutive sensors end up close under mean delay, and arrival times
    differ by at most the delay between two sensors, so the inter-arrival
    vector laid out in this order varies slowly.  Ties go to the smaller id.
    """
    sensors = [int(s) for s in sensors]
    if len(sensors) <= 2:
        return sensors
    cache = cache or PathCache(g)
    idx = np.array([g.index(s) for s in sensors])
    dist = np.array([cache.arrays(int(i))[0][idx] for i in idx])
    order = [0]
    left = set(range(1, len(sensors)))
    while left:
        row = dist[order[-1]]
        nxt = min(left, key=lambda j: (row[j], sensors[j]))
        order.append(nxt)
        left.remove(nxt)
    return [sensors[i] for i in order]


def hop_distance(g: SocialGraph, u: NodeId, v: NodeId) -> int:
    """Unweighted BFS distance; ``-1`` if disconnected."""
    src, dst = g.index(u), g.index(v)
    if src == dst:
        return 0
    seen = {src: 0}
    queue = deque([src])
    while queue:
        x = queue.popleft()
        for y in g.indices[g.indptr[x]:g.indptr[x + 1]].tolist():
            if y not in seen:
                seen[y] = seen[x] + 1
                if y == dst:
                    return seen[y]
                queue.append(y)
    return -1


def is_connected(g: SocialGraph) -> bool:
    if g.n_nodes == 0:
        return True
    seen = np.zeros(g.n_nodes, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        x = stack.pop()
        for y in g.indices[g.indptr[x]:g.indptr[x + 1]].tolist():
            if not seen[y]:
                seen[y] = True
                stack.append(y)
    return bool(seen.all())
