import itertools

import numpy as np
import pytest

from rumorloc.graph import EdgeDelay, SocialGraph


def make_graph(edges, nodes=()):
    """Edges as ``(u, v, mean, var)`` tuples."""
    return SocialGraph(nodes, [(u, v, EdgeDelay(m, s)) for u, v, m, s in edges])


def random_connected(n, extra, seed, integer_means=False, var=(0.01, 0.2)):
    rng = np.random.default_rng(seed)
    pairs = {(int(rng.integers(v)), v) for v in range(1, n)}
    while len(pairs) < n - 1 + extra:
        a, b = sorted(rng.choice(n, 2, replace=False).tolist())
        pairs.add((a, b))
    edges = []
    for a, b in sorted(pairs):
        mean = float(rng.integers(1, 4)) if integer_means else float(rng.uniform(0.5, 2.0))
        edges.append((a, b, mean, float(rng.uniform(*var))))
    return make_graph(edges)


def simple_paths(g, src, dst):
    """Every simple path from src to dst (independent DFS)."""
    out = []
    stack = [(src, [src])]
    while stack:
        v, path = stack.pop()
        if v == dst:
            out.append(path)
            continue
        for w in g.neighbors(v):
            if w not in path:
                stack.append((w, path + [w]))
    return out


def path_cost(g, path, attr="mean"):
    return sum(getattr(g.delay(a, b), attr) for a, b in zip(path, path[1:]))


def two_cliques(a=5, b=5, mean=1.0, var=0.0):
    edges = [(i, j, mean, var) for i, j in itertools.combinations(range(a), 2)]
    edges += [(a + i, a + j, mean, var) for i, j in itertools.combinations(range(b), 2)]
    edges.append((a - 1, a, mean, var))
    return make_graph(edges)


@pytest.fixture
def path3():
    return make_graph([(0, 1, 1.0, 0.1), (1, 2, 1.0, 0.1)])
