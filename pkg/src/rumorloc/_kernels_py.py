"""Pure-Python reference versions of the graph kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature and
the same visiting order, so the two backends agree to rounding.  Graphs are
passed in CSR form: ``indptr``/``indices`` over node indices ``0..n-1`` sorted
by node id, with per-half-edge arrays aligned to ``indices``.
"""
import heapq

import numpy as np

BACKEND = "python"


def sssp(indptr, indices, hmean, hvar, root):
    """Single-source shortest paths under ``hmean`` weights.

    Returns ``(dist_mean, dist_var, parent)``.  Among equal-cost predecessors
    the smallest index wins.  Unreached nodes keep ``inf`` and parent ``-1``.
    """
    n = len(indptr) - 1
    ptr = indptr.tolist()
    nbr = indices.tolist()
    wm = hmean.tolist()
    wv = hvar.tolist()
    d = [np.inf] * n
    dv = [np.inf] * n
    par = [-1] * n
    fin = [False] * n
    d[root] = 0.0
    dv[root] = 0.0
    heap = [(0.0, root)]
    while heap:
        du, u = heapq.heappop(heap)
        if fin[u]:
            continue
        fin[u] = True
        for k in range(ptr[u], ptr[u + 1]):
            w = nbr[k]
            if fin[w]:
                continue
            nd = du + wm[k]
            if nd < d[w]:
                d[w] = nd
                dv[w] = dv[u] + wv[k]
                par[w] = u
                heapq.heappush(heap, (nd, w))
            elif nd == d[w] and u < par[w]:
                dv[w] = dv[u] + wv[k]
                par[w] = u
    return np.asarray(d, dtype=float), np.asarray(dv, dtype=float), np.asarray(par, dtype=np.int64)


def betweenness(indptr, indices, hweight):
    """Brandes accumulation over ordered (s, t) pairs, unnormalized."""
    n = len(indptr) - 1
    ptr = indptr.tolist()
    nbr = indices.tolist()
    wt = hweight.tolist()
    bc = [0.0] * n
    inf = float("inf")
    for s in range(n):
        dist = [inf] * n
        sigma = [0.0] * n
        fin = [False] * n
        order = []
        dist[s] = 0.0
        sigma[s] = 1.0
        heap = [(0.0, s)]
        while heap:
            du, u = heapq.heappop(heap)
            if fin[u]:
                continue
            fin[u] = True
            order.append(u)
            for k in range(ptr[u], ptr[u + 1]):
                w = nbr[k]
                if fin[w]:
                    continue
                nd = du + wt[k]
                if nd < dist[w]:
                    dist[w] = nd
                    sigma[w] = sigma[u]
                    heapq.heappush(heap, (nd, w))
                elif nd == dist[w]:
                    sigma[w] += sigma[u]
        delta = [0.0] * n
        for w in reversed(order):
            dw = dist[w]
            coeff = (1.0 + delta[w]) / sigma[w]
            for k in range(ptr[w], ptr[w + 1]):
                v = nbr[k]
                if dist[v] + wt[k] == dw:
                    delta[v] += sigma[v] * coeff
            if w != s:
                bc[w] += delta[w]
    return np.asarray(bc, dtype=float)


def batch_arrivals(indptr, indices, heid, delays, root):
    """First-arrival times from ``root`` for each row of sampled edge delays."""
    n = len(indptr) - 1
    delays = np.asarray(delays, dtype=float)
    out = np.empty((delays.shape[0], n))
    zeros = np.zeros(len(indices))
    for s in range(delays.shape[0]):
        hw = delays[s, heid]
        out[s], _, _ = sssp(indptr, indices, hw, zeros, root)
    return out


def shared_variance(parent, dist_var, sensors):
    """``G[a, b]`` = variance accumulated on the common root path of two sensors.

    In a shortest-path tree the common part of two root paths ends at their
    lowest common ancestor, so ``G[a, b] = dist_var[lca(a, b)]``.
    """
    par = parent.tolist() if hasattr(parent, "tolist") else list(parent)
    chains = []
    for s in np.asarray(sensors, dtype=np.int64).tolist():
        chain = [s]
        while par[chain[-1]] >= 0:
            chain.append(par[chain[-1]])
        chains.append(chain)
    k = len(chains)
    out = np.empty((k, k))
    for a in range(k):
        out[a, a] = dist_var[chains[a][0]]
        for b in range(a + 1, k):
            ancestors = set(chains[b])
            lca = next(u for u in chains[a] if u in ancestors)
            out[a, b] = out[b, a] = dist_var[lca]
    return out
