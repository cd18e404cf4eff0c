# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled graph kernels.  Mirrors ``_kernels_py`` function by function."""
import numpy as np

from libc.math cimport INFINITY
from libcpp.pair cimport pair
from libcpp.queue cimport priority_queue
from libcpp.vector cimport vector

ctypedef long long idx_t
ctypedef pair[double, idx_t] entry

BACKEND = "cython"


# max-heap on (-dist, -index): pops smallest dist, then smallest index
cdef void _dijkstra(const idx_t[::1] indptr, const idx_t[::1] indices,
                    const double[::1] hmean, const double[::1] hvar,
                    idx_t root, double[::1] dist, double[::1] dvar,
                    idx_t[::1] parent, char[::1] fin) noexcept nogil:
    cdef priority_queue[entry] heap
    cdef idx_t n = indptr.shape[0] - 1
    cdef idx_t i, u, w, k
    cdef double du, nd
    for i in range(n):
        dist[i] = INFINITY
        dvar[i] = INFINITY
        parent[i] = -1
        fin[i] = 0
    dist[root] = 0.0
    dvar[root] = 0.0
    heap.push(entry(-0.0, -root))
    while not heap.empty():
        du = -heap.top().first
        u = -heap.top().second
        heap.pop()
        if fin[u]:
            continue
        fin[u] = 1
        for k in range(indptr[u], indptr[u + 1]):
            w = indices[k]
            if fin[w]:
                continue
            nd = du + hmean[k]
            if nd < dist[w]:
                dist[w] = nd
                dvar[w] = dvar[u] + hvar[k]
                parent[w] = u
                heap.push(entry(-nd, -w))
            elif nd == dist[w] and u < parent[w]:
                dvar[w] = dvar[u] + hvar[k]
                parent[w] = u


def sssp(const idx_t[::1] indptr, const idx_t[::1] indices,
         const double[::1] hmean, const double[::1] hvar, idx_t root):
    cdef idx_t n = indptr.shape[0] - 1
    dist = np.empty(n)
    dvar = np.empty(n)
    parent = np.empty(n, dtype=np.int64)
    fin = np.empty(n, dtype=np.int8)
    cdef double[::1] d_v = dist
    cdef double[::1] v_v = dvar
    cdef idx_t[::1] p_v = parent
    cdef char[::1] f_v = fin
    with nogil:
        _dijkstra(indptr, indices, hmean, hvar, root, d_v, v_v, p_v, f_v)
    return dist, dvar, parent


def betweenness(const idx_t[::1] indptr, const idx_t[::1] indices,
                const double[::1] hweight):
    cdef idx_t n = indptr.shape[0] - 1
    bc_arr = np.zeros(n)
    cdef double[::1] bc = bc_arr
    cdef double[::1] dist = np.empty(n)
    cdef double[::1] sigma = np.empty(n)
    cdef double[::1] delta = np.empty(n)
    cdef char[::1] fin = np.empty(n, dtype=np.int8)
    cdef idx_t[::1] order = np.empty(n, dtype=np.int64)
    cdef priority_queue[entry] heap
    cdef idx_t s, i, u, w, v, k, nord, j
    cdef double du, nd, dw, coeff
    with nogil:
        for s in range(n):
            for i in range(n):
                dist[i] = INFINITY
                sigma[i] = 0.0
                fin[i] = 0
                delta[i] = 0.0
            dist[s] = 0.0
            sigma[s] = 1.0
            nord = 0
            heap.push(entry(-0.0, -s))
            while not heap.empty():
                du = -heap.top().first
                u = -heap.top().second
                heap.pop()
                if fin[u]:
                    continue
                fin[u] = 1
                order[nord] = u
                nord += 1
                for k in range(indptr[u], indptr[u + 1]):
                    w = indices[k]
                    if fin[w]:
                        continue
                    nd = du + hweight[k]
                    if nd < dist[w]:
                        dist[w] = nd
                        sigma[w] = sigma[u]
                        heap.push(entry(-nd, -w))
                    elif nd == dist[w]:
                        sigma[w] += sigma[u]
            for j in range(nord - 1, -1, -1):
                w = order[j]
                dw = dist[w]
                coeff = (1.0 + delta[w]) / sigma[w]
                for k in range(indptr[w], indptr[w + 1]):
                    v = indices[k]
                    if dist[v] + hweight[k] == dw:
                        delta[v] += sigma[v] * coeff
                if w != s:
                    bc[w] += delta[w]
    return bc_arr


def batch_arrivals(const idx_t[::1] indptr, const idx_t[::1] indices,
                   const idx_t[::1] heid, delays, idx_t root):
    cdef const double[:, ::1] dl = np.ascontiguousarray(delays, dtype=np.float64)
    cdef idx_t n = indptr.shape[0] - 1
    cdef idx_t nh = indices.shape[0]
    cdef idx_t S = dl.shape[0]
    out_arr = np.empty((S, n))
    cdef double[:, ::1] out = out_arr
    cdef double[::1] hw = np.empty(nh)
    cdef double[::1] zeros = np.zeros(nh)
    cdef double[::1] dvar = np.empty(n)
    cdef idx_t[::1] parent = np.empty(n, dtype=np.int64)
    cdef char[::1] fin = np.empty(n, dtype=np.int8)
    cdef idx_t s, k
    with nogil:
        for s in range(S):
            for k in range(nh):
                hw[k] = dl[s, heid[k]]
            _dijkstra(indptr, indices, hw, zeros, root, out[s], dvar, parent, fin)
    return out_arr


def shared_variance(const idx_t[::1] parent, const double[::1] dist_var, sensors):
    cdef const idx_t[::1] sv = np.ascontiguousarray(sensors, dtype=np.int64)
    cdef idx_t k = sv.shape[0]
    cdef idx_t n = parent.shape[0]
    out_arr = np.empty((k, k))
    cdef double[:, ::1] out = out_arr
    cdef vector[idx_t] depth
    cdef idx_t a, b, x, y, u, dd
    depth.assign(n, -1)
    with nogil:
        for a in range(k):
            # walk up until a node of known depth (or the root), then unwind
            u = sv[a]
            dd = 0
            while depth[u] < 0 and parent[u] >= 0:
                u = parent[u]
                dd += 1
            if depth[u] < 0:
                depth[u] = 0
            dd = depth[u] + dd
            u = sv[a]
            while depth[u] < 0:
                depth[u] = dd
                dd -= 1
                u = parent[u]
        for a in range(k):
            for b in range(a, k):
                x = sv[a]
                y = sv[b]
                while depth[x] > depth[y]:
                    x = parent[x]
                while depth[y] > depth[x]:
                    y = parent[y]
                while x != y:
                    x = parent[x]
                    y = parent[y]
                out[a, b] = dist_var[x]
                out[b, a] = dist_var[x]
    return out_arr
