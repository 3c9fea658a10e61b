# cython: language_level=3
"""Compiled graph kernels. Same contracts as ``_pykernels``."""

import numpy as np

from libc.stdint cimport int64_t

cdef int64_t REMOVED = -(1 << 62)


def brandes_betweenness(const int64_t[:] indptr, const int64_t[:] indices):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    bc_arr = np.zeros(n, dtype=np.float64)
    sigma_arr = np.empty(n, dtype=np.float64)
    delta_arr = np.empty(n, dtype=np.float64)
    dist_arr = np.empty(n, dtype=np.int64)
    order_arr = np.empty(n, dtype=np.int64)
    cdef double[:] bc = bc_arr
    cdef double[:] sigma = sigma_arr
    cdef double[:] delta = delta_arr
    cdef int64_t[:] dist = dist_arr
    cdef int64_t[:] order = order_arr
    cdef Py_ssize_t s, head, tail, k, v, w, j
    cdef double coeff
    with nogil:
        for s in range(n):
            for v in range(n):
                sigma[v] = 0.0
                delta[v] = 0.0
                dist[v] = -1
            sigma[s] = 1.0
            dist[s] = 0
            order[0] = s
            head = 0
            tail = 1
            while head < tail:
                v = order[head]
                head += 1
                for j in range(indptr[v], indptr[v + 1]):
                    w = indices[j]
                    if dist[w] < 0:
                        dist[w] = dist[v] + 1
                        order[tail] = w
                        tail += 1
                    if dist[w] == dist[v] + 1:
                        sigma[w] += sigma[v]
            for k in range(tail - 1, 0, -1):
                w = order[k]
                coeff = (1.0 + delta[w]) / sigma[w]
                for j in range(indptr[w], indptr[w + 1]):
                    v = indices[j]
                    if dist[v] == dist[w] - 1:
                        delta[v] += sigma[v] * coeff
                bc[w] += delta[w]
        for v in range(n):
            bc[v] *= 0.5
    return bc_arr


cdef inline bint _better(int64_t[:] weight, int64_t a, int64_t b) nogil:
    # max weight first, then smaller index
    if b < 0:
        return True
    if a < 0:
        return False
    if weight[a] != weight[b]:
        return weight[a] > weight[b]
    return a < b


def avc_order(const int64_t[:] indptr, const int64_t[:] indices, initial):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    weight_arr = np.array(initial, dtype=np.int64, copy=True)
    cdef int64_t[:] weight = weight_arr
    order_arr = np.empty(n, dtype=np.int64)
    score_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[:] order = order_arr
    cdef int64_t[:] score = score_arr
    cdef Py_ssize_t size = 1
    while size < n:
        size *= 2
    tree_arr = np.full(2 * size, -1, dtype=np.int64)
    cdef int64_t[:] tree = tree_arr
    cdef Py_ssize_t i, p, step, j, u, best
    with nogil:
        for i in range(n):
            tree[size + i] = i
        for p in range(size - 1, 0, -1):
            if _better(weight, tree[2 * p], tree[2 * p + 1]):
                tree[p] = tree[2 * p]
            else:
                tree[p] = tree[2 * p + 1]
        for step in range(n):
            best = tree[1]
            order[step] = best
            score[step] = weight[best]
            weight[best] = REMOVED
            tree[size + best] = -1
            p = (size + best) // 2
            while p >= 1:
                tree[p] = tree[2 * p] if _better(weight, tree[2 * p], tree[2 * p + 1]) else tree[2 * p + 1]
                p //= 2
            for j in range(indptr[best], indptr[best + 1]):
                u = indices[j]
                if weight[u] == REMOVED:
                    continue
                weight[u] -= 1
                p = (size + u) // 2
                while p >= 1:
                    tree[p] = tree[2 * p] if _better(weight, tree[2 * p], tree[2 * p + 1]) else tree[2 * p + 1]
                    p //= 2
    return order_arr, score_arr
