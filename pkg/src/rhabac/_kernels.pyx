# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled graph kernels; same API as ``rhabac._kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int32_t, uint64_t
from libc.stdlib cimport malloc, free
from libc.string cimport memset

cnp.import_array()

BACKEND = "cython"


def build_csr(Py_ssize_t n, adjacency):
    cdef cnp.ndarray[int32_t, ndim=1] indptr = np.zeros(n + 1, dtype=np.int32)
    cdef Py_ssize_t total = 0
    cdef Py_ssize_t u
    for u in range(n):
        total += len(adjacency[u])
        indptr[u + 1] = total
    cdef cnp.ndarray[int32_t, ndim=1] indices = np.empty(total, dtype=np.int32)
    cdef Py_ssize_t k = 0
    for u in range(n):
        for v in adjacency[u]:
            indices[k] = v
            k += 1
    return (n, indptr, indices)


def csr_to_adjacency(csr):
    n, indptr, indices = csr
    return [indices[indptr[u]:indptr[u + 1]].tolist() for u in range(n)]


def bfs_reached(csr, int source):
    cdef Py_ssize_t n = csr[0]
    cdef const int32_t[::1] indptr = csr[1]
    cdef const int32_t[::1] indices = csr[2]
    cdef int32_t* dist = <int32_t*> malloc(n * sizeof(int32_t))
    cdef int32_t* queue = <int32_t*> malloc(n * sizeof(int32_t))
    cdef Py_ssize_t head = 0, tail = 0, i, k
    cdef int32_t u, v
    out = []
    try:
        for i in range(n):
            dist[i] = -1
        dist[source] = 0
        queue[tail] = source
        tail += 1
        while head < tail:
            u = queue[head]
            head += 1
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue[tail] = v
                    tail += 1
        for i in range(tail):
            out.append((queue[i], dist[queue[i]]))
    finally:
        free(dist)
        free(queue)
    return out


def reachable(csr, int source, int target):
    if source == target:
        return True
    cdef Py_ssize_t n = csr[0]
    cdef const int32_t[::1] indptr = csr[1]
    cdef const int32_t[::1] indices = csr[2]
    cdef char* seen = <char*> malloc(n)
    cdef int32_t* stack = <int32_t*> malloc(n * sizeof(int32_t))
    cdef Py_ssize_t top = 0, k
    cdef int32_t u, v
    cdef bint found = False
    try:
        memset(seen, 0, n)
        seen[source] = 1
        stack[top] = source
        top += 1
        while top > 0 and not found:
            top -= 1
            u = stack[top]
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if v == target:
                    found = True
                    break
                if not seen[v]:
                    seen[v] = 1
                    stack[top] = v
                    top += 1
    finally:
        free(seen)
        free(stack)
    return found


cdef Py_ssize_t _toposort(Py_ssize_t n, const int32_t[::1] indptr,
                          const int32_t[::1] indices, int32_t* order):
    cdef int32_t* indeg = <int32_t*> malloc(n * sizeof(int32_t))
    cdef Py_ssize_t head = 0, tail = 0, k, i
    cdef int32_t u, v
    for i in range(n):
        indeg[i] = 0
    for k in range(indptr[n]):
        indeg[indices[k]] += 1
    for i in range(n):
        if indeg[i] == 0:
            order[tail] = i
            tail += 1
    while head < tail:
        u = order[head]
        head += 1
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            indeg[v] -= 1
            if indeg[v] == 0:
                order[tail] = v
                tail += 1
    free(indeg)
    return tail


def topological_order(csr):
    cdef Py_ssize_t n = csr[0]
    cdef int32_t* order = <int32_t*> malloc(max(n, 1) * sizeof(int32_t))
    cdef Py_ssize_t count, i
    try:
        count = _toposort(n, csr[1], csr[2], order)
        if count != n:
            return None
        return [order[i] for i in range(n)]
    finally:
        free(order)


def transitive_reduction(csr):
    cdef Py_ssize_t n = csr[0]
    cdef const int32_t[::1] indptr = csr[1]
    cdef const int32_t[::1] indices = csr[2]
    cdef Py_ssize_t words = (n + 63) // 64
    cdef int32_t* order = <int32_t*> malloc(max(n, 1) * sizeof(int32_t))
    cdef int32_t* rank = <int32_t*> malloc(max(n, 1) * sizeof(int32_t))
    cdef uint64_t* desc = <uint64_t*> malloc(max(n * words, 1) * sizeof(uint64_t))
    cdef int32_t* children = <int32_t*> malloc(max(indptr[n], 1) * sizeof(int32_t))
    cdef Py_ssize_t i, j, k, m, w, count
    cdef int32_t u, v, t
    cdef uint64_t* cov
    reduced = [[] for _ in range(n)]
    try:
        count = _toposort(n, indptr, indices, order)
        if count != n:
            raise ValueError("transitive reduction requires a DAG")
        for i in range(n):
            rank[order[i]] = i
        memset(desc, 0, n * words * sizeof(uint64_t))
        for i in range(n - 1, -1, -1):
            u = order[i]
            # children of u sorted by topological rank (insertion sort; fan-out is small)
            m = 0
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                j = m
                while j > 0 and rank[children[j - 1]] > rank[v]:
                    children[j] = children[j - 1]
                    j -= 1
                children[j] = v
                m += 1
            cov = desc + u * words
            kept = reduced[u]
            for j in range(m):
                v = children[j]
                if j > 0 and children[j - 1] == v:
                    continue
                if (cov[v >> 6] >> (v & 63)) & 1:
                    continue
                kept.append(v)
                for w in range(words):
                    cov[w] |= desc[v * words + w]
                cov[v >> 6] |= (<uint64_t> 1) << (v & 63)
    finally:
        free(order)
        free(rank)
        free(desc)
        free(children)
    return reduced
