"""Pure-Python graph kernels.

Graphs are passed in CSR form built by :func:`build_csr`; nodes are the
integers ``0..n-1``. This module is the fallback for ``_kernels`` (Cython)
and must stay behaviourally identical to it.
"""

from __future__ import annotations

from collections import deque

BACKEND = "python"


def build_csr(n, adjacency):
    indptr = [0] * (n + 1)
    indices = []
    for u in range(n):
        indices.extend(adjacency[u])
        indptr[u + 1] = len(indices)
    return (n, indptr, indices)


def csr_to_adjacency(csr):
    n, indptr, indices = csr
    return [list(indices[indptr[u]:indptr[u + 1]]) for u in range(n)]


def bfs_reached(csr, source):
    """Return ``[(node, hops), ...]`` for every node reachable from ``source``."""
    n, indptr, indices = csr
    dist = {source: 0}
    out = [(source, 0)]
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if v not in dist:
                dist[v] = du
                out.append((v, du))
                queue.append(v)
    return out


def reachable(csr, source, target):
    if source == target:
        return True
    n, indptr, indices = csr
    seen = {source}
    stack = [source]
    while stack:
        u = stack.pop()
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if v == target:
                return True
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return False


def topological_order(csr):
    """Kahn's algorithm; returns ``None`` when the graph has a cycle."""
    n, indptr, indices = csr
    indeg = [0] * n
    for v in indices:
        indeg[v] += 1
    queue = deque(u for u in range(n) if indeg[u] == 0)
    order = []
    while queue:
        u = queue.popleft()
        order.append(u)
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    return order if len(order) == n else None


def transitive_reduction(csr):
    """Reduce a DAG; returns the reduced adjacency as ``list[list[int]]``.

    Children of each node are visited in topological order, so a child that is
    reachable through an earlier sibling is already covered by that sibling's
    descendant bitset when we reach it.
    """
    n, indptr, indices = csr
    order = topological_order(csr)
    if order is None:
        raise ValueError("transitive reduction requires a DAG")
    rank = [0] * n
    for i, u in enumerate(order):
        rank[u] = i
    desc = [0] * n
    reduced = [[] for _ in range(n)]
    for u in reversed(order):
        children = sorted(set(indices[indptr[u]:indptr[u + 1]]), key=rank.__getitem__)
        covered = 0
        kept = reduced[u]
        for v in children:
            if (covered >> v) & 1:
                continue
            kept.append(v)
            covered |= desc[v] | (1 << v)
        desc[u] = covered
    return reduced
