import random

import pytest

from rhabac import kernels

BACKENDS = kernels.available_backends()


def random_dag(rng, n, p):
    order = list(range(n))
    rng.shuffle(order)
    adj = [[] for _ in range(n)]
    for j in range(n):
        for i in range(j):
            if rng.random() < p:
                adj[order[i]].append(order[j])
    return adj


def canon(result):
    return sorted(result) if isinstance(result, list) else result


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return BACKENDS[request.param]


def test_compiled_backend_is_selected_when_built():
    if "cython" in BACKENDS:
        assert kernels.BACKEND == "cython"
    else:
        assert kernels.BACKEND == "python"


def test_reduction_of_triangle(backend):
    csr = backend.build_csr(3, [[1, 2], [2], []])
    assert [sorted(k) for k in backend.transitive_reduction(csr)] == [[1], [2], []]


def test_topological_order_detects_cycle(backend):
    assert backend.topological_order(backend.build_csr(2, [[1], [0]])) is None
    order = backend.topological_order(backend.build_csr(3, [[2], [0], []]))
    assert order.index(1) < order.index(0) < order.index(2)


def test_empty_graph(backend):
    csr = backend.build_csr(0, [])
    assert backend.transitive_reduction(csr) == []
    assert list(backend.topological_order(csr)) == []


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
def test_backends_agree_on_random_dags():
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    rng = random.Random(11)
    for _ in range(300):
        n = rng.randint(1, 40)
        adj = random_dag(rng, n, rng.choice([0.05, 0.15, 0.4]))
        a, b = py.build_csr(n, adj), cy.build_csr(n, adj)
        assert py.csr_to_adjacency(a) == cy.csr_to_adjacency(b)
        src, dst = rng.randrange(n), rng.randrange(n)
        assert sorted(py.bfs_reached(a, src)) == sorted(cy.bfs_reached(b, src))
        assert py.reachable(a, src, dst) == cy.reachable(b, src, dst)
        assert [sorted(k) for k in py.transitive_reduction(a)] == [sorted(k) for k in cy.transitive_reduction(b)]
        assert (py.topological_order(a) is None) == (cy.topological_order(b) is None)
