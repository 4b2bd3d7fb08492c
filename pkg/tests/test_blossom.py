import networkx as nx
import numpy as np
import pytest

from qecf.blossom import max_weight_matching


def _weight(w, mate):
    return sum(w[i, j] for i, j in enumerate(mate) if j > i)


def _oracle(w):
    g = nx.Graph()
    n = w.shape[0]
    g.add_nodes_from(range(n))
    for i in range(n):
        for j in range(i + 1, n):
            if w[i, j] > 0:
                g.add_edge(i, j, weight=float(w[i, j]))
    m = nx.max_weight_matching(g)
    return sum(w[i, j] for i, j in m)


def _check_valid(mate, w):
    for i, j in enumerate(mate):
        if j >= 0:
            assert mate[j] == i and w[i, j] > 0


@pytest.mark.parametrize("n,density", [(4, 1.0), (9, 0.5), (16, 0.3), (30, 0.2), (40, 0.8)])
def test_random_graphs_against_networkx(n, density):
    rng = np.random.default_rng(n)
    for _ in range(25):
        w = np.triu(rng.uniform(0.1, 10.0, (n, n)) * (rng.random((n, n)) < density), 1)
        w = w + w.T
        mate = max_weight_matching(w)
        _check_valid(mate, w)
        assert np.isclose(_weight(w, mate), _oracle(w))


def test_integer_weights_with_ties():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = 12
        w = np.triu(rng.integers(0, 4, (n, n)).astype(float), 1)
        w = w + w.T
        mate = max_weight_matching(w)
        _check_valid(mate, w)
        assert np.isclose(_weight(w, mate), _oracle(w))


def test_empty_and_single_edge():
    assert (max_weight_matching(np.zeros((3, 3))) == -1).all()
    w = np.zeros((3, 3))
    w[0, 2] = w[2, 0] = 1.5
    assert max_weight_matching(w).tolist() == [2, -1, 0]


def test_odd_cycle_needs_blossom():
    # triangle plus pendant: optimum pairs the pendant with the triangle
    w = np.zeros((4, 4))
    for i, j, x in [(0, 1, 5), (1, 2, 5), (0, 2, 5), (2, 3, 4)]:
        w[i, j] = w[j, i] = x
    mate = max_weight_matching(w)
    assert np.isclose(_weight(w, mate), 9)
