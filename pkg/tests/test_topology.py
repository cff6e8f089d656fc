import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uavepg.topology import (
    CONNECTIVITY_TOL,
    LinkTopology,
    algebraic_connectivity,
    guarded_remove,
    is_connected,
    laplacian,
    spectral_report,
)


def all_graphs(n):
    pairs = list(itertools.combinations(range(n), 2))
    for mask in range(2 ** len(pairs)):
        yield LinkTopology.from_edges(n, [p for k, p in enumerate(pairs) if mask >> k & 1])


def test_laplacian_examples():
    assert not laplacian(LinkTopology.empty(3)).any()
    np.testing.assert_array_equal(laplacian(LinkTopology.complete(2)), [[1, -1], [-1, 1]])


def test_lambda2_examples():
    for n in range(2, 7):
        assert algebraic_connectivity(LinkTopology.complete(n)) == pytest.approx(n)
    p3 = LinkTopology.from_edges(3, [(0, 1), (1, 2)])
    assert algebraic_connectivity(p3) == pytest.approx(1.0)
    np.testing.assert_allclose(np.linalg.eigvalsh(laplacian(p3)), [0, 1, 3], atol=1e-12)
    split = LinkTopology.from_edges(4, [(0, 1), (2, 3)])
    assert algebraic_connectivity(split) == pytest.approx(0.0, abs=1e-12)


def test_connectivity_examples():
    assert is_connected(LinkTopology.from_edges(4, [(0, 1), (1, 2), (1, 3)]))
    assert not is_connected(LinkTopology.from_edges(3, [(0, 1)]))


def test_guarded_remove_examples():
    tree = LinkTopology.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    assert guarded_remove(tree, 1, 2) == (tree, False)
    cycle = LinkTopology.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    out, ok = guarded_remove(cycle, 3, 0)
    assert ok and out.link_count == 3 and is_connected(out)
    assert guarded_remove(tree, 0, 3) == (tree, False)


def test_topology_validation():
    with pytest.raises(ValueError):
        LinkTopology(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        LinkTopology(np.eye(2, dtype=int))
    with pytest.raises(ValueError):
        LinkTopology(np.array([[0, 2], [2, 0]]))


def test_bfs_and_lambda2_agree_on_every_graph_with_five_nodes():
    graphs = list(all_graphs(5))
    assert len(graphs) == 1024
    for g in graphs:
        rep = spectral_report(g)  # raises on disagreement
        assert rep.connected == (rep.lambda2 > CONNECTIVITY_TOL)


def test_thirty_eight_connected_graphs_on_four_nodes():
    connected = [g for g in all_graphs(4) if is_connected(g)]
    assert len(connected) == 38
    least = min(g.link_count for g in connected)
    assert least == 3
    assert sum(g.link_count == 3 for g in connected) == 16  # Cayley: 4^(4-2)


edge_lists = st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)).filter(lambda e: e[0] != e[1]), max_size=21)


@given(edge_lists, st.integers(0, 6), st.integers(0, 6))
def test_mutation_properties(edges, i, j):
    g = LinkTopology.from_edges(7, edges)
    lam = algebraic_connectivity(g)
    assert lam >= 0
    if i != j:
        for v in (0, 1):
            h = g.with_link(i, j, v)
            assert np.array_equal(h.adj, h.adj.T) and not np.diag(h.adj).any()
        dropped = g.with_link(i, j, 0)
        assert algebraic_connectivity(dropped) <= lam + 1e-9
    if is_connected(g):
        assert g.link_count >= g.n - 1
        out, _ = guarded_remove(g, i, j)
        assert is_connected(out)
