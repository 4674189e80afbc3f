"""Weighted graphs, modularity, and walktrap communities."""

import itertools

import numpy as np
import pytest

from phyloclust import Partition
from phyloclust.community import (
    WeightedGraph,
    average_adjacency,
    modularity,
    partition_adjacency,
    walktrap_communities,
)


def two_cliques(bridge=0.1):
    n = 10
    w = np.zeros((n, n))
    for base in (0, 5):
        for i in range(base, base + 5):
            for j in range(i + 1, base + 5):
                w[i, j] = w[j, i] = 1.0
    w[4, 5] = w[5, 4] = bridge
    return WeightedGraph([f"v{i}" for i in range(n)], w)


def set_partitions(items):
    """Every partition of `items` (Bell-number enumeration)."""
    if not items:
        yield []
        return
    head, *rest = items
    for sub in set_partitions(rest):
        for k in range(len(sub)):
            yield sub[:k] + [[head] + sub[k]] + sub[k + 1 :]
        yield [[head]] + sub


def naive_modularity(w, groups):
    """Direct Q = sum_c (in_c/m - (deg_c/2m)^2) over weighted edges."""
    m = w.sum() / 2.0
    if m == 0:
        return 0.0
    q = 0.0
    for group in groups:
        idx = np.array(group)
        inside = w[np.ix_(idx, idx)].sum() / 2.0
        degree = w[idx, :].sum()
        q += inside / m - (degree / (2.0 * m)) ** 2
    return q


def test_graph_validation():
    with pytest.raises(ValueError):
        WeightedGraph(["a", "b"], np.zeros((2, 3)))
    bad = np.array([[0.0, 1.0], [2.0, 0.0]])
    with pytest.raises(ValueError):
        WeightedGraph(["a", "b"], bad)
    with pytest.raises(ValueError):
        WeightedGraph(["a", "b"], np.array([[0.0, -1.0], [-1.0, 0.0]]))


def test_adjacency_two_blocks():
    p = Partition.from_labels([f"s{i}" for i in range(1, 7)],
                              ["1", "1", "1", "2", "2", "2"])
    g = partition_adjacency(p)
    w = g.weights
    pos = {ident: k for k, ident in enumerate(g.ids)}
    for a, b in itertools.combinations(range(1, 7), 2):
        i, j = pos[f"s{a}"], pos[f"s{b}"]
        same = (a <= 3) == (b <= 3)
        assert w[i, j] == (1.0 if same else 0.0)
    assert np.all(np.diag(w) == 0.0)


def test_adjacency_singletons_zero():
    p = Partition.from_labels(["a", "b", "c"], ["1", "2", "3"])
    assert np.all(partition_adjacency(p).weights == 0.0)


def test_adjacency_matches_equality_scan():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(2, 12))
        ids = [f"x{i}" for i in range(n)]
        labels = [str(int(v)) for v in rng.integers(0, 4, n)]
        p = Partition.from_labels(ids, labels)
        g = partition_adjacency(p)
        pos = {ident: k for k, ident in enumerate(g.ids)}
        for a, b in itertools.combinations(ids, 2):
            expect = 1.0 if p.label_of(a) == p.label_of(b) else 0.0
            assert g.weights[pos[a], pos[b]] == expect


def test_average_single_graph():
    g = two_cliques()
    out = average_adjacency([g])
    assert np.array_equal(out.weights, g.weights)


def test_average_half():
    ids = ["a", "b"]
    ones = WeightedGraph(ids, np.array([[0.0, 1.0], [1.0, 0.0]]))
    zeros = WeightedGraph(ids, np.zeros((2, 2)))
    out = average_adjacency([ones, zeros])
    assert out.weights[0, 1] == 0.5


def test_average_order_invariant():
    rng = np.random.default_rng(13)
    ids = [f"v{i}" for i in range(6)]
    graphs = []
    for _ in range(5):
        w = rng.random((6, 6))
        w = (w + w.T) / 2.0
        np.fill_diagonal(w, 0.0)
        graphs.append(WeightedGraph(ids, w))
    fwd = average_adjacency(graphs)
    rev = average_adjacency(graphs[::-1])
    assert np.allclose(fwd.weights, rev.weights, atol=1e-15)
    assert np.allclose(fwd.weights, sum(g.weights for g in graphs) / 5.0)


def test_modularity_matches_naive():
    rng = np.random.default_rng(19)
    g = two_cliques()
    for _ in range(20):
        labels = rng.integers(0, 3, 10)
        p = Partition.from_labels(g.ids, [str(int(v)) for v in labels])
        groups = [[i for i in range(10) if labels[i] == v] for v in set(labels)]
        assert modularity(g, p) == pytest.approx(naive_modularity(g.weights, groups))


def test_modularity_edgeless_zero():
    g = WeightedGraph(["a", "b"], np.zeros((2, 2)))
    p = Partition.from_labels(["a", "b"], ["1", "2"])
    assert modularity(g, p) == 0.0


def test_walktrap_two_cliques_planted():
    g = two_cliques(bridge=0.1)
    part = walktrap_communities(g)
    got = sorted(sorted(c) for c in part.clusters().values())
    assert got == [[f"v{i}" for i in range(5)], [f"v{i}" for i in range(5, 10)]]


def test_walktrap_matches_exhaustive_max_on_two_cliques():
    """10 vertices is small enough to scan every partition."""
    g = two_cliques(bridge=0.1)
    part = walktrap_communities(g)
    best = max(
        naive_modularity(g.weights, groups)
        for groups in set_partitions(list(range(10)))
    )
    assert modularity(g, part) == pytest.approx(best, abs=1e-12)


def test_walktrap_edgeless_singletons():
    g = WeightedGraph(["a", "b", "c"], np.zeros((3, 3)))
    part = walktrap_communities(g)
    assert part.num_clusters() == 3


def test_walktrap_single_clique():
    n = 6
    w = np.ones((n, n))
    np.fill_diagonal(w, 0.0)
    part = walktrap_communities(WeightedGraph([f"v{i}" for i in range(n)], w))
    assert part.num_clusters() == 1


def test_walktrap_permutation_equivariant():
    rng = np.random.default_rng(23)
    g = two_cliques(bridge=0.05)
    base = walktrap_communities(g)
    for _ in range(5):
        perm = rng.permutation(10)
        ids = [g.ids[k] for k in perm]
        w = g.weights[np.ix_(perm, perm)]
        got = walktrap_communities(WeightedGraph(ids, w))
        assert got.same_grouping(base)


def test_walktrap_beats_trivial_partitions():
    g = two_cliques(bridge=0.2)
    part = walktrap_communities(g)
    q = modularity(g, part)
    singletons = Partition.from_labels(g.ids, [str(i) for i in range(10)])
    lump = Partition.from_labels(g.ids, ["1"] * 10)
    assert q >= modularity(g, singletons)
    assert q >= modularity(g, lump)
