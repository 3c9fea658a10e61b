import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import shortest_path

from ea_active.graph_metrics import (
    avc_ranking,
    betweenness_ranking,
    betweenness_scores,
    compute_rankings,
    degree_ranking,
    degree_scores,
    to_gid,
    to_node,
)
from ea_active.kg import KnowledgeGraph, KnowledgeGraphPair

from conftest import graph, random_edges


def single(g):
    """Pair whose right side is one isolated entity, so left ids equal global ids."""
    return KnowledgeGraphPair(g, KnowledgeGraph(("z",), ("r",), np.empty((0, 3))))


def left_part(ranking, n):
    return [(int(g), float(s)) for g, s in zip(ranking.order, ranking.scores) if g < n]


# -- reference oracles -----------------------------------------------------------------


def apsp_betweenness(n, edges):
    """Count shortest paths with adjacency-matrix powers: sigma_st = (A^d(s,t))[s,t]."""
    a = np.zeros((n, n))
    for u, v in edges:
        a[u, v] = a[v, u] = 1.0
    dist = shortest_path(sp.csr_matrix(a), unweighted=True, directed=False)
    powers = [np.eye(n)]
    for _ in range(n):
        powers.append(powers[-1] @ a)
    bc = np.zeros(n)
    for s in range(n):
        for t in range(s + 1, n):
            if not np.isfinite(dist[s, t]):
                continue
            d = int(dist[s, t])
            sigma = powers[d][s, t]
            for v in range(n):
                if v in (s, t) or not np.isfinite(dist[s, v]) or dist[s, v] + dist[v, t] != d:
                    continue
                bc[v] += powers[int(dist[s, v])][s, v] * powers[int(dist[v, t])][v, t] / sigma
    return bc


def avc_reference(n, edges):
    nbrs = [set() for _ in range(n)]
    for u, v in edges:
        if u != v:
            nbrs[u].add(v)
            nbrs[v].add(u)
    weight = [len(s) for s in nbrs]
    left = set(range(n))
    order, scores = [], []
    while left:
        v = min(left, key=lambda x: (-weight[x], x))
        order.append(v)
        scores.append(weight[v])
        left.remove(v)
        for u in nbrs[v] & left:
            weight[u] -= 1
    return order, scores


# -- degree ----------------------------------------------------------------------------


def test_triangle_with_pendant_starts_with_hub():
    # a=0, b=1, c=2 triangle; d=3 pendant on a
    r = degree_ranking(single(graph(4, [(0, 1), (1, 2), (2, 0), (3, 0)])))
    assert r.nodes()[0] == (0, 0)
    assert r.scores[0] == 3


def test_parallel_relations_collapse():
    g = KnowledgeGraph(("a", "b"), ("r1", "r2"), [(0, 0, 1), (0, 1, 1)])
    assert degree_scores(single(g))[0] == 1


def test_self_loops_ignored():
    g = KnowledgeGraph(("a", "b"), ("r",), [(0, 0, 0), (0, 0, 1)])
    assert degree_scores(single(g))[:2].tolist() == [1, 1]


def test_degree_matches_brute_force_with_tie_break():
    rng = np.random.default_rng(3)
    left = graph(30, random_edges(rng, 30, 0.1))
    right = graph(30, random_edges(rng, 30, 0.1))
    pair = KnowledgeGraphPair(left, right)
    deg = {}
    for side, g in enumerate((left, right)):
        for v in range(30):
            deg[(side, v)] = len({u for h, _, t in g.triples.tolist() for u in (h, t) if v in (h, t) and u != v})
    expected = sorted(deg, key=lambda node: (-deg[node], node))
    assert degree_ranking(pair).nodes() == expected


# -- betweenness -----------------------------------------------------------------------


def test_path_betweenness():
    assert betweenness_scores(single(graph(3, [(0, 1), (1, 2)])))[:3].tolist() == [0.0, 1.0, 0.0]


def test_star_betweenness():
    assert betweenness_scores(single(graph(4, [(0, 1), (0, 2), (0, 3)])))[0] == 3.0


def test_betweenness_ranking_order():
    r = betweenness_ranking(single(graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)])))
    assert [n for _, n in r.nodes()[:3]] == [2, 1, 3]


@pytest.mark.parametrize("seed", range(10))
def test_betweenness_matches_apsp_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 30))
    edges = random_edges(rng, n, float(rng.uniform(0.05, 0.4)))
    got = betweenness_scores(single(graph(n, edges)))[:n]
    np.testing.assert_allclose(got, apsp_betweenness(n, edges), atol=1e-9, rtol=0)


def test_disconnected_components():
    edges = [(0, 1), (1, 2), (3, 4), (4, 5)]
    assert betweenness_scores(single(graph(6, edges)))[:6].tolist() == [0, 1, 0, 0, 1, 0]


# -- avc -------------------------------------------------------------------------------


def test_avc_star():
    r = avc_ranking(single(graph(4, [(0, 1), (0, 2), (0, 3)])))
    assert left_part(r, 4) == [(0, 3.0), (1, 0.0), (2, 0.0), (3, 0.0)]


def test_avc_edgeless():
    g = KnowledgeGraph(tuple("abcd"), ("r",), np.empty((0, 3)))
    r = avc_ranking(KnowledgeGraphPair(g, g))
    assert r.order.tolist() == list(range(8))
    assert not r.scores.any()


def test_avc_four_cycle():
    # a-b-c-d-a: a (weight 2), then c (still 2), then b, d at 0
    r = avc_ranking(single(graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)])))
    assert left_part(r, 4) == [(0, 2.0), (2, 2.0), (1, 0.0), (3, 0.0)]


@pytest.mark.parametrize("seed", range(10))
def test_avc_matches_step_through(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(1, 40))
    edges = random_edges(rng, n, float(rng.uniform(0.0, 0.3)))
    r = avc_ranking(single(graph(n, edges)))
    order, scores = avc_reference(n + 1, edges)  # the isolated right node is global id n
    assert r.order.tolist() == order
    assert r.scores.tolist() == scores


def test_avc_scores_non_increasing():
    rng = np.random.default_rng(0)
    r = avc_ranking(single(graph(40, random_edges(rng, 40, 0.15))))
    assert np.all(np.diff(r.scores) <= 0)


# -- rankings in general -------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 25), st.integers(1, 25), st.integers(0, 2**31 - 1))
def test_rankings_are_permutations_of_both_graphs(n_left, n_right, seed):
    rng = np.random.default_rng(seed)
    pair = KnowledgeGraphPair(graph(n_left, random_edges(rng, n_left, 0.2)), graph(n_right, random_edges(rng, n_right, 0.2)))
    for r in compute_rankings(pair).values():
        assert sorted(r.order.tolist()) == list(range(n_left + n_right))
        assert (r.positions()[r.order] == np.arange(len(r))).all()


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**31 - 1))
def test_scores_invariant_under_relabelling(n, seed):
    rng = np.random.default_rng(seed)
    edges = random_edges(rng, n, 0.3)
    perm = rng.permutation(n)
    relabelled = [(int(perm[u]), int(perm[v])) for u, v in edges]
    for fn in (degree_scores, betweenness_scores):
        a = fn(single(graph(n, edges)))[:n]
        b = fn(single(graph(n, relabelled)))[:n]
        np.testing.assert_allclose(b[perm], a, atol=1e-9)


def test_gid_round_trip():
    for node in [(0, 0), (0, 4), (1, 0), (1, 3)]:
        assert to_node(to_gid(node, 5), 5) == node


def test_csv_export(tmp_path):
    r = degree_ranking(single(graph(3, [(0, 1), (1, 2)])))
    r.to_csv(tmp_path / "deg.csv")
    lines = (tmp_path / "deg.csv").read_text().splitlines()
    assert lines[0] == "side,node,score,rank"
    assert lines[1] == "left,1,2.0,1"
    assert len(lines) == 5
