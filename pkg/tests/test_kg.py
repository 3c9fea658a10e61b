import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ea_active.kg import (
    AlignmentSet,
    DatasetError,
    KnowledgeGraph,
    KnowledgeGraphPair,
    SyntheticParams,
    carve_validation,
    compute_partition,
    export_dataset,
    generate_synthetic_pair,
    load_alignments,
    load_dataset,
    load_graph,
    remove_nodes,
    save_graph,
    split_alignments,
)


def write(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def named(g):
    return {(g.entities[h], g.relations[r], g.entities[t]) for h, r, t in g.triples}


def graph_from_edges(n, edges, n_rel=1):
    triples = [(u, i % n_rel, v) for i, (u, v) in enumerate(edges)]
    return KnowledgeGraph(tuple(f"n{i}" for i in range(n)), tuple(f"r{k}" for k in range(n_rel)), np.array(triples).reshape(-1, 3))


class TestLoading:
    def test_parse(self, tmp_path):
        g = load_graph(write(tmp_path / "t.tsv", ["a\tr\tb", "b\tr\tc"]))
        assert g.entities == ("a", "b", "c")
        assert g.relations == ("r",)
        assert len(g.triples) == 2

    def test_duplicates_counted(self, tmp_path):
        g = load_graph(write(tmp_path / "t.tsv", ["a\tr\tb", "a\tr\tb"]))
        assert len(g.triples) == 1
        assert g.duplicates == 1

    def test_malformed_line_reports_line_number(self, tmp_path):
        with pytest.raises(DatasetError, match=":2:"):
            load_graph(write(tmp_path / "t.tsv", ["a\tr\tb", "a\tr"]))

    def test_empty_file(self, tmp_path):
        with pytest.raises(DatasetError):
            load_graph(write(tmp_path / "t.tsv", []))

    def test_alignments(self, tmp_path):
        left = load_graph(write(tmp_path / "l.tsv", ["a\tr\tb"]))
        right = load_graph(write(tmp_path / "r.tsv", ["x\tr\ty"]))
        pair = KnowledgeGraphPair(left, right)
        assert load_alignments(write(tmp_path / "a.tsv", ["a\tx", "a\tx"]), pair) == {(0, 0)}
        with pytest.raises(DatasetError, match="'q'"):
            load_alignments(write(tmp_path / "bad.tsv", ["a\tq"]), pair)

    def test_round_trip(self, tmp_path):
        pair, _ = generate_synthetic_pair(SyntheticParams(n_core=30, n_exclusive_left=3, n_exclusive_right=4, seed=3))
        save_graph(pair.left, tmp_path / "g.tsv")
        back = load_graph(tmp_path / "g.tsv")
        assert named(back) == named(pair.left)

    def test_dataset_directory_round_trip(self, tmp_path):
        pair, truth = generate_synthetic_pair(SyntheticParams(n_core=40, n_exclusive_left=5, n_exclusive_right=5, seed=1))
        al = split_alignments(truth, 0.7, 0.2, seed=0)
        export_dataset(pair, al, tmp_path)
        pair2, al2 = load_dataset(tmp_path)
        assert pair2.left.entities == pair.left.entities
        assert pair2.right.entities == pair.right.entities
        assert named(pair2.left) == named(pair.left)
        assert al2 == al


class TestSplits:
    def test_carve_80_20(self):
        train = [(i, i) for i in range(10)]
        al = carve_validation(train, [(20, 20)], 0.2, seed=0)
        assert len(al.train) == 8 and len(al.validation) == 2
        assert al.test == {(20, 20)}

    def test_deterministic(self):
        pairs = [(i, 2 * i) for i in range(50)]
        assert split_alignments(pairs, seed=4) == split_alignments(pairs, seed=4)

    def test_seed_changes_split(self):
        rng = np.random.default_rng(0)
        pairs = {(int(a), int(b)) for a, b in rng.integers(0, 1000, size=(100, 2))}
        assert split_alignments(pairs, seed=1).train != split_alignments(pairs, seed=2).train

    def test_disjoint(self):
        al = split_alignments([(i, i) for i in range(100)], 0.6, 0.2, seed=0)
        assert not (al.train & al.test or al.train & al.validation or al.validation & al.test)
        assert len(al.all) == 100

    def test_empty_partition_rejected(self):
        with pytest.raises(DatasetError):
            carve_validation([(0, 0)], [], 0.2)


class TestPartition:
    def test_fig3(self, fig3):
        part = compute_partition(*fig3)
        assert part.exclusive_left == {1}
        assert part.exclusive_right == set()

    def test_all_aligned(self):
        g = graph_from_edges(3, [(0, 1), (1, 2)])
        pair = KnowledgeGraphPair(g, g)
        al = AlignmentSet(frozenset({(0, 0), (1, 1)}), frozenset(), frozenset({(2, 2)}))
        part = compute_partition(pair, al)
        assert not part.exclusive_left and not part.exclusive_right

    def test_no_alignments(self):
        g = graph_from_edges(3, [(0, 1)])
        part = compute_partition(KnowledgeGraphPair(g, g), AlignmentSet(frozenset(), frozenset(), frozenset()))
        assert part.exclusive_left == {0, 1, 2}

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 30), st.integers(2, 30), st.lists(st.tuples(st.integers(0, 29), st.integers(0, 29)), max_size=40))
    def test_partition_covers_disjointly(self, n_left, n_right, raw):
        pairs = {(a % n_left, b % n_right) for a, b in raw}
        left = KnowledgeGraph(tuple(map(str, range(n_left))), ("r",), np.empty((0, 3)))
        right = KnowledgeGraph(tuple(map(str, range(n_right))), ("r",), np.empty((0, 3)))
        part = compute_partition(KnowledgeGraphPair(left, right), AlignmentSet(frozenset(pairs), frozenset(), frozenset()))
        assert part.aligned_left | part.exclusive_left == set(range(n_left))
        assert not part.aligned_left & part.exclusive_left
        assert part.aligned_right | part.exclusive_right == set(range(n_right))


class TestRemoveNodes:
    def test_remove_nothing(self):
        g = graph_from_edges(4, [(0, 1), (2, 3)])
        assert np.array_equal(remove_nodes(g, []).triples, g.triples)

    def test_path_middle(self):
        g = graph_from_edges(3, [(0, 1), (1, 2)])
        view = remove_nodes(g, {1})
        assert len(view.triples) == 0
        assert view.active.tolist() == [True, False, True]
        assert len(g.triples) == 2

    def test_against_brute_force(self):
        rng = np.random.default_rng(7)
        edges = {tuple(sorted(e)) for e in rng.integers(0, 20, size=(50, 2)).tolist() if e[0] != e[1]}
        g = graph_from_edges(20, sorted(edges), n_rel=3)
        removed = set(rng.choice(20, size=5, replace=False).tolist())
        expected = {tuple(t) for t in g.triples.tolist() if t[0] not in removed and t[2] not in removed}
        assert {tuple(t) for t in remove_nodes(g, removed).triples.tolist()} == expected

    def test_idempotent(self):
        g = graph_from_edges(5, [(0, 1), (1, 2), (3, 4)])
        once = remove_nodes(g, {1, 3})
        twice = remove_nodes(once, {1, 3})
        assert once.removed == twice.removed
        assert np.array_equal(once.triples, twice.triples)

    def test_normalized_adjacency_isolates_removed(self):
        g = graph_from_edges(3, [(0, 1), (1, 2)])
        a = remove_nodes(g, {0}).normalized_adjacency().toarray()
        assert a[0].tolist() == [1.0, 0.0, 0.0]
        assert a[1, 1] == pytest.approx(0.5) and a[1, 2] == pytest.approx(0.5)


class TestSynthetic:
    def test_no_perturbation_isomorphic(self):
        pair, truth = generate_synthetic_pair(SyntheticParams(n_core=50, n_exclusive_left=0, n_exclusive_right=0, perturbation=0.0, seed=2))
        assert named(pair.left) == named(pair.right)
        assert len(truth) == 50

    def test_exclusive_count(self):
        pair, truth = generate_synthetic_pair(SyntheticParams(n_core=40, n_exclusive_left=5, n_exclusive_right=2, seed=0))
        assert pair.left.num_entities - len({a for a, _ in truth}) == 5
        assert pair.right.num_entities - len({b for _, b in truth}) == 2

    def test_exclusives_wired_to_core(self):
        pair, truth = generate_synthetic_pair(SyntheticParams(n_core=40, n_exclusive_left=10, n_exclusive_right=10, seed=0))
        core_left = {a for a, _ in truth}
        deg = np.diff(pair.left.adjacency().indptr)
        for x in set(range(pair.left.num_entities)) - core_left:
            assert deg[x] >= 1

    def test_truth_maps_same_entity(self):
        pair, truth = generate_synthetic_pair(SyntheticParams(n_core=30, seed=5))
        assert all(pair.left.entities[a] == pair.right.entities[b] for a, b in truth)

    def test_dropped_count_binomial(self):
        # 1000 core triples: n_core=500, edge_factor=4
        p = SyntheticParams(n_core=500, n_exclusive_left=0, n_exclusive_right=0, edge_factor=4.0, perturbation=0.2, seed=11)
        ref, _ = generate_synthetic_pair(SyntheticParams(**{**p.__dict__, "perturbation": 0.0}))
        assert len(ref.left.triples) == 1000
        pair, _ = generate_synthetic_pair(p)
        lo, hi = stats.binom.ppf([0.005, 0.995], 1000, 0.2)
        for g in (pair.left, pair.right):
            dropped = 1000 - len(g.triples)
            assert lo <= dropped <= hi

    def test_deterministic(self, tmp_path):
        p = SyntheticParams(n_core=60, seed=9)
        for d in ("a", "b"):
            pair, truth = generate_synthetic_pair(p)
            export_dataset(pair, truth, tmp_path / d)
        for name in ("left_triples.tsv", "right_triples.tsv", "alignments.tsv", "left_entities.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_empty_core_rejected(self):
        with pytest.raises(DatasetError):
            generate_synthetic_pair(SyntheticParams(n_core=1))

    def test_invalid_params(self):
        with pytest.raises(DatasetError):
            SyntheticParams(perturbation=1.0)
        with pytest.raises(DatasetError):
            SyntheticParams(edge_factor=0)
