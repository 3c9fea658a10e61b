"""Knowledge graph pairs, alignments, splits and exclusive-node bookkeeping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

Pair = tuple[int, int]

LEFT = 0
RIGHT = 1
SIDE_NAMES = ("left", "right")


class DatasetError(ValueError):
    """Raised for malformed or inconsistent dataset input."""


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    entities: tuple[str, ...]
    relations: tuple[str, ...]
    triples: np.ndarray  # (m, 3) int64: head, relation, tail
    duplicates: int = field(default=0, compare=False)

    def __post_init__(self):
        triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        triples.setflags(write=False)
        object.__setattr__(self, "triples", triples)
        if len(triples):
            if triples.min() < 0:
                raise DatasetError("negative index in triples")
            if max(triples[:, 0].max(), triples[:, 2].max()) >= len(self.entities):
                raise DatasetError("entity index out of range")
            if triples[:, 1].max() >= len(self.relations):
                raise DatasetError("relation index out of range")
            if len(np.unique(triples, axis=0)) != len(triples):
                raise DatasetError("duplicate triples")

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    def entity_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.entities)}

    def edges(self) -> np.ndarray:
        """Unique undirected edges (u < v) with self-loops and parallel relations collapsed."""
        if not len(self.triples):
            return np.empty((0, 2), dtype=np.int64)
        h, t = self.triples[:, 0], self.triples[:, 2]
        keep = h != t
        e = np.stack([np.minimum(h, t)[keep], np.maximum(h, t)[keep]], axis=1)
        if not len(e):
            return np.empty((0, 2), dtype=np.int64)
        return np.unique(e, axis=0)

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency of the undirected simple graph."""
        n = self.num_entities
        e = self.edges()
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(len(rows), dtype=np.float64)
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


@dataclass(frozen=True, eq=False)
class KnowledgeGraphPair:
    left: KnowledgeGraph
    right: KnowledgeGraph

    def side(self, side: int) -> KnowledgeGraph:
        return self.left if side == LEFT else self.right

    @property
    def sizes(self) -> tuple[int, int]:
        return self.left.num_entities, self.right.num_entities


@dataclass(frozen=True)
class AlignmentSet:
    train: frozenset[Pair]
    validation: frozenset[Pair]
    test: frozenset[Pair]

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            object.__setattr__(self, name, frozenset((int(a), int(b)) for a, b in getattr(self, name)))
        if self.train & self.validation or self.train & self.test or self.validation & self.test:
            raise DatasetError("train, validation and test alignments must be disjoint")

    @property
    def all(self) -> frozenset[Pair]:
        return self.train | self.validation | self.test

    def validate(self, pair: KnowledgeGraphPair) -> None:
        n_left, n_right = pair.sizes
        for a, b in self.all:
            if not (0 <= a < n_left and 0 <= b < n_right):
                raise DatasetError(f"alignment ({a}, {b}) out of range")


@dataclass(frozen=True)
class NodePartition:
    aligned_left: frozenset[int]
    aligned_right: frozenset[int]
    exclusive_left: frozenset[int]
    exclusive_right: frozenset[int]

    def exclusive(self, side: int) -> frozenset[int]:
        return self.exclusive_left if side == LEFT else self.exclusive_right


@dataclass(frozen=True)
class SyntheticParams:
    n_core: int = 300
    n_exclusive_left: int = 60
    n_exclusive_right: int = 60
    n_relations: int = 10
    edge_factor: float = 4.0
    perturbation: float = 0.1
    seed: int = 0
    # Pareto shape for per-entity attachment weights; None gives a uniform random graph
    degree_skew: float | None = 2.5

    def __post_init__(self):
        if not 0.0 <= self.perturbation < 1.0:
            raise DatasetError("perturbation must lie in [0, 1)")
        if min(self.n_core, self.n_exclusive_left, self.n_exclusive_right, self.n_relations) < 0:
            raise DatasetError("counts must be non-negative")
        if self.edge_factor <= 0:
            raise DatasetError("edge_factor must be positive")


# -- file io -----------------------------------------------------------------


def _read_rows(path: Path, n_fields: int) -> list[tuple[int, list[str]]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise DatasetError(f"{path}:{lineno}: expected {n_fields} tab-separated fields, got {len(fields)}")
            rows.append((lineno, fields))
    return rows


def load_graph(path: str | Path, entities: Sequence[str] | None = None) -> KnowledgeGraph:
    """Read a head/relation/tail TSV file; vocabularies follow first appearance.

    ``entities`` optionally fixes the leading part of the entity vocabulary, which
    keeps isolated entities that never occur in a triple.
    """
    path = Path(path)
    rows = _read_rows(path, 3)
    if not rows:
        raise DatasetError(f"{path}: no triples")
    entity_ids: dict[str, int] = {name: i for i, name in enumerate(entities or ())}
    relations: dict[str, int] = {}
    seen: dict[tuple[int, int, int], None] = {}
    duplicates = 0
    for _, (h, r, t) in rows:
        hi = entity_ids.setdefault(h, len(entity_ids))
        ri = relations.setdefault(r, len(relations))
        ti = entity_ids.setdefault(t, len(entity_ids))
        key = (hi, ri, ti)
        if key in seen:
            duplicates += 1
        else:
            seen[key] = None
    if duplicates:
        logger.info("%s: dropped %d duplicate triples", path, duplicates)
    return KnowledgeGraph(
        tuple(entity_ids), tuple(relations), np.array(list(seen), dtype=np.int64), duplicates
    )


def save_graph(graph: KnowledgeGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in graph.triples:
            fh.write(f"{graph.entities[h]}\t{graph.relations[r]}\t{graph.entities[t]}\n")


def load_alignments(path: str | Path, pair: KnowledgeGraphPair) -> frozenset[Pair]:
    path = Path(path)
    left_index = pair.left.entity_index()
    right_index = pair.right.entity_index()
    out = set()
    for lineno, (a, b) in _read_rows(path, 2):
        if a not in left_index:
            raise DatasetError(f"{path}:{lineno}: unknown left entity {a!r}")
        if b not in right_index:
            raise DatasetError(f"{path}:{lineno}: unknown right entity {b!r}")
        out.add((left_index[a], right_index[b]))
    return frozenset(out)


def save_alignments(pairs: Iterable[Pair], pair: KnowledgeGraphPair, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in sorted(pairs):
            fh.write(f"{pair.left.entities[a]}\t{pair.right.entities[b]}\n")


# -- splits and partitions ---------------------------------------------------


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def carve_validation(
    train: Iterable[Pair], test: Iterable[Pair], val_fraction: float = 0.2, seed: int = 0
) -> AlignmentSet:
    """Split a validation part off the train side; test stays untouched."""
    if not 0.0 < val_fraction < 1.0:
        raise DatasetError("val_fraction must lie in (0, 1)")
    train = sorted(set(train))
    if not train:
        raise DatasetError("empty train alignment")
    order = np.random.default_rng(seed).permutation(len(train))
    n_val = _round_half_up(val_fraction * len(train))
    val = [train[i] for i in order[:n_val]]
    tr = [train[i] for i in order[n_val:]]
    if not val or not tr:
        raise DatasetError("train/validation split leaves an empty partition")
    return AlignmentSet(frozenset(tr), frozenset(val), frozenset(test))


def split_alignments(
    pairs: Iterable[Pair], train_fraction: float = 0.7, val_fraction: float = 0.2, seed: int = 0
) -> AlignmentSet:
    """Random train/test split, then an additional train/validation split of the train side."""
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError("train_fraction must lie in (0, 1)")
    pairs = sorted(set(pairs))
    if not pairs:
        raise DatasetError("no alignments to split")
    order = np.random.default_rng(seed).permutation(len(pairs))
    n_train = _round_half_up(train_fraction * len(pairs))
    train = [pairs[i] for i in order[:n_train]]
    test = [pairs[i] for i in order[n_train:]]
    if not test:
        raise DatasetError("train/test split leaves an empty test partition")
    return carve_validation(train, test, val_fraction, seed + 1)


def compute_partition(pair: KnowledgeGraphPair, alignments: AlignmentSet) -> NodePartition:
    alignments.validate(pair)
    al = frozenset(a for a, _ in alignments.all)
    ar = frozenset(b for _, b in alignments.all)
    n_left, n_right = pair.sizes
    return NodePartition(
        aligned_left=al,
        aligned_right=ar,
        exclusive_left=frozenset(range(n_left)) - al,
        exclusive_right=frozenset(range(n_right)) - ar,
    )


# -- masked views ------------------------------------------------------------


@dataclass(frozen=True)
class MaskedGraph:
    """A graph with some entities cut out of message passing.

    Indices are kept; removed entities stay as isolated, inactive nodes.
    """

    graph: KnowledgeGraph
    removed: frozenset[int] = frozenset()
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def num_entities(self) -> int:
        return self.graph.num_entities

    @property
    def active(self) -> np.ndarray:
        mask = np.ones(self.num_entities, dtype=bool)
        if self.removed:
            mask[list(self.removed)] = False
        return mask

    @property
    def triples(self) -> np.ndarray:
        t = self.graph.triples
        if not self.removed or not len(t):
            return t
        act = self.active
        return t[act[t[:, 0]] & act[t[:, 2]]]

    def adjacency(self) -> sp.csr_matrix:
        if "adj" not in self._cache:
            adj = self.graph.adjacency()
            if self.removed:
                keep = sp.diags(self.active.astype(np.float64))
                adj = (keep @ adj @ keep).tocsr()
                adj.eliminate_zeros()
            self._cache["adj"] = adj
        return self._cache["adj"]

    def normalized_adjacency(self) -> sp.csr_matrix:
        """D^-1/2 (A + I) D^-1/2 over the active subgraph."""
        if "norm" not in self._cache:
            a = self.adjacency() + sp.identity(self.num_entities, format="csr")
            d = np.asarray(a.sum(axis=1)).ravel()
            inv = sp.diags(1.0 / np.sqrt(d))
            self._cache["norm"] = (inv @ a @ inv).tocsr()
        return self._cache["norm"]


def remove_nodes(graph: KnowledgeGraph | MaskedGraph, nodes: Iterable[int]) -> MaskedGraph:
    nodes = frozenset(int(n) for n in nodes)
    if isinstance(graph, MaskedGraph):
        base, removed = graph.graph, graph.removed
    else:
        base, removed = graph, frozenset()
    bad = [n for n in nodes if not 0 <= n < base.num_entities]
    if bad:
        raise DatasetError(f"node indices out of range: {sorted(bad)[:5]}")
    return MaskedGraph(base, removed | nodes)


@dataclass(frozen=True)
class PairView:
    left: MaskedGraph
    right: MaskedGraph

    @classmethod
    def full(cls, pair: KnowledgeGraphPair) -> PairView:
        return cls(MaskedGraph(pair.left), MaskedGraph(pair.right))

    @classmethod
    def without(cls, pair: KnowledgeGraphPair, left: Iterable[int], right: Iterable[int]) -> PairView:
        return cls(remove_nodes(pair.left, left), remove_nodes(pair.right, right))

    def side(self, side: int) -> MaskedGraph:
        return self.left if side == LEFT else self.right


# -- synthetic data ----------------------------------------------------------


def _sample_edges(n: int, m: int, weights: np.ndarray | None, rng: np.random.Generator) -> np.ndarray:
    """Sample m distinct undirected edges on n nodes, endpoints drawn proportional to weights."""
    max_edges = n * (n - 1) // 2
    if m > max_edges:
        raise DatasetError(f"cannot place {m} edges on {n} nodes")
    p = None if weights is None else weights / weights.sum()
    seen: dict[tuple[int, int], None] = {}
    while len(seen) < m:
        need = m - len(seen)
        u = rng.choice(n, size=2 * need + 8, p=p)
        v = rng.choice(n, size=2 * need + 8, p=p)
        for a, b in zip(u.tolist(), v.tolist()):
            if a == b:
                continue
            key = (a, b) if a < b else (b, a)
            if key not in seen:
                seen[key] = None
                if len(seen) == m:
                    break
    return np.array(list(seen), dtype=np.int64).reshape(-1, 2)


def generate_synthetic_pair(params: SyntheticParams) -> tuple[KnowledgeGraphPair, frozenset[Pair]]:
    """Shared random core copied to both sides, perturbed per side, plus exclusive entities.

    Returns the graph pair and the ground-truth alignment (same core entity on both sides).
    """
    rng = np.random.default_rng(params.seed)
    n = params.n_core
    m = _round_half_up(n * params.edge_factor / 2)
    if n < 2 or m < 1:
        raise DatasetError("synthetic core has no edges; increase n_core or edge_factor")
    n_rel = max(params.n_relations, 1)
    weights = None
    if params.degree_skew is not None:
        weights = rng.pareto(params.degree_skew, size=n) + 1.0
    edges = _sample_edges(n, m, weights, rng)
    flip = rng.random(m) < 0.5
    heads = np.where(flip, edges[:, 1], edges[:, 0])
    tails = np.where(flip, edges[:, 0], edges[:, 1])
    rels = rng.integers(0, n_rel, size=m)
    core = np.stack([heads, rels, tails], axis=1)

    relations = tuple(f"r{k}" for k in range(n_rel))
    core_names = [f"e{i}" for i in range(n)]
    extra_deg = max(params.edge_factor / 2.0 - 1.0, 0.0)

    sides = []
    for side, n_excl, prefix in ((LEFT, params.n_exclusive_left, "xl"), (RIGHT, params.n_exclusive_right, "xr")):
        keep = rng.random(m) >= params.perturbation
        triples = [core[keep]]
        for j in range(n_excl):
            k = min(1 + int(rng.poisson(extra_deg)), n)
            targets = rng.choice(n, size=k, replace=False)
            out = rng.random(k) < 0.5
            r = rng.integers(0, n_rel, size=k)
            x = np.full(k, n + j)
            triples.append(np.stack([np.where(out, x, targets), r, np.where(out, targets, x)], axis=1))
        names = core_names + [f"{prefix}{j}" for j in range(n_excl)]
        # right side gets a seeded relabelling so indices carry no alignment signal
        perm = np.arange(len(names)) if side == LEFT else rng.permutation(len(names))
        t = np.concatenate(triples, axis=0)
        t = np.stack([perm[t[:, 0]], t[:, 1], perm[t[:, 2]]], axis=1)
        ordered = [""] * len(names)
        for old, new in enumerate(perm.tolist()):
            ordered[new] = names[old]
        t = np.unique(t, axis=0)
        sides.append((KnowledgeGraph(tuple(ordered), relations, t), perm))

    (left, lperm), (right, rperm) = sides
    truth = frozenset((int(lperm[i]), int(rperm[i])) for i in range(n))
    return KnowledgeGraphPair(left, right), truth


def export_dataset(
    pair: KnowledgeGraphPair, alignments: AlignmentSet | Iterable[Pair], directory: str | Path
) -> None:
    """Write a dataset directory: triples, entity vocabularies and alignment TSV files.

    An ``AlignmentSet`` is written as train/validation/test files; a plain pair
    collection as a single ``alignments.tsv``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, graph in (("left", pair.left), ("right", pair.right)):
        save_graph(graph, directory / f"{name}_triples.tsv")
        (directory / f"{name}_entities.txt").write_text(
            "".join(e + "\n" for e in graph.entities), encoding="utf-8"
        )
    if isinstance(alignments, AlignmentSet):
        save_alignments(alignments.train, pair, directory / "train_alignments.tsv")
        save_alignments(alignments.validation, pair, directory / "validation_alignments.tsv")
        save_alignments(alignments.test, pair, directory / "test_alignments.tsv")
    else:
        save_alignments(alignments, pair, directory / "alignments.tsv")


def _read_vocab(path: Path) -> list[str] | None:
    if not path.exists():
        return None
    return [line for line in path.read_text(encoding="utf-8").split("\n") if line]


def load_dataset(
    directory: str | Path, val_fraction: float = 0.2, train_fraction: float = 0.7, seed: int = 0
) -> tuple[KnowledgeGraphPair, AlignmentSet]:
    """Load a dataset directory written by :func:`export_dataset` (or laid out alike).

    Lookup order for alignments: explicit train/validation/test files; train/test
    files (validation carved from train); a single ``alignments.tsv`` (split here).
    """
    d = Path(directory)
    pair = KnowledgeGraphPair(
        load_graph(d / "left_triples.tsv", _read_vocab(d / "left_entities.txt")),
        load_graph(d / "right_triples.tsv", _read_vocab(d / "right_entities.txt")),
    )
    if (d / "train_alignments.tsv").exists():
        train = load_alignments(d / "train_alignments.tsv", pair)
        test = load_alignments(d / "test_alignments.tsv", pair)
        if (d / "validation_alignments.tsv").exists():
            alignments = AlignmentSet(train, load_alignments(d / "validation_alignments.tsv", pair), test)
        else:
            alignments = carve_validation(train, test, val_fraction, seed)
    elif (d / "alignments.tsv").exists():
        alignments = split_alignments(load_alignments(d / "alignments.tsv", pair), train_fraction, val_fraction, seed)
    else:
        raise DatasetError(f"{d}: no alignment files found")
    alignments.validate(pair)
    return pair, alignments
