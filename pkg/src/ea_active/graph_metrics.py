"""Structural node rankings for the static query heuristics (deg, betw, avc)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels
from .kg import KnowledgeGraphPair, SIDE_NAMES

Node = tuple[int, int]  # (side, node index)


@dataclass(frozen=True, eq=False)
class NodeRanking:
    """Ordered (side, node) entries over both graphs with one score each.

    Joint ("global") ids put all left nodes first, so sorting by global id is the
    (side, node) tie-break.
    """

    name: str
    order: np.ndarray  # global ids, best first
    scores: np.ndarray  # aligned with order
    n_left: int

    def __len__(self) -> int:
        return len(self.order)

    def nodes(self) -> list[Node]:
        return [to_node(g, self.n_left) for g in self.order.tolist()]

    def positions(self) -> np.ndarray:
        """Rank position per global id; -1 for ids the ranking does not cover."""
        size = int(self.order.max()) + 1 if len(self.order) else 0
        pos = np.full(size, -1, dtype=np.int64)
        pos[self.order] = np.arange(len(self.order))
        return pos

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["side", "node", "score", "rank"])
            for rank, (g, s) in enumerate(zip(self.order.tolist(), self.scores.tolist()), start=1):
                side, node = to_node(g, self.n_left)
                w.writerow([SIDE_NAMES[side], node, repr(float(s)), rank])


def to_node(gid: int, n_left: int) -> Node:
    return (0, gid) if gid < n_left else (1, gid - n_left)


def to_gid(node: Node, n_left: int) -> int:
    side, idx = node
    return idx if side == 0 else n_left + idx


def joint_adjacency(pair: KnowledgeGraphPair) -> sp.csr_matrix:
    """Block-diagonal simple-graph adjacency over global ids."""
    adj = sp.block_diag([pair.left.adjacency(), pair.right.adjacency()], format="csr")
    adj.sort_indices()
    return adj


def _csr_arrays(adj: sp.csr_matrix) -> tuple[np.ndarray, np.ndarray]:
    return adj.indptr.astype(np.int64), adj.indices.astype(np.int64)


def rank_by_score(name: str, scores: np.ndarray, n_left: int) -> NodeRanking:
    # lexsort: last key primary; descending score, ascending id
    order = np.lexsort((np.arange(len(scores)), -scores))
    return NodeRanking(name, order.astype(np.int64), scores[order], n_left)


def degree_scores(pair: KnowledgeGraphPair) -> np.ndarray:
    return np.diff(joint_adjacency(pair).indptr).astype(np.float64)


def degree_ranking(pair: KnowledgeGraphPair) -> NodeRanking:
    return rank_by_score("deg", degree_scores(pair), pair.left.num_entities)


def betweenness_scores(pair: KnowledgeGraphPair) -> np.ndarray:
    parts = []
    for graph in (pair.left, pair.right):
        adj = graph.adjacency()
        adj.sort_indices()
        parts.append(kernels.brandes_betweenness(*_csr_arrays(adj)))
    return np.concatenate(parts)


def betweenness_ranking(pair: KnowledgeGraphPair) -> NodeRanking:
    return rank_by_score("betw", betweenness_scores(pair), pair.left.num_entities)


def avc_ranking(pair: KnowledgeGraphPair) -> NodeRanking:
    """Approximate-vertex-cover order; score is the node's weight when it was picked.

    Picked scores never increase, but equal scores need not follow id order since
    a node can be decremented down to a tie later.
    """
    adj = joint_adjacency(pair)
    indptr, indices = _csr_arrays(adj)
    order, scores = kernels.avc_order(indptr, indices, np.diff(indptr))
    return NodeRanking("avc", np.asarray(order, dtype=np.int64), np.asarray(scores, dtype=np.float64), pair.left.num_entities)


STATIC_RANKINGS = {
    "deg": degree_ranking,
    "betw": betweenness_ranking,
    "avc": avc_ranking,
}


def compute_rankings(pair: KnowledgeGraphPair, names=("deg", "betw", "avc")) -> dict[str, NodeRanking]:
    return {name: STATIC_RANKINGS[name](pair) for name in names}
