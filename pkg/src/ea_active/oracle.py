"""Pool construction, the simulated labelling oracle and label-state updates."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable

from .kg import LEFT, RIGHT, AlignmentSet, NodePartition, Pair

Node = tuple[int, int]


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class OracleResponse:
    alignments: frozenset[Pair]
    exclusive_left: frozenset[int]
    exclusive_right: frozenset[int]
    query: tuple[Node, ...] = ()

    def labeled_nodes(self) -> frozenset[Node]:
        nodes = {(LEFT, a) for a, _ in self.alignments} | {(RIGHT, b) for _, b in self.alignments}
        nodes |= {(LEFT, x) for x in self.exclusive_left} | {(RIGHT, x) for x in self.exclusive_right}
        return frozenset(nodes)


@dataclass(frozen=True)
class LabelState:
    pool: frozenset[Node]
    found_alignments: frozenset[Pair] = frozenset()
    found_exclusive_left: frozenset[int] = frozenset()
    found_exclusive_right: frozenset[int] = frozenset()
    step: int = 0
    query_log: tuple[tuple[int, int, int, str], ...] = field(default=(), repr=False)

    def labeled(self) -> frozenset[Node]:
        nodes = {(LEFT, a) for a, _ in self.found_alignments} | {(RIGHT, b) for _, b in self.found_alignments}
        nodes |= {(LEFT, x) for x in self.found_exclusive_left} | {(RIGHT, x) for x in self.found_exclusive_right}
        return frozenset(nodes)

    def found_exclusive(self, side: int) -> frozenset[int]:
        return self.found_exclusive_left if side == LEFT else self.found_exclusive_right


class GroundTruth:
    """Indexed train alignments and exclusive sets the oracle answers from."""

    def __init__(self, alignments: AlignmentSet, partition: NodePartition):
        self.alignments = alignments
        self.partition = partition
        self._touching: dict[Node, list[Pair]] = defaultdict(list)
        for a, b in sorted(alignments.train):
            self._touching[(LEFT, a)].append((a, b))
            self._touching[(RIGHT, b)].append((a, b))

    def train_pairs_of(self, node: Node) -> list[Pair]:
        return self._touching.get(node, [])

    def is_exclusive(self, node: Node) -> bool:
        return node[1] in self.partition.exclusive(node[0])


def init_pool(partition: NodePartition, alignments: AlignmentSet) -> LabelState:
    """Train-alignment endpoints of both sides plus every exclusive node."""
    pool = {(LEFT, a) for a, _ in alignments.train} | {(RIGHT, b) for _, b in alignments.train}
    pool |= {(LEFT, x) for x in partition.exclusive_left} | {(RIGHT, x) for x in partition.exclusive_right}
    if not pool:
        raise OracleError("initial pool is empty")
    return LabelState(pool=frozenset(pool))


def oracle_answer(state: LabelState, query: Iterable[Node], truth: GroundTruth) -> OracleResponse:
    query = tuple(query)
    found: set[Pair] = set()
    excl = ([], [])
    for node in query:
        if node not in state.pool:
            raise OracleError(f"queried node {node} is not in the pool")
        pairs = truth.train_pairs_of(node)
        if pairs:
            found.update(pairs)
        elif truth.is_exclusive(node):
            excl[node[0]].append(node[1])
        else:
            raise OracleError(f"queried node {node} has neither a train alignment nor is exclusive")
    return OracleResponse(frozenset(found), frozenset(excl[0]), frozenset(excl[1]), query)


def apply_response(state: LabelState, response: OracleResponse) -> LabelState:
    labeled = response.labeled_nodes()
    log = list(state.query_log)
    for side, node in response.query:
        outcome = "exclusive" if node in (response.exclusive_left, response.exclusive_right)[side] else "aligned"
        log.append((state.step, side, node, outcome))
    return replace(
        state,
        pool=state.pool - labeled,
        found_alignments=state.found_alignments | response.alignments,
        found_exclusive_left=state.found_exclusive_left | response.exclusive_left,
        found_exclusive_right=state.found_exclusive_right | response.exclusive_right,
        step=state.step + 1,
        query_log=tuple(log),
    )
