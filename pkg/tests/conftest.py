import numpy as np
import pytest

from ea_active.kg import AlignmentSet, KnowledgeGraph, KnowledgeGraphPair

ACCEPTANCE_LINES: list[str] = []


def graph(n, edges, n_rel=1, prefix="n"):
    triples = [(u, i % n_rel, v) for i, (u, v) in enumerate(edges)]
    return KnowledgeGraph(
        tuple(f"{prefix}{i}" for i in range(n)),
        tuple(f"r{k}" for k in range(n_rel)),
        np.array(triples, dtype=np.int64).reshape(-1, 3),
    )


def random_edges(rng, n, p):
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return [tuple(e) for e in np.argwhere(upper).tolist()]


@pytest.fixture
def fig3():
    """Left A, B, C / right D, E, F; train (A,E), (C,E); test (A,D), (C,F)."""
    left = KnowledgeGraph(("A", "B", "C"), ("r",), [(0, 0, 1), (1, 0, 2)])
    right = KnowledgeGraph(("D", "E", "F"), ("r",), [(0, 0, 1), (1, 0, 2)])
    alignments = AlignmentSet(frozenset({(0, 1), (2, 1)}), frozenset(), frozenset({(0, 0), (2, 2)}))
    return KnowledgeGraphPair(left, right), alignments


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def record(name, passed, detail=""):
        ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
