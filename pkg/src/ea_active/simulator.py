"""Incremental batch-wise pool-based simulation: select, label, update, retrain, log."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from .analysis import LearningCurve, auc
from .graph_metrics import NodeRanking, compute_rankings
from .heuristics import HistoryRecord, SelectorContext, make_selector, needs_rankings
from .kg import LEFT, RIGHT, SIDE_NAMES, AlignmentSet, KnowledgeGraphPair, PairView, compute_partition
from .model import Matcher, ModelConfig, evaluate_ranking, max_similarity, train_until_early_stop
from .oracle import GroundTruth, LabelState, apply_response, init_pool, oracle_answer

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("step", "queries", "found_alignments", "found_exclusives", "test_h1", "val_mrr")


@dataclass(frozen=True, eq=False)
class Dataset:
    pair: KnowledgeGraphPair
    alignments: AlignmentSet
    name: str = "dataset"


@dataclass(frozen=True)
class SimulationConfig:
    budget: int = 200
    total_queries: int | None = None
    heuristic: str = "rnd"
    heuristic_params: Mapping[str, object] = field(default_factory=dict)
    model: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0
    exclusive_removal: bool = True

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.total_queries is not None and self.total_queries < 1:
            raise ValueError("total_queries must be positive")
        make_selector(self.heuristic, self.heuristic_params)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["heuristic_params"] = dict(self.heuristic_params)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> SimulationConfig:
        d = dict(d)
        d["model"] = ModelConfig(**d.get("model", {}))
        d["heuristic_params"] = dict(d.get("heuristic_params") or {})
        return cls(**d)


@dataclass
class SimulationResult:
    config: SimulationConfig
    rows: list[dict]
    state: LabelState
    history: list[HistoryRecord]
    initial_pool_size: int
    total_queries: int
    dataset: str = ""

    def curve(self, metric: str = "test_h1") -> LearningCurve:
        return LearningCurve(
            tuple(r["queries"] for r in self.rows),
            tuple(float(r[metric]) for r in self.rows),
            heuristic=self.config.heuristic,
            seed=self.config.seed,
            dataset=self.dataset,
            total_queries=self.total_queries,
        )

    def auc(self, metric: str = "test_h1") -> float:
        return auc(self.curve(metric), self.total_queries)


def _step_seed(seed: int, step: int) -> int:
    return int(np.random.SeedSequence([seed, step]).generate_state(1)[0])


def run_simulation(
    dataset: Dataset, config: SimulationConfig, rankings: Mapping[str, NodeRanking] | None = None
) -> SimulationResult:
    pair, alignments = dataset.pair, dataset.alignments
    if not alignments.validation or not alignments.test:
        raise ValueError("simulation needs validation and test alignments")
    partition = compute_partition(pair, alignments)
    truth = GroundTruth(alignments, partition)
    state = init_pool(partition, alignments)
    p0 = len(state.pool)
    total = p0 if config.total_queries is None else min(config.total_queries, p0)

    selector = make_selector(config.heuristic, config.heuristic_params)
    needed = needs_rankings(config.heuristic, config.heuristic_params)
    if rankings is None:
        rankings = compute_rankings(pair, sorted(needed))
    elif not needed <= set(rankings):
        raise ValueError(f"missing rankings: {sorted(needed - set(rankings))}")

    n_left, n_right = pair.sizes
    model = Matcher(replace(config.model, seed=config.seed), n_left, n_right)
    view = PairView.full(pair)
    snapshot = model.snapshot(view)
    trained = False
    history: list[HistoryRecord] = []
    rows: list[dict] = []
    queries = 0

    while state.pool and queries < total:
        ctx = SelectorContext(
            pool=state.pool,
            label_state=state,
            budget=min(config.budget, total - queries),
            n_left=n_left,
            snapshot=snapshot if trained else None,
            rankings=rankings,
            history=tuple(history),
            seed=_step_seed(config.seed, state.step),
        )
        batch = selector(ctx)
        if len(batch) != ctx.size or len(set(batch)) != len(batch) or not set(batch) <= state.pool:
            raise RuntimeError(f"{config.heuristic} returned an invalid batch")

        response = oracle_answer(state, batch, truth)
        if trained:
            for side in (LEFT, RIGHT):
                nodes = [n for s, n in batch if s == side]
                excl = (response.exclusive_left, response.exclusive_right)[side]
                for node, s in zip(nodes, max_similarity(snapshot, side, nodes).tolist()):
                    history.append(HistoryRecord((side, node), s, node not in excl))
        state = apply_response(state, response)
        queries += len(batch)

        if config.exclusive_removal:
            excl_left, excl_right = state.found_exclusive_left, state.found_exclusive_right
            view = PairView.without(pair, excl_left, excl_right)
        else:
            excl_left = excl_right = frozenset()
        if state.found_alignments:
            train_until_early_stop(
                model,
                view,
                state.found_alignments,
                sorted(set(range(n_left)) - excl_left),
                sorted(set(range(n_right)) - excl_right),
                alignments.validation,
                excl_left,
                excl_right,
            )
            trained = True
        snapshot = model.snapshot(view, excl_left, excl_right)
        test = evaluate_ranking(snapshot, alignments.test)
        val = evaluate_ranking(snapshot, alignments.validation)
        rows.append(
            {
                "step": state.step,
                "queries": queries,
                "found_alignments": len(state.found_alignments),
                "found_exclusives": len(state.found_exclusive_left) + len(state.found_exclusive_right),
                "test_h1": test["h1"],
                "val_mrr": val["mrr"],
            }
        )
        logger.debug("%s seed=%d step=%d queries=%d h1=%.4f", config.heuristic, config.seed, state.step, queries, test["h1"])

    return SimulationResult(config, rows, state, history, p0, total, dataset.name)


# -- run artifacts -------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_run_artifacts(result: SimulationResult, directory: str | Path, echo: Mapping | None = None) -> None:
    """config.yaml, metrics.csv, queries.csv and summary.yaml in ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    cfg = dict(echo) if echo is not None else {"simulation": result.config.to_dict()}
    (d / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=True), encoding="utf-8")
    with open(d / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        for r in result.rows:
            w.writerow([_fmt(r[c]) for c in METRIC_COLUMNS])
    with open(d / "queries.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "side", "node", "outcome"])
        for step, side, node, outcome in result.state.query_log:
            w.writerow([step, SIDE_NAMES[side], node, outcome])
    summary = {
        "heuristic": result.config.heuristic,
        "seed": result.config.seed,
        "dataset": result.dataset,
        "steps": len(result.rows),
        "initial_pool": result.initial_pool_size,
        "total_queries": result.total_queries,
        "auc_test_h1": result.auc("test_h1"),
        "auc_val_mrr": result.auc("val_mrr"),
        "final_test_h1": float(result.rows[-1]["test_h1"]) if result.rows else None,
        "found_alignments": len(result.state.found_alignments),
    }
    (d / "summary.yaml").write_text(yaml.safe_dump(summary, sort_keys=True), encoding="utf-8")


def read_metrics(directory: str | Path) -> tuple[dict, LearningCurve]:
    """Summary and test-H@1 curve of a run directory."""
    d = Path(directory)
    metrics, summary_path = d / "metrics.csv", d / "summary.yaml"
    if not metrics.exists() or not summary_path.exists():
        raise FileNotFoundError(f"{d}: not a run directory (metrics.csv / summary.yaml missing)")
    summary = yaml.safe_load(summary_path.read_text(encoding="utf-8"))
    with open(metrics, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRIC_COLUMNS:
            raise ValueError(f"{metrics}: unexpected columns {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{metrics}: no rows")
    curve = LearningCurve(
        tuple(int(r["queries"]) for r in rows),
        tuple(float(r["test_h1"]) for r in rows),
        heuristic=summary["heuristic"],
        seed=summary["seed"],
        dataset=summary.get("dataset", ""),
        total_queries=summary["total_queries"],
    )
    return summary, curve
