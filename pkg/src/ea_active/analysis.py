"""Learning-curve AUC, Welch's t-test and cross-seed aggregation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = 0.01

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class LearningCurve:
    queries: tuple[int, ...]
    scores: tuple[float, ...]
    heuristic: str = ""
    seed: int = 0
    dataset: str = ""
    total_queries: int | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.queries) != len(self.scores):
            raise ValueError("queries and scores differ in length")
        if any(b <= a for a, b in zip(self.queries, self.queries[1:])):
            raise ValueError("queries must be strictly increasing")
        if not all(math.isfinite(s) for s in self.scores):
            raise ValueError("scores must be finite")


def auc(curve: LearningCurve, total_queries: int | None = None) -> float:
    """Normalised trapezoidal area under queries-vs-score.

    The curve starts at (0, first score) and the last score is carried forward
    to ``total_queries``.
    """
    if not curve.queries:
        raise ValueError("empty curve")
    total = total_queries if total_queries is not None else curve.total_queries
    if total is None:
        total = curve.queries[-1]
    if total <= 0 or total < curve.queries[-1]:
        raise ValueError("total_queries must be positive and cover the curve")
    x = list(curve.queries)
    y = list(curve.scores)
    if x[0] != 0:
        x.insert(0, 0)
        y.insert(0, y[0])
    if x[-1] != total:
        x.append(total)
        y.append(y[-1])
    return float(_trapezoid(y, x) / total)


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return WelchResult(0.0, float("nan"), 1.0)
        return WelchResult(math.copysign(math.inf, diff), float("nan"), 0.0)
    t = diff / math.sqrt(se2)
    df = se2**2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    p = float(min(1.0, 2.0 * stats.t.sf(abs(t), df)))
    return WelchResult(float(t), float(df), p)


@dataclass(frozen=True)
class AggregateRow:
    heuristic: str
    n: int
    mean_auc: float
    std_auc: float
    p_vs_rnd: float | None
    significant: bool | None


def aggregate(runs: Mapping[str, Sequence[float]], baseline: str = "rnd", alpha: float = SIGNIFICANCE_LEVEL) -> list[AggregateRow]:
    """Mean / sample std of per-run AUC values per heuristic, with Welch flags against ``baseline``."""
    base = runs.get(baseline)
    if base is None:
        logger.warning("no %r runs: significance flags omitted", baseline)
    rows = []
    for name in sorted(runs):
        vals = np.asarray(runs[name], dtype=np.float64)
        std = float(vals.std(ddof=1)) if len(vals) > 1 else float("nan")
        p = sig = None
        if base is not None and name != baseline and len(vals) >= 2 and len(base) >= 2:
            p = welch_t_test(vals, base).p
            sig = p < alpha
        rows.append(AggregateRow(name, len(vals), float(vals.mean()), std, p, sig))
    return rows


def write_aggregate_csv(rows: Sequence[AggregateRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["heuristic", "n", "mean_auc", "std_auc", "p_vs_rnd", "significant"])
        for r in rows:
            w.writerow([r.heuristic, r.n, repr(r.mean_auc), repr(r.std_auc), "" if r.p_vs_rnd is None else repr(r.p_vs_rnd), "" if r.significant is None else int(r.significant)])


def format_table(rows: Sequence[AggregateRow]) -> str:
    lines = [("heuristic", "n", "AUC", "p vs rnd")]
    for r in rows:
        star = "*" if r.significant else ""
        std = "nan" if math.isnan(r.std_auc) else f"{r.std_auc:.4f}"
        p = "" if r.p_vs_rnd is None else f"{r.p_vs_rnd:.2g}"
        lines.append((r.heuristic, str(r.n), f"{r.mean_auc:.4f} ± {std}{star}", p))
    widths = [max(len(line[i]) for line in lines) for i in range(4)]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip() for line in lines) + "\n"


def write_curves_csv(curves: Sequence[LearningCurve], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["heuristic", "seed", "queries", "score"])
        for c in curves:
            for q, s in zip(c.queries, c.scores):
                w.writerow([c.heuristic, c.seed, q, repr(float(s))])
