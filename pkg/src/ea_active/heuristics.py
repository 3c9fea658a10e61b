"""Query-selection heuristics.

Every selector takes a :class:`SelectorContext` and returns an ordered list of
``(side, node)`` pool entries of length ``min(budget, |pool|)``. Ties are always
broken by (side, node) ascending, so results never depend on evaluation order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import entr
from scipy.stats import norm
from sklearn.cluster import KMeans

from .graph_metrics import NodeRanking, to_gid
from .kg import LEFT, RIGHT
from .model import ModelSnapshot, max_similarity, mc_dropout_distributions
from .oracle import LabelState

logger = logging.getLogger(__name__)

Node = tuple[int, int]
QueryBatch = list[Node]

HEURISTICS = ("rnd", "deg", "betw", "avc", "cs", "esccn", "bald", "prexp")
STATIC = ("deg", "betw", "avc")


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class HistoryRecord:
    node: Node
    s_max: float
    had_match: bool


@dataclass
class SelectorContext:
    pool: frozenset[Node]
    label_state: LabelState
    budget: int
    n_left: int
    snapshot: ModelSnapshot | None = None
    rankings: Mapping[str, NodeRanking] = field(default_factory=dict)
    history: Sequence[HistoryRecord] = ()
    seed: int = 0

    def sorted_pool(self) -> list[Node]:
        return sorted(self.pool)

    @property
    def size(self) -> int:
        return min(self.budget, len(self.pool))


def _top_by_score(nodes: Sequence[Node], scores: np.ndarray, k: int, n_left: int) -> list[Node]:
    gids = np.array([to_gid(n, n_left) for n in nodes], dtype=np.int64)
    order = np.lexsort((gids, -np.asarray(scores, dtype=np.float64)))
    return [nodes[i] for i in order[:k]]


# -- passive ---------------------------------------------------------------------


def select_random(ctx: SelectorContext, seed: int | None = None) -> QueryBatch:
    pool = ctx.sorted_pool()
    rng = np.random.default_rng(ctx.seed if seed is None else seed)
    idx = rng.choice(len(pool), size=ctx.size, replace=False)
    return [pool[i] for i in idx]


def select_static(ctx: SelectorContext, ranking: NodeRanking, pool: Sequence[Node] | None = None, k: int | None = None) -> QueryBatch:
    """First ``k`` ranking entries still in the pool."""
    pool = ctx.sorted_pool() if pool is None else list(pool)
    k = min(ctx.budget if k is None else k, len(pool))
    if k == 0:
        return []
    gids = np.array([to_gid(n, ranking.n_left) for n in pool], dtype=np.int64)
    positions = ranking.positions()
    if gids.max() >= len(positions) or (positions[gids] < 0).any():
        raise SelectionError("pool node missing from ranking")
    pos = positions[gids]
    return [pool[i] for i in np.argsort(pos, kind="stable")[:k]]


def _fallback(ctx: SelectorContext, name: str = "deg") -> QueryBatch:
    if name not in ctx.rankings:
        raise SelectionError(f"fallback ranking {name!r} not available")
    return select_static(ctx, ctx.rankings[name])


# -- embedding coverage --------------------------------------------------------------


def _positive_centers(ctx: SelectorContext) -> np.ndarray:
    snap = ctx.snapshot
    found = sorted(ctx.label_state.found_alignments)
    lefts = sorted({a for a, _ in found})
    rights = sorted({b for _, b in found})
    return np.vstack([snap.left[lefts], snap.right[rights]])


def _pool_reprs(snap: ModelSnapshot, pool: Sequence[Node]) -> np.ndarray:
    return np.stack([snap.reprs(side)[node] for side, node in pool]) if pool else np.empty((0, snap.left.shape[1]))


def kcenter_greedy(points: np.ndarray, centers: np.ndarray, k: int) -> list[int]:
    """Indices of ``k`` points picked farthest-first (L2) from ``centers`` plus earlier picks."""
    if len(points) == 0 or k == 0:
        return []
    min_dist = cdist(points, centers).min(axis=1) if len(centers) else np.full(len(points), np.inf)
    picked = []
    for _ in range(min(k, len(points))):
        i = int(np.argmax(min_dist))
        picked.append(i)
        min_dist = np.minimum(min_dist, cdist(points, points[i : i + 1]).ravel())
        min_dist[picked] = -np.inf
    return picked


def select_coreset(ctx: SelectorContext, fallback: str = "deg") -> QueryBatch:
    if not ctx.pool:
        return []
    if ctx.snapshot is None or not ctx.label_state.found_alignments:
        return _fallback(ctx, fallback)
    pool = ctx.sorted_pool()
    picked = kcenter_greedy(_pool_reprs(ctx.snapshot, pool), _positive_centers(ctx), ctx.size)
    return [pool[i] for i in picked]


def apportion(budget: int, weights: Sequence[Fraction], capacity: Sequence[int]) -> list[int]:
    """Largest-remainder split of ``budget`` proportional to ``weights``, capped by ``capacity``.

    Overflow from capped entries is re-apportioned over the rest by the same rule;
    remainder ties go to the lower index.
    """
    n = len(weights)
    quota = [0] * n
    remaining = min(budget, sum(capacity))
    while remaining > 0:
        open_ = [i for i in range(n) if capacity[i] - quota[i] > 0 and weights[i] > 0]
        if not open_:
            break
        total = sum(weights[i] for i in open_)
        shares = {i: Fraction(remaining) * weights[i] / total for i in open_}
        alloc = {i: int(shares[i]) for i in open_}
        extra = remaining - sum(alloc.values())
        for i in sorted(open_, key=lambda i: (-(shares[i] - alloc[i]), i))[:extra]:
            alloc[i] += 1
        for i in open_:
            take = min(alloc[i], capacity[i] - quota[i])
            quota[i] += take
            remaining -= take
    return quota


def cluster_nodes(snapshot: ModelSnapshot, n_clusters: int, seed: int, max_iter: int = 50) -> np.ndarray:
    """k-means labels for all nodes of both graphs, indexed by global id."""
    points = np.vstack([snapshot.left, snapshot.right])
    k = min(n_clusters, len(points))
    if k == 1:
        return np.zeros(len(points), dtype=np.int64)
    km = KMeans(n_clusters=k, n_init=1, max_iter=max_iter, random_state=seed)
    return km.fit_predict(points).astype(np.int64)


def select_esccn(ctx: SelectorContext, n_clusters: int = 10, inner: str = "deg", max_iter: int = 50) -> QueryBatch:
    if n_clusters < 1:
        raise SelectionError("n_clusters must be >= 1")
    if not ctx.pool:
        return []
    ranking = ctx.rankings[inner]
    if ctx.snapshot is None:
        return select_static(ctx, ranking)
    labels = cluster_nodes(ctx.snapshot, n_clusters, ctx.seed, max_iter)
    k = int(labels.max()) + 1
    labeled = np.zeros(k, dtype=np.int64)
    for node in ctx.label_state.labeled():
        labeled[labels[to_gid(node, ctx.n_left)]] += 1
    members: list[list[Node]] = [[] for _ in range(k)]
    for node in ctx.sorted_pool():
        members[labels[to_gid(node, ctx.n_left)]].append(node)
    quotas = apportion(ctx.size, [Fraction(1, 1 + int(c)) for c in labeled], [len(m) for m in members])
    chosen = []
    for c in range(k):
        if quotas[c]:
            chosen.extend(select_static(ctx, ranking, members[c], quotas[c]))
    pos = ranking.positions()
    chosen.sort(key=lambda n: pos[to_gid(n, ctx.n_left)])
    return chosen


# -- uncertainty -------------------------------------------------------------------------


def bald_scores(distributions: np.ndarray) -> np.ndarray:
    """Mutual information H(mean_t p_t) - mean_t H(p_t) for (T, n, C) samples."""
    mean = distributions.mean(axis=0)
    return entr(mean).sum(axis=-1) - entr(distributions).sum(axis=-1).mean(axis=0)


def select_bald(ctx: SelectorContext, runs: int = 25, temperature: float = 0.5, fallback: str = "deg") -> QueryBatch:
    if runs < 2:
        raise SelectionError("BALD needs at least two dropout runs")
    if not ctx.pool:
        return []
    if ctx.snapshot is None:
        return _fallback(ctx, fallback)
    pool = ctx.sorted_pool()
    scores = np.empty(len(pool))
    rng = np.random.default_rng(ctx.seed)
    for side in (LEFT, RIGHT):
        idx = [i for i, n in enumerate(pool) if n[0] == side]
        if not idx:
            continue
        dist = mc_dropout_distributions(ctx.snapshot, side, [pool[i][1] for i in idx], runs, temperature, rng)
        scores[idx] = bald_scores(dist)
    return _top_by_score(pool, scores, ctx.size, ctx.n_left)


# -- certainty matching ------------------------------------------------------------------


def _cdf(x: np.ndarray, mean: float, std: float) -> np.ndarray:
    if std == 0 or not np.isfinite(std):
        return (x >= mean).astype(np.float64)
    return norm.cdf(x, loc=mean, scale=std)


def prexp_score(x: np.ndarray, match: tuple[float, float], exclusive: tuple[float, float]) -> np.ndarray:
    """P_match(S <= x) - P_excl(S >= x) under fitted normals (mean, std)."""
    x = np.asarray(x, dtype=np.float64)
    return _cdf(x, *match) - (1.0 - _cdf(x, *exclusive))


def fit_history(history: Sequence[HistoryRecord], min_samples: int) -> tuple[tuple[float, float], tuple[float, float]] | None:
    match = np.array([r.s_max for r in history if r.had_match])
    excl = np.array([r.s_max for r in history if not r.had_match])
    if len(match) < max(min_samples, 2) or len(excl) < max(min_samples, 2):
        return None
    return (float(match.mean()), float(match.std(ddof=1))), (float(excl.mean()), float(excl.std(ddof=1)))


def select_prexp(
    ctx: SelectorContext, threshold: float = 0.0, fallback: str = "deg", min_samples_per_class: int = 5
) -> QueryBatch:
    if fallback not in STATIC:
        raise SelectionError("prexp fallback must be a static heuristic")
    if not ctx.pool:
        return []
    fitted = fit_history(ctx.history, min_samples_per_class) if ctx.snapshot is not None else None
    if fitted is None:
        return _fallback(ctx, fallback)
    pool = ctx.sorted_pool()
    x = np.empty(len(pool))
    for side in (LEFT, RIGHT):
        idx = [i for i, n in enumerate(pool) if n[0] == side]
        if idx:
            x[idx] = max_similarity(ctx.snapshot, side, [pool[i][1] for i in idx])
    scores = prexp_score(x, *fitted)
    keep = [i for i in range(len(pool)) if scores[i] > threshold]
    chosen = _top_by_score([pool[i] for i in keep], scores[keep], ctx.size, ctx.n_left)
    if len(chosen) < ctx.size:
        taken = set(chosen)
        rest = [n for n in pool if n not in taken]
        chosen += select_static(ctx, ctx.rankings[fallback], rest, ctx.size - len(chosen))
    return chosen


# -- registry ---------------------------------------------------------------------------

_PARAMS: dict[str, dict[str, type]] = {
    "rnd": {},
    "deg": {},
    "betw": {},
    "avc": {},
    "cs": {"fallback": str},
    "esccn": {"n_clusters": int, "inner": str, "max_iter": int},
    "bald": {"runs": int, "temperature": float, "fallback": str},
    "prexp": {"threshold": float, "fallback": str, "min_samples_per_class": int},
}


def make_selector(name: str, params: Mapping[str, object] | None = None) -> Callable[[SelectorContext], QueryBatch]:
    """Selector by name with a flat parameter map; unknown names or keys are rejected."""
    if name not in _PARAMS:
        raise SelectionError(f"unknown heuristic {name!r}; choose from {', '.join(HEURISTICS)}")
    params = dict(params or {})
    unknown = set(params) - set(_PARAMS[name])
    if unknown:
        raise SelectionError(f"unknown parameter(s) for {name}: {', '.join(sorted(unknown))}")
    params = {k: _PARAMS[name][k](v) for k, v in params.items()}
    for key in ("fallback", "inner"):
        if key in params and params[key] not in STATIC:
            raise SelectionError(f"{name}.{key} must be one of {', '.join(STATIC)}")
    if name == "rnd":
        return select_random
    if name in STATIC:
        return lambda ctx: select_static(ctx, ctx.rankings[name])
    fn = {"cs": select_coreset, "esccn": select_esccn, "bald": select_bald, "prexp": select_prexp}[name]
    return lambda ctx: fn(ctx, **params)


def needs_rankings(name: str, params: Mapping[str, object] | None = None) -> set[str]:
    """Static rankings a heuristic may consult (its own or its fallback)."""
    params = params or {}
    if name in STATIC:
        return {name}
    if name == "rnd":
        return set()
    return {str(params.get("inner", params.get("fallback", "deg")))}
