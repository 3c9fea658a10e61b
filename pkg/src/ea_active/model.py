"""GCN-style embedding matcher trained with a margin loss on found alignments.

Base embeddings are propagated ``num_layers`` times with the symmetric-normalised
adjacency of each (masked) graph, with ``tanh`` between layers. Similarity is the
negative L1 distance between final representations. Gradients are computed by
hand so the whole model stays a thin layer over numpy/scipy.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist
from scipy.special import softmax

from .kg import LEFT, RIGHT, Pair, PairView

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    def __init__(self, last_finite_epoch: int):
        super().__init__(f"non-finite loss; last finite epoch {last_finite_epoch}")
        self.last_finite_epoch = last_finite_epoch


@dataclass(frozen=True)
class ModelConfig:
    embedding_dim: int = 32
    num_layers: int = 2
    dropout_rate: float = 0.0
    margin: float = 1.0
    negatives_per_positive: int = 5
    learning_rate: float = 0.1
    optimizer: str = "sgd"
    max_epochs: int = 4000
    eval_every: int = 20
    patience: int = 200
    softmax_temperature: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.embedding_dim < 1 or self.num_layers < 0:
            raise ValueError("embedding_dim must be positive and num_layers non-negative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.margin <= 0 or self.learning_rate <= 0 or self.softmax_temperature <= 0:
            raise ValueError("margin, learning_rate and softmax_temperature must be positive")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be positive")
        if self.max_epochs < 0 or self.eval_every < 1 or self.patience < 1:
            raise ValueError("max_epochs >= 0, eval_every >= 1 and patience >= 1 required")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


# -- propagation -------------------------------------------------------------


def propagate(x: np.ndarray, a_hat: sp.spmatrix, num_layers: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Apply ``num_layers`` propagation steps; returns output and the tanh activations for backprop."""
    cache = []
    h = x
    for layer in range(num_layers):
        h = a_hat @ h
        if layer < num_layers - 1:
            h = np.tanh(h)
            cache.append(h)
    return h, cache


def propagate_backward(grad: np.ndarray, a_hat: sp.spmatrix, num_layers: int, cache: list[np.ndarray]) -> np.ndarray:
    g = grad
    for layer in reversed(range(num_layers)):
        if layer < num_layers - 1:
            g = g * (1.0 - cache[layer] ** 2)
        g = a_hat.T @ g
    return g


def dropout_mask(shape: tuple[int, ...], rate: float, rng: np.random.Generator) -> np.ndarray | None:
    if rate <= 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


# -- loss ----------------------------------------------------------------------


def sample_negatives(
    positives: np.ndarray, pool_left: np.ndarray, pool_right: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """K corrupted pairs per positive, each replacing one uniformly chosen side."""
    if len(pool_left) == 0 or len(pool_right) == 0:
        raise ValueError("empty negative pool")
    neg = np.repeat(positives, k, axis=0)
    corrupt_left = rng.random(len(neg)) < 0.5
    neg[corrupt_left, 0] = pool_left[rng.integers(0, len(pool_left), size=int(corrupt_left.sum()))]
    neg[~corrupt_left, 1] = pool_right[rng.integers(0, len(pool_right), size=int((~corrupt_left).sum()))]
    return neg


def margin_loss_with_negatives(
    left: np.ndarray, right: np.ndarray, positives: np.ndarray, negatives: np.ndarray, margin: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Sum of hinge terms; ``negatives`` holds K rows per positive, in positive order."""
    k = len(negatives) // len(positives)
    pos_diff = left[positives[:, 0]] - right[positives[:, 1]]
    neg_diff = left[negatives[:, 0]] - right[negatives[:, 1]]
    d_pos = np.abs(pos_diff).sum(axis=1)
    d_neg = np.abs(neg_diff).sum(axis=1)
    terms = margin + np.repeat(d_pos, k) - d_neg
    active = terms > 0
    loss = float(terms[active].sum())

    grad_left = np.zeros_like(left)
    grad_right = np.zeros_like(right)
    n_active = active.reshape(-1, k).sum(axis=1).astype(left.dtype)
    g_pos = np.sign(pos_diff) * n_active[:, None]
    np.add.at(grad_left, positives[:, 0], g_pos)
    np.add.at(grad_right, positives[:, 1], -g_pos)
    g_neg = np.sign(neg_diff[active])
    np.add.at(grad_left, negatives[active, 0], -g_neg)
    np.add.at(grad_right, negatives[active, 1], g_neg)
    return loss, grad_left, grad_right


def margin_loss(
    left: np.ndarray,
    right: np.ndarray,
    positives: np.ndarray,
    pool_left: np.ndarray,
    pool_right: np.ndarray,
    k: int,
    margin: float,
    seed: int | np.random.Generator = 0,
) -> tuple[float, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    if not len(positives):
        raise ValueError("no positive pairs")
    negatives = sample_negatives(positives, np.asarray(pool_left), np.asarray(pool_right), k, rng)
    return margin_loss_with_negatives(left, right, positives, negatives, margin)


# -- model state ---------------------------------------------------------------


class Matcher:
    """Trainable state: base embeddings of both graphs plus optimiser state."""

    def __init__(self, config: ModelConfig, n_left: int, n_right: int):
        self.config = config
        init = np.random.default_rng([config.seed, 0])
        scale = 1.0 / np.sqrt(config.embedding_dim)
        self.params = [
            init.normal(scale=scale, size=(n_left, config.embedding_dim)),
            init.normal(scale=scale, size=(n_right, config.embedding_dim)),
        ]
        self.opt_state: dict[str, list[np.ndarray] | int] = {}
        self.epoch = 0
        self.rng = np.random.default_rng([config.seed, 1])

    # state copies, used for best-checkpoint tracking and warm start
    def state_dict(self) -> dict:
        return {
            "params": [p.copy() for p in self.params],
            "opt_state": {k: ([a.copy() for a in v] if isinstance(v, list) else v) for k, v in self.opt_state.items()},
            "epoch": self.epoch,
        }

    def load_state_dict(self, state: dict) -> None:
        self.params = [p.copy() for p in state["params"]]
        self.opt_state = {k: ([a.copy() for a in v] if isinstance(v, list) else v) for k, v in state["opt_state"].items()}
        self.epoch = state["epoch"]

    def forward(
        self, view: PairView, stochastic: bool = False, rng: np.random.Generator | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        return forward(self.params, view, self.config, stochastic, rng if rng is not None else self.rng)

    def snapshot(self, view: PairView, exclude_left: Iterable[int] = (), exclude_right: Iterable[int] = ()) -> ModelSnapshot:
        left, right = self.forward(view)
        return ModelSnapshot(
            left=left,
            right=right,
            candidates_left=_candidates(len(left), exclude_left),
            candidates_right=_candidates(len(right), exclude_right),
            params=tuple(p.copy() for p in self.params),
            view=view,
            config=self.config,
        )

    def apply_gradients(self, grads: Sequence[np.ndarray]) -> None:
        cfg = self.config
        if cfg.optimizer == "sgd":
            for p, g in zip(self.params, grads):
                p -= cfg.learning_rate * g
            return
        b1, b2, eps = 0.9, 0.999, 1e-8
        if not self.opt_state:
            self.opt_state = {"m": [np.zeros_like(p) for p in self.params], "v": [np.zeros_like(p) for p in self.params], "t": 0}
        self.opt_state["t"] += 1
        t = self.opt_state["t"]
        for p, g, m, v in zip(self.params, grads, self.opt_state["m"], self.opt_state["v"]):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= cfg.learning_rate * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)

    def train_step(self, view: PairView, positives: np.ndarray, pool_left: np.ndarray, pool_right: np.ndarray) -> float:
        cfg = self.config
        masks = [dropout_mask(x.shape, cfg.dropout_rate, self.rng) for x in self.params]
        negatives = sample_negatives(positives, pool_left, pool_right, cfg.negatives_per_positive, self.rng)
        loss, grads = loss_and_gradients(self.params, view, cfg, positives, negatives, masks)
        if not np.isfinite(loss):
            return loss
        self.apply_gradients(grads)
        self.epoch += 1
        return loss


def loss_and_gradients(
    params: Sequence[np.ndarray],
    view: PairView,
    config: ModelConfig,
    positives: np.ndarray,
    negatives: np.ndarray,
    masks: Sequence[np.ndarray | None] = (None, None),
) -> tuple[float, list[np.ndarray]]:
    """Margin loss of the propagated representations and its gradient w.r.t. the base embeddings."""
    outs, caches = [], []
    for side, x in enumerate(params):
        h0 = x if masks[side] is None else x * masks[side]
        out, cache = propagate(h0, view.side(side).normalized_adjacency(), config.num_layers)
        outs.append(out)
        caches.append(cache)
    loss, gl, gr = margin_loss_with_negatives(outs[0], outs[1], positives, negatives, config.margin)
    grads = []
    for side, g in enumerate((gl, gr)):
        g = propagate_backward(g, view.side(side).normalized_adjacency(), config.num_layers, caches[side])
        if masks[side] is not None:
            g = g * masks[side]
        grads.append(g)
    return loss, grads


def forward(
    params: Sequence[np.ndarray], view: PairView, config: ModelConfig, stochastic: bool, rng: np.random.Generator | None
) -> tuple[np.ndarray, np.ndarray]:
    outs = []
    for side, x in enumerate(params):
        if stochastic and config.dropout_rate > 0:
            x = x * dropout_mask(x.shape, config.dropout_rate, rng)
        out, _ = propagate(x, view.side(side).normalized_adjacency(), config.num_layers)
        if not np.all(np.isfinite(out)):
            raise TrainingDiverged(-1)
        outs.append(out)
    return outs[0], outs[1]


def _candidates(n: int, exclude: Iterable[int]) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    exclude = list(exclude)
    if exclude:
        mask[exclude] = False
    return np.flatnonzero(mask)


# -- snapshots, similarity, evaluation -------------------------------------------


@dataclass(frozen=True, eq=False)
class ModelSnapshot:
    """Frozen deterministic representations plus what is needed for dropout replays."""

    left: np.ndarray
    right: np.ndarray
    candidates_left: np.ndarray
    candidates_right: np.ndarray
    params: tuple[np.ndarray, ...] = field(default=(), repr=False)
    view: PairView | None = field(default=None, repr=False)
    config: ModelConfig | None = None

    def reprs(self, side: int) -> np.ndarray:
        return self.left if side == LEFT else self.right

    def candidates(self, side: int) -> np.ndarray:
        return self.candidates_left if side == LEFT else self.candidates_right

    def stochastic_reprs(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        if self.view is None or not self.params:
            raise ValueError("snapshot carries no parameters for stochastic replay")
        return forward(self.params, self.view, self.config, True, rng)


def similarity_matrix(
    snapshot: ModelSnapshot, query_side: int, query_nodes: Sequence[int], candidate_nodes: Sequence[int] | None = None
) -> np.ndarray:
    """Negative L1 distance, rows = query nodes of ``query_side``, columns = other-side candidates."""
    other = 1 - query_side
    if candidate_nodes is None:
        candidate_nodes = snapshot.candidates(other)
    if len(candidate_nodes) == 0:
        raise ValueError("empty candidate set")
    q = snapshot.reprs(query_side)[np.asarray(query_nodes, dtype=np.int64)]
    c = snapshot.reprs(other)[np.asarray(candidate_nodes, dtype=np.int64)]
    return -cdist(q, c, metric="cityblock")


def max_similarity(snapshot: ModelSnapshot, query_side: int, query_nodes: Sequence[int]) -> np.ndarray:
    if len(query_nodes) == 0:
        return np.empty(0)
    return similarity_matrix(snapshot, query_side, query_nodes).max(axis=1)


def realistic_ranks(scores: np.ndarray, true_scores: np.ndarray) -> np.ndarray:
    """Mean of optimistic and pessimistic rank of each row's true score (higher score = better)."""
    t = true_scores[:, None]
    optimistic = 1 + (scores > t).sum(axis=1)
    pessimistic = (scores >= t).sum(axis=1)
    return 0.5 * (optimistic + pessimistic)


def _direction_ranks(snapshot: ModelSnapshot, side: int, pairs: np.ndarray) -> np.ndarray:
    other = 1 - side
    cands = snapshot.candidates(other)
    queries, truths = pairs[:, side], pairs[:, other]
    scores = similarity_matrix(snapshot, side, queries, cands)
    # read true scores from the same matrix so ties with the truth itself are exact
    col = np.searchsorted(cands, truths)
    if np.any(col >= len(cands)) or np.any(cands[np.minimum(col, len(cands) - 1)] != truths):
        raise ValueError("an evaluation counterpart is not among the candidates")
    true_scores = scores[np.arange(len(queries)), col]
    return realistic_ranks(scores, true_scores)


def evaluate_ranking(snapshot: ModelSnapshot, pairs: Iterable[Pair]) -> dict[str, float]:
    """Hits@1, Hits@10 and MRR, averaged over both matching directions."""
    pairs = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    if not len(pairs):
        raise ValueError("no evaluation pairs")
    out = {"h1": 0.0, "h10": 0.0, "mrr": 0.0}
    for side in (LEFT, RIGHT):
        ranks = _direction_ranks(snapshot, side, pairs)
        out["h1"] += 0.5 * float(np.mean(ranks <= 1))
        out["h10"] += 0.5 * float(np.mean(ranks <= 10))
        out["mrr"] += 0.5 * float(np.mean(1.0 / ranks))
    return out


def mc_dropout_distributions(
    snapshot: ModelSnapshot,
    query_side: int,
    query_nodes: Sequence[int],
    runs: int,
    temperature: float,
    seed: int | np.random.Generator = 0,
) -> np.ndarray:
    """Softmax(similarity / temperature) over other-side candidates for ``runs`` dropout passes.

    Shape (runs, len(query_nodes), n_candidates).
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if snapshot.config is not None and snapshot.config.dropout_rate == 0 and runs > 1:
        warnings.warn("dropout_rate is 0: all stochastic passes are identical", RuntimeWarning, stacklevel=2)
    rng = np.random.default_rng(seed)
    other = 1 - query_side
    cands = snapshot.candidates(other)
    if len(cands) == 0:
        raise ValueError("empty candidate set")
    q_idx = np.asarray(query_nodes, dtype=np.int64)
    out = np.empty((runs, len(q_idx), len(cands)))
    for t in range(runs):
        reprs = snapshot.stochastic_reprs(rng)
        sims = -cdist(reprs[query_side][q_idx], reprs[other][cands], metric="cityblock")
        out[t] = softmax(sims / temperature, axis=1)
    return out


# -- training --------------------------------------------------------------------


@dataclass
class TrainResult:
    epochs_run: int
    best_epoch: int
    best_val_mrr: float
    losses: list[float] = field(default_factory=list)
    val_history: list[tuple[int, float]] = field(default_factory=list)


def train_until_early_stop(
    model: Matcher,
    view: PairView,
    positives: Iterable[Pair],
    pool_left: Sequence[int],
    pool_right: Sequence[int],
    validation: Iterable[Pair],
    exclude_left: Iterable[int] = (),
    exclude_right: Iterable[int] = (),
) -> TrainResult:
    """Full-batch gradient steps with early stopping on validation MRR; keeps the best state.

    ``exclude_*`` are removed from the validation candidate sets. The model is
    modified in place (warm start: nothing is re-initialised).
    """
    cfg = model.config
    validation = list(validation)
    if not validation:
        raise ValueError("early stopping needs validation pairs")
    result = TrainResult(epochs_run=0, best_epoch=0, best_val_mrr=float("nan"))
    if cfg.max_epochs == 0:
        return result
    positives = np.array(sorted(positives), dtype=np.int64).reshape(-1, 2)
    if not len(positives):
        raise ValueError("no positive pairs to train on")
    pool_left = np.asarray(sorted(pool_left), dtype=np.int64)
    pool_right = np.asarray(sorted(pool_right), dtype=np.int64)
    exclude_left, exclude_right = list(exclude_left), list(exclude_right)

    def val_mrr() -> float:
        return evaluate_ranking(model.snapshot(view, exclude_left, exclude_right), validation)["mrr"]

    best = val_mrr()
    best_state = model.state_dict()
    result.val_history.append((0, best))
    last_improve = 0
    last_finite = model.epoch
    for e in range(1, cfg.max_epochs + 1):
        loss = model.train_step(view, positives, pool_left, pool_right)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(p)) for p in model.params):
            raise TrainingDiverged(last_finite)
        last_finite = model.epoch
        result.losses.append(loss)
        result.epochs_run = e
        if e % cfg.eval_every == 0:
            mrr = val_mrr()
            result.val_history.append((e, mrr))
            if mrr > best:
                best, last_improve = mrr, e
                best_state = model.state_dict()
            elif e - last_improve >= cfg.patience:
                break
    model.load_state_dict(best_state)
    result.best_epoch = last_improve
    result.best_val_mrr = best
    return result


# -- checkpoints -------------------------------------------------------------------


def save_checkpoint(model: Matcher, path: str | Path) -> None:
    """Single ``.npz`` blob: version, config, epoch, embeddings, optimiser state, RNG state."""
    arrays = {"left": model.params[0], "right": model.params[1]}
    opt_meta = {}
    for k, v in model.opt_state.items():
        if isinstance(v, list):
            for i, a in enumerate(v):
                arrays[f"opt_{k}_{i}"] = a
            opt_meta[k] = len(v)
        else:
            opt_meta[k] = {"scalar": v}
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "epoch": model.epoch,
        "opt_state": opt_meta,
        "rng_state": model.rng.bit_generator.state,
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path: str | Path) -> Matcher:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta["format_version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['format_version']}")
        config = ModelConfig(**meta["config"])
        model = Matcher(config, data["left"].shape[0], data["right"].shape[0])
        model.params = [data["left"].copy(), data["right"].copy()]
        model.opt_state = {}
        for k, v in meta["opt_state"].items():
            model.opt_state[k] = v["scalar"] if isinstance(v, dict) else [data[f"opt_{k}_{i}"].copy() for i in range(v)]
        model.epoch = meta["epoch"]
        model.rng.bit_generator.state = meta["rng_state"]
    return model
