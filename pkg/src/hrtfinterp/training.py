"""LSD loss, AdamW, plateau LR halving, subject folds and the training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .encoding import assemble_inputs, encode_anthro
from .geometry import neighborhood_indices, sample_indices
from .network import ModelParams, backward_batch, forward, forward_batch, init_params, stack_inputs
from .spectra import Dataset, SubjectRecord

log = logging.getLogger(__name__)

IMPROVEMENT_TOL = 1e-9
LSD_EPS = 1e-12


class TrainingError(RuntimeError):
    pass


class NumericError(TrainingError):
    def __init__(self, message: str, parameter: str | None = None):
        super().__init__(message if parameter is None else f"{message} (parameter {parameter})")
        self.parameter = parameter


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    patience_epochs: int = 3
    lr_halving: float = 0.5
    max_epochs: int = 50
    delta: float = 0.3
    n_neighbors: int = 8
    seed: int = 0
    folds: int = 5

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("max_epochs", "weight_decay", "seed", "lr0"):
                if v < 0:
                    raise ValueError(f"{f.name} must be nonnegative")
            elif not v > 0:
                raise ValueError(f"{f.name} must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if not 0 < self.lr_halving < 1:
            raise ValueError("lr_halving must lie in (0, 1)")

    def updated(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# loss and gradients


def loss_lsd(pred, target) -> tuple[float, np.ndarray]:
    """LSD value and its gradient with respect to ``pred`` (zero at the minimum)."""
    pred = np.asarray(pred, dtype=float)
    diff = pred - np.asarray(target, dtype=float)
    value = float(np.sqrt(np.mean(diff * diff)))
    if value <= LSD_EPS:
        return value, np.zeros_like(diff)
    return value, diff / (diff.size * value)


def batch_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean per-sample LSD over a ``(B, K)`` batch, its gradient, and the per-sample values."""
    diff = pred - target
    per = np.sqrt(np.mean(diff * diff, axis=1))
    safe = np.where(per > LSD_EPS, per, 1.0)
    grad = np.where((per > LSD_EPS)[:, None], diff / (diff.shape[1] * safe[:, None]), 0.0)
    return float(per.mean()), grad / len(per), per


def backward(inputs, params: ModelParams, targets) -> tuple[float, np.ndarray]:
    """Mean LSD of the batch and its exact gradient in the flat-parameter layout."""
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[None]
    pred, cache = forward_batch(inputs, params, keep_cache=True)
    loss, dpred, _ = batch_loss(pred, targets)
    if not math.isfinite(loss):
        raise NumericError("non-finite loss", _first_nonfinite(params.tensors) or "<inputs>")
    grads = backward_batch(dpred, cache, params)
    bad = _first_nonfinite(grads)
    if bad:
        raise NumericError("non-finite gradient", bad)
    return loss, params.flat_grad(grads)


def _first_nonfinite(tensors: dict[str, np.ndarray]) -> str | None:
    for name, t in tensors.items():
        if not np.all(np.isfinite(t)):
            return name
    return None


# ---------------------------------------------------------------------------
# optimizer and schedule


@dataclass
class OptimizerState:
    step: int
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "OptimizerState":
        return cls(0, np.zeros(n), np.zeros(n))


def adamw_step(w: np.ndarray, g: np.ndarray, state: OptimizerState, cfg: TrainConfig,
               lr: float | None = None) -> tuple[np.ndarray, OptimizerState]:
    """One AdamW update with decoupled weight decay; returns new weights and state."""
    lr = cfg.lr0 if lr is None else lr
    if not (w.shape == g.shape == state.m.shape == state.v.shape):
        raise ValueError("parameter, gradient and moment vectors must have equal length")
    t = state.step + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g * g
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    w_new = w - lr * (m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * w)
    if not np.all(np.isfinite(w_new)):
        raise NumericError("non-finite parameter update")
    return w_new, OptimizerState(t, m, v)


def lr_schedule(history, cfg: TrainConfig) -> float:
    """Learning rate after the epochs in ``history`` (validation losses, oldest first).

    Each run of ``patience_epochs`` epochs without a new best (by more than
    1e-9) halves the rate and restarts the count.
    """
    lr = cfg.lr0
    best = math.inf
    stale = 0
    for loss in history:
        if loss < best - IMPROVEMENT_TOL:
            best = loss
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience_epochs:
                lr *= cfg.lr_halving
                stale = 0
    return lr


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_subjects: tuple[str, ...]
    val_subjects: tuple[str, ...]


def make_folds(subject_ids, folds: int, seed: int) -> list[FoldSplit]:
    ids = list(subject_ids)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if len(ids) < folds:
        raise ValueError(f"{len(ids)} subjects cannot fill {folds} folds")
    order = np.random.default_rng(seed).permutation(len(ids))
    parts = np.array_split(order, folds)
    out = []
    for i, part in enumerate(parts):
        val = set(part.tolist())
        out.append(
            FoldSplit(
                i,
                tuple(ids[j] for j in order if j not in val),
                tuple(ids[j] for j in part),
            )
        )
    return out


# ---------------------------------------------------------------------------
# training loop


@dataclass
class _SubjectView:
    record: SubjectRecord
    anthro: np.ndarray
    neighbors: list[np.ndarray]


def _neighbor_lists(positions: np.ndarray, delta: float) -> list[np.ndarray]:
    return [neighborhood_indices(positions, p, delta) for p in positions]


def _subject_views(dataset: Dataset, ids, delta: float, stats=None) -> list[_SubjectView]:
    cache: dict[bytes, list[np.ndarray]] = {}
    out = []
    for sid in ids:
        rec = dataset.subject(sid)
        key = rec.positions.tobytes()
        if key not in cache:
            cache[key] = _neighbor_lists(rec.positions, delta)
        a = rec.anthropometry if stats is None else rec.anthropometry.with_stats(*stats)
        out.append(_SubjectView(rec, encode_anthro(a), cache[key]))
    return out


def _items(views: list[_SubjectView]) -> tuple[np.ndarray, int]:
    items = [(si, ti) for si, v in enumerate(views) for ti, nb in enumerate(v.neighbors) if len(nb)]
    skipped = sum(len(v.neighbors) for v in views) - len(items)
    return np.array(items, dtype=np.int64).reshape(-1, 2), skipped


def _batch_inputs(views, items, n_neighbors, mode, rng):
    """Model inputs and targets for ``items`` (rows of (subject, target) indices)."""
    parts, targets = [], []
    for si in np.unique(items[:, 0]):
        v = views[si]
        sel = items[items[:, 0] == si, 1]
        nidx = np.stack([v.neighbors[t][sample_indices(len(v.neighbors[t]), n_neighbors, mode, rng)] for t in sel])
        parts.append(assemble_inputs(v.record.positions, v.record.hrtfs, v.anthro, v.record.positions[sel], nidx))
        targets.append(v.record.hrtfs[sel])
    return stack_inputs(parts), np.concatenate(targets)


def _ordered_batch_inputs(views, items, n_neighbors, rng):
    """Train-mode inputs that keep the row order of ``items``.

    Neighbor draws happen in item order so the random stream does not depend
    on how a batch is grouped by subject.
    """
    nidx = np.empty((len(items), n_neighbors), dtype=np.int64)
    for r, (si, ti) in enumerate(items):
        nb = views[si].neighbors[ti]
        nidx[r] = nb[sample_indices(len(nb), n_neighbors, "train", rng)]
    parts, targets, order = [], [], []
    for si in np.unique(items[:, 0]):
        rows = np.flatnonzero(items[:, 0] == si)
        v = views[si]
        sel = items[rows, 1]
        parts.append(assemble_inputs(v.record.positions, v.record.hrtfs, v.anthro, v.record.positions[sel], nidx[rows]))
        targets.append(v.record.hrtfs[sel])
        order.append(rows)
    inv = np.argsort(np.concatenate(order), kind="stable")
    inp = stack_inputs(parts).take(inv)
    return inp, np.concatenate(targets)[inv]


def evaluate_lsd(params: ModelParams, views, items, batch_size: int = 256) -> float:
    """Mean test-mode LSD over ``items`` (N closest neighbors, clamped output)."""
    if len(items) == 0:
        return math.nan
    total = 0.0
    for start in range(0, len(items), batch_size):
        chunk = items[start : start + batch_size]
        inp, tgt = _batch_inputs(views, chunk, params.n_neighbors, "test", None)
        pred = forward(inp, params)
        total += float(np.sqrt(np.mean((pred - tgt) ** 2, axis=1)).sum())
    return total / len(items)


@dataclass
class FoldResult:
    split: FoldSplit
    params: ModelParams
    final_params: ModelParams
    rows: list[tuple[int, int, float, float, float]]
    best_epoch: int
    skipped_targets: int
    gradient_counts: dict[str, int] = field(default_factory=dict)
    final_train_lsd: float = math.nan


@dataclass
class TrainResult:
    variant: str
    config: TrainConfig
    folds: list[FoldResult]

    @property
    def rows(self):
        return [r for f in self.folds for r in f.rows]

    @property
    def fold_params(self) -> list[ModelParams]:
        return [f.params for f in self.folds]


def fit_fold(dataset: Dataset, split: FoldSplit, variant: str, cfg: TrainConfig,
             init: ModelParams | None = None) -> FoldResult:
    """Train one model on ``split.train_subjects``, validating on ``split.val_subjects``.

    Returns the best-validation parameters (epoch 0 = initialization counts),
    one log row per epoch and the final parameters' N-closest LSD on the
    training targets.
    """
    stats = dataset.anthro_stats()
    train_views = _subject_views(dataset, split.train_subjects, cfg.delta)
    val_views = _subject_views(dataset, split.val_subjects, cfg.delta)
    train_items, skipped = _items(train_views)
    val_items, val_skipped = _items(val_views)
    if len(train_items) == 0:
        raise TrainingError(f"no trainable targets within delta={cfg.delta} m")
    if skipped or val_skipped:
        log.warning("fold %d: skipped %d train / %d val targets with empty neighborhoods",
                    split.fold_index, skipped, val_skipped)

    params = init if init is not None else init_params(variant, cfg.n_neighbors, cfg.seed)
    params = params.copy()
    params.buffers.update(anthro_mean=np.asarray(stats[0]), anthro_std=np.asarray(stats[1]))
    rng = np.random.default_rng([cfg.seed, split.fold_index])
    state = OptimizerState.zeros(params.size)
    counts = {sid: 0 for sid in split.train_subjects + split.val_subjects}

    val0 = evaluate_lsd(params, val_views, val_items)
    train0 = evaluate_lsd(params, train_views, train_items)
    rows = [(0, split.fold_index, train0, val0, cfg.lr0)]
    history: list[float] = []
    best_val, best_epoch, best = val0, 0, params.copy()
    w = params.flat()
    for epoch in range(1, cfg.max_epochs + 1):
        lr = lr_schedule(history, cfg)
        order = train_items[rng.permutation(len(train_items))]
        loss_sum = 0.0
        for start in range(0, len(order), cfg.batch_size):
            chunk = order[start : start + cfg.batch_size]
            inp, tgt = _ordered_batch_inputs(train_views, chunk, cfg.n_neighbors, rng)
            loss, g = backward(inp, params, tgt)
            for si in chunk[:, 0]:
                counts[train_views[si].record.subject_id] += 1
            w, state = adamw_step(w, g, state, cfg, lr)
            params = params.with_flat(w)
            loss_sum += loss * len(chunk)
        train_lsd = loss_sum / len(order)
        val = evaluate_lsd(params, val_views, val_items)
        history.append(val)
        rows.append((epoch, split.fold_index, train_lsd, val, lr))
        if val < best_val - 1e-9 or (math.isnan(best_val) and not math.isnan(val)):
            best_val, best_epoch, best = val, epoch, params.copy()
        log.info("fold %d epoch %d train %.4f val %.4f lr %.3g", split.fold_index, epoch, train_lsd, val, lr)
    if math.isnan(best_val):
        best = params.copy()
        best_epoch = cfg.max_epochs
    final_train = evaluate_lsd(params, train_views, train_items)
    return FoldResult(split, best, params, rows, best_epoch, skipped, counts, final_train)


def train(dataset: Dataset, variant: str, cfg: TrainConfig, fold_indices=None) -> TrainResult:
    """Subject-wise k-fold training; ``fold_indices`` restricts which folds run."""
    splits = make_folds(dataset.subject_ids, cfg.folds, cfg.seed)
    if fold_indices is not None:
        splits = [splits[i] for i in fold_indices]
    init = init_params(variant, cfg.n_neighbors, cfg.seed)
    return TrainResult(variant, cfg, [fit_fold(dataset, s, variant, cfg, init) for s in splits])
