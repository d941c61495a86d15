"""Margin-ranking SGD with an entity-norm penalty and hyperplane renormalisation."""
from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from .evaluator import evaluate
from .kg_data import TemporalKG
from .model import (
    EmbeddingStore,
    ModelKind,
    hinge_batch,
    init_embeddings,
    normalize_rows,
    save_store,
)
from .sampler import sample_batch

logger = logging.getLogger(__name__)


class NumericError(FloatingPointError):
    """Training produced a non-finite loss."""


@dataclass
class TrainConfig:
    model: str = "hyte"
    norm: str = "l1"
    dim: int = 128
    margin: float = 10.0
    learning_rate: float = 1e-4
    batch_size: int = 5000
    epochs: int = 500
    negatives_per_positive: int = 1
    reg_weight: float = 1.0
    seed: int = 0
    eval_every: int = 10
    patience: int = 50
    time_policy: str = "start"
    n_jobs: int = 1

    def __post_init__(self):
        self.model_kind  # validates model/norm
        checks = {
            "dim": self.dim >= 1,
            "margin": self.margin > 0,
            "learning_rate": self.learning_rate > 0,
            "batch_size": self.batch_size >= 1,
            "epochs": self.epochs >= 1,
            "negatives_per_positive": self.negatives_per_positive >= 1,
            "reg_weight": self.reg_weight >= 0,
            "eval_every": self.eval_every >= 1,
            "patience": self.patience >= 1,
            "n_jobs": self.n_jobs >= 1,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValueError("invalid training config values: " + ", ".join(f"{k}={getattr(self, k)!r}" for k in bad))
        if self.time_policy not in ("start", "mean"):
            raise ValueError(f"time_policy must be 'start' or 'mean', got {self.time_policy!r}")

    @property
    def model_kind(self) -> ModelKind:
        return ModelKind(self.model, self.norm)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    mean_reg: float
    active_fraction: float
    max_entity_norm: float
    n_pairs: int
    n_skipped: int
    valid_mr: Optional[float] = None


@dataclass
class TrainReport:
    epochs: List[EpochRecord] = field(default_factory=list)
    wall_times: List[float] = field(default_factory=list)
    best_valid_mr: Optional[float] = None
    best_epoch: Optional[int] = None
    best_store: Optional[EmbeddingStore] = field(default=None, repr=False)
    stopped_early: bool = False

    def to_jsonl(self) -> str:
        """Per-epoch records plus a summary line; wall times are kept out so runs compare byte-for-byte."""
        lines = [json.dumps(asdict(r), sort_keys=True) for r in self.epochs]
        lines.append(json.dumps({
            "best_valid_mr": self.best_valid_mr,
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
        }, sort_keys=True))
        return "\n".join(lines) + "\n"


def loss_term(pos_score: float, neg_score: float, margin: float) -> float:
    return max(0.0, pos_score - neg_score + margin)


def reg_penalty(entity_rows: np.ndarray, reg_weight: float):
    """``reg_weight * sum(max(0, |e|^2 - 1))`` over rows, with its gradient."""
    entity_rows = np.atleast_2d(np.asarray(entity_rows, dtype=float))
    sq = np.sum(entity_rows * entity_rows, axis=1)
    excess = np.maximum(0.0, sq - 1.0)
    grad = np.where((sq > 1.0)[:, None], 2.0 * reg_weight * entity_rows, 0.0)
    return float(reg_weight * excess.sum()), grad


def batch_objective(store: EmbeddingStore, model: ModelKind, pos: np.ndarray, neg: np.ndarray,
                    margin: float, reg_weight: float):
    """Summed hinge loss over the pairs plus the penalty on touched entities.

    Returns ``(hinge_sum, reg, n_active, pieces)`` where ``pieces`` are
    ``(block, ids, rows)`` gradient contributions.
    """
    losses, active, pieces = hinge_batch(store, model, pos, neg, margin)
    touched = np.unique(np.concatenate([pos[:, 0], pos[:, 2], neg[:, 0], neg[:, 2]]))
    reg = 0.0
    if reg_weight > 0 and touched.size:
        reg, g = reg_penalty(store.entity_vecs[touched], reg_weight)
        nz = np.any(g != 0, axis=1)
        if nz.any():
            pieces = pieces + [("entity", touched[nz], g[nz])]
    return float(losses.sum()), reg, int(active.sum()), pieces


def _sgd_step(store: EmbeddingStore, pieces, lr: float) -> None:
    blocks = store.blocks()
    touched_normals = {}
    for block, ids, rows in pieces:
        np.add.at(blocks[block], ids, -lr * rows)
        if block in ("time", "relation_normal"):
            touched_normals.setdefault(block, []).append(np.asarray(ids))
    for block, id_lists in touched_normals.items():
        ids = np.unique(np.concatenate(id_lists))
        blocks[block][ids] = normalize_rows(blocks[block][ids])


class _EpochStats:
    def __init__(self):
        self.hinge = 0.0
        self.reg = 0.0
        self.pairs = 0
        self.active = 0
        self.skipped = 0
        self.lock = threading.Lock()

    def add(self, hinge, reg, pairs, active, skipped):
        with self.lock:
            self.hinge += hinge
            self.reg += reg
            self.pairs += pairs
            self.active += active
            self.skipped += skipped


def _run_batches(store, kg, cfg, model, examples, batch_starts, rng, stats, epoch, on_step):
    for bi in batch_starts:
        batch = examples[bi:bi + cfg.batch_size]
        nb = sample_batch(batch, cfg.negatives_per_positive, kg, rng)
        if len(nb.positives) == 0:
            stats.add(0.0, 0.0, 0, 0, nb.n_skipped)
            continue
        hinge, reg, n_active, pieces = batch_objective(
            store, model, nb.positives, nb.negatives, cfg.margin, cfg.reg_weight
        )
        if not np.isfinite(hinge) or not np.isfinite(reg):
            raise NumericError(f"non-finite loss at epoch {epoch}, batch {bi // cfg.batch_size}")
        _sgd_step(store, pieces, cfg.learning_rate)
        stats.add(hinge, reg, len(nb.positives), n_active, nb.n_skipped)
        if on_step is not None:
            on_step(store)


def train(kg: TemporalKG, cfg: TrainConfig, checkpoint_dir=None,
          on_step: Optional[Callable[[EmbeddingStore], None]] = None,
          store: Optional[EmbeddingStore] = None):
    """Train ``cfg.model`` on ``kg`` and return ``(final_store, report)``.

    HyTE examples are the (triple, bin) incidences of the training split; the
    translational baselines see each train triple once. Validation Mean Rank
    (mean of head and tail) is computed every ``cfg.eval_every`` epochs when
    ``kg.valid`` is non-empty, and training stops after ``cfg.patience``
    evaluations without improvement. ``on_step`` is called after every SGD
    update (single-threaded mode only).
    """
    model = cfg.model_kind
    if store is None:
        store = init_embeddings((kg.n_entities, kg.n_relations, kg.n_bins), cfg.dim, cfg.seed, model)
    examples = kg.training_examples(temporal=model.temporal)
    if len(examples) == 0:
        raise ValueError("no training examples")
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(1 + cfg.n_jobs)]
    shuffle_rng, worker_rngs = rngs[0], rngs[1:]
    report = TrainReport()
    evals_since_best = 0
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        perm = examples[shuffle_rng.permutation(len(examples))]
        starts = list(range(0, len(perm), cfg.batch_size))
        stats = _EpochStats()
        if cfg.n_jobs == 1:
            _run_batches(store, kg, cfg, model, perm, starts, worker_rngs[0], stats, epoch, on_step)
        else:
            _run_parallel(store, kg, cfg, model, perm, starts, worker_rngs, stats, epoch)

        rec = EpochRecord(
            epoch=epoch,
            mean_loss=stats.hinge / max(stats.pairs, 1),
            mean_reg=stats.reg / max(len(starts), 1),
            active_fraction=stats.active / max(stats.pairs, 1),
            max_entity_norm=float(np.sqrt(np.max(np.sum(store.entity_vecs ** 2, axis=1)))),
            n_pairs=stats.pairs,
            n_skipped=stats.skipped,
        )
        if not store.is_finite():
            raise NumericError(f"non-finite parameters after epoch {epoch}")

        stop = False
        if kg.valid and epoch % cfg.eval_every == 0:
            rec.valid_mr = evaluate(kg.valid, store, model, kg, cfg.time_policy).mean_mr
            if report.best_valid_mr is None or rec.valid_mr < report.best_valid_mr:
                report.best_valid_mr, report.best_epoch = rec.valid_mr, epoch
                report.best_store = store.copy()
                evals_since_best = 0
            else:
                evals_since_best += 1
                stop = evals_since_best >= cfg.patience
            if ckpt_dir is not None:
                save_store(store, model, ckpt_dir / f"epoch_{epoch:05d}.json")
        report.epochs.append(rec)
        report.wall_times.append(time.perf_counter() - t0)
        logger.info("epoch %d loss %.5f active %.3f valid_mr %s", epoch, rec.mean_loss,
                    rec.active_fraction, rec.valid_mr)
        if stop:
            report.stopped_early = True
            break

    if report.best_store is None:
        report.best_store = store.copy()
        report.best_epoch = report.epochs[-1].epoch
    return store, report


def _run_parallel(store, kg, cfg, model, examples, starts, rngs, stats, epoch):
    """Lock-free updates from ``cfg.n_jobs`` threads; normals are re-projected at the end."""
    errors = []

    def work(i):
        try:
            _run_batches(store, kg, cfg, model, examples, starts[i::cfg.n_jobs], rngs[i], stats, epoch, None)
        except Exception as exc:  # surfaced in the calling thread
            errors.append(exc)

    threads = [threading.Thread(target=work, args=(i,)) for i in range(cfg.n_jobs)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]
    if store.time_normals is not None:
        store.time_normals[:] = normalize_rows(store.time_normals)
    if store.relation_normals is not None:
        store.relation_normals[:] = normalize_rows(store.relation_normals)
