"""Negative sampling by head/tail corruption, filtered against all known facts."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .kg_data import TemporalKG

MAX_ATTEMPTS = 100


class CorruptionSide(enum.Enum):
    HEAD = "head"
    TAIL = "tail"


class SamplingError(RuntimeError):
    """No admissible corruption found within the attempt budget."""


def sample_negative(pos: Tuple[int, int, int, int], side: CorruptionSide, kg: TemporalKG,
                    rng: np.random.Generator, max_attempts: int = MAX_ATTEMPTS) -> Tuple[int, int, int, int]:
    """Replace one entity of ``pos`` by a uniform draw until the triple is unknown.

    The filter ignores time: a triple that is true in any bin, or in any split,
    is never returned. The time bin of ``pos`` is kept.
    """
    h, r, t, tau = (int(x) for x in pos)
    side = CorruptionSide(side)
    for _ in range(max_attempts):
        e = int(rng.integers(kg.n_entities))
        cand = (e, r, t) if side is CorruptionSide.HEAD else (h, r, e)
        if cand not in kg.global_positives:
            return (*cand, tau)
    raise SamplingError(f"no {side.value} corruption of {(h, r, t, tau)} found in {max_attempts} attempts")


@dataclass
class NegativeBatch:
    positives: np.ndarray  # (m, 4)
    negatives: np.ndarray  # (m, 4)
    n_skipped: int


def sample_batch(positives: np.ndarray, negatives_per_positive: int, kg: TemporalKG,
                 rng: np.random.Generator, max_attempts: int = MAX_ATTEMPTS) -> NegativeBatch:
    """``n`` negatives per positive with alternating corruption side.

    Each positive starts from a random side and then alternates, so ``n = 2``
    gives one head and one tail corruption. Draws are redrawn in vectorised
    rounds; pairs still colliding after ``max_attempts`` rounds are dropped and
    counted in ``n_skipped``.
    """
    if negatives_per_positive < 1:
        raise ValueError(f"negatives_per_positive must be >= 1, got {negatives_per_positive}")
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 4)
    n = negatives_per_positive
    first_is_head = rng.integers(2, size=len(positives)).astype(bool)
    pos = np.repeat(positives, n, axis=0)
    k = np.tile(np.arange(n), len(positives))
    corrupt_head = np.repeat(first_is_head, n) ^ (k % 2 == 1)

    neg = pos.copy()
    pending = np.arange(len(neg))
    for _ in range(max_attempts):
        if pending.size == 0:
            break
        draws = rng.integers(kg.n_entities, size=pending.size)
        heads = corrupt_head[pending]
        neg[pending[heads], 0] = draws[heads]
        neg[pending[~heads], 2] = draws[~heads]
        sub = neg[pending]
        known = kg.contains_keys(kg.triple_key(sub[:, 0], sub[:, 1], sub[:, 2]))
        pending = pending[known]
    keep = np.ones(len(neg), dtype=bool)
    keep[pending] = False
    return NegativeBatch(pos[keep], neg[keep], int(pending.size))
