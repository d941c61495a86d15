"""Filtered link-prediction evaluation: Mean Rank and Hits@k per prediction side."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .kg_data import Quadruple, TemporalKG
from .model import EmbeddingStore, ModelKind, score_candidates
from .sampler import CorruptionSide

TIME_POLICIES = ("start", "mean")
FILTERS = ("global", "time")


@dataclass
class RankingReport:
    tail_mr: float
    head_mr: float
    tail_hits10: float
    head_hits10: float
    per_query_ranks: List[Tuple[Quadruple, str, int]] = field(default_factory=list, repr=False)

    @classmethod
    def from_ranks(cls, per_query_ranks: List[Tuple[Quadruple, str, int]]) -> "RankingReport":
        tails = np.array([rk for _, s, rk in per_query_ranks if s == "tail"], dtype=float)
        heads = np.array([rk for _, s, rk in per_query_ranks if s == "head"], dtype=float)
        return cls(
            tail_mr=float(tails.mean()),
            head_mr=float(heads.mean()),
            tail_hits10=float(100.0 * np.mean(tails <= 10)),
            head_hits10=float(100.0 * np.mean(heads <= 10)),
            per_query_ranks=per_query_ranks,
        )

    def ranks(self, side: str) -> np.ndarray:
        return np.array([rk for _, s, rk in self.per_query_ranks if s == side], dtype=np.int64)

    def hits_at(self, k: int, side: str) -> float:
        """Percentage of ``side`` queries ranked within the top ``k``."""
        return float(100.0 * np.mean(self.ranks(side) <= k))

    @property
    def mean_mr(self) -> float:
        return (self.tail_mr + self.head_mr) / 2.0

    def to_dict(self) -> dict:
        return {
            "n_queries": len(self.per_query_ranks) // 2,
            "tail_mr": self.tail_mr,
            "head_mr": self.head_mr,
            "tail_hits10": self.tail_hits10,
            "head_hits10": self.head_hits10,
            "tail_hits1": self.hits_at(1, "tail"),
            "head_hits1": self.hits_at(1, "head"),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write_ranks_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("head\trelation\ttail\tstart_bin\tend_bin\tside\trank\n")
            for q, side, rk in self.per_query_ranks:
                f.write(f"{q.head}\t{q.relation}\t{q.tail}\t{q.start_bin}\t{q.end_bin}\t{side}\t{rk}\n")


def _side(side) -> str:
    return CorruptionSide(side).value


def _scored_bins(quad: Quadruple, time_policy: str) -> range:
    if time_policy == "start":
        return range(quad.start_bin, quad.start_bin + 1)
    return range(quad.start_bin, quad.end_bin + 1)


def _known(quad: Quadruple, side: str, kg: TemporalKG, filter_mode: str, time_policy: str) -> np.ndarray:
    if filter_mode == "global":
        if side == "tail":
            return kg.known_tails(quad.head, quad.relation)
        return kg.known_heads(quad.relation, quad.tail)
    if side == "tail":
        parts = [kg.known_tails_at(quad.head, quad.relation, b) for b in _scored_bins(quad, time_policy)]
    else:
        parts = [kg.known_heads_at(quad.relation, quad.tail, b) for b in _scored_bins(quad, time_policy)]
    return np.concatenate(parts)


def candidate_set(query: Quadruple, kg: TemporalKG, true_entity: int, side,
                  filter_mode: str = "global", time_policy: str = "start") -> List[int]:
    """Entities completing ``query`` into an unknown triple, plus ``true_entity``.

    ``filter_mode="global"`` removes triples known in any split at any time;
    ``"time"`` only removes those whose interval covers the scored bin.
    """
    side = _side(side)
    known = set(_known(query, side, kg, filter_mode, time_policy).tolist())
    return [e for e in range(kg.n_entities) if e not in known or e == true_entity]


def _filter_mask(quad: Quadruple, side: str, kg: TemporalKG, filter_mode: str, time_policy: str) -> Tuple[np.ndarray, int]:
    keep = np.ones(kg.n_entities, dtype=bool)
    keep[_known(quad, side, kg, filter_mode, time_policy)] = False
    true = quad.tail if side == "tail" else quad.head
    keep[true] = True
    return keep, true


def _query_scores(quad: Quadruple, side: str, store: EmbeddingStore, model: ModelKind, time_policy: str) -> np.ndarray:
    if not model.temporal or time_policy == "start" or quad.start_bin == quad.end_bin:
        return score_candidates(store, model, quad.head, quad.relation, quad.tail, quad.start_bin, side)
    return np.mean(
        [score_candidates(store, model, quad.head, quad.relation, quad.tail, b, side)
         for b in range(quad.start_bin, quad.end_bin + 1)],
        axis=0,
    )


def rank_of(test: Quadruple, side, store: EmbeddingStore, model: ModelKind, kg: TemporalKG,
            time_policy: str = "start", filter_mode: str = "global") -> int:
    """1-based filtered rank of the true entity; ties count against it.

    HyTE scores at the start bin of ``test`` (``time_policy="mean"`` averages
    the scores over the whole interval instead).
    """
    side = _side(side)
    if time_policy not in TIME_POLICIES:
        raise ValueError(f"time_policy must be one of {TIME_POLICIES}")
    if filter_mode not in FILTERS:
        raise ValueError(f"filter_mode must be one of {FILTERS}")
    scores = _query_scores(test, side, store, model, time_policy)
    keep, true = _filter_mask(test, side, kg, filter_mode, time_policy)
    return int(np.count_nonzero(keep & (scores <= scores[true])))


def evaluate(test_set: Sequence[Quadruple], store: EmbeddingStore, model: ModelKind, kg: TemporalKG,
             time_policy: str = "start", threads: int = 1, filter_mode: str = "global") -> RankingReport:
    """Rank every quadruple of ``test_set`` for tail then head prediction."""
    test_set = list(test_set)
    if not test_set:
        raise ValueError("cannot evaluate an empty test set")
    if store.n_entities != kg.n_entities or store.n_relations != kg.n_relations:
        raise ValueError(
            f"store has {store.n_entities} entities / {store.n_relations} relations, "
            f"graph has {kg.n_entities} / {kg.n_relations}"
        )

    def ranks_for(q: Quadruple) -> Tuple[int, int]:
        return (
            rank_of(q, "tail", store, model, kg, time_policy, filter_mode),
            rank_of(q, "head", store, model, kg, time_policy, filter_mode),
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pairs = list(pool.map(ranks_for, test_set))
    else:
        pairs = [ranks_for(q) for q in test_set]

    per_query = []
    for q, (rt, rh) in zip(test_set, pairs):
        per_query.append((q, "tail", rt))
        per_query.append((q, "head", rh))
    return RankingReport.from_ranks(per_query)
