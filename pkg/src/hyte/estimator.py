"""scikit-learn style estimator wrapping training, scoring and evaluation."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .evaluator import RankingReport, evaluate
from .kg_data import TemporalKG
from .model import _project_rows, score_batch
from .trainer import TrainConfig, train
from .validation import check_quadruples, to_quadruples


class HyTEEmbedding(BaseEstimator):
    """Translational knowledge-graph embedding (``model`` = hyte, transe or transh).

    ``X`` holds id-encoded facts, one row per fact: ``head, relation, tail,
    start_bin[, end_bin]``. Sizes default to the largest ids seen in ``fit``.

    Parameters mirror :class:`hyte.trainer.TrainConfig`; ``random_state``
    plays the role of its ``seed``.
    """

    def __init__(self, model="hyte", norm="l1", dim=128, margin=10.0, learning_rate=1e-4,
                 batch_size=5000, epochs=500, negatives_per_positive=1, reg_weight=1.0,
                 eval_every=10, patience=50, time_policy="start", n_jobs=1, random_state=0,
                 n_entities=None, n_relations=None, n_bins=None):
        self.model = model
        self.norm = norm
        self.dim = dim
        self.margin = margin
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.negatives_per_positive = negatives_per_positive
        self.reg_weight = reg_weight
        self.eval_every = eval_every
        self.patience = patience
        self.time_policy = time_policy
        self.n_jobs = n_jobs
        self.random_state = random_state
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.n_bins = n_bins

    def _config(self) -> TrainConfig:
        return TrainConfig(
            model=self.model, norm=self.norm, dim=self.dim, margin=self.margin,
            learning_rate=self.learning_rate, batch_size=self.batch_size, epochs=self.epochs,
            negatives_per_positive=self.negatives_per_positive, reg_weight=self.reg_weight,
            seed=int(self.random_state), eval_every=self.eval_every, patience=self.patience,
            time_policy=self.time_policy, n_jobs=self.n_jobs,
        )

    def fit(self, X, y=None, X_valid=None, known_facts=None):
        """Train on ``X``.

        ``X_valid`` drives early stopping; ``known_facts`` (e.g. test facts) are
        only used to keep true triples out of the negative samples and the
        ranking filter.
        """
        cfg = self._config()
        X = check_quadruples(X)
        X_valid = check_quadruples(X_valid, allow_empty=True)
        known = check_quadruples(known_facts, allow_empty=True)
        every = np.vstack([X, X_valid, known])
        n_entities = self.n_entities or int(max(every[:, 0].max(), every[:, 2].max()) + 1)
        n_relations = self.n_relations or int(every[:, 1].max() + 1)
        n_bins = self.n_bins or int(every[:, 4].max() + 1)
        for arr in (X, X_valid, known):
            check_quadruples(arr, n_entities, n_relations, n_bins, allow_empty=True)

        self.kg_ = TemporalKG(to_quadruples(X), to_quadruples(X_valid), to_quadruples(known), n_bins,
                              n_entities=n_entities, n_relations=n_relations)
        store, report = train(self.kg_, cfg)
        self.store_ = report.best_store if self.kg_.valid else store
        self.model_kind_ = cfg.model_kind
        self.train_report_ = report
        self.n_entities_, self.n_relations_, self.n_bins_ = n_entities, n_relations, n_bins
        return self

    def _check(self, X):
        check_is_fitted(self, "store_")
        return check_quadruples(X, self.n_entities_, self.n_relations_, self.n_bins_)

    def decision_function(self, X) -> np.ndarray:
        """Plausibility of each fact (negated distance, scored at its start bin)."""
        X = self._check(X)
        return -score_batch(self.store_, self.model_kind_, X[:, 0], X[:, 1], X[:, 2], X[:, 3])

    def predict(self, X) -> np.ndarray:
        """Most plausible tail for each ``(head, relation, ., bin)`` row, unfiltered."""
        X = self._check(X)
        every = np.arange(self.n_entities_)
        out = np.empty(len(X), dtype=np.int64)
        for i, (h, r, _, b, _) in enumerate(X):
            out[i] = int(np.argmin(score_batch(self.store_, self.model_kind_, h, r, every, b)))
        return out

    def evaluate(self, X, filter_mode: str = "global", threads: int = 1) -> RankingReport:
        """Filtered ranking of ``X`` against the facts seen in ``fit`` plus ``X`` itself."""
        X = self._check(X)
        quads = to_quadruples(X)
        kg = self.kg_
        if not set(q.triple for q in quads) <= kg.global_positives:
            kg = TemporalKG(kg.train, kg.valid, kg.test + tuple(quads), kg.n_bins,
                            n_entities=kg.n_entities, n_relations=kg.n_relations)
        return evaluate(quads, self.store_, self.model_kind_, kg, self.time_policy, threads, filter_mode)

    def score(self, X, y=None) -> float:
        """Filtered Hits@10 averaged over head and tail prediction, as a fraction."""
        report = self.evaluate(X)
        return (report.tail_hits10 + report.head_hits10) / 200.0

    def entity_embeddings(self, entity_ids=None, bin_id=None) -> np.ndarray:
        """Entity vectors, projected on the hyperplane of ``bin_id`` when given (HyTE)."""
        check_is_fitted(self, "store_")
        vecs = self.store_.entity_vecs if entity_ids is None else self.store_.entity_vecs[np.asarray(entity_ids)]
        if bin_id is None:
            return vecs.copy()
        if not self.model_kind_.temporal:
            raise ValueError("bin projections need model='hyte'")
        return _project_rows(vecs, self.store_.time_normals[bin_id])
