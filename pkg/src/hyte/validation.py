"""Input checks for the estimator API."""
from __future__ import annotations

from typing import List, Optional

import numpy as np
from sklearn.utils import check_array

from .kg_data import Quadruple


def check_quadruples(X, n_entities: Optional[int] = None, n_relations: Optional[int] = None,
                     n_bins: Optional[int] = None, allow_empty: bool = False) -> np.ndarray:
    """Coerce ``X`` to an ``(n, 5)`` int64 array of ``h, r, t, start_bin, end_bin``.

    Accepts a sequence of :class:`Quadruple`, or an array with 4 columns
    (single bin) or 5 columns (bin interval).
    """
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], Quadruple):
        X = [(q.head, q.relation, q.tail, q.start_bin, q.end_bin) for q in X]
    if allow_empty and (X is None or len(X) == 0):
        return np.empty((0, 5), dtype=np.int64)
    arr = check_array(X, dtype=None, ensure_2d=True, ensure_all_finite=True)
    if arr.shape[1] not in (4, 5):
        raise ValueError(f"expected 4 or 5 columns (h, r, t, bin[, end_bin]), got {arr.shape[1]}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("quadruple ids must be integers")
    arr = arr.astype(np.int64)
    if arr.shape[1] == 4:
        arr = np.column_stack([arr, arr[:, 3]])
    if (arr < 0).any():
        raise ValueError("quadruple ids must be non-negative")
    if (arr[:, 3] > arr[:, 4]).any():
        raise ValueError("start_bin must not exceed end_bin")
    for col, bound, name in ((0, n_entities, "head"), (2, n_entities, "tail"), (1, n_relations, "relation"),
                             (4, n_bins, "bin")):
        if bound is not None and arr.shape[0] and arr[:, col].max() >= bound:
            raise ValueError(f"{name} id {arr[:, col].max()} out of range [0, {bound})")
    return arr


def to_quadruples(arr: np.ndarray) -> List[Quadruple]:
    return [Quadruple(*row) for row in arr.tolist()]
