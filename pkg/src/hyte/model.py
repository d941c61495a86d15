"""Embedding store, hyperplane projection and translational scoring functions.

All three models score a triple by the norm of a residual vector; lower means
more plausible:

* TransE: ``e_h + e_r - e_t``
* TransH: ``P_r(e_h) + e_r - P_r(e_t)`` with ``P_r`` the projection onto the
  hyperplane with unit normal ``w_r`` of the relation
* HyTE:   ``P_b(e_h) + P_b(e_r) - P_b(e_t)`` with ``w_b`` the unit normal of
  time bin ``b``

where ``P(e) = e - (w . e) w``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

MODEL_KINDS = ("transe", "transh", "hyte")
NORMS = ("l1", "l2")

UNIT_TOL = 1e-6
FORMAT_NAME = "hyte-embeddings"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable or inconsistent embedding checkpoints."""


@dataclass(frozen=True)
class ModelKind:
    kind: str = "hyte"
    norm: str = "l1"

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.lower())
        object.__setattr__(self, "norm", self.norm.lower())
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}, got {self.kind!r}")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")

    @property
    def temporal(self) -> bool:
        return self.kind == "hyte"


@dataclass
class EmbeddingStore:
    entity_vecs: np.ndarray
    relation_vecs: np.ndarray
    time_normals: Optional[np.ndarray] = None
    relation_normals: Optional[np.ndarray] = None
    seed: Optional[int] = None

    @property
    def dim(self) -> int:
        return self.entity_vecs.shape[1]

    @property
    def n_entities(self) -> int:
        return self.entity_vecs.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation_vecs.shape[0]

    @property
    def n_bins(self) -> int:
        return 0 if self.time_normals is None else self.time_normals.shape[0]

    def blocks(self) -> Dict[str, np.ndarray]:
        """Allocated parameter matrices in persistence order."""
        out = {"entity": self.entity_vecs, "relation": self.relation_vecs}
        if self.time_normals is not None:
            out["time"] = self.time_normals
        if self.relation_normals is not None:
            out["relation_normal"] = self.relation_normals
        return out

    def copy(self) -> "EmbeddingStore":
        return EmbeddingStore(
            self.entity_vecs.copy(),
            self.relation_vecs.copy(),
            None if self.time_normals is None else self.time_normals.copy(),
            None if self.relation_normals is None else self.relation_normals.copy(),
            self.seed,
        )

    def is_finite(self) -> bool:
        return all(np.isfinite(m).all() for m in self.blocks().values())


def init_embeddings(vocab_sizes: Tuple[int, int, int], dim: int, seed: int, model: ModelKind = ModelKind()) -> EmbeddingStore:
    """Uniform ``[-6/sqrt(d), 6/sqrt(d)]`` initialisation; normals are L2-normalised.

    Only the parameter blocks ``model`` needs are allocated.
    """
    n_entities, n_relations, n_bins = vocab_sizes
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if n_entities < 1 or n_relations < 1:
        raise ValueError("need at least one entity and one relation")
    if model.temporal and n_bins < 1:
        raise ValueError("HyTE needs at least one time bin")
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(dim)
    entity = rng.uniform(-bound, bound, size=(n_entities, dim))
    relation = rng.uniform(-bound, bound, size=(n_relations, dim))
    time_normals = relation_normals = None
    if model.kind == "hyte":
        time_normals = normalize_rows(rng.uniform(-bound, bound, size=(n_bins, dim)))
    elif model.kind == "transh":
        relation_normals = normalize_rows(rng.uniform(-bound, bound, size=(n_relations, dim)))
    return EmbeddingStore(entity, relation, time_normals, relation_normals, seed)


def normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.sum(m * m, axis=-1, keepdims=True))
    return m / np.where(norms > 0, norms, 1.0)


def project(v, w) -> np.ndarray:
    """Component of ``v`` orthogonal to the unit vector ``w``."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if abs(np.linalg.norm(w) - 1.0) > UNIT_TOL:
        raise ValueError(f"hyperplane normal must have unit L2 norm, got {np.linalg.norm(w)!r}")
    return _project_rows(v, w)


def _project_rows(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    return v - np.sum(v * w, axis=-1, keepdims=True) * w


def _norm(s: np.ndarray, norm: str) -> np.ndarray:
    if norm == "l1":
        return np.sum(np.abs(s), axis=-1)
    return np.sqrt(np.sum(s * s, axis=-1))


def _norm_grad(s: np.ndarray, norm: str) -> np.ndarray:
    """(Sub)gradient of the norm at ``s``; ``sign(0) = 0`` and zero at the L2 origin."""
    if norm == "l1":
        return np.sign(s)
    n = np.sqrt(np.sum(s * s, axis=-1, keepdims=True))
    return np.divide(s, n, out=np.zeros_like(s), where=n > 0)


def _residual_parts(store: EmbeddingStore, model: ModelKind, h, r, t, tau):
    """Residual rows plus the intermediates needed for gradients."""
    e_h = store.entity_vecs[h]
    e_r = store.relation_vecs[r]
    e_t = store.entity_vecs[t]
    if model.kind == "transe":
        return e_h + e_r - e_t, None, None
    if model.kind == "transh":
        w = store.relation_normals[r]
        u = e_h - e_t
        return _project_rows(u, w) + e_r, u, w
    w = store.time_normals[tau]
    v = e_h + e_r - e_t
    return _project_rows(v, w), v, w


def _check_ids(store: EmbeddingStore, model: ModelKind, h, r, t, tau) -> None:
    for name, ids, n in (("head", h, store.n_entities), ("relation", r, store.n_relations), ("tail", t, store.n_entities)):
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise IndexError(f"{name} id out of range [0, {n})")
    if model.kind == "transh" and store.relation_normals is None:
        raise ValueError("store has no relation normals; it was not built for TransH")
    if model.kind == "hyte":
        if store.time_normals is None:
            raise ValueError("store has no time normals; it was not built for HyTE")
        taus = np.asarray(tau)
        if taus.size and (taus.min() < 0 or taus.max() >= store.n_bins):
            raise IndexError(f"time bin out of range [0, {store.n_bins})")


def score_batch(store: EmbeddingStore, model: ModelKind, h, r, t, tau=0) -> np.ndarray:
    """Vectorised scores of ``(h, r, t, tau)`` index arrays (broadcast together)."""
    h, r, t, tau = np.broadcast_arrays(*(np.asarray(x, dtype=np.int64) for x in (h, r, t, tau)))
    _check_ids(store, model, h, r, t, tau)
    s, _, _ = _residual_parts(store, model, h, r, t, tau)
    return _norm(s, model.norm)


def score(store: EmbeddingStore, model: ModelKind, h: int, r: int, t: int, tau: int = 0) -> float:
    return float(score_batch(store, model, [h], [r], [t], [tau])[0])


def score_transe(h: int, r: int, t: int, store: EmbeddingStore, norm: str = "l1") -> float:
    return score(store, ModelKind("transe", norm), h, r, t)


def score_transh(h: int, r: int, t: int, store: EmbeddingStore, norm: str = "l1") -> float:
    w = store.relation_normals[r] if store.relation_normals is not None else None
    if w is not None and abs(np.linalg.norm(w) - 1.0) > UNIT_TOL:
        raise ValueError(f"relation normal {r} is not unit length")
    return score(store, ModelKind("transh", norm), h, r, t)


def score_hyte(h: int, r: int, t: int, tau: int, store: EmbeddingStore, norm: str = "l1") -> float:
    if store.time_normals is not None and 0 <= tau < store.n_bins:
        if abs(np.linalg.norm(store.time_normals[tau]) - 1.0) > UNIT_TOL:
            raise ValueError(f"time normal {tau} is not unit length")
    return score(store, ModelKind("hyte", norm), h, r, t, tau)


def score_candidates(store: EmbeddingStore, model: ModelKind, h: int, r: int, t: int, tau: int, side: str) -> np.ndarray:
    """Scores of the triple with its ``side`` entity replaced by every entity."""
    every = np.arange(store.n_entities, dtype=np.int64)
    if side == "tail":
        return score_batch(store, model, h, r, every, tau)
    if side == "head":
        return score_batch(store, model, every, r, t, tau)
    raise ValueError(f"side must be 'head' or 'tail', got {side!r}")


def residual_gradients(store: EmbeddingStore, model: ModelKind, h, r, t, tau, coef) -> List[Tuple[str, np.ndarray, np.ndarray]]:
    """Gradient of ``sum_i coef_i * score_i`` as ``(block, row ids, rows)`` pieces.

    Row ids may repeat; consumers accumulate with ``np.add.at``.
    """
    s, aux, w = _residual_parts(store, model, h, r, t, tau)
    g = _norm_grad(s, model.norm) * np.asarray(coef, dtype=float)[:, None]
    if model.kind == "transe":
        return [("entity", h, g), ("relation", r, g), ("entity", t, -g)]
    gw = np.sum(g * w, axis=-1, keepdims=True)
    g_proj = g - gw * w
    # d/dw of (x - (w.x) w) contracted with g
    g_normal = -gw * aux - np.sum(w * aux, axis=-1, keepdims=True) * g
    if model.kind == "transh":
        return [
            ("entity", h, g_proj), ("entity", t, -g_proj),
            ("relation", r, g), ("relation_normal", r, g_normal),
        ]
    return [
        ("entity", h, g_proj), ("relation", r, g_proj), ("entity", t, -g_proj),
        ("time", tau, g_normal),
    ]


def hinge_batch(store: EmbeddingStore, model: ModelKind, pos: np.ndarray, neg: np.ndarray, margin: float):
    """Hinge losses of paired ``(n, 4)`` positive/negative arrays and their gradient pieces."""
    pos = np.asarray(pos, dtype=np.int64).reshape(-1, 4)
    neg = np.asarray(neg, dtype=np.int64).reshape(-1, 4)
    f_pos = score_batch(store, model, *pos.T)
    f_neg = score_batch(store, model, *neg.T)
    losses = np.maximum(0.0, f_pos - f_neg + margin)
    active = f_pos - f_neg + margin > 0
    if not active.any():
        return losses, active, []
    ap, an = pos[active], neg[active]
    ones = np.ones(len(ap))
    pieces = residual_gradients(store, model, *ap.T, ones)
    pieces += residual_gradients(store, model, *an.T, -ones)
    return losses, active, pieces


def grad_hinge(pos, neg, margin: float, model: ModelKind, store: EmbeddingStore) -> Dict[Tuple[str, int], np.ndarray]:
    """Gradient of one hinge term keyed by ``(block, row)``; empty when inactive.

    ``pos`` and ``neg`` are ``(h, r, t, tau)`` tuples (``tau`` ignored outside HyTE).
    """
    _, _, pieces = hinge_batch(store, model, [pos], [neg], margin)
    return sparse_to_dict(pieces)


def sparse_to_dict(pieces) -> Dict[Tuple[str, int], np.ndarray]:
    out: Dict[Tuple[str, int], np.ndarray] = {}
    for block, ids, rows in pieces:
        for i, row in zip(np.asarray(ids).tolist(), rows):
            key = (block, int(i))
            out[key] = out[key] + row if key in out else row.copy()
    return out


def densify(store: EmbeddingStore, pieces) -> Dict[str, np.ndarray]:
    """Accumulate gradient pieces into zero arrays shaped like the store blocks."""
    dense = {name: np.zeros_like(m) for name, m in store.blocks().items()}
    for block, ids, rows in pieces:
        np.add.at(dense[block], ids, rows)
    return dense


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def save_store(store: EmbeddingStore, model: ModelKind, path) -> Path:
    """Write ``path`` (JSON header) and ``path.with_suffix('.bin')`` (float32 LE, row-major)."""
    path = Path(path)
    data_path = path.with_suffix(".bin")
    blocks = store.blocks()
    payload = b"".join(np.ascontiguousarray(m, dtype="<f4").tobytes() for m in blocks.values())
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "model": model.kind,
        "norm": model.norm,
        "dim": store.dim,
        "n_entities": store.n_entities,
        "n_relations": store.n_relations,
        "n_bins": store.n_bins,
        "seed": store.seed,
        "blocks": list(blocks),
        "dtype": "<f4",
        "data_file": data_path.name,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    data_path.write_bytes(payload)
    path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_header(path) -> dict:
    try:
        header = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint header: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path}: not a {FORMAT_NAME} header")
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('version')!r}")
    required = ("model", "norm", "dim", "n_entities", "n_relations", "n_bins", "blocks", "data_file")
    missing = [k for k in required if k not in header]
    if missing:
        raise CheckpointError(f"{path}: header missing {missing}")
    return header


def load_store(path) -> Tuple[EmbeddingStore, ModelKind]:
    path = Path(path)
    header = read_header(path)
    try:
        model = ModelKind(header["model"], header["norm"])
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    d, n_e, n_r, n_b = (int(header[k]) for k in ("dim", "n_entities", "n_relations", "n_bins"))
    shapes = {"entity": (n_e, d), "relation": (n_r, d), "time": (n_b, d), "relation_normal": (n_r, d)}
    expected = ["entity", "relation"] + {"hyte": ["time"], "transh": ["relation_normal"], "transe": []}[model.kind]
    if header["blocks"] != expected:
        raise CheckpointError(f"{path}: blocks {header['blocks']} do not match model {model.kind}")
    data_path = path.parent / header["data_file"]
    try:
        payload = data_path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read data file: {exc}") from None
    if "sha256" in header and hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CheckpointError(f"{data_path}: checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f4")
    total = sum(shapes[b][0] * shapes[b][1] for b in expected)
    if flat.size != total:
        raise CheckpointError(f"{data_path}: expected {total} floats, found {flat.size}")
    arrays = {}
    offset = 0
    for b in expected:
        n = shapes[b][0] * shapes[b][1]
        arrays[b] = flat[offset:offset + n].reshape(shapes[b]).astype(np.float64)
        offset += n
    store = EmbeddingStore(
        arrays["entity"], arrays["relation"], arrays.get("time"), arrays.get("relation_normal"),
        header.get("seed"),
    )
    return store, model
