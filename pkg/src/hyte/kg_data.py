"""Quadruple ingestion, vocabularies and the indexed temporal knowledge graph."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")

_YEAR_RE = re.compile(r"^(-?)([0-9#]+)(?:-[0-9#]{1,2}-[0-9#]{1,2})?$")


class DataError(ValueError):
    """Raised for unreadable or inconsistent dataset files."""


class QuadrupleFormatError(DataError):
    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}: line {lineno}: {message}")


@dataclass(frozen=True)
class RawQuadruple:
    head: str
    relation: str
    tail: str
    start_year: int
    end_year: int

    def __post_init__(self):
        if self.start_year > self.end_year:
            raise DataError(
                f"start after end: ({self.head}, {self.relation}, {self.tail}, "
                f"[{self.start_year}, {self.end_year}])"
            )


@dataclass(frozen=True)
class Quadruple:
    head: int
    relation: int
    tail: int
    start_bin: int
    end_bin: int

    @property
    def triple(self) -> Tuple[int, int, int]:
        return (self.head, self.relation, self.tail)


@dataclass(frozen=True)
class DatePolicy:
    """How date columns are read.

    ``open_marker`` denotes an unknown date. A fact with both endpoints open is
    always dropped; ``half_open`` decides a fact with exactly one open endpoint:
    ``"drop"`` discards it, ``"collapse"`` uses the known year for both ends.
    """

    open_marker: str = "####"
    half_open: str = "drop"

    def __post_init__(self):
        if self.half_open not in ("drop", "collapse"):
            raise ValueError(f"half_open must be 'drop' or 'collapse', got {self.half_open!r}")


def parse_year(text: str, policy: DatePolicy = DatePolicy()) -> Optional[int]:
    """Year of a ``YYYY`` / ``YYYY-MM-DD`` date, ``None`` for an open date.

    Month and day are discarded. A leading ``-`` marks a BCE year.
    """
    text = text.strip()
    if text == policy.open_marker:
        return None
    m = _YEAR_RE.match(text)
    if m is None:
        raise ValueError(f"unparseable date {text!r}")
    sign, digits = m.groups()
    if "#" in digits:
        return None
    year = int(digits)
    return -year if sign else year


def parse_quadruple_file(
    path, policy: DatePolicy = DatePolicy(), on_error: str = "raise"
) -> List[RawQuadruple]:
    """Read a 5-column TSV of ``head, relation, tail, start, end`` facts.

    With ``on_error="skip"`` malformed rows are logged and skipped instead of
    raising :class:`QuadrupleFormatError`.
    """
    if on_error not in ("raise", "skip"):
        raise ValueError(f"on_error must be 'raise' or 'skip', got {on_error!r}")
    quads = []
    n_dropped = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            try:
                quad = _parse_line(line, policy)
            except (ValueError, DataError) as exc:
                err = QuadrupleFormatError(path, lineno, str(exc))
                if on_error == "raise":
                    raise err from None
                logger.warning("skipping %s", err)
                continue
            if quad is None:
                n_dropped += 1
            else:
                quads.append(quad)
    if n_dropped:
        logger.info("%s: dropped %d facts without a usable time scope", path, n_dropped)
    return quads


def _parse_line(line: str, policy: DatePolicy) -> Optional[RawQuadruple]:
    cols = line.split("\t")
    if len(cols) != 5:
        raise ValueError(f"expected 5 tab-separated columns, got {len(cols)}")
    head, rel, tail, start, end = cols
    if not (head and rel and tail):
        raise ValueError("empty entity or relation label")
    start_year = parse_year(start, policy)
    end_year = parse_year(end, policy)
    if start_year is None and end_year is None:
        return None
    if start_year is None or end_year is None:
        if policy.half_open == "drop":
            return None
        start_year = end_year = start_year if start_year is not None else end_year
    return RawQuadruple(head, rel, tail, start_year, end_year)


def dedupe(quads: Iterable) -> list:
    """Drop repeated facts, keeping first-appearance order."""
    return list(dict.fromkeys(quads))


@dataclass
class Vocabulary:
    entities: Dict[str, int] = field(default_factory=dict)
    relations: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self._entity_labels = _invert(self.entities, "entity")
        self._relation_labels = _invert(self.relations, "relation")

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def entity_label(self, idx: int) -> str:
        return self._entity_labels[idx]

    def relation_label(self, idx: int) -> str:
        return self._relation_labels[idx]

    def entity_labels(self) -> List[str]:
        return list(self._entity_labels)

    def relation_labels(self) -> List[str]:
        return list(self._relation_labels)

    def save(self, directory) -> None:
        directory = Path(directory)
        _write_label_tsv(directory / "entities.tsv", self._entity_labels)
        _write_label_tsv(directory / "relations.tsv", self._relation_labels)

    @classmethod
    def load(cls, directory) -> "Vocabulary":
        directory = Path(directory)
        return cls(
            entities=_read_label_tsv(directory / "entities.tsv"),
            relations=_read_label_tsv(directory / "relations.tsv"),
        )


def _invert(mapping: Dict[str, int], kind: str) -> List[str]:
    labels = [None] * len(mapping)
    for label, idx in mapping.items():
        if not 0 <= idx < len(mapping) or labels[idx] is not None:
            raise DataError(f"{kind} ids are not dense: bad id {idx} for {label!r}")
        labels[idx] = label
    return labels


def _write_label_tsv(path: Path, labels: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for idx, label in enumerate(labels):
            f.write(f"{label}\t{idx}\n")


def _read_label_tsv(path: Path) -> Dict[str, int]:
    mapping = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise QuadrupleFormatError(path, lineno, "expected 'label<TAB>id'")
            mapping[parts[0]] = int(parts[1])
    return mapping


def build_vocabulary(quads: Sequence[RawQuadruple]) -> Vocabulary:
    """Assign dense ids to entities and relations in first-appearance order."""
    if not quads:
        raise DataError("cannot build a vocabulary from no facts")
    entities: Dict[str, int] = {}
    relations: Dict[str, int] = {}
    for q in quads:
        entities.setdefault(q.head, len(entities))
        relations.setdefault(q.relation, len(relations))
        entities.setdefault(q.tail, len(entities))
    return Vocabulary(entities, relations)


def encode(quads: Iterable[RawQuadruple], vocab: Vocabulary, bins) -> List[Quadruple]:
    out = []
    for q in quads:
        try:
            h, r, t = vocab.entities[q.head], vocab.relations[q.relation], vocab.entities[q.tail]
        except KeyError as exc:
            raise DataError(f"label {exc.args[0]!r} not in vocabulary") from None
        out.append(Quadruple(h, r, t, bins.bin_of(q.start_year), bins.bin_of(q.end_year)))
    return out


def decode(quad: Quadruple, vocab: Vocabulary, bins) -> Tuple[str, str, str, Tuple[int, int], Tuple[int, int]]:
    """Labels and the year spans of the start and end bins of ``quad``."""
    return (
        vocab.entity_label(quad.head),
        vocab.relation_label(quad.relation),
        vocab.entity_label(quad.tail),
        bins.boundaries[quad.start_bin],
        bins.boundaries[quad.end_bin],
    )


def quads_to_array(quads: Sequence[Quadruple]) -> np.ndarray:
    """``(n, 5)`` int64 array of ``head, relation, tail, start_bin, end_bin``."""
    if not quads:
        return np.empty((0, 5), dtype=np.int64)
    return np.array([(q.head, q.relation, q.tail, q.start_bin, q.end_bin) for q in quads], dtype=np.int64)


def array_to_quads(arr: np.ndarray) -> List[Quadruple]:
    return [Quadruple(*map(int, row)) for row in np.asarray(arr)]


class TemporalKG:
    """Split quadruples plus the positive-fact indices used for sampling and filtering.

    ``global_positives`` covers (h, r, t) of every split ignoring time;
    ``per_bin_positives[b]`` is the set of train triples valid at bin ``b``.
    Immutable after construction.
    """

    def __init__(
        self,
        train: Sequence[Quadruple],
        valid: Sequence[Quadruple],
        test: Sequence[Quadruple],
        n_bins: int,
        n_entities: Optional[int] = None,
        n_relations: Optional[int] = None,
    ):
        self.train = tuple(train)
        self.valid = tuple(valid)
        self.test = tuple(test)
        self.n_bins = int(n_bins)
        all_quads = self.train + self.valid + self.test
        for q in all_quads:
            if not (0 <= q.start_bin <= q.end_bin < self.n_bins):
                raise DataError(f"bin ids out of range for {q} with {self.n_bins} bins")
        self.n_entities = n_entities if n_entities is not None else _max_entity(all_quads) + 1
        self.n_relations = n_relations if n_relations is not None else _max_relation(all_quads) + 1

        self.global_positives: FrozenSet[Tuple[int, int, int]] = frozenset(q.triple for q in all_quads)
        per_bin = [set() for _ in range(self.n_bins)]
        for q in dict.fromkeys(self.train):
            for b in range(q.start_bin, q.end_bin + 1):
                per_bin[b].add(q.triple)
        self.per_bin_positives: Tuple[FrozenSet[Tuple[int, int, int]], ...] = tuple(frozenset(s) for s in per_bin)

        tails: Dict[Tuple[int, int], set] = {}
        heads: Dict[Tuple[int, int], set] = {}
        for h, r, t in self.global_positives:
            tails.setdefault((h, r), set()).add(t)
            heads.setdefault((r, t), set()).add(h)
        self._tails = {k: np.fromiter(sorted(v), dtype=np.int64) for k, v in tails.items()}
        self._heads = {k: np.fromiter(sorted(v), dtype=np.int64) for k, v in heads.items()}
        self._positive_keys = np.sort(
            np.fromiter((self.triple_key(*x) for x in self.global_positives), dtype=np.int64,
                        count=len(self.global_positives))
        )

    def split(self, name: str) -> Tuple[Quadruple, ...]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def is_positive(self, h: int, r: int, t: int) -> bool:
        return (h, r, t) in self.global_positives

    def known_tails(self, h: int, r: int) -> np.ndarray:
        return self._tails.get((h, r), np.empty(0, dtype=np.int64))

    def known_heads(self, r: int, t: int) -> np.ndarray:
        return self._heads.get((r, t), np.empty(0, dtype=np.int64))

    @cached_property
    def _timed_index(self):
        tails: Dict[Tuple[int, int, int], set] = {}
        heads: Dict[Tuple[int, int, int], set] = {}
        for q in dict.fromkeys(self.train + self.valid + self.test):
            for b in range(q.start_bin, q.end_bin + 1):
                tails.setdefault((q.head, q.relation, b), set()).add(q.tail)
                heads.setdefault((q.relation, q.tail, b), set()).add(q.head)
        freeze = lambda d: {k: np.fromiter(sorted(v), dtype=np.int64) for k, v in d.items()}
        return freeze(tails), freeze(heads)

    def known_tails_at(self, h: int, r: int, b: int) -> np.ndarray:
        """Tails of (h, r) in any split whose interval covers bin ``b``."""
        return self._timed_index[0].get((h, r, b), np.empty(0, dtype=np.int64))

    def known_heads_at(self, r: int, t: int, b: int) -> np.ndarray:
        return self._timed_index[1].get((r, t, b), np.empty(0, dtype=np.int64))

    def triple_key(self, h, r, t):
        """Collision-free int64 key of a triple; vectorises over arrays."""
        return (np.asarray(h, dtype=np.int64) * self.n_relations + r) * self.n_entities + t

    def contains_keys(self, keys: np.ndarray) -> np.ndarray:
        """Vectorised membership of triple keys in ``global_positives``."""
        keys = np.asarray(keys, dtype=np.int64)
        pos = np.searchsorted(self._positive_keys, keys)
        pos = np.minimum(pos, max(len(self._positive_keys) - 1, 0))
        if len(self._positive_keys) == 0:
            return np.zeros(keys.shape, dtype=bool)
        return self._positive_keys[pos] == keys

    def training_examples(self, temporal: bool = True) -> np.ndarray:
        """``(n, 4)`` array of ``h, r, t, bin`` training examples.

        With ``temporal`` every (triple, bin) incidence of ``per_bin_positives``
        is one example; otherwise each distinct train triple appears once with
        bin 0.
        """
        if temporal:
            rows = [(h, r, t, b) for b, triples in enumerate(self.per_bin_positives) for (h, r, t) in sorted(triples)]
        else:
            rows = [(h, r, t, 0) for (h, r, t) in dict.fromkeys(q.triple for q in self.train)]
        if not rows:
            return np.empty((0, 4), dtype=np.int64)
        return np.array(rows, dtype=np.int64)


def _max_entity(quads) -> int:
    return max((max(q.head, q.tail) for q in quads), default=-1)


def _max_relation(quads) -> int:
    return max((q.relation for q in quads), default=-1)


def index_temporal_kg(train, valid, test, bins, n_entities=None, n_relations=None) -> TemporalKG:
    return TemporalKG(train, valid, test, bins.count, n_entities=n_entities, n_relations=n_relations)


def read_dataset_dir(directory, policy: DatePolicy = DatePolicy()) -> Dict[str, List[RawQuadruple]]:
    """Parse and deduplicate ``train.txt``, ``valid.txt`` and ``test.txt``."""
    directory = Path(directory)
    splits = {}
    for name in SPLITS:
        path = directory / f"{name}.txt"
        if not path.is_file():
            raise DataError(f"missing split file {path}")
        splits[name] = dedupe(parse_quadruple_file(path, policy))
    if not splits["train"]:
        raise DataError(f"no usable facts in {directory / 'train.txt'}")
    return splits


def write_encoded_split(path, quads: Sequence[Quadruple]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for q in quads:
            f.write(f"{q.head}\t{q.relation}\t{q.tail}\t{q.start_bin}\t{q.end_bin}\n")


def read_encoded_split(path) -> List[Quadruple]:
    quads = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 5:
                raise QuadrupleFormatError(path, lineno, "expected 5 integer columns")
            try:
                quads.append(Quadruple(*map(int, parts)))
            except ValueError as exc:
                raise QuadrupleFormatError(path, lineno, str(exc)) from None
    return quads
