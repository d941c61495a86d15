"""Frequency-balanced partition of the year axis into time classes."""
from __future__ import annotations

import bisect
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Tuple

from .kg_data import DataError, QuadrupleFormatError

DEFAULT_MIN_TRIPLES_PER_BIN = 300


@dataclass(frozen=True)
class TimeBins:
    """Contiguous, sorted ``(start_year, end_year)`` intervals, one per bin."""

    boundaries: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        bounds = tuple((int(a), int(b)) for a, b in self.boundaries)
        if not bounds:
            raise ValueError("TimeBins needs at least one interval")
        for i, (a, b) in enumerate(bounds):
            if a > b:
                raise ValueError(f"interval {i} is reversed: {(a, b)}")
            if i and a != bounds[i - 1][1] + 1:
                raise ValueError(f"interval {i} does not follow interval {i - 1} contiguously")
        object.__setattr__(self, "boundaries", bounds)
        object.__setattr__(self, "_starts", [a for a, _ in bounds])

    @property
    def count(self) -> int:
        return len(self.boundaries)

    @property
    def min_year(self) -> int:
        return self.boundaries[0][0]

    @property
    def max_year(self) -> int:
        return self.boundaries[-1][1]

    @property
    def year_index(self) -> Dict[int, int]:
        return {y: b for b, (lo, hi) in enumerate(self.boundaries) for y in range(lo, hi + 1)}

    def bin_of(self, year: int) -> int:
        """Bin containing ``year``; years outside the range clamp to the edge bins."""
        return max(bisect.bisect_right(self._starts, year) - 1, 0)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for b, (lo, hi) in enumerate(self.boundaries):
                f.write(f"{b}\t{lo}\t{hi}\n")

    @classmethod
    def load(cls, path) -> "TimeBins":
        bounds = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 3 or int(parts[0]) != len(bounds):
                    raise QuadrupleFormatError(path, lineno, "expected 'bin_id<TAB>start<TAB>end' in order")
                bounds.append((int(parts[1]), int(parts[2])))
        try:
            return cls(tuple(bounds))
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None


def bin_of(year: int, bins: TimeBins) -> int:
    return bins.bin_of(year)


def year_frequencies(quads: Iterable) -> Counter:
    """Count start and end year mentions of ``RawQuadruple``-like facts."""
    freq: Counter = Counter()
    for q in quads:
        freq[q.start_year] += 1
        freq[q.end_year] += 1
    return freq


def build_time_bins(year_frequencies: Mapping[int, int], min_triples_per_bin: int = DEFAULT_MIN_TRIPLES_PER_BIN) -> TimeBins:
    """Greedy left-to-right sweep closing a bin once it holds enough mentions.

    Consecutive observed years are accumulated until their mention count reaches
    ``min_triples_per_bin``. A trailing undersized run is merged into the last
    closed bin. Years without mentions fall into the bin on their left, so the
    intervals cover ``[min_year, max_year]`` without gaps.
    """
    if min_triples_per_bin <= 0:
        raise ValueError(f"min_triples_per_bin must be positive, got {min_triples_per_bin}")
    years = sorted(y for y, c in year_frequencies.items() if c > 0)
    if not years:
        raise ValueError("year_frequencies is empty")

    groups: List[List[int]] = []
    current: List[int] = []
    acc = 0
    for y in years:
        current.append(y)
        acc += year_frequencies[y]
        if acc >= min_triples_per_bin:
            groups.append(current)
            current, acc = [], 0
    if current:
        if groups:
            groups[-1].extend(current)
        else:
            groups.append(current)

    bounds = []
    for i, g in enumerate(groups):
        end = groups[i + 1][0] - 1 if i + 1 < len(groups) else g[-1]
        bounds.append((g[0], end))
    return TimeBins(tuple(bounds))
