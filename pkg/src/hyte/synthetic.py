"""Small synthetic temporal graphs for smoke tests and demonstrations."""
from __future__ import annotations

from typing import List

import numpy as np

from .kg_data import Quadruple, TemporalKG


def toy_kg() -> TemporalKG:
    """Three entities, one relation, one bin: ``a -r-> c`` and ``b -r-> c``.

    Satisfiable with room to spare: ``a`` and ``b`` coincide, ``c`` sits one
    (unconstrained-length) relation vector away.
    """
    train = [Quadruple(0, 0, 2, 0, 0), Quadruple(1, 0, 2, 0, 0)]
    return TemporalKG(train, [], [], n_bins=1, n_entities=3, n_relations=1)


def era_split_facts(n_heads: int = 32, n_groups: int = 4, n_relations: int = 2) -> List[Quadruple]:
    """Facts whose tail depends on the era.

    Heads fall into ``n_groups`` groups. Relation ``r`` sends a head of group
    ``g`` to tail ``T_r[g]`` in bin 0 and to ``T_r[(g + 1) % n_groups]``
    in bin 1. The era-1 map is a cyclic shift of the era-0 map, so a
    time-agnostic translation has to pull all tails of a relation together.
    Entity ids: heads ``0..n_heads-1``, then ``n_groups`` tails per relation.
    """
    facts = []
    for h in range(n_heads):
        g = h % n_groups
        for r in range(n_relations):
            base = n_heads + r * n_groups
            facts.append(Quadruple(h, r, base + g, 0, 0))
            facts.append(Quadruple(h, r, base + (g + 1) % n_groups, 1, 1))
    return facts


def era_split_kg(seed: int = 0, test_fraction: float = 0.1, n_heads: int = 32, n_groups: int = 4,
                 n_relations: int = 2) -> TemporalKG:
    """Era-split graph with ``test_fraction`` of each bin's facts held out for testing.

    At most one fact per head is held out, so every test head keeps its other
    facts, including the other-era fact of the same (head, relation) pair.
    """
    rng = np.random.default_rng(seed)
    facts = era_split_facts(n_heads, n_groups, n_relations)
    n_entities = n_heads + n_relations * n_groups
    test: List[Quadruple] = []
    used_heads: set = set()
    for b in (0, 1):
        in_bin = [q for q in facts if q.start_bin == b]
        n_test = max(1, int(round(test_fraction * len(in_bin))))
        picked = 0
        for i in rng.permutation(len(in_bin)):
            if picked == n_test:
                break
            q = in_bin[i]
            if q.head in used_heads:
                continue
            used_heads.add(q.head)
            test.append(q)
            picked += 1
    held = set(test)
    train = [q for q in facts if q not in held]
    return TemporalKG(train, [], test, n_bins=2, n_entities=n_entities, n_relations=n_relations)
