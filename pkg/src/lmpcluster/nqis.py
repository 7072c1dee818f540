"""Nested quasi-independent sets (I1, I2, I3) and the randomized roundings built on them."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .certifier.cases import Deltas
from .conflict_graph import (
    ConflictGraph,
    build_conflict_graph,
    maximal_independent_set,
    warm_start_mis,
)
from .core_model import Instance, Objective
from .dual_growth import DualGrowthResult


class Variant(str, enum.Enum):
    KMEANS = "kmeans-alg1"
    KMEDIAN = "kmedian-alg3"

    @classmethod
    def for_objective(cls, objective: Objective | str) -> "Variant":
        return cls.KMEANS if Objective.parse(objective) is Objective.KMEANS else cls.KMEDIAN


@dataclass(frozen=True, eq=False)
class NestedQIS:
    i1: frozenset
    i2: frozenset
    i3: frozenset
    q: Mapping[int, int]
    deltas: Deltas
    variant: Variant
    v2: frozenset = frozenset()
    v3: frozenset = frozenset()
    graphs: Mapping[str, ConflictGraph] = field(default_factory=dict, repr=False)

    @property
    def step_graph(self) -> ConflictGraph:
        """Graph used for I2, the single-neighbour test of V3, and I3."""
        return self.graphs["d2" if self.variant is Variant.KMEANS else "d1"]

    def preimage(self, x: int) -> list[int]:
        return sorted(i for i, target in self.q.items() if target == x)

    def groups(self) -> list[list[int]]:
        """I2 members in index order, each followed by its I3 preimage."""
        pre: dict[int, list[int]] = {x: [] for x in sorted(self.i2)}
        for i in sorted(self.i3):
            pre[self.q[i]].append(i)
        return [[x] + pre[x] for x in sorted(self.i2)]

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "deltas": list(self.deltas),
            "i1": sorted(self.i1),
            "i2": sorted(self.i2),
            "i3": sorted(self.i3),
            "q": {str(i): int(self.q[i]) for i in sorted(self.q)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class RoundingParams:
    p: float
    rng_seed: int = 0
    group_threshold: int = 3

    def __post_init__(self):
        if not 0.0 <= self.p < 0.5:
            raise ValueError(f"p must lie in [0, 1/2), got {self.p}")
        if self.group_threshold < 1:
            raise ValueError("group threshold C must be at least 1")


def _graphs(growth: DualGrowthResult, instance: Instance, deltas: Deltas) -> dict[str, ConflictGraph]:
    verts = growth.tight_sorted
    fc = instance.facility_costs()
    return {
        name: build_conflict_graph(instance.facilities, verts, growth.t, d, instance.objective, fc)
        for name, d in (("d1", deltas.d1), ("d2", deltas.d2), ("d3", deltas.d3))
    }


def build_nqis(growth: DualGrowthResult, instance: Instance, deltas: Deltas | Iterable[float],
               variant: Variant | str | None = None, previous_i1: Iterable[int] | None = None) -> NestedQIS:
    """Construct (I1, I2, I3, q).  ``previous_i1`` warm-starts the first independent set."""
    deltas = Deltas(*deltas).check()
    variant = Variant(variant) if variant is not None else Variant.for_objective(instance.objective)
    g = _graphs(growth, instance, deltas)
    h1, h2, h3 = g["d1"], g["d2"], g["d3"]
    step = h2 if variant is Variant.KMEANS else h1

    i1 = maximal_independent_set(h1) if previous_i1 is None else warm_start_mis(h1, previous_i1)
    v2 = frozenset(v for v in h1.vertices if v not in i1 and not (h2.adjacency[v] & i1))
    i2 = maximal_independent_set(step.induced(v2))
    v3 = frozenset(
        v for v in v2 - i2
        if len(step.adjacency[v] & i2) == 1
        and not (h2.adjacency[v] & i1)
        and not (h3.adjacency[v] & i2)
    )
    i3 = maximal_independent_set(step.induced(v3))
    q = {v: next(iter(step.adjacency[v] & i2)) for v in sorted(i3)}
    return NestedQIS(i1, i2, i3, q, deltas, variant, v2, v3, g)


def nqis_invariant_violations(nqis: NestedQIS) -> list[str]:
    h1, h2, h3 = nqis.graphs["d1"], nqis.graphs["d2"], nqis.graphs["d3"]
    step = nqis.step_graph
    out = []
    i1, i2, i3 = nqis.i1, nqis.i2, nqis.i3
    if (i1 & i2) or (i1 & i3) or (i2 & i3):
        out.append("sets are not disjoint")
    if any(h1.adjacency[v] & i1 for v in i1):
        out.append("I1 not independent in H(d1)")
    if any(not (v in i1 or h1.adjacency[v] & i1) for v in h1.vertices):
        out.append("I1 not maximal in H(d1)")
    both = i1 | i2
    if any(h2.adjacency[v] & both for v in both):
        out.append("I1 u I2 not independent in H(d2)")
    if any(step.adjacency[v] & i2 for v in i2):
        out.append("I2 not independent in its step graph")
    if any(not (v in i2 or step.adjacency[v] & i2) for v in nqis.v2):
        out.append("I2 not maximal in the step graph on V2")
    for v in i3:
        nb = step.adjacency[v] & i2
        if len(nb) != 1 or nqis.q.get(v) not in nb:
            out.append(f"I3 member {v} lacks a unique I2 partner")
        if h2.adjacency[v] & i1:
            out.append(f"I3 member {v} conflicts with I1 at d2")
        if h3.adjacency[v] & i2:
            out.append(f"I3 member {v} conflicts with I2 at d3")
        if step.adjacency[v] & (i3 - {v}):
            out.append(f"I3 member {v} not independent in I3")
    if set(nqis.q) != set(i3):
        out.append("q is not defined exactly on I3")
    return out


def expected_size(nqis: NestedQIS, p: float) -> float:
    return len(nqis.i1) + p * (len(nqis.i2) + len(nqis.i3))


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & ((1 << 64) - 1)))


def candidate_order(nqis: NestedQIS) -> list[int]:
    """Column order used by :func:`sample_many`: the flattened groups."""
    return [v for grp in nqis.groups() for v in grp]


def sample_many(nqis: NestedQIS, p: float, seed: int, count: int) -> np.ndarray:
    """Boolean matrix (count x |I2 u I3|) of selections, columns in :func:`candidate_order`."""
    if not 0.0 <= p < 0.5:
        raise ValueError("p must lie in [0, 1/2)")
    groups = nqis.groups()
    width = sum(len(g) for g in groups)
    rng = _rng(seed)
    out = np.zeros((count, width), dtype=bool)
    if width == 0:
        return out
    heads = rng.random((count, len(groups))) < 0.5
    draws = rng.random((count, width)) < 2.0 * p
    col = 0
    for gi, grp in enumerate(groups):
        h = heads[:, gi]
        out[:, col] = h & draws[:, col]
        if len(grp) > 1:
            out[:, col + 1:col + len(grp)] = (~h)[:, None] & draws[:, col + 1:col + len(grp)]
        col += len(grp)
    return out


def sample_solution(nqis: NestedQIS, params: RoundingParams) -> frozenset:
    order = candidate_order(nqis)
    row = sample_many(nqis, params.p, params.rng_seed, 1)[0]
    return frozenset(nqis.i1) | frozenset(v for v, keep in zip(order, row) if keep)


def selection_sets(nqis: NestedQIS, matrix: np.ndarray) -> list[frozenset]:
    order = np.array(candidate_order(nqis), dtype=int)
    base = frozenset(nqis.i1)
    return [base | frozenset(order[row].tolist()) for row in matrix]


class RoundingFailure(RuntimeError):
    def __init__(self, message: str, best: frozenset):
        super().__init__(message)
        self.best = best


def grouped_rounding_draw(nqis: NestedQIS, p: float, C: int, rng: np.random.Generator) -> frozenset:
    """One draw of the grouped sampler: large groups keep their leader outright."""
    groups = sorted(nqis.groups(), key=lambda g: (-len(g), g[0]))
    # A negative adjusted probability means followers are never drawn.
    pp = max(p - 2.0 / C, 0.0)
    chosen = set(nqis.i1)
    for grp in groups:
        leader, followers = grp[0], grp[1:]
        if len(grp) >= C:
            chosen.add(leader)
            chosen.update(f for f in followers if rng.random() < pp)
        elif rng.random() < 0.5:
            if rng.random() < 2 * pp:
                chosen.add(leader)
        else:
            chosen.update(f for f in followers if rng.random() < 2 * pp)
    return frozenset(chosen)


def grouped_expected_size(nqis: NestedQIS, p: float, C: int) -> float:
    pp = max(p - 2.0 / C, 0.0)
    total = float(len(nqis.i1))
    for grp in nqis.groups():
        if len(grp) >= C:
            total += 1 + pp * (len(grp) - 1)
        else:
            total += pp * len(grp)
    return total


def round_to_at_most_k(nqis: NestedQIS, k: int, params: RoundingParams) -> frozenset:
    C = params.group_threshold
    pool = len(nqis.i2) + len(nqis.i3)
    if pool < 100 * C ** 4:
        raise ValueError(f"|I2 u I3| = {pool} is below 100*C^4 = {100 * C ** 4}; use enumeration instead")
    if not 0.01 <= params.p <= 0.49:
        raise ValueError("grouped rounding needs p in [0.01, 0.49]")
    if not math.isclose(expected_size(nqis, params.p), k, rel_tol=1e-9, abs_tol=1e-9):
        raise ValueError("expected size at p must equal k")
    rng = _rng(params.rng_seed)
    best = None
    for _ in range(10 * C):
        draw = grouped_rounding_draw(nqis, params.p, C, rng)
        if len(draw) <= k:
            return draw
        if best is None or len(draw) < len(best):
            best = draw
    raise RoundingFailure(f"no draw of size <= {k} after {10 * C} attempts", best)


def inclusion_probability_none(nqis: NestedQIS, members: Iterable[int], p: float) -> float:
    """Exact probability that none of ``members`` (a subset of I2 u I3) is selected."""
    ms = set(members)
    prob = 1.0
    for grp in nqis.groups():
        leader_in = grp[0] in ms
        k = sum(1 for v in grp[1:] if v in ms)
        if not leader_in and k == 0:
            continue
        prob *= 0.5 * (1 - 2 * p) ** int(leader_in) + 0.5 * (1 - 2 * p) ** k
    return prob


def expected_connection_costs(instance: Instance, nqis: NestedQIS, p: float) -> np.ndarray:
    """Exact E[c(j, S)] per client under the fair-coin rounding at probability ``p``."""
    cost = instance.client_costs()
    n = cost.shape[0]
    i1 = sorted(nqis.i1)
    base = cost[:, i1].min(axis=1) if i1 else np.full(n, np.inf)
    groups = nqis.groups()
    out = np.empty(n)
    for j in range(n):
        cands = [(cost[j, v], gi, pos) for gi, grp in enumerate(groups) for pos, v in enumerate(grp)
                 if cost[j, v] < base[j]]
        cands.sort()
        # Track P(no candidate closer than the current one is selected), per group.
        state = [(False, 0)] * len(groups)
        none_prob = 1.0
        expect = 0.0

        def group_none(gi, lead, k):
            return 0.5 * (1 - 2 * p) ** int(lead) + 0.5 * (1 - 2 * p) ** k

        for c, gi, pos in cands:
            lead, k = state[gi]
            before = group_none(gi, lead, k)
            after = group_none(gi, lead or pos == 0, k + (pos > 0))
            new_none = none_prob * (after / before) if before > 0 else 0.0
            expect += c * (none_prob - new_none)
            none_prob = new_none
            state[gi] = (lead or pos == 0, k + (pos > 0))
        expect += base[j] * none_prob
        out[j] = expect
    return out
