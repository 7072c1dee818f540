"""Conflict graphs over tight facilities and index-ordered maximal independent sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .core_model import Objective, cost_matrix


@dataclass(frozen=True, eq=False)
class ConflictGraph:
    """Facilities i, i' conflict when c(i, i') <= delta * min(t_i, t_i')."""

    vertices: tuple
    t: Mapping[int, float]
    delta: float
    objective: Objective
    adjacency: Mapping[int, frozenset]

    def neighbors(self, v: int) -> frozenset:
        return self.adjacency[v]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adjacency.get(u, ())

    def edges(self) -> list[tuple[int, int]]:
        return sorted((u, v) for u in self.vertices for v in self.adjacency[u] if u < v)

    def induced(self, keep: Iterable[int]) -> "ConflictGraph":
        keep = sorted(set(keep) & set(self.vertices))
        ks = set(keep)
        adj = {v: frozenset(self.adjacency[v] & ks) for v in keep}
        return ConflictGraph(tuple(keep), {v: self.t[v] for v in keep}, self.delta, self.objective, adj)


def conflict_adjacency(pair_costs: np.ndarray, t_values: np.ndarray, delta: float) -> np.ndarray:
    """Boolean adjacency matrix; inclusive threshold, no self-loops."""
    limit = delta * np.minimum(t_values[:, None], t_values[None, :])
    adj = pair_costs <= limit
    np.fill_diagonal(adj, False)
    return adj


def build_conflict_graph(facilities, vertices: Iterable[int], t: Mapping[int, float], delta: float,
                         objective: Objective | str, pair_costs: np.ndarray | None = None) -> ConflictGraph:
    """``pair_costs``, if given, is the full facility-by-facility cost matrix."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    objective = Objective.parse(objective)
    verts = tuple(sorted(int(v) for v in vertices))
    tv = np.array([float(t[v]) for v in verts])
    if np.any(tv < 0):
        raise ValueError("t values must be nonnegative")
    if not verts:
        return ConflictGraph((), {}, delta, objective, {})
    idx = np.array(verts)
    if pair_costs is None:
        pts = np.asarray(facilities, dtype=float)[idx]
        sub = cost_matrix(pts, pts, objective)
    else:
        sub = pair_costs[np.ix_(idx, idx)]
    adj = conflict_adjacency(sub, tv, delta)
    adjacency = {v: frozenset(int(idx[k]) for k in np.flatnonzero(adj[a])) for a, v in enumerate(verts)}
    return ConflictGraph(verts, {v: float(t[v]) for v in verts}, float(delta), objective, adjacency)


def _extend(graph: ConflictGraph, chosen: list[int]) -> frozenset:
    blocked = set()
    for v in chosen:
        blocked |= graph.adjacency[v]
    picked = set(chosen)
    for v in graph.vertices:
        if v in picked or v in blocked:
            continue
        picked.add(v)
        blocked |= graph.adjacency[v]
    return frozenset(picked)


def maximal_independent_set(graph: ConflictGraph) -> frozenset:
    """Greedy scan in ascending facility index."""
    return _extend(graph, [])


def warm_start_mis(graph: ConflictGraph, previous: Iterable[int]) -> frozenset:
    """Keep surviving members of ``previous`` (repairing conflicts in index order), then extend."""
    verts = set(graph.vertices)
    kept: list[int] = []
    blocked: set = set()
    for v in sorted(set(previous)):
        if v not in verts or v in blocked:
            continue
        kept.append(v)
        blocked |= graph.adjacency[v]
    result = _extend(graph, kept)
    if not is_independent(graph, result):  # pragma: no cover - guarded by construction
        raise RuntimeError("warm-started set is not independent")
    return result


def is_independent(graph: ConflictGraph, members: Iterable[int]) -> bool:
    ms = set(members)
    return all(not (graph.adjacency[v] & ms) for v in ms)


def is_maximal(graph: ConflictGraph, members: Iterable[int]) -> bool:
    ms = set(members)
    return all(v in ms or (graph.adjacency[v] & ms) for v in graph.vertices)
