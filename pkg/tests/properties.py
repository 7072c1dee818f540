"""Property checks shared by the hypothesis suites and the acceptance runner.

Each check takes a seed, builds its own random case, and returns a list of failure strings.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from layouts import planted_ring, random_instance
from lmpcluster.certifier.oracles import geometric_median_bound, regular_simplex
from lmpcluster.conflict_graph import (
    build_conflict_graph,
    is_independent,
    is_maximal,
    maximal_independent_set,
    warm_start_mis,
)
from lmpcluster.core_model import Instance, Objective, assignment_cost
from lmpcluster.dual_growth import check_dual_feasibility, grow_duals, witness_contract_violations
from lmpcluster.nqis import build_nqis, nqis_invariant_violations
from lmpcluster.solver import SolverParams, client_case_stats

OBJECTIVES = (Objective.KMEANS, Objective.KMEDIAN)


def _objective(rng) -> Objective:
    return OBJECTIVES[int(rng.integers(0, 2))]


def _lambda(rng, inst: Instance) -> float:
    top = float(inst.client_costs().max()) * inst.n_clients
    choice = int(rng.integers(0, 4))
    if choice == 0:
        return 0.0
    if choice == 1:
        return float(rng.uniform(0, 3))
    return float(rng.uniform(0, top))


def _case(seed: int, planted: bool | None = None):
    rng = np.random.default_rng(seed)
    obj = _objective(rng)
    if planted is None:
        planted = bool(rng.integers(0, 2))
    if planted:
        inst = planted_ring(rng, obj, rings=int(rng.integers(1, 3)), stray_clients=int(rng.integers(0, 4)))
        lam = 1.0 if rng.random() < 0.7 else float(rng.uniform(0.2, 3.0))
    else:
        inst = random_instance(rng, obj)
        lam = _lambda(rng, inst)
    return rng, inst, lam


def witness_contract(seed: int) -> list[str]:
    _, inst, lam = _case(seed)
    growth = grow_duals(inst, lam)
    out = witness_contract_violations(inst, growth)
    out += [str(v) for v in check_dual_feasibility(inst, growth.alpha, lam)]
    return out


def nqis_invariants(seed: int) -> list[str]:
    _, inst, lam = _case(seed)
    growth = grow_duals(inst, lam)
    nq = build_nqis(growth, inst, SolverParams.default(inst.objective).deltas)
    return nqis_invariant_violations(nq)


def _random_graph(rng):
    m = int(rng.integers(1, 14))
    pts = rng.random((m, 2)) * 3
    t = {i: float(rng.uniform(0, 1.5)) for i in range(m)}
    delta = float(rng.uniform(0.2, 3))
    obj = _objective(rng)
    return build_conflict_graph(pts, range(m), t, delta, obj)


def mis_properties(seed: int) -> list[str]:
    rng = np.random.default_rng(seed)
    g = _random_graph(rng)
    mis = maximal_independent_set(g)
    out = []
    if not is_independent(g, mis):
        out.append("greedy set is not independent")
    if not is_maximal(g, mis):
        out.append("greedy set is not maximal")
    return out


def warm_start_removal(seed: int) -> list[str]:
    rng = np.random.default_rng(seed)
    g = _random_graph(rng)
    prev = maximal_independent_set(g)
    if not g.vertices:
        return []
    drop = g.vertices[int(rng.integers(0, len(g.vertices)))]
    smaller = g.induced(set(g.vertices) - {drop})
    res = warm_start_mis(smaller, prev)
    out = []
    if len(prev - res) > 1:
        out.append(f"lost {len(prev - res)} members after removing one vertex")
    if not (is_independent(smaller, res) and is_maximal(smaller, res)):
        out.append("warm-started set is not a maximal independent set")
    return out


def negative_submodularity(seed: int) -> list[str]:
    """Exhaustive over X subset Y (X nonempty), x outside Y, on m <= 6 facilities."""
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, _objective(rng), n_range=(1, 10), m_range=(2, 6))
    m = inst.n_facilities
    cost = {}
    for r in range(1, m + 1):
        for s in itertools.combinations(range(m), r):
            cost[frozenset(s)] = assignment_cost(inst, s)
    out = []
    for Y in cost:
        for X in cost:
            if not X < Y:
                continue
            for x in set(range(m)) - Y:
                lhs = cost[X | {x}] - cost[X]
                rhs = cost[Y | {x}] - cost[Y]
                if lhs > rhs + 1e-9 * max(1.0, abs(cost[X])):
                    out.append(f"X={sorted(X)} Y={sorted(Y)} x={x}: {lhs} > {rhs}")
    return out


def geometric_median(seed: int) -> list[str]:
    """h points with pairwise squared distance >= 2 satisfy sum of norms >= sqrt(h(h-1))."""
    rng = np.random.default_rng(seed)
    h = int(rng.integers(2, 8))
    dim = int(rng.integers(1, 6))
    pts = rng.normal(size=(h, dim)) * rng.uniform(0.5, 3)
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = (diff ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    closest = d2.min()
    if closest <= 0:
        return []
    pts *= math.sqrt(2.0 / closest) * (1 + rng.uniform(0, 0.5))
    total = float(np.linalg.norm(pts, axis=1).sum())
    bound = geometric_median_bound(h)
    return [] if total >= bound - 1e-9 else [f"h={h}: {total} < {bound}"]


def simplex_equality(h: int) -> list[str]:
    pts = regular_simplex(h)
    total = float(np.linalg.norm(pts, axis=1).sum())
    bound = geometric_median_bound(h)
    return [] if abs(total - bound) <= 1e-9 * max(1.0, bound) else [f"h={h}: {total} != {bound}"]


def case_accounting(seed: int) -> list[str]:
    _, inst, lam = _case(seed)
    growth = grow_duals(inst, lam)
    nq = build_nqis(growth, inst, SolverParams.default(inst.objective).deltas)
    return client_case_stats(inst, growth, nq).violations()
