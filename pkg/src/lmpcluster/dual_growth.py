"""Event-driven simulation of the uniform dual-growth process.

All client duals rise together.  A facility goes tight once the clients paying
into it cover the opening price; every growing client that reaches a tight
facility stops.  Event times are computed in closed form from the piecewise
linear payment curves, so there is no time step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core_model import Instance

NEIGHBOR_TOL = 1e-12
FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DualGrowthResult:
    alpha: np.ndarray
    tight: frozenset
    t: dict
    witness: tuple
    client_neighbors: tuple
    facility_neighbors: tuple
    lam: float

    @property
    def tight_sorted(self) -> list[int]:
        return sorted(self.tight)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "alpha": [float(a) for a in self.alpha],
            "tight": self.tight_sorted,
            "t": {str(i): float(self.t[i]) for i in self.tight_sorted},
            "witness": list(self.witness),
            "client_neighbors": [sorted(s) for s in self.client_neighbors],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _tightness_level(base: float, growing_costs: np.ndarray, level: float, lam: float) -> float:
    """Smallest x >= level with base + sum(max(x - c, 0)) >= lam, for ascending costs."""
    if base >= lam:
        return level
    need = lam - base
    total = 0.0
    count = 0
    n = growing_costs.shape[0]
    for idx in range(n + 1):
        upper = growing_costs[idx] if idx < n else math.inf
        if count:
            x = (need + total) / count
            if x <= upper:
                return max(x, level)
        if idx < n:
            total += growing_costs[idx]
            count += 1
    return math.inf


def grow_duals(instance: Instance, lam: float) -> DualGrowthResult:
    if lam < 0 or not math.isfinite(lam):
        raise ValueError("lambda must be a finite nonnegative number")
    cost = instance.client_costs()
    n, m = cost.shape
    alpha = np.zeros(n)
    growing = np.ones(n, dtype=bool)
    is_tight = np.zeros(m, dtype=bool)
    witness = [-1] * n
    frozen = np.zeros(m)  # payments from stopped clients
    level = 0.0

    def batch_tol(x: float) -> float:
        return 1e-12 * max(1.0, abs(x))

    while growing.any():
        # (a) next tightness level for each facility not yet tight
        tight_level = np.full(m, math.inf)
        g_idx = np.flatnonzero(growing)
        for i in np.flatnonzero(~is_tight):
            cs = np.sort(cost[g_idx, i])
            tight_level[i] = _tightness_level(frozen[i], cs, level, lam)
        # (b) next reach level: growing client meets an already-tight facility
        if is_tight.any():
            sub = cost[np.ix_(g_idx, np.flatnonzero(is_tight))]
            reach = float(max(sub.min(), level))
        else:
            reach = math.inf
        nxt = min(float(tight_level.min()), reach)
        if not math.isfinite(nxt):
            raise RuntimeError("dual growth stalled; no facility can become tight")
        level = nxt
        tol = batch_tol(level)
        # Facilities first, in index order.
        newly = np.flatnonzero((~is_tight) & (tight_level <= level + tol))
        is_tight[newly] = True
        # Then clients, in index order; witness is the lowest-index tight facility reached.
        tight_idx = np.flatnonzero(is_tight)
        hits = cost[np.ix_(g_idx, tight_idx)] <= level + tol
        stopping = hits.any(axis=1)
        for row in np.flatnonzero(stopping):
            j = g_idx[row]
            growing[j] = False
            alpha[j] = level
            witness[j] = int(tight_idx[np.argmax(hits[row])])
            frozen += np.maximum(level - cost[j], 0.0)

    facility_neighbors = []
    t = {}
    for i in range(m):
        members = np.flatnonzero(alpha > cost[:, i] + NEIGHBOR_TOL)
        facility_neighbors.append(frozenset(int(j) for j in members))
        if is_tight[i]:
            t[i] = float(alpha[members].max()) if members.size else 0.0
    client_neighbors = tuple(
        frozenset(int(i) for i in np.flatnonzero(alpha[j] > cost[j] + NEIGHBOR_TOL)) for j in range(n)
    )
    alpha.setflags(write=False)
    return DualGrowthResult(
        alpha=alpha,
        tight=frozenset(int(i) for i in np.flatnonzero(is_tight)),
        t=t,
        witness=tuple(witness),
        client_neighbors=client_neighbors,
        facility_neighbors=tuple(facility_neighbors),
        lam=float(lam),
    )


@dataclass(frozen=True)
class Violation:
    facility: int
    payment: float
    lam: float


def facility_payments(instance: Instance, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    return np.maximum(alpha[:, None] - instance.client_costs(), 0.0).sum(axis=0)


def check_dual_feasibility(instance: Instance, alpha, lam: float) -> list[Violation]:
    alpha = np.asarray(alpha, dtype=float)
    out = []
    if np.any(alpha < 0):
        out.extend(Violation(-1, float(a), lam) for a in alpha[alpha < 0])
    slack = FEASIBILITY_TOL * (lam if lam > 0 else 1.0)
    pay = facility_payments(instance, alpha)
    for i in np.flatnonzero(pay > lam + slack):
        out.append(Violation(int(i), float(pay[i]), lam))
    return out


def dual_objective(alpha, lam: float, k: int) -> float:
    return float(np.sum(alpha)) - lam * k


def witness_contract_violations(instance: Instance, growth: DualGrowthResult, tol: float = 1e-9) -> list[str]:
    """Check witness tightness and the t_i >= alpha_j > c(j, i) relations."""
    cost = instance.client_costs()
    problems = []
    for j, w in enumerate(growth.witness):
        a = growth.alpha[j]
        scale = tol * max(1.0, abs(a))
        if w not in growth.tight:
            problems.append(f"client {j}: witness {w} is not tight")
            continue
        if a < growth.t[w] - scale:
            problems.append(f"client {j}: alpha {a} below t of witness {growth.t[w]}")
        if a < cost[j, w] - scale:
            problems.append(f"client {j}: alpha {a} below cost to witness {cost[j, w]}")
    for i in growth.tight:
        for j in growth.facility_neighbors[i]:
            a = growth.alpha[j]
            if not (growth.t[i] >= a - tol * max(1.0, a) and a > cost[j, i]):
                problems.append(f"facility {i}, client {j}: t {growth.t[i]}, alpha {a}, cost {cost[j, i]}")
    pay = facility_payments(instance, growth.alpha)
    for i in growth.tight:
        if abs(pay[i] - growth.lam) > tol * max(1.0, growth.lam) * 10 + 1e-9:
            problems.append(f"tight facility {i} pays {pay[i]} != lambda {growth.lam}")
    return problems
