"""Synthetic instances: uniform and clustered random draws, and the adversarial
two-gadget instance that defeats a single independent set at every threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conflict_graph import build_conflict_graph, maximal_independent_set
from .core_model import Instance, Objective, assignment_cost
from .dual_growth import grow_duals

MAX_EXPLICIT_SIMPLEX = 4096


def gen_random_instance(n: int, m: int, d: int, kind: str = "uniform", seed: int = 0,
                        objective: Objective | str = Objective.KMEANS, blob_radius: float = 0.05,
                        blob_spacing: float | None = None, label: str = "") -> Instance:
    """Reproducible random instance in the unit cube.

    ``clustered`` plants ceil(sqrt(m)) Gaussian blobs of standard deviation ``blob_radius``;
    points are dealt to blobs round-robin so each blob gets clients and facilities.
    With ``blob_spacing`` set, blob centers sit on the first axis ``blob_spacing * blob_radius`` apart.
    """
    if min(n, m, d) < 1:
        raise ValueError("n, m and d must all be at least 1")
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        clients = rng.random((n, d))
        facilities = rng.random((m, d))
    elif kind == "clustered":
        blobs = math.ceil(math.sqrt(m))
        if blob_spacing is None:
            centers = rng.random((blobs, d))
        else:
            centers = np.zeros((blobs, d))
            centers[:, 0] = np.arange(blobs) * blob_spacing * blob_radius
        clients = centers[np.arange(n) % blobs] + rng.normal(0.0, blob_radius, (n, d))
        facilities = centers[np.arange(m) % blobs] + rng.normal(0.0, blob_radius, (m, d))
    else:
        raise ValueError(f"unknown instance kind {kind!r}")
    return Instance(objective, clients, facilities, label or f"{kind}-n{n}-m{m}-d{d}-s{seed}")


# ---------------------------------------------------------------- adversarial instance

def simplex_scale(h: int, eps: float) -> float:
    """Dual level T' of the simplex gadget when lambda = 1."""
    return 1.0 / (1.0 - (1.0 - eps) * math.sqrt((h - 1) / h))


@dataclass(frozen=True, eq=False)
class LowerBoundInstance:
    instance: Instance
    lam: float
    T: float
    T_simplex: float
    N: int
    h: int
    eps: float


def gen_lower_bound_instance(T: float, N: int, h: int, eps: float) -> LowerBoundInstance:
    """Collinear three-point gadget plus a regular-simplex gadget, far apart, in dimension h.

    Facility 0 is the far collinear facility, so index-order tie-breaking keeps it when the
    two collinear facilities conflict.  The recommended lambda is ``T``.
    """
    if h < 2 or not 0 < eps < 1 or N < 1 or T <= 0:
        raise ValueError("need h >= 2, 0 < eps < 1, N >= 1, T > 0")
    if h > MAX_EXPLICIT_SIMPLEX:
        raise ValueError(f"h={h} is too large to embed explicitly; use lower_bound_closed_form")
    T_simplex = T * simplex_scale(h, eps)
    edge = T_simplex * math.sqrt(2.0) * (1.0 - eps)
    simplex = np.eye(h) * (edge / math.sqrt(2.0))
    simplex -= simplex.mean(axis=0)
    offset = np.zeros(h)
    offset[0] = 1e3 * max(3.0 * T, 2.0 * T_simplex)
    near, far = np.zeros(h), np.zeros(h)
    near[0] = T
    far[0] = T * (1.0 + math.sqrt(2.0))
    clients = np.vstack([np.zeros((N, h)), near, far, offset])
    facilities = np.vstack([far, near, simplex + offset])
    inst = Instance(Objective.KMEDIAN, clients, facilities, f"lower-bound-T{T}-N{N}-h{h}-eps{eps}")
    return LowerBoundInstance(inst, T, T, T_simplex, N, h, eps)


def single_is_lmp(instance: Instance, lam: float, delta: float) -> tuple[float, float, frozenset]:
    """Open one maximal independent set of H(delta); return (cost, dual, centers)."""
    growth = grow_duals(instance, lam)
    graph = build_conflict_graph(instance.facilities, growth.tight_sorted, growth.t, delta,
                                 instance.objective, instance.facility_costs())
    chosen = maximal_independent_set(graph)
    dual = float(np.sum(growth.alpha)) - lam * len(chosen)
    return assignment_cost(instance, chosen), dual, chosen


def lower_bound_closed_form(delta: float, T: float, N: int, h: int, eps: float) -> tuple[float, float]:
    """(cost, dual) of the single-set algorithm on the two-gadget instance, without building it."""
    T_simplex = T * simplex_scale(h, eps)
    radius = T_simplex * (1.0 - eps) * math.sqrt((h - 1) / h)
    r2 = math.sqrt(2.0)
    if delta >= r2:
        cost_a, dual_a = (1.0 + r2) * T * (N + 1) - T, T * (N + 1)
    else:
        cost_a, dual_a = T * N, T * N
    lam = T
    if delta >= r2 * (1.0 - eps):
        dual_b = T_simplex - lam
    else:
        dual_b = T_simplex - lam * h
    return cost_a + radius, dual_a + dual_b


def lmp_ratio(cost: float, dual: float) -> float:
    """cost/dual, with a non-positive dual counted as an unbounded ratio."""
    return cost / dual if dual > 0 else math.inf


@dataclass(frozen=True)
class LowerBoundDemo:
    deltas: tuple
    ratios: tuple
    best_delta: float
    best_ratio: float

    def to_dict(self) -> dict:
        return {"deltas": list(self.deltas), "ratios": [r if math.isfinite(r) else "inf" for r in self.ratios],
                "best_delta": self.best_delta, "best_ratio": self.best_ratio}


def delta_grid(lo: float = 1.0, hi: float = 2.0, step: float = 0.05) -> tuple:
    count = int(round((hi - lo) / step))
    return tuple(round(lo + i * step, 10) for i in range(count + 1))


def lower_bound_demo(eps: float = 0.01, T: float = 1.0, h: int | None = None, N: int | None = None,
                     deltas: tuple | None = None) -> LowerBoundDemo:
    h = h if h is not None else math.ceil(eps ** -3)
    N = N if N is not None else math.ceil(eps ** -2)
    deltas = deltas or delta_grid()
    ratios = tuple(lmp_ratio(*lower_bound_closed_form(d, T, N, h, eps)) for d in deltas)
    best = min(range(len(deltas)), key=lambda i: ratios[i])
    return LowerBoundDemo(tuple(deltas), ratios, deltas[best], ratios[best])
