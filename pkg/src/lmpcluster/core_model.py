"""Instances, cost functions and the exhaustive optimum used as ground truth."""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class Objective(str, enum.Enum):
    KMEANS = "kmeans"
    KMEDIAN = "kmedian"

    @classmethod
    def parse(cls, value: "Objective | str") -> "Objective":
        if isinstance(value, Objective):
            return value
        try:
            return cls(str(value).strip().lower().replace("-", ""))
        except ValueError as exc:
            raise ValueError(f"unknown objective {value!r}; expected 'kmeans' or 'kmedian'") from exc


DEGENERATE = "degenerate"
WIDE_RANGE = "wide-range"

DEFAULT_ENUMERATION_BUDGET = 10**6
COST_CHUNK = 1 << 22


def _as_points(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1 and arr.size > 0:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError(f"{name} must be a nonempty list of points")
    if arr.shape[1] == 0:
        raise ValueError(f"{name} must have dimension at least 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    """A clustering instance: clients to serve, candidate facilities, and an objective.

    ``scale`` records the factor applied by :func:`validate_instance` (1.0 otherwise)
    and ``flags`` carries warnings raised during validation.
    """

    objective: Objective
    clients: np.ndarray
    facilities: np.ndarray
    label: str = ""
    scale: float = 1.0
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective.parse(self.objective))
        clients = _as_points(self.clients, "clients")
        facilities = _as_points(self.facilities, "facilities")
        if clients.shape[1] != facilities.shape[1]:
            raise ValueError(
                f"clients have dimension {clients.shape[1]} but facilities have {facilities.shape[1]}"
            )
        clients.setflags(write=False)
        facilities.setflags(write=False)
        object.__setattr__(self, "clients", clients)
        object.__setattr__(self, "facilities", facilities)
        object.__setattr__(self, "flags", frozenset(self.flags))

    @property
    def n_clients(self) -> int:
        return self.clients.shape[0]

    @property
    def n_facilities(self) -> int:
        return self.facilities.shape[0]

    @property
    def dim(self) -> int:
        return self.clients.shape[1]

    def client_costs(self) -> np.ndarray:
        """Matrix of client-to-facility costs, shape (n_clients, n_facilities)."""
        cached = self.__dict__.get("_client_costs")
        if cached is None:
            cached = cost_matrix(self.clients, self.facilities, self.objective)
            cached.setflags(write=False)
            object.__setattr__(self, "_client_costs", cached)
        return cached

    def facility_costs(self) -> np.ndarray:
        cached = self.__dict__.get("_facility_costs")
        if cached is None:
            cached = cost_matrix(self.facilities, self.facilities, self.objective)
            cached.setflags(write=False)
            object.__setattr__(self, "_facility_costs", cached)
        return cached

    def to_dict(self) -> dict:
        out = {
            "objective": self.objective.value,
            "clients": self.clients.tolist(),
            "facilities": self.facilities.tolist(),
        }
        if self.label:
            out["label"] = self.label
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        missing = [key for key in ("objective", "clients", "facilities") if key not in data]
        if missing:
            raise ValueError(f"instance is missing field(s): {', '.join(missing)}")
        return cls(
            objective=Objective.parse(data["objective"]),
            clients=data["clients"],
            facilities=data["facilities"],
            label=str(data.get("label", "")),
        )

    def with_objective(self, objective: Objective | str) -> "Instance":
        return Instance(Objective.parse(objective), self.clients, self.facilities, self.label)


def load_instance(path: str | Path) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        return Instance.from_dict(json.load(fh))


def save_instance(instance: Instance, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class CenterSet:
    indices: frozenset
    cost: float

    def sorted_indices(self) -> list[int]:
        return sorted(self.indices)


def pair_cost(a: Sequence[float], b: Sequence[float], objective: Objective | str) -> float:
    objective = Objective.parse(objective)
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    sq = float(np.sum((a - b) ** 2))
    return sq if objective is Objective.KMEANS else math.sqrt(sq)


def cost_matrix(left: np.ndarray, right: np.ndarray, objective: Objective | str) -> np.ndarray:
    """Pairwise costs between two point sets (squared distances for k-means)."""
    objective = Objective.parse(objective)
    left, right = np.asarray(left, dtype=float), np.asarray(right, dtype=float)
    sq = np.empty((left.shape[0], right.shape[0]))
    # Explicit differences (not the Gram trick) keep exact ties exact; rows are chunked to bound memory.
    rows = max(1, COST_CHUNK // max(1, right.shape[0] * left.shape[1]))
    for start in range(0, left.shape[0], rows):
        diff = left[start:start + rows, None, :] - right[None, :, :]
        sq[start:start + rows] = np.einsum("ijk,ijk->ij", diff, diff)
    return sq if objective is Objective.KMEANS else np.sqrt(sq)


def _check_centers(instance: Instance, centers: Iterable[int]) -> list[int]:
    idx = sorted({int(i) for i in centers})
    if not idx:
        raise ValueError("center set is empty")
    if idx[0] < 0 or idx[-1] >= instance.n_facilities:
        raise ValueError(f"center index out of range [0, {instance.n_facilities})")
    return idx


def assignment_cost(instance: Instance, centers: Iterable[int]) -> float:
    idx = _check_centers(instance, centers)
    return float(instance.client_costs()[:, idx].min(axis=1).sum())


def make_center_set(instance: Instance, centers: Iterable[int]) -> CenterSet:
    idx = _check_centers(instance, centers)
    return CenterSet(frozenset(idx), assignment_cost(instance, idx))


def brute_force_opt(instance: Instance, k: int, budget: int = DEFAULT_ENUMERATION_BUDGET) -> CenterSet:
    """Exact optimum over all k-subsets; ties go to the lexicographically first subset."""
    m = instance.n_facilities
    if not 1 <= k:
        raise ValueError("k must be at least 1")
    k = min(k, m)
    count = math.comb(m, k)
    if count > budget:
        raise ValueError(
            f"{count} subsets exceed the enumeration budget {budget}; shrink the instance or k"
        )
    costs = instance.client_costs()
    best_cost = math.inf
    best: tuple[int, ...] = ()
    # Chunked evaluation keeps memory flat while staying vectorized.
    combos = itertools.combinations(range(m), k)
    while True:
        chunk = list(itertools.islice(combos, 4096))
        if not chunk:
            break
        arr = np.asarray(chunk, dtype=np.intp)
        totals = costs[:, arr].min(axis=2).sum(axis=0)
        pos = int(np.argmin(totals))
        if totals[pos] < best_cost:
            best_cost = float(totals[pos])
            best = chunk[pos]
    return CenterSet(frozenset(best), best_cost)


def validate_instance(instance: Instance) -> Instance:
    """Rescale so the closest client-facility pair is at distance exactly 1.

    Instances whose distance spread exceeds n^6 are flagged, not rejected.
    Coincident client-facility pairs make the rescale impossible; such instances
    come back unscaled with the degenerate flag set.
    """
    dist = np.sqrt(cost_matrix(instance.clients, instance.facilities, Objective.KMEANS))
    n = instance.n_clients
    lo = float(dist.min())
    hi = float(dist.max())
    flags = set(instance.flags)
    if lo == 0.0:
        flags.add(DEGENERATE)
        return Instance(instance.objective, instance.clients, instance.facilities,
                        instance.label, instance.scale, frozenset(flags))
    if hi / lo > float(n) ** 6:
        flags.add(WIDE_RANGE)
    factor = 1.0 / lo
    if factor == 1.0:
        return Instance(instance.objective, instance.clients, instance.facilities,
                        instance.label, instance.scale, frozenset(flags))
    return Instance(
        instance.objective,
        instance.clients * factor,
        instance.facilities * factor,
        instance.label,
        instance.scale * factor,
        frozenset(flags),
    )
