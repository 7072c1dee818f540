"""End-to-end pipeline: LMP solve at a fixed lambda, lambda sweep, exact-k assembly,
and per-client case accounting."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable

import numpy as np

from .certifier.cases import Deltas, default_deltas, default_p1
from .certifier.grid import ratio_caps
from .core_model import CenterSet, Instance, Objective, assignment_cost, make_center_set
from .dual_growth import DualGrowthResult, grow_duals
from .nqis import (
    NestedQIS,
    RoundingFailure,
    RoundingParams,
    _rng,
    build_nqis,
    candidate_order,
    expected_connection_costs,
    expected_size,
    round_to_at_most_k,
    sample_many,
)

SQRT2 = math.sqrt(2.0)
ENUMERATION_CAP = 1 << 20
RANDOM_SUBSETS = 10_000


@dataclass(frozen=True)
class SolverParams:
    deltas: Deltas
    p1: float
    C: int = 3
    lambda_step: float | None = None
    bisection_depth: int = 40
    mc_samples: int = 10_000
    rng_seed: int = 0
    threads: int = 1
    interpolation_draws: int = 16
    pad_to_k: bool = True

    def __post_init__(self):
        object.__setattr__(self, "deltas", Deltas(*self.deltas).check())
        if not 0.0 <= self.p1 < 0.5:
            raise ValueError("p1 must lie in [0, 1/2)")
        if self.C < 2:
            raise ValueError("C must be at least 2")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be positive")
        if self.lambda_step is not None and self.lambda_step <= 0:
            raise ValueError("lambda_step must be positive")

    @classmethod
    def default(cls, objective: Objective | str, **overrides) -> "SolverParams":
        objective = Objective.parse(objective)
        base = dict(deltas=default_deltas(objective), p1=default_p1(objective))
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)


# ------------------------------------------------------------------ accounting

@dataclass(frozen=True)
class ClientCase:
    client: int
    a: int
    b: int
    c: int
    case: str
    group: int
    A: float
    B: float
    alpha: float


@dataclass(frozen=True)
class CaseAccounting:
    objective: Objective
    Q: tuple
    R: tuple
    clients: tuple
    caps: tuple

    def violations(self, tol: float = 1e-9) -> list[str]:
        out = []
        for g, (q, r, kap) in enumerate(zip(self.Q, self.R, self.caps), start=1):
            if r > kap * q + tol * max(1.0, abs(q)):
                out.append(f"group {g}: R={r} exceeds {kap}*Q={kap * q}")
        for cc in self.clients:
            slack = tol * max(1.0, cc.alpha)
            if cc.B < -slack:
                out.append(f"client {cc.client}: B={cc.B} is negative")
            for factor in _required_factors(self.objective, cc):
                if cc.A - factor * cc.B < -slack:
                    out.append(f"client {cc.client} ({cc.case}): A={cc.A} < {factor}*B={factor * cc.B}")
        return out

    def to_dict(self) -> dict:
        return {
            "objective": self.objective.value,
            "Q": list(self.Q),
            "R": list(self.R),
            "caps": list(self.caps),
            "cases": {cc.client: cc.case for cc in self.clients},
        }


def _required_factors(objective: Objective, cc: ClientCase) -> list[float]:
    """Multipliers m with A_j >= m * B_j guaranteed for this client's case."""
    if objective is Objective.KMEDIAN:
        if cc.group == 1:
            return [1.0]
        if cc.group == 2:
            return [0.5]
        d2 = KMEDIAN_D2_FOR_FACTOR
        return [(d2 - 1.0) / (2.0 * (2.0 - SQRT2))]
    factors = [0.5]
    if cc.case[0] in "14" or cc.case in ("2.a", "3.a") or (cc.case == "5.a" and cc.group == 1):
        factors.append(1.0)
    if cc.case == "2.d" and cc.group == 4:
        factors.append(4.0 / 7.0)
    return factors


KMEDIAN_D2_FOR_FACTOR = default_deltas(Objective.KMEDIAN).d2


class UnclassifiableClient(RuntimeError):
    pass


def _case1_tag(w: int, i2: int, nq: NestedQIS) -> str:
    """Witness-position subcase for a client with exactly one I2 neighbour and nothing else."""
    step = nq.step_graph
    h3 = nq.graphs["d3"]
    if w not in nq.v2:
        return "1.a"
    if w in nq.v3:
        return "1.b"
    if w == i2:
        return "1.c"
    if w in nq.i2:
        return "1.d"
    hits = step.adjacency[w] & nq.i2
    if len(hits) >= 2:
        return "1.e"
    if not hits:
        return "1.f"
    near = h3.adjacency[w] & nq.i2
    if i2 in near:
        return "1.g.i"
    if near:
        return "1.g.ii"
    raise UnclassifiableClient("case 1 witness falls through every subcase")


def _kmeans_tag(j: int, growth: DualGrowthResult, nq: NestedQIS, cost_row: np.ndarray,
                nb1: set, nb2: set, nb3: set) -> tuple[str, int]:
    a, b, c = len(nb1), len(nb2), len(nb3)
    w = growth.witness[j]
    alpha = growth.alpha[j]
    if a >= 1:
        paired = any(nq.q[i3] in nb2 for i3 in nb3)
        return "5.a", 5 if paired else 1
    if b == 1 and c == 0:
        tag = _case1_tag(w, next(iter(nb2)), nq)
        if tag == "1.f":
            raise UnclassifiableClient("witness in V2 with no step neighbour in I2")
        return tag, {"1.b": 2, "1.e": 2, "1.g.i": 3}.get(tag, 1)
    if b == 1:
        i2 = next(iter(nb2))
        c1 = sum(1 for i3 in nb3 if nq.q[i3] == i2)
        c2 = c - c1
        if c1 == 0:
            return "2.a", 1
        if c2 >= 1:
            return "2.c", 5
        if c1 >= 2:
            return "2.b", 5
        (i3,) = tuple(nb3)
        zeta = (cost_row[i2] + cost_row[i3]) / alpha if alpha > 0 else math.inf
        return "2.d", 4 if zeta >= 0.25 else 5
    if b >= 2:
        c1 = sum(1 for i3 in nb3 if nq.q[i3] in nb2)
        c2 = c - c1
        if c1 == 0:
            return "3.a", 1
        if c1 == 1 and c2 == 0:
            return "3.b", 5
        return "3.c", 5
    # a = b = 0
    if c >= 2:
        return "4.c", 1
    high = w not in nq.v2
    if c == 0:
        return ("4.a.i", 1) if high else ("4.a.ii", 2)
    return ("4.b.i", 1) if high else ("4.b.ii", 2)


def _kmedian_tag(j: int, growth: DualGrowthResult, nq: NestedQIS, cost_row: np.ndarray,
                 nb1: set, nb2: set, nb3: set) -> tuple[str, int]:
    a, b, c = len(nb1), len(nb2), len(nb3)
    w = growth.witness[j]
    alpha = growth.alpha[j]
    if a >= 1:
        # Largest number of I2/I3 neighbours that can survive the coin flips together.
        h = 0
        for grp in nq.groups():
            lead = int(grp[0] in nb2)
            follow = sum(1 for v in grp[1:] if v in nb3)
            h += max(lead, follow)
        if h == 0:
            return "4.a'", 3
        if a == 1:
            return ("4.b'", 3) if h == 1 else ("4.c'", 3)
        return ("4.d'", 3) if h == 1 else ("4.e'", 3)
    if b == 1 and c == 0:
        return _case1_tag(w, next(iter(nb2)), nq) + "'", 1
    if b == 0 and c <= 1:
        return ("2.a'" if c == 0 else "2.b'"), 1
    near = [i for i in nb2 | nb3 if cost_row[i] < (nq.deltas.d1 - 1.0) * alpha]
    if not near:
        return "3.a'", 2
    if b == 1:
        i2 = next(iter(nb2))
        if c == 1 and nq.q[next(iter(nb3))] == i2:
            return "3.b.i'", 2
        if c >= 2 and all(nq.q[i3] == i2 for i3 in nb3):
            return "3.b.ii'", 2
    raise UnclassifiableClient("a close I2/I3 neighbour without the expected q-structure")


def client_case_stats(instance: Instance, growth: DualGrowthResult, nqis: NestedQIS) -> CaseAccounting:
    objective = instance.objective
    cost = instance.client_costs()
    i1, i2, i3 = set(nqis.i1), set(nqis.i2), set(nqis.i3)
    groups = 5 if objective is Objective.KMEANS else 3
    Q = [0.0] * groups
    R = [0.0] * groups
    tagger = _kmeans_tag if objective is Objective.KMEANS else _kmedian_tag
    records = []
    for j in range(instance.n_clients):
        nb = growth.client_neighbors[j]
        nb1, nb2, nb3 = nb & i1, nb & i2, nb & i3
        alpha = float(growth.alpha[j])
        row = cost[j]
        try:
            tag, group = tagger(j, growth, nqis, row, set(nb1), set(nb2), set(nb3))
        except UnclassifiableClient as exc:
            raise UnclassifiableClient(f"client {j}: {exc}") from None
        A = alpha - sum(alpha - row[i] for i in nb1)
        B = sum(alpha - row[i] for i in nb2 | nb3)
        Q[group - 1] += A
        R[group - 1] += B
        records.append(ClientCase(j, len(nb1), len(nb2), len(nb3), tag, group, float(A), float(B), alpha))
    caps = ratio_caps(objective, nqis.deltas)
    return CaseAccounting(objective, tuple(Q), tuple(R), tuple(records), tuple(caps))


# ------------------------------------------------------------------ LMP solve

@dataclass(frozen=True)
class SampleSummary:
    samples: int
    mean: float
    std: float
    stderr: float
    mean_size: float
    minimum: float
    maximum: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ClientRecord:
    client: int
    a: int
    b: int
    c: int
    case: str
    ratio: float


@dataclass(frozen=True, eq=False)
class LmpOutcome:
    lam: float
    p: float
    growth: DualGrowthResult
    nqis: NestedQIS
    sampled_costs: SampleSummary
    expected_cost: float
    dual_surrogate: float
    per_client: tuple
    accounting: CaseAccounting | None = None

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "p": self.p,
            "sampled_costs": self.sampled_costs.to_dict(),
            "expected_cost": self.expected_cost,
            "dual_surrogate": self.dual_surrogate,
            "dual_sum": float(np.sum(self.growth.alpha)),
            "expected_size": expected_size(self.nqis, self.p),
            "sizes": {"i1": len(self.nqis.i1), "i2": len(self.nqis.i2), "i3": len(self.nqis.i3)},
            "per_client": [r.__dict__ for r in self.per_client],
        }


def dual_surrogate(growth: DualGrowthResult, nqis: NestedQIS, p: float) -> float:
    return float(np.sum(growth.alpha)) - growth.lam * expected_size(nqis, p)


def selection_costs(instance: Instance, nqis: NestedQIS, masks: np.ndarray, threads: int = 1,
                    chunk: int = 256) -> np.ndarray:
    """cost(D, I1 + selected) for each boolean row of ``masks`` (columns in candidate order)."""
    cost = instance.client_costs()
    i1 = sorted(nqis.i1)
    base = cost[:, i1].min(axis=1) if i1 else np.full(cost.shape[0], np.inf)
    cand = cost[:, candidate_order(nqis)]

    def run(block):
        if cand.shape[1] == 0:
            return np.full(len(block), base.sum())
        picked = np.where(block[:, None, :], cand[None, :, :], np.inf).min(axis=2)
        return np.minimum(picked, base[None, :]).sum(axis=1)

    blocks = [masks[i:i + chunk] for i in range(0, len(masks), chunk)]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return np.concatenate(parts) if parts else np.empty(0)


def lmp_solve(instance: Instance, lam: float, params: SolverParams, p: float | None = None,
              previous_i1: Iterable[int] | None = None, with_accounting: bool = True) -> LmpOutcome:
    p = params.p1 if p is None else p
    growth = grow_duals(instance, lam)
    nq = build_nqis(growth, instance, params.deltas, previous_i1=previous_i1)
    masks = sample_many(nq, p, params.rng_seed, params.mc_samples)
    costs = selection_costs(instance, nq, masks, params.threads)
    sizes = len(nq.i1) + masks.sum(axis=1)
    std = float(costs.std(ddof=1)) if len(costs) > 1 else 0.0
    summary = SampleSummary(len(costs), float(costs.mean()), std, std / math.sqrt(len(costs)),
                            float(sizes.mean()), float(costs.min()), float(costs.max()))
    exact = expected_connection_costs(instance, nq, p)
    accounting = client_case_stats(instance, growth, nq) if with_accounting else None
    records = []
    cost = instance.client_costs()
    i1, pool = set(nq.i1), set(nq.i2) | set(nq.i3)
    for j in range(instance.n_clients):
        nb = growth.client_neighbors[j]
        alpha = growth.alpha[j]
        denom = alpha - sum(alpha - cost[j, i] for i in nb & i1) - p * sum(alpha - cost[j, i] for i in nb & pool)
        ratio = float(exact[j] / denom) if denom > 0 else (1.0 if exact[j] == 0 else math.inf)
        if accounting is not None:
            cc = accounting.clients[j]
            records.append(ClientRecord(j, cc.a, cc.b, cc.c, cc.case, ratio))
        else:
            records.append(ClientRecord(j, len(nb & i1), len(nb & set(nq.i2)), len(nb & set(nq.i3)), "", ratio))
    return LmpOutcome(float(lam), float(p), growth, nq, summary, float(exact.sum()),
                      dual_surrogate(growth, nq, p), tuple(records), accounting)


# ------------------------------------------------------------------ lambda sweep

@dataclass(frozen=True, eq=False)
class Bracket:
    lambda_lo: float
    lambda_hi: float | None
    nqis_lo: NestedQIS
    nqis_hi: NestedQIS | None
    growth_lo: DualGrowthResult
    growth_hi: DualGrowthResult | None
    k: int
    p: float
    evaluations: int = 0
    trace: tuple = ()

    @property
    def size_lo(self) -> float:
        return expected_size(self.nqis_lo, self.p)

    @property
    def size_hi(self) -> float | None:
        return None if self.nqis_hi is None else expected_size(self.nqis_hi, self.p)

    @property
    def degenerate(self) -> bool:
        """No upper state is needed: the lower state already has expected size exactly k."""
        return self.nqis_hi is None

    @property
    def lambdas(self) -> tuple:
        return tuple(lam for lam, _ in self.trace)

    def to_dict(self) -> dict:
        return {"lambda_lo": self.lambda_lo, "lambda_hi": self.lambda_hi, "k": self.k,
                "size_lo": self.size_lo, "size_hi": self.size_hi, "degenerate": self.degenerate,
                "evaluations": self.evaluations, "trace": [list(x) for x in self.trace]}


@dataclass
class _State:
    lam: float
    growth: DualGrowthResult
    nqis: NestedQIS
    size: float


def _default_step(instance: Instance) -> float:
    cost = instance.client_costs()
    positive = cost[cost > 0]
    return float(positive.min()) if positive.size else 1.0


def sweep_lambda(instance: Instance, k: int, params: SolverParams) -> Bracket:
    """Scan lambda upward from 0 (doubling), then bisect the first interval that straddles k."""
    if not 1 <= k <= instance.n_facilities:
        raise ValueError(f"k must lie in [1, {instance.n_facilities}], got {k}")
    p = params.p1
    trace = []

    def state(lam, previous):
        g = grow_duals(instance, lam)
        nq = build_nqis(g, instance, params.deltas, previous_i1=previous)
        st = _State(lam, g, nq, expected_size(nq, p))
        trace.append((float(lam), st.size))
        return st

    def exact(st):
        return math.isclose(st.size, k, rel_tol=0.0, abs_tol=1e-9)

    def done(lo, hi):
        return Bracket(lo.lam, hi.lam if hi else None, lo.nqis, hi.nqis if hi else None,
                       lo.growth, hi.growth if hi else None, k, p, len(trace), tuple(trace))

    lo = state(0.0, None)
    if lo.size < k - 1e-9:
        raise ValueError(f"expected size {lo.size} at lambda=0 is below k={k}")
    if exact(lo) and not (lo.nqis.i2 or lo.nqis.i3):
        return done(lo, None)
    step = params.lambda_step or _default_step(instance)
    ceiling = 4.0 * instance.n_clients * float(instance.client_costs().max()) + step
    lam = step
    hi = None
    while True:
        cur = state(lam, lo.nqis.i1)
        if cur.size < k - 1e-9:
            hi = cur
            break
        lo = cur
        if exact(lo) and not (lo.nqis.i2 or lo.nqis.i3):
            return done(lo, None)
        if lam > ceiling:
            return done(lo, None)
        lam *= 2.0
    for _ in range(params.bisection_depth):
        if lo.size < k + 1:
            break
        mid = state(0.5 * (lo.lam + hi.lam), lo.nqis.i1)
        if mid.size >= k - 1e-9:
            lo = mid
        else:
            hi = mid
    return done(lo, hi)


# ------------------------------------------------------------------ exact-k assembly

@dataclass(frozen=True)
class Candidate:
    route: str
    centers: frozenset
    cost: float


def _subset_costs(instance: Instance, base_set: Iterable[int], pool: list[int],
                  subsets: np.ndarray) -> np.ndarray:
    """Costs of base_set + pool[subsets[r]] for each row of index tuples."""
    cost = instance.client_costs()
    base = sorted(base_set)
    base_min = cost[:, base].min(axis=1) if base else np.full(cost.shape[0], np.inf)
    cand = cost[:, pool]
    out = np.empty(len(subsets))
    for start in range(0, len(subsets), 512):
        block = subsets[start:start + 512]
        if block.shape[1] == 0:
            out[start:start + 512] = base_min.sum()
            continue
        picked = cand[:, block].min(axis=2)  # (n, rows)
        out[start:start + 512] = np.minimum(picked, base_min[:, None]).sum(axis=0)
    return out


def _route_probability(instance: Instance, nq: NestedQIS, k: int, params: SolverParams) -> list[Candidate]:
    i1 = sorted(nq.i1)
    pool = sorted(nq.i2 | nq.i3)
    if len(i1) > k:
        return []
    room = k - len(i1)
    if room == 0 or not pool:
        return [Candidate("probability", frozenset(i1), assignment_cost(instance, i1))] if i1 else []
    take = min(room, len(pool))
    out = []
    p_adj = room / len(pool)
    C = params.C
    if len(pool) >= 100 * C ** 4 and 0.01 <= p_adj <= 0.49:
        try:
            chosen = round_to_at_most_k(nq, k, RoundingParams(p_adj, params.rng_seed, C))
            out.append(Candidate("probability:grouped", chosen, assignment_cost(instance, chosen)))
        except RoundingFailure:
            pass
    total = math.comb(len(pool), take)
    if total <= ENUMERATION_CAP:
        subsets = np.array(list(combinations(range(len(pool)), take)), dtype=int).reshape(-1, take)
        label = "probability:enumerate"
    else:
        rng = _rng(params.rng_seed)
        subsets = np.array([np.sort(rng.choice(len(pool), size=take, replace=False))
                            for _ in range(RANDOM_SUBSETS)], dtype=int)
        label = "probability:random"
    costs = _subset_costs(instance, i1, pool, subsets)
    best = int(np.argmin(costs))
    chosen = frozenset(i1) | frozenset(pool[i] for i in subsets[best])
    out.append(Candidate(label, chosen, float(costs[best])))
    return out


def _route_interpolation(instance: Instance, bracket: Bracket, k: int, params: SolverParams) -> list[Candidate]:
    if bracket.degenerate:
        return []
    lo, hi = bracket.nqis_lo, bracket.nqis_hi
    draws = params.interpolation_draws
    m_lo = sample_many(lo, bracket.p, params.rng_seed, draws)
    m_hi = sample_many(hi, bracket.p, params.rng_seed + 1, draws)
    order_lo, order_hi = candidate_order(lo), candidate_order(hi)
    rng = _rng(params.rng_seed + 2)
    best = None
    for r in range(draws):
        s = set(lo.i1) | {v for v, keep in zip(order_lo, m_lo[r]) if keep}
        s_prime = set(hi.i1) | {v for v, keep in zip(order_hi, m_hi[r]) if keep}
        if len(s_prime) > k:
            continue
        extra = sorted(s - s_prime)
        need = min(k - len(s_prime), len(extra))
        if need:
            s_prime |= {extra[i] for i in rng.choice(len(extra), size=need, replace=False)}
        cand = Candidate("interpolation", frozenset(s_prime), assignment_cost(instance, s_prime))
        if best is None or cand.cost < best.cost:
            best = cand
    return [best] if best else []


def greedy_delete(instance: Instance, centers: Iterable[int], k: int) -> frozenset:
    """Remove, one at a time, the center whose removal raises the cost least."""
    cost = instance.client_costs()
    current = sorted(set(centers))
    while len(current) > k:
        sub = cost[:, current]
        order = np.argsort(sub, axis=1, kind="stable")
        first = sub[np.arange(len(sub)), order[:, 0]]
        second = sub[np.arange(len(sub)), order[:, 1]] if len(current) > 1 else np.full(len(sub), np.inf)
        loss = np.zeros(len(current))
        np.add.at(loss, order[:, 0], second - first)
        drop = int(np.argmin(loss))
        current.pop(drop)
    return frozenset(current)


def greedy_pad(instance: Instance, centers: Iterable[int], k: int) -> frozenset:
    cost = instance.client_costs()
    current = set(centers)
    best = cost[:, sorted(current)].min(axis=1) if current else np.full(cost.shape[0], np.inf)
    while len(current) < min(k, instance.n_facilities):
        gain = np.minimum(cost, best[:, None]).sum(axis=0)
        gain[sorted(current)] = np.inf
        pick = int(np.argmin(gain))
        current.add(pick)
        best = np.minimum(best, cost[:, pick])
    return frozenset(current)


def assemble_candidates(instance: Instance, bracket: Bracket, k: int, params: SolverParams) -> list[Candidate]:
    out = list(_route_probability(instance, bracket.nqis_lo, k, params))
    out += _route_interpolation(instance, bracket, k, params)
    union = set(bracket.nqis_lo.i1) | set(bracket.nqis_lo.i2) | set(bracket.nqis_lo.i3)
    if len(union) > k:
        trimmed = greedy_delete(instance, union, k)
        out.append(Candidate("greedy", trimmed, assignment_cost(instance, trimmed)))
    return out


def assemble_k_solution(instance: Instance, bracket: Bracket, k: int, params: SolverParams) -> CenterSet:
    candidates = [c for c in assemble_candidates(instance, bracket, k, params) if len(c.centers) <= k]
    if not candidates:
        raise AssertionError("no assembly route produced at most k centers")
    best = min(candidates, key=lambda c: (c.cost, sorted(c.centers)))
    chosen = best.centers
    if params.pad_to_k and len(chosen) < k:
        chosen = greedy_pad(instance, chosen, k)
    return make_center_set(instance, chosen)


def solve_k(instance: Instance, k: int, params: SolverParams) -> tuple[CenterSet, Bracket]:
    bracket = sweep_lambda(instance, k, params)
    return assemble_k_solution(instance, bracket, k, params), bracket
