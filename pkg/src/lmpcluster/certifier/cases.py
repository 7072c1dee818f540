"""Closed-form per-client ratio bounds for the NQIS rounding, and their envelopes.

Every bound is expressed with the client's dual normalized to 1.  Case tags name
where the client's neighbourhood sits relative to I1, I2, I3 (counts a, b, c)
and where its witness lies.  k-median tags carry a trailing prime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

from ..core_model import Objective

SQRT2 = math.sqrt(2.0)
THREE_PLUS_2SQRT2 = 3.0 + 2.0 * SQRT2
GROUP5_CAP = 5.68

KMEANS_P_RANGE = (0.096, 0.402)
KMEDIAN_P_RANGE = (0.01, 0.068)
MEDIAN_TRIANGLE_T = 1.1


class Deltas(NamedTuple):
    d1: float
    d2: float
    d3: float

    def check(self) -> "Deltas":
        if not (self.d1 >= self.d2 >= self.d3 > 0):
            raise ValueError(f"thresholds must satisfy d1 >= d2 >= d3 > 0, got {tuple(self)}")
        return self


KMEANS_DELTAS = Deltas((4.0 + 8.0 * SQRT2) / 7.0, 2.0, 0.265)
KMEDIAN_DELTAS = Deltas(SQRT2, 1.395, 2.0 - SQRT2)


def default_deltas(objective: Objective | str) -> Deltas:
    objective = Objective.parse(objective)
    return KMEANS_DELTAS if objective is Objective.KMEANS else KMEDIAN_DELTAS


def default_p1(objective: Objective | str) -> float:
    return 0.402 if Objective.parse(objective) is Objective.KMEANS else 0.068


def default_p0(objective: Objective | str) -> float:
    return 0.5 if Objective.parse(objective) is Objective.KMEANS else 0.337


def p_range(objective: Objective | str) -> tuple[float, float]:
    return KMEANS_P_RANGE if Objective.parse(objective) is Objective.KMEANS else KMEDIAN_P_RANGE


KMEANS_CASES = (
    "1.a", "1.b", "1.c", "1.d", "1.e", "1.g.i", "1.g.ii",
    "2.a", "2.b", "2.c", "2.d",
    "3.a", "3.b", "3.c",
    "4.a.i", "4.a.ii", "4.b.i", "4.b.ii", "4.c",
    "5.a",
)
KMEDIAN_CASES = (
    "1.a'", "1.b'", "1.c'", "1.d'", "1.e'", "1.f'", "1.g.i'", "1.g.ii'",
    "2.a'", "2.b'",
    "3.a'", "3.b.i'", "3.b.ii'",
    "4.a'", "4.b'", "4.c'", "4.d'", "4.e'",
)

# Required integer parameters per case, with their minimum admissible values.
_AUX_MIN = {
    "2.a": {"c2": 1},
    "2.b": {"c": 2},
    "3.b": {"b": 2},
    "3.c": {"b": 2, "c1": 1, "c2": 0},
    "4.c": {"c": 2},
    "5.a": {"a": 1, "h": 0},
    "3.b.ii'": {"c": 2},
}


def _validate_aux(case_id: str, aux: dict) -> dict:
    limits = _AUX_MIN.get(case_id, {})
    extra = set(aux) - set(limits) - {"T", "small_zeta"}
    if extra:
        raise ValueError(f"case {case_id} does not take parameter(s) {sorted(extra)}")
    out = {}
    for name, lo in limits.items():
        if name not in aux:
            raise ValueError(f"case {case_id} requires integer parameter {name!r}")
        value = aux[name]
        if int(value) != value or value < lo:
            raise ValueError(f"case {case_id}: {name}={value!r} is outside its range (>= {lo})")
        out[name] = int(value)
    if case_id == "3.c" and not (out["c1"] >= 2 or out["c2"] >= 1):
        raise ValueError("case 3.c needs c1 >= 2, or c1 = 1 with c2 >= 1")
    return out


def _check_p(p: float) -> None:
    if not 0.0 <= p < 0.5:
        raise ValueError(f"inclusion probability must lie in [0, 1/2), got {p}")


# ---------------------------------------------------------------- k-means

def _means_far(deltas: Deltas) -> float:
    """(1 + sqrt(d1))^2: squared distance bound from a client to I1 through its witness."""
    return (1.0 + math.sqrt(deltas.d1)) ** 2


def kmeans_triangle_bound(p: float, deltas: Deltas) -> float:
    d1, d2, _ = deltas
    return 1.0 + p * d2 + (1.0 - p) * d1 + 2.0 * math.sqrt(p * p * d2 + (1.0 - p) * d1)


def kmeans_1gi_fraction(p: float, deltas: Deltas) -> float:
    far = _means_far(deltas)
    gap = (1.0 - math.sqrt(deltas.d3)) ** 2
    return ((1.0 - p) * far + p * gap) / (1.0 - p + p * gap)


def kmeans_2d_closed_form(p: float, deltas: Deltas) -> float:
    d1, _, d3 = deltas
    far = _means_far(deltas)
    spread = d1 + (math.sqrt(d1) + math.sqrt(d3)) ** 2
    return ((1 - 2 * p) * far * spread + p * far * d3) / ((1 - 2 * p) * spread + p * far * d3)


def kmeans_2d_small_zeta_bound(p: float, deltas: Deltas, zeta: float = 0.25) -> float:
    """Bound for the 2.d configuration when the two neighbour costs sum below zeta."""
    ratio = deltas.d1 / deltas.d3
    return ((1 - 2 * p) * ((1 + math.sqrt(ratio)) ** 2 + ratio) + p) / ((1 - 2 * p) / zeta + p)


def _kmeans_5a(p: float, deltas: Deltas, a: int, h: int) -> float:
    if (a, h) == (1, 0):
        return 1.0
    pb = 2.0 * p
    t1 = a + pb * h
    t3 = deltas.d1 * a * (a - 1) / 2 + deltas.d2 * pb * a * h + deltas.d2 * pb * pb * h * (h - 1) / 2
    return t3 / (t1 * (t1 - t1 * t1 + t3))


def _kmeans_case(case_id: str, p: float, deltas: Deltas, aux: dict) -> float:
    d1, d2, d3 = deltas
    far = _means_far(deltas)
    q = 1.0 - 2.0 * p
    if case_id in ("1.a", "4.a.i", "4.b.i"):
        return (1.0 + math.sqrt(d2)) ** 2
    if case_id in ("1.b", "1.e", "4.a.ii", "4.b.ii"):
        return kmeans_triangle_bound(p, deltas)
    if case_id == "1.c":
        return max((math.sqrt(0.75) + math.sqrt(d1)) ** 2,
                   ((1 - p) * far + 0.75 * p) / (1 - p / 4))
    if case_id == "1.d":
        return p + (1 - p) * far
    if case_id == "1.g.i":
        return max((math.sqrt(d1) + math.sqrt(d3)) ** 2, kmeans_1gi_fraction(p, deltas))
    if case_id == "1.g.ii":
        return p * (1 + math.sqrt(d3)) ** 2 + (1 - p) * far
    if case_id == "2.a":
        miss = (1 - p) * (0.5 + 0.5 * q ** aux["c2"])
        return (miss * far + 1 - miss) / (1 - p)
    if case_id == "2.b":
        c = aux["c"]
        hit = 0.5 * (1 - q ** c)
        return (hit * (c - 1) / c + (1 - p - hit) * far) / q
    if case_id == "2.c":
        return (1 - p * (2 * SQRT2 - 2) + q * (1 - p) * (far - 1)) / (1 - p * (2 * SQRT2 - 1))
    if case_id == "2.d":
        if aux.get("small_zeta"):
            return kmeans_2d_small_zeta_bound(p, deltas)
        return kmeans_2d_closed_form(p, deltas)
    if case_id == "3.a":
        return ((1 - p) ** 2 * far + 1 - (1 - p) ** 2) / (1 - p)
    if case_id == "3.b":
        b = aux["b"]
        miss = (1 - p) ** (b - 1) * q
        return (miss * far + 1 - miss) / (1 - (1 + (2 - d3) / (b + 1)) * p)
    if case_id == "3.c":
        b, c1, c2 = aux["b"], aux["c1"], aux["c2"]
        miss = (1 - p) ** (b - 1) * (0.5 * q + 0.5 * q ** c1) * (0.5 + 0.5 * q ** c2)
        return ((b - 1) / b + (1 - p) ** b / b + miss * (far - 1)) / q
    if case_id == "4.c":
        c = aux["c"]
        num = ((0.5 * q + 0.5 * q ** c) * far - (0.5 + 0.5 * q ** c)
               + p * THREE_PLUS_2SQRT2 + 1 - p / c)
        return max(2.5 + SQRT2, num / (1 - p))
    if case_id == "5.a":
        return _kmeans_5a(p, deltas, aux["a"], aux["h"])
    raise ValueError(f"unknown k-means case {case_id!r}")


# ---------------------------------------------------------------- k-median

def kmedian_triangle_bound(p: float, deltas: Deltas, T: float = MEDIAN_TRIANGLE_T) -> float:
    """Two-hop bound for a client served either by a sampled I2/I3 point or by I1."""
    if T <= 0:
        raise ValueError("T must be positive")
    x = p * p + p * (1 - p) * T
    y = (1 - p) ** 2 + p * (1 - p) / T
    s = x + y
    return math.sqrt(3 * s + 2 * math.sqrt(2 * s * s - deltas.d2 ** 2 * x * y))


def kmedian_triangle_infimum(p: float, deltas: Deltas, lo: float = 1e-3, hi: float = 1e3) -> tuple[float, float]:
    """Golden-section search of the two-hop bound over T on a log scale; informational."""
    from scipy.optimize import minimize_scalar

    res = minimize_scalar(lambda u: kmedian_triangle_bound(p, deltas, math.exp(u)),
                          bounds=(math.log(lo), math.log(hi)), method="bounded",
                          options={"xatol": 1e-10})
    return math.exp(res.x), float(res.fun)


def kmedian_group3_envelope(p: float, deltas: Deltas) -> float:
    return 1.0 / (0.5 - (2.0 - deltas.d2) * 2.0 * p)


def _kmedian_case(case_id: str, p: float, deltas: Deltas, aux: dict) -> float:
    d1, d2, d3 = deltas
    q = 1.0 - 2.0 * p
    T = aux.get("T", MEDIAN_TRIANGLE_T)
    if case_id == "1.a'":
        return 1 + d2
    if case_id in ("1.b'", "1.e'"):
        return kmedian_triangle_bound(p, deltas, T)
    if case_id in ("1.c'", "1.d'"):
        return 1 + (1 - p) * d1
    if case_id == "1.f'":
        return (q + d1) / (q + p * d1)
    if case_id == "1.g.i'":
        return max(d1 + d3, (1 + d1 - p * (d1 + d3)) / (1 - p * d3))
    if case_id == "1.g.ii'":
        return p * (1 + d3) + (1 - p) * (1 + d1)
    if case_id in ("2.a'", "2.b'"):
        return max(1 + d2, kmedian_triangle_bound(p, deltas, T))
    if case_id == "3.a'":
        hit = 2 * p - 2 * p * p
        return ((1 + SQRT2) - (3 - SQRT2) * hit) / (1 - (2 - SQRT2) * hit)
    if case_id == "3.b.i'":
        return ((1 + SQRT2) * q + d3 * p) / (q + d3 * p)
    if case_id == "3.b.ii'":
        c = aux["c"]
        num = (1 + SQRT2) * (0.5 * q + 0.5 * q ** c) + 0.5 * (1 - q ** c) * math.sqrt((c - 1) / c)
        return num / (1 - p * (1 + c - math.sqrt(c * (c - 1))))
    if case_id == "4.a'":
        return 2.0
    if case_id == "4.b'":
        return 1.0 / q
    if case_id == "4.c'":
        return (d2 - 1) / ((d2 - 1) - 2 * (2 - SQRT2) * p)
    if case_id == "4.d'":
        return kmedian_group3_envelope(p, deltas)
    if case_id == "4.e'":
        return 1.0 / (0.5 - (2 - SQRT2) * 2 * p)
    raise ValueError(f"unknown k-median case {case_id!r}")


def eval_case_bound(objective: Objective | str, case_id: str, p: float,
                    deltas: Deltas | None = None, **aux) -> float:
    """Value of one casework bound at inclusion probability ``p``.

    Integer parameters (a, b, c, c1, c2, h) are passed as keywords where the case
    needs them.  ``small_zeta=1`` selects the 2.d bound for neighbour pairs whose
    normalized costs sum below 0.25.  k-median two-hop cases accept ``T``.
    """
    objective = Objective.parse(objective)
    deltas = (deltas or default_deltas(objective))
    deltas = Deltas(*deltas).check()
    _check_p(p)
    known = KMEANS_CASES if objective is Objective.KMEANS else KMEDIAN_CASES
    if case_id not in known:
        raise ValueError(f"unknown {objective.value} case {case_id!r}")
    checked = _validate_aux(case_id, aux)
    checked.update({k: aux[k] for k in ("T", "small_zeta") if k in aux})
    if objective is Objective.KMEANS:
        return _kmeans_case(case_id, p, deltas, checked)
    return _kmedian_case(case_id, p, deltas, checked)


# ------------------------------------------------- tails of unbounded families

def kmeans_tail_bound(case_id: str, p: float, deltas: Deltas) -> float:
    """Crude bounds covering every parameter value past the explicit range.

    2.b covers c >= 6, 3.b and 3.c cover b >= 6, 4.c covers c >= 3, and the 5.a
    entries cover (a = 2, h >= 1) and (a >= 3, h >= 1).
    """
    d1, _, d3 = deltas
    far = _means_far(deltas)
    q = 1 - 2 * p
    if case_id == "2.b":
        return (0.5 + (1 - p - 0.5 * (1 - q ** 6)) * far) / q
    if case_id == "3.b":
        return ((1 - p) ** 5 * q * far + 1) / (1 - (1 + (2 - d3) / 7) * p)
    if case_id == "3.c":
        return (1 + (1 - p) ** 5 * q * (far - 1)) / q
    if case_id == "4.c":
        c = 3
        num = (0.5 * q + 0.5 * q ** c) * far - (0.5 + 0.5 * q ** c) + p * THREE_PLUS_2SQRT2 + 1
        return max(2.5 + SQRT2, num / (1 - p))
    half_gap = d1 / 2 - 1
    if case_id == "5.a:a=2":
        return 1 / (2 + 2 * p) + max((1 + 2 * p) / (d1 - 2 + 2 * p * q), 1 / q)
    if case_id == "5.a:a>=3":
        return 1 / 3 + max(1 / (3 * half_gap), 1 / q)
    raise ValueError(f"no tail bound for {case_id!r}")


def kmedian_tail_bound(case_id: str, p: float, deltas: Deltas) -> float:
    """k-median 3.b.ii' for every c >= 3."""
    if case_id != "3.b.ii'":
        raise ValueError(f"no tail bound for {case_id!r}")
    q = 1 - 2 * p
    return 0.5 * (1 + (1 + SQRT2) * q + SQRT2 * q ** 3) / q


# ------------------------------------------------------- enumeration and envelopes

@dataclass(frozen=True)
class CaseBound:
    objective: Objective
    case_id: str
    aux: tuple
    value: float
    group: int
    tail: bool = False


# k-means group membership of each case (5.a is split by whether a q-pair is present).
KMEANS_GROUP = {
    "1.a": 1, "1.c": 1, "1.d": 1, "1.g.ii": 1, "2.a": 1, "3.a": 1,
    "4.a.i": 1, "4.b.i": 1, "4.c": 1,
    "1.b": 2, "1.e": 2, "4.a.ii": 2, "4.b.ii": 2,
    "1.g.i": 3,
    "2.d": 4,
    "2.b": 5, "2.c": 5, "3.b": 5, "3.c": 5,
}
KMEDIAN_GROUP = {
    "1.a'": 1, "1.b'": 1, "1.c'": 1, "1.d'": 1, "1.e'": 1, "1.f'": 1, "1.g.i'": 1,
    "1.g.ii'": 1, "2.a'": 1, "2.b'": 1,
    "3.a'": 2, "3.b.i'": 2, "3.b.ii'": 2,
    "4.a'": 3, "4.b'": 3, "4.c'": 3, "4.d'": 3, "4.e'": 3,
}

EXPLICIT_LIMIT = 5


def enumerate_case_bounds(objective: Objective | str, p: float,
                          deltas: Deltas | None = None) -> Iterator[CaseBound]:
    """Every case bound with parameters up to the explicit limit, plus tail bounds.

    Together these dominate every admissible parameter choice, so their maximum
    bounds the per-client ratio.
    """
    objective = Objective.parse(objective)
    deltas = Deltas(*(deltas or default_deltas(objective))).check()
    ev = lambda cid, **aux: eval_case_bound(objective, cid, p, deltas, **aux)  # noqa: E731
    mk = lambda cid, g, value, tail=False, **aux: CaseBound(  # noqa: E731
        objective, cid, tuple(sorted(aux.items())), value, g, tail)
    if objective is Objective.KMEDIAN:
        for cid in KMEDIAN_CASES:
            g = KMEDIAN_GROUP[cid]
            if cid == "3.b.ii'":
                yield mk(cid, g, ev(cid, c=2), c=2)
                yield mk(cid, g, kmedian_tail_bound(cid, p, deltas), tail=True, c=3)
            else:
                yield mk(cid, g, ev(cid))
        return

    for cid in KMEANS_CASES:
        if cid == "5.a":
            continue
        g = KMEANS_GROUP[cid]
        if cid == "2.a":
            # The value decreases in c2, so c2 = 1 dominates the tail.
            for c2 in range(1, EXPLICIT_LIMIT + 1):
                yield mk(cid, g, ev(cid, c2=c2), c2=c2)
        elif cid == "2.b":
            for c in range(2, EXPLICIT_LIMIT + 1):
                yield mk(cid, g, ev(cid, c=c), c=c)
            yield mk(cid, g, kmeans_tail_bound(cid, p, deltas), tail=True, c=EXPLICIT_LIMIT + 1)
        elif cid == "2.d":
            yield mk(cid, 4, ev(cid))
            yield mk(cid, 5, ev(cid, small_zeta=1), small_zeta=1)
        elif cid == "3.b":
            for b in range(2, EXPLICIT_LIMIT + 1):
                yield mk(cid, g, ev(cid, b=b), b=b)
            yield mk(cid, g, kmeans_tail_bound(cid, p, deltas), tail=True, b=EXPLICIT_LIMIT + 1)
        elif cid == "3.c":
            # Decreasing in c1 and c2: the two smallest admissible pairs dominate.
            for b in range(2, EXPLICIT_LIMIT + 1):
                for c1, c2 in ((1, 1), (2, 0)):
                    yield mk(cid, g, ev(cid, b=b, c1=c1, c2=c2), b=b, c1=c1, c2=c2)
            yield mk(cid, g, kmeans_tail_bound(cid, p, deltas), tail=True, b=EXPLICIT_LIMIT + 1)
        elif cid == "4.c":
            yield mk(cid, g, ev(cid, c=2), c=2)
            yield mk(cid, g, kmeans_tail_bound(cid, p, deltas), tail=True, c=3)
        else:
            yield mk(cid, g, ev(cid))

    # 5.a: (1,0) -> 1; a = 1 peaks at h = 1; h = 0 peaks at a = 2; tails otherwise.
    # Without a q-pair the client sits in group 1, with one it sits in group 5.
    yield mk("5.a", 1, ev("5.a", a=1, h=0), a=1, h=0)
    yield mk("5.a", 1, ev("5.a", a=2, h=0), a=2, h=0)
    for g in (1, 5):
        yield mk("5.a", g, ev("5.a", a=1, h=1), a=1, h=1)
        yield mk("5.a", g, kmeans_tail_bound("5.a:a=2", p, deltas), tail=True, a=2, h=1)
        yield mk("5.a", g, kmeans_tail_bound("5.a:a>=3", p, deltas), tail=True, a=3, h=1)


def _check_range(objective: Objective, p: float) -> None:
    lo, hi = p_range(objective)
    if not (lo - 1e-12 <= p <= hi + 1e-12):
        raise ValueError(f"p={p} is outside the proven range [{lo}, {hi}] for {objective.value}")


def rho_breakdown(objective: Objective | str, p: float, deltas: Deltas | None = None) -> list[CaseBound]:
    objective = Objective.parse(objective)
    _check_range(objective, p)
    return list(enumerate_case_bounds(objective, p, deltas))


def rho(objective: Objective | str, p: float, deltas: Deltas | None = None) -> float:
    """Largest casework bound at ``p``: the LMP ratio certified for the rounding."""
    return max(cb.value for cb in rho_breakdown(objective, p, deltas))


def group_case_max(objective: Objective | str, group: int, p: float,
                   deltas: Deltas | None = None) -> float:
    return max(cb.value for cb in rho_breakdown(objective, p, deltas) if cb.group == group)


def group_count(objective: Objective | str) -> int:
    return 5 if Objective.parse(objective) is Objective.KMEANS else 3


def group_rho(objective: Objective | str, group: int, p: float, deltas: Deltas | None = None) -> float:
    """Envelope proven for one client group; dominates every case in that group."""
    objective = Objective.parse(objective)
    if not 1 <= group <= group_count(objective):
        raise ValueError(f"group {group} does not exist for {objective.value}")
    _check_range(objective, p)
    deltas = Deltas(*(deltas or default_deltas(objective))).check()
    if objective is Objective.KMEANS:
        if group == 1:
            return (1.0 + math.sqrt(deltas.d2)) ** 2
        if group == 2:
            return kmeans_triangle_bound(p, deltas)
        if group == 3:
            return kmeans_1gi_fraction(p, deltas)
        if group == 4:
            return kmeans_2d_closed_form(p, deltas)
        return GROUP5_CAP
    if group == 1:
        return max(1 + deltas.d2, kmedian_triangle_bound(p, deltas))
    if group == 2:
        return _kmedian_case("3.a'", p, deltas, {})
    return kmedian_group3_envelope(p, deltas)


def group_envelope_direction(objective: Objective | str, group: int) -> int:
    """+1 if the envelope grows with p, -1 if it shrinks, 0 if constant."""
    objective = Objective.parse(objective)
    if objective is Objective.KMEANS:
        return 0 if group in (1, 5) else -1
    return 1 if group == 3 else -1
