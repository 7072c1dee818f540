"""Small dense simplex for feasibility of linear systems with strict rows.

A system is a list of rows ``coeffs . x  (<=, >=, ==)  rhs`` over nonnegative
variables.  Strict rows are relaxed by a shared slack ``s``; the solver maximizes
``s`` (capped at 1) and reports FEASIBLE when the optimum exceeds the tolerance.
The same routine runs in float or in exact rational arithmetic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np


class Verdict(str, enum.Enum):
    FEASIBLE = "FEASIBLE"
    INFEASIBLE = "INFEASIBLE"


class CyclingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Row:
    coeffs: tuple
    sense: str
    rhs: float
    strict: bool = False

    def __post_init__(self):
        if self.sense not in ("<=", ">=", "=="):
            raise ValueError(f"unknown sense {self.sense!r}")
        if self.strict and self.sense == "==":
            raise ValueError("an equality row cannot be strict")


@dataclass
class LinearSystem:
    n_vars: int
    rows: list = field(default_factory=list)
    names: tuple = ()

    def add(self, coeffs: Sequence, sense: str, rhs=0, strict: bool = False) -> "LinearSystem":
        coeffs = tuple(coeffs)
        if len(coeffs) != self.n_vars:
            raise ValueError(f"row has {len(coeffs)} coefficients, expected {self.n_vars}")
        self.rows.append(Row(coeffs, sense, rhs, strict))
        return self

    def normalize(self, weights: Sequence | None = None, scale=1) -> "LinearSystem":
        """Pin a homogeneous system's scale with ``weights . x == scale``."""
        weights = tuple(weights) if weights is not None else (1,) * self.n_vars
        return self.add(weights, "==", scale)


@dataclass(frozen=True)
class LpResult:
    verdict: Verdict
    slack: float
    point: tuple
    pivots: int

    @property
    def feasible(self) -> bool:
        return self.verdict is Verdict.FEASIBLE


class _Tableau:
    """Dense tableau over a numpy array of floats or of ``Fraction`` objects."""

    def __init__(self, a, b, basis, eps, max_pivots):
        self.a = a
        self.b = b
        self.basis = basis
        self.eps = eps
        self.max_pivots = max_pivots
        self.pivots = 0

    def pivot(self, r, c):
        a, b = self.a, self.b
        piv = a[r, c]
        a[r] = a[r] / piv
        b[r] = b[r] / piv
        col = a[:, c].copy()
        col[r] = 0
        nz = np.flatnonzero(col != 0)
        if nz.size:
            a[nz] -= np.outer(col[nz], a[r])
            b[nz] -= col[nz] * b[r]
        self.basis[r] = c
        self.pivots += 1

    def optimize(self, cost, allowed):
        """Minimize ``cost . x`` from the current basis; False means unbounded."""
        eps = self.eps
        degenerate_run = 0
        bland = False
        while True:
            if self.pivots > self.max_pivots:
                raise CyclingError("simplex exceeded its pivot budget")
            reduced = cost - cost[self.basis] @ self.a
            candidates = np.flatnonzero(allowed & (reduced < -eps))
            if candidates.size == 0:
                return True
            if bland:
                c = int(candidates[0])
            else:
                vals = reduced[candidates]
                c = int(candidates[min(range(len(vals)), key=lambda k: (vals[k], candidates[k]))])
            column = self.a[:, c]
            rows = np.flatnonzero(column > eps)
            if rows.size == 0:
                return False
            ratios = [self.b[i] / column[i] for i in rows]
            best = min(ratios)
            r = min((int(rows[k]) for k in range(len(rows)) if ratios[k] - best <= eps),
                    key=lambda i: self.basis[i])
            if best <= eps:
                degenerate_run += 1
                if degenerate_run > 25:
                    bland = True
            else:
                degenerate_run = 0
            self.pivot(r, c)


def lp_feasible(system: LinearSystem, tol: float = 1e-9, exact: bool = False,
                max_pivots: int = 5000) -> LpResult:
    """Decide whether the strict rows of ``system`` can all hold with positive margin.

    The shared margin is a free variable (split into two nonnegative parts) capped
    above at 1, so the reported slack is the true optimum even when negative.
    """
    if exact:
        conv = Fraction
        dtype = object
        eps = Fraction(0)
    else:
        conv = float
        dtype = float
        eps = 1e-12
    one, zero = conv(1), conv(0)
    n = system.n_vars
    s_pos, s_neg = n, n + 1
    n_struct = n + 2
    rows = []
    for row in system.rows:
        coeffs = [conv(v) for v in row.coeffs] + [zero, zero]
        if row.strict:
            sign = one if row.sense == "<=" else -one
            coeffs[s_pos], coeffs[s_neg] = sign, -sign
        rows.append((coeffs, row.sense, conv(row.rhs)))
    cap = [zero] * n_struct
    cap[s_pos], cap[s_neg] = one, -one
    rows.append((cap, "<=", one))

    prepared = []
    for coeffs, sense, rhs in rows:
        if rhs < 0:
            coeffs = [-v for v in coeffs]
            rhs = -rhs
            sense = {"<=": ">=", ">=": "<=", "==": "=="}[sense]
        prepared.append((coeffs, sense, rhs))
    n_extra = sum(1 for _, sense, _ in prepared if sense != "==")
    n_art = sum(1 for _, sense, _ in prepared if sense != "<=")
    width = n_struct + n_extra + n_art
    m = len(prepared)
    a = np.empty((m, width), dtype=dtype)
    a[:] = zero
    b = np.empty(m, dtype=dtype)
    basis = []
    art_cols = []
    slack_at, art_at = n_struct, n_struct + n_extra
    for r, (coeffs, sense, rhs) in enumerate(prepared):
        a[r, :n_struct] = coeffs
        b[r] = rhs
        if sense == "<=":
            a[r, slack_at] = one
            basis.append(slack_at)
            slack_at += 1
            continue
        if sense == ">=":
            a[r, slack_at] = -one
            slack_at += 1
        a[r, art_at] = one
        basis.append(art_at)
        art_cols.append(art_at)
        art_at += 1

    tab = _Tableau(a, b, np.array(basis), eps, max_pivots)
    allowed = np.ones(width, dtype=bool)
    if art_cols:
        phase1 = np.empty(width, dtype=dtype)
        phase1[:] = zero
        phase1[art_cols] = one
        tab.optimize(phase1, allowed)
        art_set = set(art_cols)
        infeas = sum((tab.b[i] for i, j in enumerate(tab.basis) if j in art_set), zero)
        if infeas > (zero if exact else 1e-9):
            return LpResult(Verdict.INFEASIBLE, float("-inf"), (), tab.pivots)
        i = 0
        while i < tab.a.shape[0]:
            if int(tab.basis[i]) in art_set:
                nz = [j for j in range(n_struct + n_extra) if abs(tab.a[i, j]) > eps]
                if not nz:
                    tab.a = np.delete(tab.a, i, axis=0)
                    tab.b = np.delete(tab.b, i)
                    tab.basis = np.delete(tab.basis, i)
                    continue
                tab.pivot(i, nz[0])
            i += 1
        allowed[art_cols] = False

    phase2 = np.empty(width, dtype=dtype)
    phase2[:] = zero
    phase2[s_pos], phase2[s_neg] = -one, one
    bounded = tab.optimize(phase2, allowed)
    values = [zero] * n_struct
    for i, j in enumerate(tab.basis):
        if j < n_struct:
            values[int(j)] = tab.b[i]
    slack = values[s_pos] - values[s_neg]
    point = tuple(float(v) for v in values[:n])
    if not bounded:
        return LpResult(Verdict.FEASIBLE, float("inf"), point, tab.pivots)
    verdict = Verdict.FEASIBLE if slack > (zero if exact else tol) else Verdict.INFEASIBLE
    return LpResult(verdict, float(slack), point, tab.pivots)
