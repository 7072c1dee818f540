"""Final approximation-ratio arithmetic and the (theta, r) grid certification.

For a target ratio rho, each grid cell [theta0, theta1] x [r0, r1] yields a
relaxed linear system in the group totals Q_g, R_g.  If the system has no
solution with positive margin for every cell, no bad configuration exists and
the target ratio is certified.  Feasible cells are refined; a cell still
feasible at the finest level is a witness that the target cannot be certified.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core_model import Objective
from .cases import (
    Deltas,
    default_deltas,
    default_p0,
    default_p1,
    group_count,
    group_rho,
    p_range,
    rho,
)
from .lp import LinearSystem, LpResult, Verdict, lp_feasible

RATIO_CAPS = {
    Objective.KMEANS: lambda deltas: (1.0, 1.0, 1.0, 1.75, 2.0),
    Objective.KMEDIAN: lambda deltas: (1.0, 2.0, 2.0 * (2.0 - math.sqrt(2.0)) / (deltas.d2 - 1.0)),
}


def ratio_caps(objective: Objective | str, deltas: Deltas | None = None) -> tuple:
    """Per-group caps kappa_g with R_g <= kappa_g * Q_g."""
    objective = Objective.parse(objective)
    return RATIO_CAPS[objective](Deltas(*(deltas or default_deltas(objective))))


# ------------------------------------------------------------- final ratio

def _inflation(objective: Objective, r: float, p1: float, p0: float) -> float:
    """Second branch of the max-min: the cost of opening extra interpolated centers."""
    if objective is Objective.KMEANS:
        return 1.0 + 1.0 / (4.0 * r * (r / (2.0 * p1) - 1.0))
    return 1.0 + 1.0 / (4.0 * r * (p0 * r / p1 - 1.0))


def final_ratio_profile(objective: Objective | str, r: float, p1: float | None = None,
                        p0: float | None = None, deltas: Deltas | None = None) -> float:
    """min(rho(p1/r), rho(p1) * inflation(r)), with rho dropped when p1/r leaves its range."""
    objective = Objective.parse(objective)
    p1 = default_p1(objective) if p1 is None else p1
    p0 = default_p0(objective) if p0 is None else p0
    base = rho(objective, p1, deltas)
    second = base * _inflation(objective, r, p1, p0)
    lo, _ = p_range(objective)
    if p1 / r >= lo:
        return min(rho(objective, p1 / r, deltas), second)
    return second


def final_ratio_bound(objective: Objective | str, p1: float | None = None, p0: float | None = None,
                      r_range: tuple = (1.0, None), step: float = 1e-3,
                      deltas: Deltas | None = None) -> float:
    """Max over r >= 1 of the max-min expression, on an r grid with local refinement.

    Past the largest r where rho(p1/r) is defined, only the inflation branch is
    available; it decreases in r, so its value at that point bounds the tail.
    """
    objective = Objective.parse(objective)
    p1 = default_p1(objective) if p1 is None else p1
    p0 = default_p0(objective) if p0 is None else p0
    lo_p, _ = p_range(objective)
    r_start = r_range[0]
    r_stop = r_range[1] if r_range[1] is not None else p1 / lo_p
    count = int(math.floor((r_stop - r_start) / step + 1e-9)) + 1
    grid = [r_start + i * step for i in range(count)]
    if grid[-1] < r_stop:
        grid.append(r_stop)
    values = [final_ratio_profile(objective, r, p1, p0, deltas) for r in grid]
    best = int(np.argmax(values))
    best_val = values[best]
    # refine around the best grid point
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, len(grid) - 1)]
    for r in np.linspace(a, b, 201):
        best_val = max(best_val, final_ratio_profile(objective, float(r), p1, p0, deltas))
    tail = rho(objective, p1, deltas) * _inflation(objective, r_stop, p1, p0)
    return max(best_val, tail)


# ------------------------------------------------------------- grid systems

@dataclass(frozen=True)
class GridConfig:
    theta_range: tuple = (0.0, 1.0)
    r_range: tuple = (2.37, 4.18)
    steps: tuple = (0.01, 0.001, 0.0001)
    p1: float = 0.402
    tol: float = 1e-9
    include_p1_factor: bool = True
    threads: int = 1

    @classmethod
    def default(cls, objective: Objective | str, **overrides) -> "GridConfig":
        objective = Objective.parse(objective)
        if objective is Objective.KMEANS:
            base = dict(r_range=(2.37, 4.18), steps=(0.01, 0.001, 0.0001), p1=0.402)
        else:
            base = dict(r_range=(2.4, 3.42), steps=(0.005, 0.001), p1=0.068)
        base.update(overrides)
        return cls(**base)


def _envelope_max(objective: Objective, group: int, p_lo: float, p_hi: float,
                  deltas: Deltas) -> float:
    """Largest value of a monotone group envelope over [p_lo, p_hi]."""
    return max(group_rho(objective, group, p_lo, deltas), group_rho(objective, group, p_hi, deltas))


class _EnvelopeCache:
    """Memoized group envelopes; grid cells share their r endpoints."""

    def __init__(self, objective: Objective, p1: float, deltas: Deltas):
        self.objective, self.p1, self.deltas = objective, p1, deltas
        self.g = group_count(objective)
        self.base = rho(objective, p1, deltas)
        self.at_p1 = np.array([group_rho(objective, i, p1, deltas) for i in range(1, self.g + 1)])
        self._at: dict = {}

    def at(self, r: float) -> np.ndarray:
        key = float(r)
        if key not in self._at:
            p = self.p1 / key
            self._at[key] = np.array([group_rho(self.objective, i, p, self.deltas)
                                      for i in range(1, self.g + 1)])
        return self._at[key]

    def swept(self, r0: np.ndarray, r1: np.ndarray) -> np.ndarray:
        lo = np.array([self.at(r) for r in np.ravel(r1)])
        hi = np.array([self.at(r) for r in np.ravel(r0)])
        return np.maximum(lo, hi)


def _cell_rows(cache: _EnvelopeCache, rho_target: float, theta0, theta1, r0, r1,
               include_p1_factor: bool):
    """Coefficients of the two strict rows for a batch of cells.

    Returns (aQ, aR, bQ, bR), each of shape (cells, groups); the rows read
    aQ.Q + aR.R < 0 and bQ.Q + bR.R < 0.
    """
    theta0, theta1, r0, r1 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (theta0, theta1, r0, r1))
    p1, base, at_p1 = cache.p1, cache.base, cache.at_p1[None, :]
    swept = cache.swept(r0, r1)
    up = (theta1 / r0)[:, None]
    keep = (1.0 - theta0 / r1)[:, None]
    pd = (p1 / r0)[:, None]
    extra = p1 if include_p1_factor else 1.0
    # rho*D' < up*sum(rho_i(p1)(Q_i - p1 R_i)) + keep*base*(D' + extra*up*sum R_i)
    aQ = rho_target - up * at_p1 - keep * base
    aR = -rho_target * pd + up * p1 * at_p1 + keep * base * pd - keep * base * extra * up
    # rho*D' < sum(rho_i(sweep)(Q_i - (p1/r1) R_i))
    bQ = rho_target - swept
    bR = -rho_target * pd + swept * (p1 / r1)[:, None]
    return aQ, aR, bQ, bR


def build_cell_system(objective: Objective | str, rho_target: float, theta0: float, theta1: float,
                      r0: float, r1: float, p1: float | None = None, deltas: Deltas | None = None,
                      include_p1_factor: bool = True) -> LinearSystem:
    """Relaxed system for one (theta, r) cell; variables are Q_1..Q_g then R_1..R_g.

    The dual total D' is substituted by sum(Q_g - (p1/r0) R_g) and the scale is
    fixed by sum(Q_g) = 1.  Inflating terms use theta1/r0, deflating terms
    theta0/r1, and every envelope takes its worst value over [p1/r1, p1/r0].
    """
    objective = Objective.parse(objective)
    deltas = Deltas(*(deltas or default_deltas(objective)))
    p1 = default_p1(objective) if p1 is None else p1
    cache = _EnvelopeCache(objective, p1, deltas)
    g = cache.g
    aQ, aR, bQ, bR = (x[0].tolist() for x in
                      _cell_rows(cache, rho_target, theta0, theta1, r0, r1, include_p1_factor))
    caps = ratio_caps(objective, deltas)
    system = LinearSystem(2 * g, names=tuple(f"Q{i}" for i in range(1, g + 1))
                          + tuple(f"R{i}" for i in range(1, g + 1)))
    system.add(aQ + aR, "<=", 0.0, strict=True)
    system.add(bQ + bR, "<=", 0.0, strict=True)
    for i in range(g):
        row = [0.0] * (2 * g)
        row[g + i] = 1.0
        row[i] = -caps[i]
        system.add(row, "<=", 0.0)
    system.normalize([1.0] * g + [0.0] * g)
    return system


def cell_margins(rows, caps) -> np.ndarray:
    """Optimal shared margin of each cell system, capped at 1, without a simplex.

    The feasible region of (Q, R) is a product of per-group wedges glued by
    sum(Q) = 1, whose vertices put all mass on one group with R_g at 0 or at its
    cap.  By the minimax theorem the best margin is the minimum over mu in
    [0, 1] of the upper envelope of one line per vertex, and the minimum of a
    convex piecewise linear function sits at an endpoint or a crossing.
    """
    aQ, aR, bQ, bR = rows
    kap = np.asarray(caps, dtype=float)[None, :]
    start = np.concatenate([-bQ, -bQ - kap * bR], axis=1)
    finish = np.concatenate([-aQ, -aQ - kap * aR], axis=1)
    slope = finish - start
    n_lines = start.shape[1]
    k, l = np.triu_indices(n_lines, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = (start[:, l] - start[:, k]) / (slope[:, k] - slope[:, l])
    cross = np.where(np.isfinite(cross), np.clip(cross, 0.0, 1.0), 0.0)
    mus = np.concatenate([np.zeros((len(start), 1)), np.ones((len(start), 1)), cross], axis=1)
    envelope = (start[:, None, :] + mus[:, :, None] * slope[:, None, :]).max(axis=2)
    return np.minimum(envelope.min(axis=1), 1.0)


def point_feasible(objective: Objective | str, rho_target: float, theta: float, r: float,
                   **kwargs) -> LpResult:
    return lp_feasible(build_cell_system(objective, rho_target, theta, theta, r, r, **kwargs))


@dataclass
class CellVerdict:
    theta0: float
    theta1: float
    r0: float
    r1: float
    level: int
    verdict: str
    slack: float
    parent: int | None = None
    point: tuple = ()


@dataclass
class CertReport:
    objective: str
    rho_target: float
    certified: bool
    rho_lmp: float
    rho_final: float
    parameters: dict
    cells_examined: int
    cells_per_level: list
    feasible_cells: list = field(default_factory=list)
    witness: dict | None = None
    out_of_range: dict = field(default_factory=dict)
    elapsed_s: float = 0.0

    def to_dict(self, include_timing: bool = True) -> dict:
        out = asdict(self)
        if not include_timing:
            out.pop("elapsed_s")
        return out


def _frange(lo: float, hi: float, step: float) -> list:
    count = int(round((hi - lo) / step))
    return [(round(lo + i * step, 10), round(lo + (i + 1) * step, 10)) for i in range(count)]


def _out_of_range_checks(objective: Objective, rho_target: float, cfg: GridConfig,
                         deltas: Deltas) -> dict:
    p1 = cfg.p1
    r_lo, r_hi = cfg.r_range
    lo_p, hi_p = p_range(objective)
    # Below r_lo: rho(p1/r) alone must beat the target for p in [p1/r_lo, p1].
    ps = np.linspace(p1 / r_lo, min(p1, hi_p), 2001)
    low_max = max(rho(objective, float(p), deltas) for p in ps)
    # Above r_hi: the inflation branch, decreasing in r, evaluated at r_hi.
    high_val = rho(objective, p1, deltas) * _inflation(objective, r_hi, p1, default_p0(objective))
    return {
        "below": {"r_max": r_lo, "p_interval": [p1 / r_lo, min(p1, hi_p)],
                  "max_rho_sampled": low_max, "ok": bool(low_max < rho_target)},
        "above": {"r_min": r_hi, "inflation_bound": high_val, "ok": bool(high_val < rho_target)},
    }


def _subdivide(cells: np.ndarray, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Split each (theta0, theta1, r0, r1) row into step-sized children; also return parent rows."""
    width = cells[0, 1] - cells[0, 0]
    count = int(round(width / step))
    offs = np.arange(count) * step
    t0 = np.round(cells[:, 0:1] + offs[None, :], 10)
    r0 = np.round(cells[:, 2:3] + offs[None, :], 10)
    tt = np.repeat(t0, count, axis=1)
    rr = np.tile(r0, (1, count))
    children = np.stack([tt, np.round(tt + step, 10), rr, np.round(rr + step, 10)], axis=2)
    parents = np.repeat(np.arange(len(cells)), count * count)
    return children.reshape(-1, 4), parents


def grid_certify(objective: Objective | str, rho_target: float, grid: GridConfig | None = None,
                 deltas: Deltas | None = None, chunk: int = 20_000) -> CertReport:
    objective = Objective.parse(objective)
    cfg = grid or GridConfig.default(objective)
    deltas = Deltas(*(deltas or default_deltas(objective)))
    start = time.perf_counter()
    cache = _EnvelopeCache(objective, cfg.p1, deltas)
    caps = ratio_caps(objective, deltas)

    def margins(block):
        rows = _cell_rows(cache, rho_target, block[:, 0], block[:, 1], block[:, 2], block[:, 3],
                          cfg.include_p1_factor)
        return cell_margins(rows, caps)

    def run_level(cells):
        blocks = [cells[i:i + chunk] for i in range(0, len(cells), chunk)]
        if cfg.threads > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                parts = list(pool.map(margins, blocks))
        else:
            parts = [margins(b) for b in blocks]
        return np.concatenate(parts) if parts else np.empty(0)

    thetas = _frange(*cfg.theta_range, cfg.steps[0])
    rs = _frange(*cfg.r_range, cfg.steps[0])
    top = np.array([(t0, t1, r0, r1) for (t0, t1) in thetas for (r0, r1) in rs])
    per_level = [0] * len(cfg.steps)
    feasible_log: list = []
    witness = None
    deepest = len(cfg.steps) - 1

    def refine(cells, parents, level):
        """Depth-first over batches of cells; returns True once a witness is found."""
        nonlocal witness
        per_level[level] += len(cells)
        slack = run_level(cells)
        hit = np.flatnonzero(slack > cfg.tol)
        if not hit.size:
            return False
        first_idx = len(feasible_log)
        for n in hit:
            t0, t1, r0, r1 = (float(v) for v in cells[n])
            parent = int(parents[n])
            feasible_log.append(asdict(CellVerdict(t0, t1, r0, r1, level, Verdict.FEASIBLE.value,
                                                   float(slack[n]), parent if parent >= 0 else None)))
        if level == deepest:
            witness = dict(feasible_log[first_idx])
            w = witness
            res = lp_feasible(build_cell_system(objective, rho_target, w["theta0"], w["theta1"],
                                                w["r0"], w["r1"], p1=cfg.p1, deltas=deltas,
                                                include_p1_factor=cfg.include_p1_factor), tol=cfg.tol)
            witness["point"] = list(res.point)
            witness["slack"] = res.slack
            return True
        step = cfg.steps[level + 1]
        fan = int(round((cells[0, 1] - cells[0, 0]) / step)) ** 2
        per_batch = max(1, chunk // fan)
        for i in range(0, hit.size, per_batch):
            chosen = hit[i:i + per_batch]
            children, local = _subdivide(cells[chosen], step)
            if refine(children, first_idx + (i + local), level + 1):
                return True
        return False

    refine(top, np.full(len(top), -1), 0)
    examined = sum(per_level)
    while per_level and per_level[-1] == 0:
        per_level.pop()

    out_of_range = _out_of_range_checks(objective, rho_target, cfg, deltas)
    certified = witness is None and all(v["ok"] for v in out_of_range.values())
    params = {
        "p1": cfg.p1, "p0": default_p0(objective), "deltas": list(deltas),
        "theta_range": list(cfg.theta_range), "r_range": list(cfg.r_range),
        "steps": list(cfg.steps), "tolerance": cfg.tol,
        "ratio_caps": list(ratio_caps(objective, deltas)),
        "include_p1_factor": cfg.include_p1_factor,
    }
    return CertReport(
        objective=objective.value,
        rho_target=rho_target,
        certified=certified,
        rho_lmp=rho(objective, cfg.p1, deltas),
        rho_final=final_ratio_bound(objective, cfg.p1, deltas=deltas),
        parameters=params,
        cells_examined=examined,
        cells_per_level=per_level,
        feasible_cells=feasible_log,
        witness=witness,
        out_of_range=out_of_range,
        elapsed_s=time.perf_counter() - start,
    )
