import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import properties
from layouts import planted_ring, random_instance
from lmpcluster.certifier.cases import KMEANS_DELTAS, KMEDIAN_DELTAS
from lmpcluster.core_model import Instance, Objective
from lmpcluster.dual_growth import grow_duals
from lmpcluster.nqis import (
    NestedQIS,
    RoundingFailure,
    RoundingParams,
    Variant,
    build_nqis,
    candidate_order,
    expected_connection_costs,
    expected_size,
    grouped_expected_size,
    inclusion_probability_none,
    nqis_invariant_violations,
    round_to_at_most_k,
    sample_many,
    sample_solution,
    selection_sets,
)
from lmpcluster.solver import SolverParams

SEEDS = st.integers(0, 2**32 - 1)
N_SAMPLES = 100_000


def synthetic(groups, i1=()):
    """NestedQIS with the given (leader, followers...) groups; geometry is irrelevant to sampling."""
    i2 = frozenset(g[0] for g in groups)
    i3 = frozenset(v for g in groups for v in g[1:])
    q = {v: g[0] for g in groups for v in g[1:]}
    return NestedQIS(frozenset(i1), i2, i3, q, KMEANS_DELTAS, Variant.KMEANS)


def within_3_sigma(observed, prob, n=N_SAMPLES):
    sigma = math.sqrt(max(prob * (1 - prob), 1e-12) / n)
    return abs(observed - prob) <= 3 * sigma


@given(SEEDS)
def test_invariants_hold_on_every_build(seed):
    assert properties.nqis_invariants(seed) == []


def test_planted_layouts_reach_i3():
    rng = np.random.default_rng(11)
    hits = 0
    for obj in Objective:
        for _ in range(100):
            inst = planted_ring(rng, obj, stray_clients=0)
            nq = build_nqis(grow_duals(inst, 1.0), inst, SolverParams.default(obj).deltas)
            assert nqis_invariant_violations(nq) == []
            hits += bool(nq.i3)
    assert hits >= 60


def test_planted_ring_structure():
    # Center plus two ring points: I1 = center, I2 = first ring point, I3 = second.
    r = math.sqrt(2.1)
    fac = np.array([[0.0, 0.0], [r, 0.0], [r * math.cos(0.7), r * math.sin(0.7)]])
    inst = Instance("kmeans", fac, fac)
    nq = build_nqis(grow_duals(inst, 1.0), inst, KMEANS_DELTAS)
    assert (nq.i1, nq.i2, nq.i3) == ({0}, {1}, {2})
    assert nq.q == {2: 1} and nq.preimage(1) == [2]
    assert nq.groups() == [[1, 2]]


def test_variant_selects_step_graph():
    inst = Instance("kmedian", [[0.0], [5.0]], [[0.0], [5.0]])
    g = grow_duals(inst, 1.0)
    assert build_nqis(g, inst, KMEDIAN_DELTAS).variant is Variant.KMEDIAN
    nq = build_nqis(g, inst, KMEDIAN_DELTAS, variant="kmeans-alg1")
    assert nq.step_graph is nq.graphs["d2"]


def test_bad_deltas_rejected():
    inst = Instance("kmedian", [[0.0]], [[0.0]])
    with pytest.raises(ValueError):
        build_nqis(grow_duals(inst, 1.0), inst, (1.0, 2.0, 0.5))


@pytest.mark.parametrize("p", [0.068, 0.25, 0.402])
def test_marginals_equal_p(p):
    nq = synthetic([[0, 1, 2, 3], [4], [5, 6]])
    m = sample_many(nq, p, seed=7, count=N_SAMPLES)
    for col in range(m.shape[1]):
        assert within_3_sigma(m[:, col].mean(), p)


@pytest.mark.parametrize("c", [1, 2, 3, 5])
def test_no_follower_selected_probability(c):
    p = 0.402
    nq = synthetic([[0] + list(range(1, c + 1))])
    m = sample_many(nq, p, seed=c, count=N_SAMPLES)
    none = (~m[:, 1:]).all(axis=1).mean()
    assert within_3_sigma(none, 0.5 + 0.5 * (1 - 2 * p) ** c)
    both = (~m).all(axis=1).mean()
    assert within_3_sigma(both, 0.5 * (1 - 2 * p) + 0.5 * (1 - 2 * p) ** c)


def test_split_groups_are_anti_correlated_at_most_bound():
    p = 0.3
    nq = synthetic([[0, 1, 2], [3, 4], [5, 6, 7]])
    followers = [1, 2, 4, 6, 7]
    exact = inclusion_probability_none(nq, followers, p)
    assert exact <= 0.5 + 0.5 * (1 - 2 * p) ** len(followers) + 1e-15
    m = sample_many(nq, p, seed=3, count=N_SAMPLES)
    order = candidate_order(nq)
    cols = [order.index(v) for v in followers]
    assert within_3_sigma((~m[:, cols]).all(axis=1).mean(), exact)
    # one I2 partner plus the followers
    exact2 = inclusion_probability_none(nq, followers + [0], p)
    assert exact2 <= 0.5 * (1 - 2 * p) + 0.5 * (1 - 2 * p) ** len(followers) + 1e-15


def _enumerated_expectation(inst, nq, p):
    """Exact E[c(j, S)] by summing over every coin and draw outcome."""
    cost = inst.client_costs()
    groups = nq.groups()
    order = candidate_order(nq)
    total = np.zeros(inst.n_clients)
    for heads in itertools.product([True, False], repeat=len(groups)):
        eligible = [v for g, h in zip(groups, heads) for v in (g[:1] if h else g[1:])]
        for picks in itertools.product([True, False], repeat=len(eligible)):
            prob = 0.5 ** len(groups)
            chosen = set(nq.i1)
            for v, keep in zip(eligible, picks):
                prob *= 2 * p if keep else 1 - 2 * p
                if keep:
                    chosen.add(v)
            if chosen:
                total += prob * cost[:, sorted(chosen)].min(axis=1)
            else:
                total += prob * np.inf
    return total


def test_exact_expectation_against_enumeration():
    rng = np.random.default_rng(5)
    for trial in range(30):
        inst = planted_ring(rng, "kmeans", rings=2, per_ring=(2, 3), stray_clients=3)
        nq = build_nqis(grow_duals(inst, 1.0), inst, KMEANS_DELTAS)
        if len(nq.i2) + len(nq.i3) > 9:
            continue
        p = float(rng.uniform(0.05, 0.45))
        assert np.allclose(expected_connection_costs(inst, nq, p), _enumerated_expectation(inst, nq, p))


def test_monte_carlo_mean_matches_exact():
    rng = np.random.default_rng(6)
    inst = planted_ring(rng, "kmedian", rings=2, stray_clients=4)
    nq = build_nqis(grow_duals(inst, 1.0), inst, KMEDIAN_DELTAS)
    p = 0.2
    sets = selection_sets(nq, sample_many(nq, p, 1, 20_000))
    costs = np.array([inst.client_costs()[:, sorted(s)].min(axis=1).sum() for s in sets])
    exact = expected_connection_costs(inst, nq, p).sum()
    assert abs(costs.mean() - exact) <= 3 * costs.std(ddof=1) / math.sqrt(len(costs)) + 1e-12


@given(SEEDS)
def test_surrogate_expectation_nonnegative(seed):
    """E[alpha_j - sum over N(j) cap S of (alpha_j - c)] >= 0 via exact marginals."""
    rng, inst, lam = properties._case(seed)
    nq = build_nqis(grow_duals(inst, lam), inst, SolverParams.default(inst.objective).deltas)
    g = grow_duals(inst, lam)
    p = 0.5 if inst.objective is Objective.KMEANS else 0.337
    cost = inst.client_costs()
    pool = nq.i2 | nq.i3
    for j in range(inst.n_clients):
        a = g.alpha[j]
        nb = g.client_neighbors[j]
        val = a - sum(a - cost[j, i] for i in nb & nq.i1) - p * sum(a - cost[j, i] for i in nb & pool)
        assert val >= -1e-9 * max(1.0, a)


def test_sampling_is_deterministic():
    nq = synthetic([[0, 1], [2, 3, 4]], i1=[9])
    a = sample_solution(nq, RoundingParams(0.3, 42))
    assert a == sample_solution(nq, RoundingParams(0.3, 42))
    assert 9 in a
    assert np.array_equal(sample_many(nq, 0.3, 1, 50), sample_many(nq, 0.3, 1, 50))


def test_expected_size():
    nq = synthetic([[0, 1], [2]], i1=[5, 6])
    assert expected_size(nq, 0.25) == pytest.approx(2 + 0.75)


def test_rounding_params_validation():
    with pytest.raises(ValueError):
        RoundingParams(0.5)
    with pytest.raises(ValueError):
        RoundingParams(0.2, group_threshold=0)


def test_grouped_rounding_small_pool_rejected():
    nq = synthetic([[0, 1]])
    with pytest.raises(ValueError):
        round_to_at_most_k(nq, 1, RoundingParams(0.25, 0, 3))


def test_grouped_rounding_large_pool():
    # 100 groups of four (at least C = 3, so leaders are forced) plus 7700 singletons: pool 8100.
    groups = [[4 * g, 4 * g + 1, 4 * g + 2, 4 * g + 3] for g in range(100)]
    groups += [[400 + s] for s in range(7700)]
    nq = synthetic(groups)
    chosen = round_to_at_most_k(nq, 810, RoundingParams(0.1, rng_seed=0, group_threshold=3))
    assert len(chosen) <= 810
    assert {g[0] for g in groups[:100]} <= chosen
    assert grouped_expected_size(nq, 0.1, 3) == pytest.approx(100.0)
