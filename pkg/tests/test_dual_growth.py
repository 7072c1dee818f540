import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

import properties
from layouts import random_instance
from lmpcluster.core_model import Instance, Objective
from lmpcluster.dual_growth import (
    check_dual_feasibility,
    dual_objective,
    facility_payments,
    grow_duals,
    witness_contract_violations,
)

SEEDS = st.integers(0, 2**32 - 1)


@given(SEEDS)
def test_witness_contract_and_feasibility(seed):
    assert properties.witness_contract(seed) == []


def test_hand_computed_two_clients():
    # One facility, clients at distance 1 and 3, lambda 2: tight when (x-1) = 2, i.e. x = 3.
    inst = Instance("kmedian", [[1.0], [3.0]], [[0.0]])
    g = grow_duals(inst, 2.0)
    assert g.alpha == pytest.approx([3.0, 3.0])
    assert g.tight == {0}
    assert g.t[0] == pytest.approx(3.0)
    assert g.client_neighbors[0] == {0} and g.client_neighbors[1] == set()
    assert g.witness == (0, 0)


def test_lambda_zero_gives_nearest_costs():
    rng = np.random.default_rng(1)
    for obj in Objective:
        inst = random_instance(rng, obj, n_range=(5, 20), m_range=(2, 8))
        g = grow_duals(inst, 0.0)
        assert g.tight == set(range(inst.n_facilities))
        assert np.allclose(g.alpha, inst.client_costs().min(axis=1))


def test_huge_lambda_single_tight_facility():
    rng = np.random.default_rng(2)
    for obj in Objective:
        inst = random_instance(rng, obj, n_range=(5, 20), m_range=(3, 8))
        lam = 10.0 * inst.n_clients * float(inst.client_costs().max())
        g = grow_duals(inst, lam)
        assert len(g.tight) == 1
        assert check_dual_feasibility(inst, g.alpha, lam) == []


def test_payments_never_exceed_lambda():
    rng = np.random.default_rng(4)
    inst = random_instance(rng, "kmeans", n_range=(30, 30), m_range=(8, 8))
    for lam in (0.5, 3.0, 40.0):
        g = grow_duals(inst, lam)
        pay = facility_payments(inst, g.alpha)
        assert pay.max() <= lam * (1 + 1e-9)
        for i in g.tight:
            assert pay[i] == pytest.approx(lam, rel=1e-9)


def test_feasibility_checker_flags_overpayment():
    inst = Instance("kmedian", [[1.0], [3.0]], [[0.0]])
    assert check_dual_feasibility(inst, np.array([5.0, 5.0]), 2.0)
    assert dual_objective([3.0, 3.0], 2.0, 1) == pytest.approx(4.0)


def test_negative_lambda_rejected():
    inst = Instance("kmedian", [[1.0]], [[0.0]])
    with pytest.raises(ValueError):
        grow_duals(inst, -1.0)


def test_serialization_is_stable():
    inst = Instance("kmeans", [[0.0, 0.0], [2.0, 0.0]], [[0.5, 0.0], [2.0, 1.0]])
    g = grow_duals(inst, 1.0)
    assert g.to_json() == grow_duals(inst, 1.0).to_json()
    data = json.loads(g.to_json())
    assert set(data) >= {"alpha", "tight", "t", "witness", "client_neighbors", "lambda"}
    assert witness_contract_violations(inst, g) == []
