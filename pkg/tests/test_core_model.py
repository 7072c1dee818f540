import itertools
import json
import math

import numpy as np
import pytest

from lmpcluster.core_model import (
    DEGENERATE,
    Instance,
    Objective,
    assignment_cost,
    brute_force_opt,
    cost_matrix,
    load_instance,
    make_center_set,
    pair_cost,
    save_instance,
    validate_instance,
)


def test_pair_cost_kinds():
    assert pair_cost([0, 0], [3, 4], "kmedian") == pytest.approx(5.0)
    assert pair_cost([0, 0], [3, 4], "kmeans") == pytest.approx(25.0)
    assert pair_cost([1, 2], [4, 6], Objective.KMEANS) == pair_cost([4, 6], [1, 2], Objective.KMEANS)


def test_pair_cost_dimension_mismatch():
    with pytest.raises(ValueError):
        pair_cost([0, 0], [1, 2, 3], "kmeans")


def test_cost_matrix_matches_pairwise():
    rng = np.random.default_rng(0)
    a, b = rng.random((5, 3)), rng.random((4, 3))
    for obj in Objective:
        mat = cost_matrix(a, b, obj)
        for i, j in itertools.product(range(5), range(4)):
            assert mat[i, j] == pytest.approx(pair_cost(a[i], b[j], obj))


def test_objective_parse():
    assert Objective.parse("KMeans") is Objective.KMEANS
    assert Objective.parse("k-median") is Objective.KMEDIAN
    with pytest.raises(ValueError):
        Objective.parse("kcenter")


@pytest.mark.parametrize("clients,facilities", [([], [[0.0]]), ([[0.0]], []), ([[0.0, 1.0]], [[0.0]])])
def test_instance_rejects_bad_shapes(clients, facilities):
    with pytest.raises(ValueError):
        Instance("kmeans", clients, facilities)


def test_validate_rescales_to_unit_minimum():
    inst = validate_instance(Instance("kmedian", [[0.0], [10.0]], [[0.5], [4.0]]))
    dist = np.sqrt(cost_matrix(inst.clients, inst.facilities, "kmeans"))
    assert dist.min() == pytest.approx(1.0)
    assert inst.scale == pytest.approx(2.0)
    assert dist.max() <= inst.n_clients ** 6


def test_validate_flags_coincident_points():
    inst = validate_instance(Instance("kmeans", [[0.0], [1.0]], [[0.0]]))
    assert DEGENERATE in inst.flags
    assert inst.scale == 1.0


def test_json_round_trip(tmp_path):
    inst = Instance("kmeans", [[0.0, 1.0], [2.0, 3.0]], [[1.0, 1.0]], label="tiny")
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    back = load_instance(path)
    assert back.objective is inst.objective and back.label == "tiny"
    assert np.array_equal(back.clients, inst.clients)
    assert json.loads(path.read_text())["objective"] in ("kmeans", "KMeans")


def test_assignment_cost_and_center_set():
    inst = Instance("kmedian", [[0.0], [3.0], [10.0]], [[0.0], [9.0]])
    assert assignment_cost(inst, [0]) == pytest.approx(0 + 3 + 10)
    cs = make_center_set(inst, {0, 1})
    assert cs.cost == pytest.approx(0 + 3 + 1)
    assert cs.sorted_indices() == [0, 1]
    with pytest.raises(ValueError):
        assignment_cost(inst, [2])
    with pytest.raises(ValueError):
        assignment_cost(inst, [])


def test_brute_force_matches_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(20):
        inst = Instance("kmeans", rng.random((7, 2)), rng.random((6, 2)))
        for k in (1, 2, 3):
            best = min(assignment_cost(inst, s) for s in itertools.combinations(range(6), k))
            assert brute_force_opt(inst, k).cost == pytest.approx(best, rel=1e-12)


def test_brute_force_tie_prefers_first_subset():
    inst = Instance("kmedian", [[0.0]], [[1.0], [-1.0]])
    assert brute_force_opt(inst, 1).sorted_indices() == [0]


def test_brute_force_budget():
    inst = Instance("kmeans", [[0.0]], np.arange(30.0)[:, None])
    with pytest.raises(ValueError):
        brute_force_opt(inst, 10, budget=1000)
