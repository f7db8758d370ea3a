import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_panel
from oracles import min_tree_weight, spanning_trees_k4
from leadlag.errors import ValidationError
from leadlag.network import (LeadLagMatrix, SpanningTree, day_network, distance_matrix,
                             is_lead_centered, lead_lag_matrix, mst)

NODES = ("F1", "F2", "F3", "F4")


def _matrix(llt_row, llc=0.3):
    llc_m = np.full((4, 4), llc)
    np.fill_diagonal(llc_m, 1.0)
    llt = np.zeros((4, 4), dtype=int)
    for j, v in enumerate(llt_row, 1):
        llt[0, j], llt[j, 0] = v, -v
    return LeadLagMatrix(NODES, llc_m, llt)


def test_distance_examples():
    d = distance_matrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert d[0, 1] == 1.0 and d[0, 0] == 0.0
    assert distance_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))[0, 1] == 0.0
    assert distance_matrix(np.array([[1.0, 0.29], [0.29, 1.0]]))[0, 1] == pytest.approx(0.842615, abs=1e-6)
    assert distance_matrix(np.array([[1.0, -0.29], [-0.29, 1.0]]))[0, 1] == pytest.approx(0.842615, abs=1e-6)


def test_distance_rejects_out_of_range():
    with pytest.raises(ValidationError):
        distance_matrix(np.array([[1.0, 1.01], [1.01, 1.0]]))


def test_equal_distances_give_star_on_first_node():
    d = np.full((4, 4), 0.5)
    np.fill_diagonal(d, 0)
    tree = mst(d, NODES)
    assert {e[:2] for e in tree.edges} == {("F1", "F2"), ("F1", "F3"), ("F1", "F4")}
    assert tree.root == "F1"


def test_star_favouring_matrix():
    d = np.full((4, 4), 0.9)
    d[0, 1:] = d[1:, 0] = [0.3, 0.4, 0.5]
    np.fill_diagonal(d, 0)
    tree = mst(d, NODES)
    assert {e[:2] for e in tree.edges} == {("F1", "F2"), ("F1", "F3"), ("F1", "F4")}


def test_unique_ordering_matches_enumeration():
    rng = np.random.default_rng(0)
    w = rng.permutation(6) / 10 + 0.1
    d = np.zeros((4, 4))
    for (i, j), v in zip([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], w):
        d[i, j] = d[j, i] = v
    tree = mst(d)
    best = min(spanning_trees_k4(), key=lambda t: sum(d[i][j] for i, j in t))
    assert {(int(a), int(b)) for a, b, _ in tree.edges} == set(best)


def test_k4_has_16_spanning_trees():
    assert len(spanning_trees_k4()) == 16


@settings(max_examples=500, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=6, max_size=6))
def test_greedy_weight_equals_enumeration(w):
    d = np.zeros((4, 4))
    for (i, j), v in zip([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], w):
        d[i, j] = d[j, i] = v
    tree = mst(d)
    assert len(tree.edges) == 3
    assert tree.weight == min_tree_weight(d)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_distance_monotone(a, b):
    lo, hi = sorted((abs(a), abs(b)))
    d = distance_matrix(np.array([[1.0, lo, hi], [lo, 1.0, 0.0], [hi, 0.0, 1.0]]))
    assert d[0, 2] <= d[0, 1]


def test_lead_centered_examples():
    star = SpanningTree(NODES, (("F1", "F2", 0.8), ("F1", "F3", 0.8), ("F1", "F4", 0.8)), "F1")
    assert is_lead_centered(star, "F1", _matrix([1, 1, 1]))
    assert not is_lead_centered(star, "F1", _matrix([1, 0, 1]))
    chain = SpanningTree(NODES, (("F1", "F2", 0.8), ("F2", "F3", 0.8), ("F3", "F4", 0.8)))
    assert not is_lead_centered(chain, "F1", _matrix([1, 1, 1]))


def test_llt_matrix_antisymmetric_and_day_network():
    rng = np.random.default_rng(3)
    f1 = 20000 + rng.integers(-2, 3, 3000).cumsum()
    lagged = np.concatenate(([f1[0]], f1[:-1]))
    cols = [f1] + [lagged + 50 * k + rng.integers(0, 2, 3000) for k in range(1, 4)]
    panel = make_panel(np.column_stack(cols))
    m = lead_lag_matrix(panel)
    assert np.array_equal(m.llt, -m.llt.T)
    assert np.allclose(m.llc, m.llc.T) and np.all(np.diag(m.llc) == 1)
    _, tree, centred = day_network(panel)
    assert tree.root == "F1" and centred
