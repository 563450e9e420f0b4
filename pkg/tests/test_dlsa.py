import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import enumerate_edge_subsets, grid_admission, grid_link_power
from satdlsa.channel import ChannelSpec, LinearRate
from satdlsa.dlsa import (EnumerationLimitError, NonConcaveError, best_edge_subset,
                          compute_weights, golden_max, greedy_edge_subset, optimal_link_power,
                          route_commodities, select_links_exact, select_links_greedy,
                          solve_admission)
from satdlsa.model import CallableUtility, NetworkConfig, PowerUtility, build_graph, full_mesh

TRIANGLE = [(0, 1), (1, 2), (0, 2)]
K4 = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


# -- admission --------------------------------------------------------------

def test_admission_empty_queue_takes_cap():
    assert solve_admission(100, 0, r_max=6) == 6


def test_admission_interior():
    assert solve_admission(100, 20, r_max=6) == pytest.approx(4.0)
    assert abs(grid_admission(100, 20, 6)[0] - 4.0) < 1e-3


def test_admission_clamped_to_zero():
    assert solve_admission(1, 10, r_max=6) == 0.0
    assert grid_admission(1, 10, 6)[0] == 0.0


def test_admission_generic_utility_matches_grid():
    u = PowerUtility(0.5, 3.0)
    for V, Q in [(10, 1.0), (100, 30.0), (1, 0.0), (5, 50.0)]:
        r = solve_admission(V, Q, u, 6.0)
        ref, _ = grid_admission(V, Q, 6.0, utility=lambda x: 3.0 * math.sqrt(x))
        assert abs(r - ref) < 1e-3


def test_admission_non_concave_utility_rejected():
    bumpy = CallableUtility(lambda r: math.exp(r))
    with pytest.raises(NonConcaveError, match=r"\(2, 0\)"):
        solve_admission(10, 1.0, bumpy, 6.0, pair=(2, 0))


@given(st.floats(1, 5000), st.floats(0, 1e4), st.floats(0, 1e4))
def test_admission_nonincreasing_in_backlog(V, q1, q2):
    lo, hi = sorted((q1, q2))
    assert solve_admission(V, hi) <= solve_admission(V, lo)


@given(st.floats(1, 5000), st.floats(1, 5000), st.floats(1e-3, 1e4))
def test_admission_nondecreasing_in_V(v1, v2, q):
    lo, hi = sorted((v1, v2))
    assert solve_admission(lo, q) <= solve_admission(hi, q)


@given(st.floats(1, 1000), st.floats(0, 1e3), st.floats(0.01, 100))
def test_admission_scale_invariance(V, Q, k):
    assert solve_admission(V * k, Q * k) == pytest.approx(solve_admission(V, Q), abs=1e-9)


# -- weights ----------------------------------------------------------------

def test_weights_positive_part():
    w = compute_weights(np.array([[5.0], [2.0]]))
    assert w.per_commodity[0, 1, 0] == 3.0
    assert w.per_commodity[1, 0, 0] == 0.0


def test_weights_tie_goes_to_lowest_commodity():
    w = compute_weights(np.array([[5.0, 5.0], [2.0, 2.0]]))
    assert w.best[0, 1] == 3.0 and w.best_commodity[0, 1] == 0


@given(st.lists(st.lists(st.floats(0, 100), min_size=3, max_size=3), min_size=2, max_size=5))
def test_weight_invariants(rows):
    Q = np.array(rows)
    w = compute_weights(Q)
    n, c = Q.shape
    for i in range(n):
        for j in range(n):
            diffs = [max(Q[i, k] - Q[j, k], 0.0) for k in range(c)]
            assert list(w.per_commodity[i, j]) == diffs
            assert w.best[i, j] == max(diffs)
            assert w.best_commodity[i, j] == diffs.index(max(diffs))


# -- per-link power -----------------------------------------------------------

def test_link_power_stationary_point():
    p, g = optimal_link_power(5, 2, 3, 6)
    assert p == pytest.approx(13 / 6)
    assert g == pytest.approx(5.741181769377990, abs=1e-12)
    gp, gg = grid_link_power(5, 2, 3, 6)
    assert abs(gg - g) < 1e-3 and abs(gp - p) < 1e-3


@pytest.mark.parametrize("W,Z,alpha", [(0, 3, 2), (0, 0, 3), (5, 2, 0)])
def test_link_power_idle(W, Z, alpha):
    assert optimal_link_power(W, Z, alpha, 6) == (0.0, 0.0)


def test_link_power_free_power_uses_cap():
    assert optimal_link_power(1.0, 0.0, 2.0, 6.0)[0] == 6.0


def test_link_power_generic_rate_matches_grid():
    for W, Z, a in [(5, 2, 3), (1, 5, 2), (10, 0, 1)]:
        p, g = optimal_link_power(W, Z, a, 6.0, LinearRate())
        grid = np.linspace(0, 6, 10_000)
        ref = float((W * a * grid - Z * grid).max())
        assert abs(g - ref) < 1e-3


@given(st.floats(0, 100), st.floats(0, 100), st.sampled_from([0.0, 1.0, 2.0, 3.0]))
def test_link_gain_nonnegative(W, Z, a):
    p, g = optimal_link_power(W, Z, a, 6.0)
    assert g >= 0 and 0 <= p <= 6


def test_golden_max_concave_check():
    with pytest.raises(NonConcaveError):
        golden_max(lambda x: math.sin(3 * x), 0.0, 6.0)


# -- edge selection -----------------------------------------------------------

def test_triangle_unit_budget():
    chosen = best_edge_subset(TRIANGLE, [3, 2, 1], 1)
    assert list(chosen) == [True, False, False]
    assert enumerate_edge_subsets(TRIANGLE, [3, 2, 1], 1)[0] == 3


def test_all_zero_weights_select_nothing():
    assert not best_edge_subset(K4, [0] * 6, 2).any()
    assert not greedy_edge_subset(K4, [0] * 6, 2).any()


def test_k4_budget_two_selects_four_cycle():
    chosen = best_edge_subset(K4, [1] * 6, 2)
    assert chosen.sum() == 4
    deg = np.zeros(4)
    for k in np.flatnonzero(chosen):
        deg[list(K4[k])] += 1
    assert np.all(deg == 2)
    assert enumerate_edge_subsets(K4, [1] * 6, 2)[0] == 4


def test_star_center_budget_one():
    star = [(0, 1), (0, 2)]
    assert list(greedy_edge_subset(star, [5, 4], 1)) == [True, False]
    assert list(best_edge_subset(star, [5, 4], 1)) == [True, False]


def test_path_tie_break():
    path = [(0, 1), (1, 2)]
    assert list(greedy_edge_subset(path, [3, 3], 1)) == [True, False]
    assert list(best_edge_subset(path, [3, 3], 1)) == [True, False]


def test_per_node_budget():
    star = [(0, 1), (0, 2), (0, 3)]
    assert best_edge_subset(star, [1, 2, 3], [2, 1, 1, 1]).tolist() == [False, True, True]


def test_enumeration_guard():
    many = [(i, j) for i in range(8) for j in range(i + 1, 8)]
    with pytest.raises(EnumerationLimitError):
        best_edge_subset(many, np.ones(len(many)), 2)
    chosen = greedy_edge_subset(many, np.ones(len(many)), 2)
    deg = np.zeros(8)
    for k in np.flatnonzero(chosen):
        deg[list(many[k])] += 1
    assert deg.max() <= 2 and 0 < chosen.sum() <= 8


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] < e[1]),
             unique=True, min_size=1, max_size=8),
    st.integers(1, 3))), st.data())
def test_exact_matches_enumeration_and_beats_greedy(inst, data):
    n, edges, budget = inst
    weights = data.draw(st.lists(st.floats(0, 50), min_size=len(edges), max_size=len(edges)))
    ref, _ = enumerate_edge_subsets(edges, weights, budget)
    exact = float(np.dot(best_edge_subset(edges, weights, budget), weights))
    greedy = float(np.dot(greedy_edge_subset(edges, weights, budget), weights))
    assert exact == pytest.approx(ref, abs=1e-9)
    assert greedy <= exact + 1e-9


def _pair_config(links, n=2, budget=1):
    return NetworkConfig(n, links, budget, budget, 6.0, 6.0, 4.0,
                         ChannelSpec.uniform(["on"], [3.0], [1.0], links))


def test_single_edge_one_sided_gain():
    cfg = _pair_config({(0, 1), (1, 0)})
    g = build_graph(cfg)
    Q = np.array([[0.0, 5.0], [0.0, 0.0]])  # commodity 0 lives at node 0; node 0 holds 5 of commodity 1
    w = compute_weights(Q)
    alpha = np.array([[0, 3.0], [3.0, 0]])
    sel = select_links_exact(g, w, np.array([2.0, 2.0]), alpha, cfg)
    assert sel.gamma[0, 1] == sel.gamma[1, 0] == 1
    assert sel.power[0, 1] == pytest.approx(13 / 6)
    assert sel.power[1, 0] == 0.0
    assert sel.objective == pytest.approx(5.741181769377990)


def test_selection_invariants_on_mesh():
    cfg = NetworkConfig(4, full_mesh(4), 2, 2, 6.0, 6.0, 4.0,
                        ChannelSpec.uniform(["G"], [3.0], [1.0], full_mesh(4)))
    g = build_graph(cfg)
    rng = np.random.default_rng(0)
    for _ in range(50):
        Q = rng.uniform(0, 50, (4, 4))
        np.fill_diagonal(Q, 0)
        alpha = rng.choice([0.0, 1.0, 2.0, 3.0], size=(4, 4))
        np.fill_diagonal(alpha, 0)
        Z = rng.uniform(0, 20, 4)
        w = compute_weights(Q)
        ex = select_links_exact(g, w, Z, alpha, cfg)
        gr = select_links_greedy(g, w, Z, alpha, cfg)
        for sel in (ex, gr):
            assert np.array_equal(sel.gamma, sel.gamma.T)
            assert not np.diag(sel.gamma).any()
            assert sel.gamma.sum(axis=1).max() <= 2
            assert np.all(sel.power[sel.gamma == 0] == 0)
            assert np.all((sel.power >= 0) & (sel.power <= 6))
        assert gr.objective <= ex.objective + 1e-9


def test_select_exact_refuses_large_graph():
    links = full_mesh(8)
    cfg = NetworkConfig(8, links, 2, 2, 6.0, 6.0, 4.0, ChannelSpec.uniform(["G"], [3.0], [1.0], links))
    g = build_graph(cfg)
    w = compute_weights(np.zeros((8, 8)))
    with pytest.raises(EnumerationLimitError):
        select_links_exact(g, w, np.zeros(8), np.zeros((8, 8)), cfg)


# -- routing ------------------------------------------------------------------

def _routing_case(q_i, q_j, gamma=1, alpha=3.0, p=2.0):
    Q = np.array([q_i, q_j], dtype=float)
    w = compute_weights(Q)
    g = np.array([[0, gamma], [gamma, 0]])
    power = np.array([[0, p], [0, 0]]) * gamma
    a = np.array([[0, alpha], [alpha, 0]])
    return route_commodities(g, power, w, a)


def test_routing_picks_heaviest_commodity():
    rates = _routing_case([3.0, 7.0], [0.0, 0.0])
    assert rates[0, 1, 1] == pytest.approx(math.log(7))
    assert rates[0, 1, 0] == 0.0


def test_routing_zero_weight_idle():
    assert not _routing_case([2.0, 2.0], [2.0, 5.0]).any()


def test_routing_disconnected_idle():
    assert not _routing_case([3.0, 7.0], [0.0, 0.0], gamma=0).any()
