import numpy as np
import pytest

from amodflow import fixtures as fx
from amodflow.costs import Bpr
from amodflow.demand import InvalidRequest, Request
from amodflow.network import Edge, EdgeClass, RoadNetwork
from amodflow.reduction import (
    TargetUnreachable,
    build_reduction,
    delta_unfulfilled,
    extract_real_flows,
    solve_amod,
    theorem_L,
    tune_L,
)
from amodflow.solver import SolverConfig, Termination

from conftest import expected_divergence


def test_figure2_dummy_edges_and_extra_request(fig2):
    red = build_reduction(fig2.network, fig2.requests, L=96.0)
    n = fig2.network.vertex_count
    assert red.sink == n
    assert [(d.vertex, d.capacity) for d in red.dummy_edges] == [(3, 1.0), (4, 2.0)]
    for d in red.dummy_edges:
        edge = red.expanded.edges[d.edge]
        assert (edge.tail, edge.head, edge.edge_class) == (d.vertex, n, EdgeClass.DUMMY)
        assert edge.cost.free_flow == 96.0 and edge.cost.capacity == d.capacity
    assert red.extended_requests[len(fig2.requests):] == (Request(3.0, 2, n),)
    assert red.total_rebalancing == 3.0
    assert red.origin_edge_map.tolist() == list(range(fig2.network.edge_count)) + [-1, -1]


def test_balanced_demand_adds_only_isolated_sink(cycle):
    net = cycle.network
    reqs = [Request(1.0, 0, 1), Request(1.0, 1, 0)]
    red = build_reduction(net, reqs, L=10.0)
    assert red.dummy_edges == ()
    assert red.extended_requests == tuple(reqs)
    assert red.expanded.vertex_count == net.vertex_count + 1
    assert red.expanded.edge_count == net.edge_count
    assert red.total_rebalancing == 0.0


def test_single_request_reduction(cycle):
    red = build_reduction(cycle.network, [Request(2.0, 0, 1)], L=5.0)
    assert [(d.vertex, d.capacity) for d in red.dummy_edges] == [(0, 2.0)]
    assert red.extended_requests[-1] == Request(2.0, 1, red.sink)


def test_dummy_cost_is_linearized_by_default(fig2):
    red = build_reduction(fig2.network, fig2.requests, L=1.0)
    cost = red.expanded.edges[red.dummy_edges[0].edge].cost
    assert cost.linearize_at == 5.0
    assert build_reduction(fig2.network, fig2.requests, L=1.0, linearize_at=None).expanded.edges[
        red.dummy_edges[0].edge].cost.linearize_at is None
    with pytest.raises(ValueError):
        build_reduction(fig2.network, fig2.requests, L=0.0)


@pytest.mark.parametrize(
    "flows, expected",
    [((1.0, 2.0), 0.0), ((0.5, 2.0), 0.5 / 6), ((0.0, 0.0), 0.5), ((2.0, 0.0), 0.5), ((0.0, 4.0), 0.5)],
)
def test_delta_unfulfilled(flows, expected):
    assert delta_unfulfilled(flows, (1.0, 2.0), 3.0) == pytest.approx(expected)


def test_delta_is_zero_without_rebalancing():
    assert delta_unfulfilled([], [], 0.0) == 0.0


def test_theorem_L():
    assert theorem_L(100.0, 3.0, 2, 0.1) == pytest.approx(2777.78, abs=5e-3)
    assert theorem_L(2.4 * 3.0 / 2, 3.0, 2, 1.0) == pytest.approx(1.0)
    assert theorem_L(200.0, 3.0, 2, 0.1) == pytest.approx(2 * theorem_L(100.0, 3.0, 2, 0.1))
    assert theorem_L(100.0, 3.0, 2, 0.05) == pytest.approx(4 * theorem_L(100.0, 3.0, 2, 0.1))
    with pytest.raises(ValueError):
        theorem_L(100.0, 3.0, 2, 0.0)


def test_extract_real_flows(fig2):
    red = build_reduction(fig2.network, fig2.requests, L=96.0)
    E = fig2.network.edge_count
    assert not extract_real_flows(red, np.zeros(E + 2)).any()
    only_dummy = np.zeros(E + 2)
    only_dummy[E:] = (1.0, 2.0)
    assert not extract_real_flows(red, only_dummy).any()
    x = np.arange(E + 2, dtype=float)
    np.testing.assert_array_equal(extract_real_flows(red, x), np.arange(E, dtype=float))


def test_cycle_rebalancer_returns_home(cycle):
    sol = solve_amod(cycle.network, cycle.requests, L=96.0, config=SolverConfig(max_iterations=500))
    np.testing.assert_allclose(sol.real_flows, [1.0, 1.0], atol=1e-6)
    np.testing.assert_allclose(sol.dummy_flows, [1.0], atol=1e-6)
    assert sol.real_cost == pytest.approx(2.3, rel=1e-6)
    assert sol.delta == pytest.approx(0.0, abs=1e-6)


def test_balanced_instance_needs_no_dummy_edges():
    net = RoadNetwork(3, [Edge(0, 1, Bpr(1.0, 1.0)), Edge(1, 0, Bpr(2.0, 1.0)), Edge(1, 2, Bpr(1.0, 1.0))])
    sol = solve_amod(net, [Request(1.0, 0, 1), Request(1.0, 1, 0)], L=50.0)
    assert sol.delta == 0.0 and sol.dummy_cost == 0.0 and sol.dummy_flows.size == 0
    assert sol.real_cost == pytest.approx(1.15 + 2.3)


def test_figure2_large_L_delivers_rebalancers(fig2):
    sol = solve_amod(fig2.network, fig2.requests, L=192.0, config=SolverConfig(max_iterations=1000))
    assert sol.delta <= 0.01
    np.testing.assert_allclose(sol.dummy_flows, [1.0, 2.0], atol=0.03)
    np.testing.assert_allclose(sol.shortfall, sol.dummy_flows - [1.0, 2.0])
    # passengers plus rebalancers conserve flow on the original graph
    prof_div = expected_divergence(fig2.network.vertex_count, fig2.requests)
    div = fig2.network.divergence(sol.real_flows)
    red = sol.reduced
    reb = np.zeros_like(div)
    reb[2] += 3.0
    for d, f in zip(red.dummy_edges, sol.dummy_flows):
        reb[d.vertex] -= f
    np.testing.assert_allclose(div, prof_div + reb, atol=1e-9)


def test_trace_reports_scored_metrics(cycle):
    # each record scores the iterate entering its pass; a gap stop makes that the final one
    sol = solve_amod(cycle.network, cycle.requests, L=48.0, config=SolverConfig(max_iterations=500))
    assert sol.termination is Termination.GAP_REACHED
    last = sol.trace[-1]
    assert last.alpha == 0.0
    assert last.real_cost == pytest.approx(sol.real_cost, rel=1e-12)
    assert last.dummy_cost == pytest.approx(sol.dummy_cost, rel=1e-12)
    assert last.delta == pytest.approx(sol.delta, abs=1e-12)
    assert all(r.real_cost is not None and r.delta is not None for r in sol.trace)


def test_default_L_and_exclusive_arguments(cycle):
    assert solve_amod(cycle.network, cycle.requests, config=SolverConfig(max_iterations=5)).L == 96.0
    with pytest.raises(ValueError):
        solve_amod(cycle.network, cycle.requests, L=5.0, target_delta=0.1)
    with pytest.raises(InvalidRequest):
        solve_amod(cycle.network, [Request(1.0, 0, 0)], L=5.0)


def test_delta_shrinks_as_L_grows():
    inst = fx.unbalanced20()
    cfg = SolverConfig(max_iterations=300)
    deltas = [solve_amod(inst.network, inst.requests, L=L, config=cfg).delta for L in (3.0, 48.0)]
    assert deltas[1] < deltas[0]


def _tuning_instance():
    net = fx.grid_network(2, 5, seed=4, free_flow=(1.0, 3.0), capacity=(0.3, 0.8))
    return net, fx.random_requests(net.vertex_count, 8, seed=1)


def test_tune_L_brackets_target():
    net, reqs = _tuning_instance()
    cfg = SolverConfig(max_iterations=500)
    assert solve_amod(net, reqs, L=3.0, config=cfg).delta > 0.05
    assert solve_amod(net, reqs, L=48.0, config=cfg).delta <= 0.05
    L, sol = tune_L(net, reqs, 0.05, cfg, L_bounds=(3.0, 48.0))
    assert 3.0 < L <= 48.0
    assert sol.delta <= 0.05 and sol.L == L


def test_tune_L_returns_low_end_when_already_met(cycle):
    L, sol = tune_L(cycle.network, cycle.requests, 0.05, SolverConfig(max_iterations=300), L_bounds=(3.0, 192.0))
    assert L == 3.0 and sol.delta <= 0.05


def test_tune_L_unreachable_target():
    net, reqs = _tuning_instance()
    with pytest.raises(TargetUnreachable):
        tune_L(net, reqs, 1e-9, SolverConfig(max_iterations=100), L_bounds=(0.01, 0.1))


def test_solve_amod_with_target_delta(cycle):
    sol = solve_amod(cycle.network, cycle.requests, target_delta=0.05, config=SolverConfig(max_iterations=200))
    assert sol.delta <= 0.05
