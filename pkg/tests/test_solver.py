import numpy as np
import pytest

from amodflow import fixtures as fx
from amodflow.costs import Bpr
from amodflow.demand import InvalidRequest, Request
from amodflow.network import Edge, ExogenousLoad, RoadNetwork
from amodflow.paths import all_or_nothing
from amodflow.solver import (
    AssignmentProblem,
    Objective,
    SolverConfig,
    Termination,
    frank_wolfe,
    gradient_weights,
    objective,
    relative_gap,
)

from conftest import expected_divergence

# Independent dense-grid minima over the path-flow simplex (2,000,001 points
# for the two-route case, a 3001^2 grid plus local refinement for three routes).
ASYMMETRIC_SO = 3.2713398458744565
ASYMMETRIC_SO_SPLIT = 1.207166
ASYMMETRIC_UE = 2.7150680358252974
THREE_ROUTE_SO = 7.702449305686818
THREE_ROUTE_UE = 7.135013833364873


def _instance(name):
    return next(i for i in fx.tiny_tap_instances() if i.name == name)


def test_single_edge_converges_immediately():
    net = RoadNetwork(2, [Edge(0, 1, Bpr(1.0, 1.0))])
    res = frank_wolfe(AssignmentProblem(net, [Request(5.0, 0, 1)]))
    assert res.iterations == 1
    assert res.termination is Termination.GAP_REACHED
    assert res.final_gap == 0.0
    np.testing.assert_array_equal(res.flows, [5.0])


def test_parallel_edges_split_evenly(parallel):
    res = frank_wolfe(AssignmentProblem(parallel.network, parallel.requests), SolverConfig(max_iterations=200))
    np.testing.assert_allclose(res.flows, [1.0, 1.0], atol=1e-6)
    assert res.objective == pytest.approx(2.3, abs=1e-4)


@pytest.mark.parametrize(
    "objective_kind, expected",
    [(Objective.SYSTEM_OPTIMUM, ASYMMETRIC_SO), (Objective.USER_EQUILIBRIUM, ASYMMETRIC_UE)],
)
def test_asymmetric_parallel_matches_grid(objective_kind, expected):
    inst = _instance("asymmetric-parallel")
    res = frank_wolfe(AssignmentProblem(inst.network, inst.requests, objective=objective_kind),
                      SolverConfig(max_iterations=1000))
    assert res.objective == pytest.approx(expected, rel=1e-6)
    if objective_kind is Objective.SYSTEM_OPTIMUM:
        assert res.flows[0] == pytest.approx(ASYMMETRIC_SO_SPLIT, abs=1e-4)


@pytest.mark.parametrize(
    "objective_kind, expected",
    [(Objective.SYSTEM_OPTIMUM, THREE_ROUTE_SO), (Objective.USER_EQUILIBRIUM, THREE_ROUTE_UE)],
)
def test_three_route_matches_grid(objective_kind, expected):
    inst = _instance("three-route")
    res = frank_wolfe(AssignmentProblem(inst.network, inst.requests, objective=objective_kind),
                      SolverConfig(max_iterations=1000))
    assert res.objective == pytest.approx(expected, rel=5e-3)


def test_user_equilibrium_equalizes_used_route_times():
    inst = _instance("asymmetric-parallel")
    p = AssignmentProblem(inst.network, inst.requests, objective=Objective.USER_EQUILIBRIUM)
    res = frank_wolfe(p, SolverConfig(max_iterations=1000, rel_gap_tolerance=1e-9))
    t = p.costs.travel_time(res.flows)
    assert t[0] == pytest.approx(t[1], rel=1e-6)


@pytest.mark.parametrize("inst", fx.tiny_tap_instances(), ids=lambda i: i.name)
@pytest.mark.parametrize("objective_kind", list(Objective))
def test_iterates_feasible_and_descending(inst, objective_kind):
    p = AssignmentProblem(inst.network, inst.requests, objective=objective_kind)
    total = p.total_demand
    want = expected_divergence(inst.network.vertex_count, inst.requests)
    seen = []

    def check(k, x):
        assert (x >= 0).all()
        np.testing.assert_allclose(inst.network.divergence(x), want, atol=1e-9 * total)
        w = gradient_weights(p, x)
        y = all_or_nothing(inst.network, w, inst.requests)
        # the all-or-nothing value bounds the weighted cost of every feasible flow
        assert w @ y <= w @ x + 1e-12 * abs(w @ x)
        seen.append(k)

    res = frank_wolfe(p, SolverConfig(max_iterations=300), on_iterate=check)
    assert len(seen) == res.iterations == len(res.trace)
    values = [r.objective for r in res.trace]
    for a, b in zip(values, values[1:]):
        assert b <= a + 1e-9 * abs(a)
    assert all(r.relative_gap >= 0 for r in res.trace)
    if res.termination is Termination.GAP_REACHED:
        assert res.final_gap <= 1e-4
    else:
        assert res.iterations == 300


def test_system_objective_equals_total_cost():
    inst = fx.congested()
    p = AssignmentProblem(inst.network, inst.requests)
    x = frank_wolfe(p, SolverConfig(max_iterations=20)).flows
    direct = float(np.sum(x * p.costs.travel_time(x)))
    assert objective(p, x) == pytest.approx(direct, rel=1e-12)


def test_relative_gap_properties():
    w = np.array([1.0, 2.0])
    assert relative_gap(np.array([1.0, 0.0]), np.array([1.0, 0.0]), w) == 0.0
    assert relative_gap(np.array([0.0, 1.0]), np.array([1.0, 0.0]), w) == pytest.approx(0.5)
    assert relative_gap(np.zeros(2), np.zeros(2), w) == 0.0


def test_exogenous_load_raises_cost(parallel):
    base = frank_wolfe(AssignmentProblem(parallel.network, parallel.requests))
    loaded = frank_wolfe(AssignmentProblem(parallel.network, parallel.requests, exogenous=ExogenousLoad(gamma=0.8)))
    assert loaded.objective > base.objective
    np.testing.assert_allclose(loaded.flows, [1.0, 1.0], atol=1e-6)


def test_trace_records_iteration_state(parallel):
    res = frank_wolfe(AssignmentProblem(parallel.network, parallel.requests))
    assert [r.iteration for r in res.trace] == list(range(res.iterations))
    assert res.trace[-1].alpha == 0.0
    assert res.trace[0].objective == pytest.approx(2.0 * (1 + 0.15 * 2.0**4))
    assert all(r.elapsed_ms >= 0 for r in res.trace)
    quiet = frank_wolfe(AssignmentProblem(parallel.network, parallel.requests), SolverConfig(trace_enabled=False))
    assert quiet.trace == []


def test_warm_start_from_optimum_stops_at_once(parallel):
    p = AssignmentProblem(parallel.network, parallel.requests)
    res = frank_wolfe(p, x0=np.array([1.0, 1.0]))
    assert res.iterations == 1 and res.termination is Termination.GAP_REACHED


def test_problem_validation():
    net = RoadNetwork(3, [Edge(0, 1, Bpr(1.0, 1.0))])
    with pytest.raises(InvalidRequest, match="unreachable"):
        AssignmentProblem(net, [Request(1.0, 0, 2)])
    with pytest.raises(ValueError):
        SolverConfig(max_iterations=0)
