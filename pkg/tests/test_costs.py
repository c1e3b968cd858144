import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amodflow.costs import (
    Bpr,
    Constant,
    CostTable,
    PiecewiseAffine,
    Transform,
    beckmann_term,
    edge_travel_time,
    exact,
    make_piecewise_affine_from_bpr,
    marginal_travel_time,
    nominal_capacity,
    shifted_cost,
)


def test_bpr_at_capacity_is_115_percent_of_free_flow():
    assert edge_travel_time(Bpr(10.0, 100.0), 100.0) == pytest.approx(11.5)
    assert edge_travel_time(Bpr(1.0, 1.0), 0.0) == 1.0


def test_marginal_cost_at_capacity():
    # c + x c' = 1.15 + 1 * 4 * 0.15
    assert marginal_travel_time(Bpr(1.0, 1.0), 1.0) == pytest.approx(1.75)


def test_bpr_integral_matches_quadrature():
    fn = Bpr(2.0, 3.0)
    xs = np.linspace(0.0, 7.0, 200_001)
    numeric = np.trapezoid([fn.travel_time(x) for x in xs[::100]], xs[::100])
    assert fn.integral(7.0) == pytest.approx(numeric, rel=1e-6)
    assert fn.integral(7.0) == pytest.approx(2.0 * (7.0 + 0.15 * 7.0**5 / (5 * 3.0**4)))


def test_system_objective_is_flow_times_cost():
    fn = Bpr(1.5, 2.0)
    assert beckmann_term(fn, 3.0, Transform.MARGINAL) == pytest.approx(3.0 * fn.travel_time(3.0))
    assert beckmann_term(fn, 3.0, Transform.RAW) == pytest.approx(fn.integral(3.0))


def test_linearization_is_continuous_and_tangent():
    lin = Bpr(1.0, 2.0, linearize_at=5.0)
    raw = Bpr(1.0, 2.0)
    t = 10.0
    assert lin.travel_time(t) == pytest.approx(raw.travel_time(t))
    assert lin.derivative(t + 1e-9) == pytest.approx(raw.derivative(t), rel=1e-9)
    assert lin.travel_time(t + 4.0) == pytest.approx(raw.travel_time(t) + 4.0 * raw.derivative(t))
    assert lin.travel_time(t + 4.0) < raw.travel_time(t + 4.0)
    assert lin.integral(t) == pytest.approx(raw.integral(t))


def test_exact_drops_linearization():
    assert exact(Bpr(1.0, 2.0, linearize_at=5.0)) == Bpr(1.0, 2.0)
    assert exact(Constant(3.0)) == Constant(3.0)


def test_shift_moves_evaluation_point_but_integral_starts_at_zero():
    fn = Bpr(1.0, 1.0)
    s = shifted_cost(fn, 0.8)
    assert s.travel_time(0.2) == pytest.approx(fn.travel_time(1.0))
    assert s.integral(0.0) == 0.0
    assert s.integral(0.2) == pytest.approx(fn.integral(1.0) - fn.integral(0.8))
    with pytest.raises(ValueError):
        shifted_cost(fn, -1.0)


def test_piecewise_affine_from_bpr_matches_at_three_capacities():
    pw = make_piecewise_affine_from_bpr(2.0, 4.0)
    bpr = Bpr(2.0, 4.0)
    assert pw.travel_time(4.0) == pytest.approx(2.0)
    assert pw.travel_time(12.0) == pytest.approx(bpr.travel_time(12.0))
    assert pw.travel_time(1.0) == 2.0


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        Bpr(0.0, 1.0)
    with pytest.raises(ValueError):
        Bpr(1.0, -1.0)
    with pytest.raises(ValueError):
        Bpr(1.0, 1.0, beta=2.5)
    with pytest.raises(ValueError):
        Constant(-1.0)
    with pytest.raises(ValueError):
        PiecewiseAffine(1.0, -1.0, 1.0)


def test_nominal_capacity():
    assert nominal_capacity(Bpr(1.0, 7.0)) == 7.0
    assert nominal_capacity(PiecewiseAffine(1.0, 3.0, 0.5)) == 3.0
    assert nominal_capacity(Constant(1.0)) == 0.0


functions = st.one_of(
    st.builds(
        Bpr,
        st.floats(0.1, 10.0),
        st.floats(0.1, 10.0),
        st.floats(0.0, 1.0),
        st.integers(1, 5),
        st.one_of(st.none(), st.floats(1.0, 6.0)),
    ),
    st.builds(Constant, st.floats(0.0, 10.0)),
    st.builds(PiecewiseAffine, st.floats(0.0, 10.0), st.floats(0.0, 10.0), st.floats(0.0, 3.0)),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(functions, st.floats(0.0, 30.0), st.floats(0.0, 5.0)), min_size=1, max_size=8))
def test_table_matches_scalar_functions(rows):
    fns = [r[0] for r in rows]
    x = np.array([r[1] for r in rows])
    shift = np.array([r[2] for r in rows])
    table = CostTable(fns, shift)
    c, dc, integral = table.evaluate(x)
    for e, fn in enumerate(fns):
        s = shifted_cost(fn, shift[e])
        assert c[e] == pytest.approx(s.travel_time(x[e]), rel=1e-12, abs=1e-12)
        assert dc[e] == pytest.approx(s.derivative(x[e]), rel=1e-12, abs=1e-12)
        assert integral[e] == pytest.approx(s.integral(x[e]), rel=1e-9, abs=1e-9)
    np.testing.assert_allclose(table.beckmann(x, Transform.MARGINAL), x * c)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0.5, 3.0), st.floats(0.5, 3.0)), min_size=2, max_size=6),
    st.data(),
)
def test_line_search_matches_grid_minimum(params, data):
    fns = [Bpr(p, k) for p, k in params]
    table = CostTable(fns)
    n = len(fns)
    x = np.array(data.draw(st.lists(st.floats(0.0, 4.0), min_size=n, max_size=n)))
    y = np.array(data.draw(st.lists(st.floats(0.0, 4.0), min_size=n, max_size=n)))
    for transform in Transform:
        a = table.line_search(x, y, transform)
        grid = np.linspace(0.0, 1.0, 2001)
        values = [np.sum(table.beckmann(x + g * (y - x), transform)) for g in grid]
        best = min(values)
        got = np.sum(table.beckmann(x + a * (y - x), transform))
        assert 0.0 <= a <= 1.0
        assert got <= best + 1e-9 * max(1.0, abs(best))


def test_line_search_endpoints():
    table = CostTable([Bpr(1.0, 1.0), Bpr(1.0, 1.0)])
    x = np.array([2.0, 0.0])
    assert table.line_search(x, x, Transform.MARGINAL) == 0.0
    # moving toward a worse point is rejected
    assert table.line_search(np.array([1.0, 1.0]), x, Transform.MARGINAL) == 0.0
    a = table.line_search(x, np.array([0.0, 2.0]), Transform.MARGINAL)
    assert a == pytest.approx(0.5, abs=1e-12)


def test_integral_of_marginal_equals_total_cost():
    fn = Bpr(1.3, 2.2)
    xs = np.linspace(0.0, 4.0, 40_001)
    numeric = np.trapezoid([fn.marginal(x) for x in xs[::10]], xs[::10])
    assert numeric == pytest.approx(4.0 * fn.travel_time(4.0), rel=1e-6)
    assert math.isclose(beckmann_term(fn, 4.0, Transform.MARGINAL), 4.0 * fn.travel_time(4.0))
