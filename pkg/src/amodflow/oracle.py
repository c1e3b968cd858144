"""Brute-force path-space solver for tiny instances, used to cross-check Frank-Wolfe.

Paths are enumerated explicitly and the objective is minimized over the
product of per-request simplices by projected gradient descent, then polished
by grid search when at most two path-flow coordinates are free.  Never used on
the CLI solve path.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .costs import CostTable, Transform
from .demand import Request, compute_imbalance
from .network import RoadNetwork

MAX_PATHS = 10_000
MAX_MATCHINGS = 5_000


class TooManyPaths(RuntimeError):
    pass


class GridExplosion(RuntimeError):
    pass


def enumerate_simple_paths(
    network: RoadNetwork, origin: int, destination: int, max_hops: int, limit: int = MAX_PATHS
) -> list[tuple[int, ...]]:
    """All simple paths with at most ``max_hops`` edges, in lexicographic edge-index order."""
    if max_hops < 1:
        raise ValueError("max_hops must be at least 1")
    paths: list[tuple[int, ...]] = []
    on_path = {origin}
    stack: list[int] = []

    def walk(u: int) -> None:
        for e in network.out_of(u):
            v = int(network.heads[e])
            if v in on_path:
                continue
            stack.append(int(e))
            if v == destination:
                paths.append(tuple(stack))
                if len(paths) > limit:
                    raise TooManyPaths(f"more than {limit} paths from {origin} to {destination}")
            elif len(stack) < max_hops:
                on_path.add(v)
                walk(v)
                on_path.discard(v)
            stack.pop()

    if origin != destination:
        walk(origin)
    return paths


@dataclass(frozen=True)
class PathFlowProblem:
    paths: tuple[tuple[tuple[int, ...], ...], ...]
    costs: CostTable
    intensities: np.ndarray
    edge_count: int

    @classmethod
    def build(
        cls,
        network: RoadNetwork,
        requests: Sequence[Request],
        max_hops: int | None = None,
        exogenous: np.ndarray | None = None,
        limit: int = MAX_PATHS,
    ) -> "PathFlowProblem":
        hops = network.vertex_count - 1 if max_hops is None else max_hops
        per_request = []
        total = 0
        for r in requests:
            found = enumerate_simple_paths(network, r.origin, r.destination, hops, limit - total)
            total += len(found)
            per_request.append(tuple(found))
        costs = CostTable([e.cost for e in network.edges], exogenous)
        lam = np.array([r.intensity for r in requests], dtype=float)
        return cls(tuple(per_request), costs, lam, network.edge_count)

    @property
    def path_count(self) -> int:
        return sum(len(p) for p in self.paths)

    def incidence(self) -> np.ndarray:
        """Edge-by-path 0/1 matrix, paths ordered request by request."""
        A = np.zeros((self.edge_count, self.path_count))
        col = 0
        for group in self.paths:
            for p in group:
                A[list(p), col] = 1.0
                col += 1
        return A


@dataclass
class OracleResult:
    path_flows: list[np.ndarray]
    edge_flows: np.ndarray
    objective: float


def project_scaled_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = total}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def minimize_on_simplices(f, grad, x0, blocks, totals, tol=1e-8, max_iter=50_000):
    """Projected gradient over a product of scaled simplices with an adaptive step.

    A trial step is accepted when the gradient changes by at most
    ``|z - x| / step`` between ``x`` and ``z`` (a local Lipschitz test, which
    stays reliable near the optimum where objective differences drown in
    rounding).  Stops when the gradient-mapping norm ``|x - P(x - g)|``
    reaches ``tol``.
    """
    def project(z):
        out = np.empty_like(z)
        for (a, b), t in zip(blocks, totals):
            out[a:b] = project_scaled_simplex(z[a:b], t)
        return out

    x = project(np.asarray(x0, dtype=float))
    g = grad(x)
    step = 1.0
    for _ in range(max_iter):
        if np.linalg.norm(x - project(x - g)) <= tol:
            break
        step *= 2.0
        while True:
            z = project(x - step * g)
            gz = grad(z)
            dz = np.linalg.norm(z - x)
            if np.linalg.norm(gz - g) * step <= dz or dz == 0.0:
                break
            step *= 0.5
        if dz == 0.0:
            break
        x, g = z, gz
    return x


def _grid_refine(f, x, blocks, totals, free):
    """Grid search at resolution ``1e-4 * lambda`` over at most two free coordinates.

    A single free coordinate is searched over its whole range; two are searched
    on a +-50-step window around ``x``.  The best point, including ``x``, wins.
    """
    best, fbest = x, f(x)
    if len(free) == 1:
        b = free[0]
        (a, _), t = blocks[b], totals[b]
        for s in np.linspace(0.0, t, 10_001):
            z = x.copy()
            z[a], z[a + 1] = s, t - s
            fz = f(z)
            if fz < fbest:
                best, fbest = z, fz
        return best
    coords = []
    for b in free:
        (a, c), t = blocks[b], totals[b]
        coords.extend((a + i, t) for i in range(c - a - 1))
    # two free coordinates: either two 2-path requests or one 3-path request
    (i, ti), (j, tj) = coords
    h_i, h_j = 1e-4 * ti, 1e-4 * tj
    offsets = np.arange(-50, 51)
    for di in offsets:
        for dj in offsets:
            z = x.copy()
            z[i] += di * h_i
            z[j] += dj * h_j
            for b in free:
                (a, c), t = blocks[b], totals[b]
                z[c - 1] = t - z[a : c - 1].sum()
            if (z < 0).any():
                continue
            fz = f(z)
            if fz < fbest:
                best, fbest = z, fz
    return best


def oracle_solve(problem: PathFlowProblem, transform: Transform = Transform.MARGINAL) -> OracleResult:
    """Minimize the assignment objective over path flows."""
    for m, group in enumerate(problem.paths):
        if not group:
            raise ValueError(f"request {m} has no path")
    A = problem.incidence()
    costs = problem.costs
    blocks, start = [], 0
    for group in problem.paths:
        blocks.append((start, start + len(group)))
        start += len(group)
    totals = list(problem.intensities)

    def f(h):
        return float(np.sum(costs.beckmann(A @ h, transform)))

    def grad(h):
        return A.T @ costs.gradient(A @ h, transform)

    x0 = np.concatenate([np.full(b - a, t / (b - a)) for (a, b), t in zip(blocks, totals)])
    h = minimize_on_simplices(f, grad, x0, blocks, totals)
    free = [k for k, (a, b) in enumerate(blocks) if b - a > 1]
    if 0 < sum(blocks[k][1] - blocks[k][0] - 1 for k in free) <= 2:
        h = _grid_refine(f, h, blocks, totals, free)
    path_flows = [h[a:b].copy() for a, b in blocks]
    return OracleResult(path_flows, A @ h, f(h))


def minimize_dummy_cost(costs: CostTable, R: float, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Minimize ``sum x_e c_e(x_e)`` over ``{x >= 0, sum(x) = R}``."""
    k = len(costs)

    def f(x):
        return float(np.sum(costs.beckmann(x, Transform.MARGINAL)))

    def grad(x):
        return costs.gradient(x, Transform.MARGINAL)

    x0 = np.full(k, R / k)
    return minimize_on_simplices(f, grad, x0, [(0, k)], [R], tol=tol, max_iter=max_iter)


@dataclass
class RebalancedOracleResult:
    objective: float
    matching: np.ndarray
    excess: tuple[int, ...]
    shortage: tuple[int, ...]
    solution: OracleResult


def _matchings(supply: np.ndarray, demand: np.ndarray, step: float):
    """Transport matrices with free entries on a ``step`` grid; the last row and column absorb remainders."""
    S, D = len(supply), len(demand)
    free = [(i, j) for i in range(S - 1) for j in range(D - 1)]
    ranges = []
    for i, j in free:
        top = min(supply[i], demand[j])
        ranges.append(np.arange(0, math.floor(top / step + 1e-9) + 1) * step)
    count = math.prod(len(r) for r in ranges) if ranges else 1
    if count > MAX_MATCHINGS:
        raise GridExplosion(f"{count} candidate matchings exceed the cap of {MAX_MATCHINGS}")
    for values in itertools.product(*ranges):
        T = np.zeros((S, D))
        for (i, j), v in zip(free, values):
            T[i, j] = v
        T[:-1, -1] = supply[:-1] - T[:-1, :-1].sum(axis=1)
        T[-1, :-1] = demand[:-1] - T[:-1, :-1].sum(axis=0)
        T[-1, -1] = supply[-1] - T[-1, :-1].sum()
        tol = 1e-9 * max(supply.sum(), 1.0)
        if (T < -tol).any():
            continue
        yield np.maximum(T, 0.0)


def oracle_rebalanced_amod(
    network: RoadNetwork,
    requests: Sequence[Request],
    max_hops: int | None = None,
    exogenous: np.ndarray | None = None,
) -> RebalancedOracleResult:
    """Best real-edge cost over fully rebalanced flows.

    Rebalancers move the excess at each surplus vertex to the shortage
    vertices; every split on a ``0.25 * min(lambda)`` grid is solved as a
    system-optimal path-flow problem and the cheapest is returned.
    """
    requests = tuple(requests)
    imbalance = compute_imbalance(network.vertex_count, requests)
    excess, shortage = imbalance.excess_vertices, imbalance.shortage_vertices
    if len(excess) > 4 or len(shortage) > 4:
        raise GridExplosion("more than four excess or shortage vertices")
    supply = imbalance.r[list(excess)]
    demand = -imbalance.r[list(shortage)]
    step = 0.25 * min(r.intensity for r in requests)
    best = None
    matchings = _matchings(supply, demand, step) if excess else [np.zeros((0, 0))]
    for T in matchings:
        extra = [
            Request(float(T[a, b]), excess[a], shortage[b])
            for a in range(len(excess))
            for b in range(len(shortage))
            if T[a, b] > 0
        ]
        problem = PathFlowProblem.build(network, requests + tuple(extra), max_hops, exogenous)
        sol = oracle_solve(problem, Transform.MARGINAL)
        if best is None or sol.objective < best.objective:
            best = RebalancedOracleResult(sol.objective, T, excess, shortage, sol)
    return best
