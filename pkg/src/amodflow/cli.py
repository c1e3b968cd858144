"""Batch command line: ``amodflow --mode {tap,amod,amod-loss} --edges E --trips T``.

Writes a solution JSON (``--out``, default stdout) and optionally a trace CSV
(``--trace``).  ``--compare`` instead sweeps every cost model over the
``--gamma-exo`` list and writes a CSV of real-cost ratios against an
exact-BPR optimum.  Failures produce ``{"error": {...}}`` and a nonzero exit.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .costs import DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_LINEARIZE_AT, Bpr, Constant, CostTable, make_piecewise_affine_from_bpr
from .demand import InvalidRequest, Request
from .io import ParseError, dump_json, format_trace, parse_edges, parse_trips
from .loss import LossSolution, solve_amod_loss
from .network import Edge, ExogenousLoad, RoadNetwork
from .paths import Unreachable
from .reduction import DEFAULT_L, AmodSolution, TargetUnreachable, solve_amod
from .solver import AssignmentProblem, Objective, SolverConfig, frank_wolfe

log = logging.getLogger(__name__)

MODES = ("tap", "amod", "amod-loss")
COST_MODELS = ("bpr", "bpr-linearized", "piecewise-affine", "free-flow")
COMPARE_HEADER = ("mode", "cost_model", "gamma_exo", "real_cost", "opt_real_cost", "ratio", "iterations", "final_gap")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    edges: Path
    trips: Path
    mode: str = "tap"
    cost_model: str = "bpr-linearized"
    objective: str = "system-optimum"
    alpha: float = DEFAULT_ALPHA
    beta: int = DEFAULT_BETA
    gamma_exo: tuple[float, ...] = (0.8,)
    L: float | None = None
    target_delta: float | None = None
    loss_cost: float | None = None
    epsilon: float | None = None
    max_iters: int = 100
    rel_gap: float = 1e-4
    threads: int | None = None
    out: Path | None = None
    trace: Path | None = None
    compare: bool = False

    def validated(self) -> "RunConfig":
        """Check cross-field rules; fills the default ``L`` in amod modes."""
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.cost_model not in COST_MODELS:
            raise ConfigError(f"unknown cost model {self.cost_model!r}")
        try:
            Objective(self.objective)
        except ValueError:
            raise ConfigError(f"unknown objective {self.objective!r}") from None
        if self.L is not None and self.target_delta is not None:
            raise ConfigError("give --dummy-L or --target-delta, not both")
        if self.mode == "tap" and (self.L is not None or self.target_delta is not None):
            raise ConfigError("--dummy-L and --target-delta apply to amod modes only")
        if self.mode != "tap" and self.objective != Objective.SYSTEM_OPTIMUM.value:
            raise ConfigError("amod modes always optimize the system objective")
        if self.mode == "amod-loss":
            if self.loss_cost is None:
                raise ConfigError("--loss-cost is required in amod-loss mode")
            if self.target_delta is not None:
                raise ConfigError("--target-delta is not supported in amod-loss mode")
            if self.compare:
                raise ConfigError("--compare supports tap and amod modes")
        elif self.loss_cost is not None or self.epsilon is not None:
            raise ConfigError("--loss-cost and --epsilon apply to amod-loss mode only")
        if not self.compare and len(self.gamma_exo) != 1:
            raise ConfigError("several --gamma-exo values need --compare")
        if any(g < 0 for g in self.gamma_exo):
            raise ConfigError("--gamma-exo must be nonnegative")
        if self.L is not None and not self.L > 0:
            raise ConfigError("--dummy-L must be positive")
        if self.target_delta is not None and not 0 < self.target_delta < 1:
            raise ConfigError("--target-delta must lie in (0, 1)")
        if self.loss_cost is not None and self.loss_cost < 0:
            raise ConfigError("--loss-cost must be nonnegative")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("--epsilon must be positive")
        if self.max_iters < 1 or self.rel_gap < 0:
            raise ConfigError("--max-iters must be >= 1 and --rel-gap >= 0")
        if self.alpha < 0 or self.beta < 1:
            raise ConfigError("--alpha must be >= 0 and --beta >= 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if self.mode != "tap" and self.L is None and self.target_delta is None:
            return replace(self, L=DEFAULT_L)
        return self

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(max_iterations=self.max_iters, rel_gap_tolerance=self.rel_gap, threads=self.threads)


def apply_cost_model(network: RoadNetwork, model: str) -> RoadNetwork:
    """Replace each BPR edge cost by the surrogate named ``model``."""
    def convert(edge: Edge):
        fn = edge.cost
        if model == "bpr":
            return replace(fn, linearize_at=None)
        if model == "bpr-linearized":
            return replace(fn, linearize_at=DEFAULT_LINEARIZE_AT)
        if model == "piecewise-affine":
            return make_piecewise_affine_from_bpr(fn.free_flow, fn.capacity, fn.alpha, fn.beta)
        if model == "free-flow":
            return Constant(fn.free_flow)
        raise ConfigError(f"unknown cost model {model!r}")

    return network.with_costs(convert)


@dataclass
class Outcome:
    """Mode-independent view of a finished solve."""

    real_flows: np.ndarray
    real_cost: float
    iterations: int
    final_gap: float
    termination: str
    trace: list
    dummy_cost: float | None = None
    delta: float | None = None
    L: float | None = None
    shortfalls: list = field(default_factory=list)
    losses: list | None = None
    loss_total_cost: float | None = None


def _dummy_linearization(model: str) -> float | None:
    return None if model == "bpr" else DEFAULT_LINEARIZE_AT


def solve(config: RunConfig, reference: RoadNetwork, requests: Sequence[Request], model: str,
          gamma: float, solver: SolverConfig | None = None) -> Outcome:
    """Run one solve of ``config.mode`` with ``model`` costs; real cost is always exact BPR."""
    solver = solver or config.solver
    network = apply_cost_model(reference, model)
    exo = ExogenousLoad(gamma=gamma).per_edge(reference)
    lin = _dummy_linearization(model)
    kw = dict(alpha=config.alpha, beta=config.beta, linearize_at=lin)
    if config.mode == "tap":
        exact_costs = CostTable([e.cost for e in reference.edges], exo)
        problem = AssignmentProblem(network, requests, exogenous=exo, objective=Objective(config.objective))
        result = frank_wolfe(problem, solver, monitor=lambda x: {"real_cost": exact_costs.total_cost(x)})
        return Outcome(
            real_flows=result.flows,
            real_cost=exact_costs.total_cost(result.flows),
            iterations=result.iterations,
            final_gap=result.final_gap,
            termination=result.termination.value,
            trace=result.trace,
        )
    if config.mode == "amod":
        sol: AmodSolution = solve_amod(
            network, requests, L=config.L, target_delta=config.target_delta, config=solver,
            exogenous=exo, reference=reference, **kw,
        )
        red = sol.reduced
        shortfalls = [
            {"vertex": d.vertex, "capacity": d.capacity, "flow": float(x), "shortfall": float(s)}
            for d, x, s in zip(red.dummy_edges, sol.dummy_flows, sol.shortfall)
        ]
        return Outcome(
            real_flows=sol.real_flows, real_cost=sol.real_cost, iterations=sol.iterations,
            final_gap=sol.final_gap, termination=sol.termination.value, trace=sol.trace,
            dummy_cost=sol.dummy_cost, delta=sol.delta, L=sol.L, shortfalls=shortfalls,
        )
    loss: LossSolution = solve_amod_loss(
        network, requests, config.loss_cost, solver, epsilon=config.epsilon, L=config.L,
        exogenous=exo, reference=reference, **kw,
    )
    g = loss.graph
    flows = loss.flows[g.end_index]
    shortfalls = [
        {"vertex": int(g.expanded.tails[e]), "capacity": float(k), "flow": float(x), "shortfall": float(x - k)}
        for e, k, x in zip(g.end_index, g.end_capacity, flows)
    ]
    losses = [
        {"request": m, "origin": r.origin, "destination": r.destination, "demand": r.intensity,
         "idle_fraction": float(rho), "loss": float(l)}
        for m, (r, rho, l) in enumerate(zip(requests, loss.idle_fraction, loss.losses))
    ]
    return Outcome(
        real_flows=loss.real_flows, real_cost=loss.real_cost, iterations=loss.iterations,
        final_gap=loss.final_gap, termination=loss.termination.value, trace=loss.trace,
        dummy_cost=loss.dummy_cost, delta=loss.delta, L=g.L, shortfalls=shortfalls,
        losses=losses, loss_total_cost=loss.loss_total_cost,
    )


def solution_document(config: RunConfig, reference: RoadNetwork, requests: Sequence[Request],
                      outcome: Outcome, elapsed_ms: float) -> dict:
    exo = ExogenousLoad(gamma=config.gamma_exo[0]).per_edge(reference)
    times = CostTable([e.cost for e in reference.edges], exo).travel_time(outcome.real_flows)
    metrics = {"C_r": outcome.real_cost}
    if config.mode != "tap":
        metrics.update(C_d=outcome.dummy_cost, delta=outcome.delta, L=outcome.L)
    if outcome.loss_total_cost is not None:
        metrics.update(total_loss=float(sum(l["loss"] for l in outcome.losses)),
                       loss_cost=outcome.loss_total_cost)
    metrics.update(iterations=outcome.iterations, final_gap=outcome.final_gap, termination=outcome.termination)
    doc = {
        "metadata": {
            "version": __version__,
            "mode": config.mode,
            "cost_model": config.cost_model,
            "objective": config.objective,
            "alpha": config.alpha,
            "beta": config.beta,
            "gamma_exo": config.gamma_exo[0],
            "L": config.L,
            "target_delta": config.target_delta,
            "loss_cost": config.loss_cost,
            "epsilon": config.epsilon,
            "max_iters": config.max_iters,
            "rel_gap": config.rel_gap,
            "vertices": reference.vertex_count,
            "edges": reference.edge_count,
            "requests": len(requests),
        },
        "metrics": metrics,
        "edges": [
            {"index": e, "tail": int(reference.tails[e]), "head": int(reference.heads[e]),
             "flow": float(outcome.real_flows[e]), "travel_time": float(times[e])}
            for e in range(reference.edge_count)
        ],
    }
    if config.mode != "tap":
        doc["shortfalls"] = outcome.shortfalls
    if outcome.losses is not None:
        doc["losses"] = outcome.losses
    doc["timing"] = {"elapsed_ms": elapsed_ms, "threads": config.threads}
    return doc


def emit_comparison(config: RunConfig, reference: RoadNetwork, requests: Sequence[Request]) -> str:
    """CSV of exact-BPR real cost per (cost model, gamma) relative to a tight exact-BPR optimum."""
    tight = SolverConfig(
        max_iterations=10 * config.max_iters,
        rel_gap_tolerance=config.rel_gap / 100,
        threads=config.threads,
    )
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COMPARE_HEADER)
    for gamma in config.gamma_exo:
        opt = solve(config, reference, requests, "bpr", gamma, tight).real_cost
        for model in COST_MODELS:
            got = solve(config, reference, requests, model, gamma)
            writer.writerow([config.mode, model, repr(gamma), repr(got.real_cost), repr(opt),
                             repr(got.real_cost / opt), got.iterations, repr(got.final_gap)])
    return buf.getvalue()


def _write(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load(config: RunConfig):
    try:
        edges_text = Path(config.edges).read_text(encoding="utf-8")
        trips_text = Path(config.trips).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read input: {exc}") from None
    try:
        network = parse_edges(edges_text, config.alpha, config.beta)
    except ParseError as exc:
        raise ParseError(f"{config.edges}: {exc}") from None
    try:
        requests = parse_trips(trips_text)
    except ParseError as exc:
        raise ParseError(f"{config.trips}: {exc}") from None
    return network, requests


_EXIT = {ConfigError: 2, ParseError: 3, InvalidRequest: 4, Unreachable: 4, TargetUnreachable: 5}


def run(config: RunConfig) -> int:
    """Execute ``config``; returns the process exit status."""
    start = time.perf_counter()
    try:
        config = config.validated()
        reference, requests = _load(config)
        if config.compare:
            _write(config.out, emit_comparison(config, reference, requests))
            return 0
        outcome = solve(config, reference, requests, config.cost_model, config.gamma_exo[0])
        doc = solution_document(config, reference, requests, outcome, 1e3 * (time.perf_counter() - start))
        _write(config.out, dump_json(doc))
        if config.trace is not None:
            _write(config.trace, format_trace(outcome.trace))
        return 0
    except (ConfigError, ParseError, InvalidRequest, Unreachable, TargetUnreachable, ValueError) as exc:
        status = next((code for cls, code in _EXIT.items() if isinstance(exc, cls)), 1)
        error = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_status": status}}
        text = dump_json(error)
        sys.stderr.write(text)
        if config.out is not None:
            try:
                Path(config.out).write_text(text, encoding="utf-8")
            except OSError:
                pass
        return status


def _gammas(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid gamma list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amodflow", description=__doc__.splitlines()[0])
    p.add_argument("--mode", choices=MODES, default="tap")
    p.add_argument("--edges", type=Path, required=True, help="network file: tail head capacity free_flow_time")
    p.add_argument("--trips", type=Path, required=True, help="demand file: origin destination demand")
    p.add_argument("--cost", choices=COST_MODELS, default="bpr-linearized", dest="cost_model")
    p.add_argument("--objective", choices=[o.value for o in Objective], default="system-optimum")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--beta", type=int, default=DEFAULT_BETA)
    p.add_argument("--gamma-exo", type=_gammas, default=(0.8,), help="comma-separated list in --compare mode")
    p.add_argument("--dummy-L", type=float, dest="L", help=f"dummy-edge free-flow time (default {DEFAULT_L:g})")
    p.add_argument("--target-delta", type=float)
    p.add_argument("--loss-cost", type=float, help="per-unit cost of an unserved request")
    p.add_argument("--epsilon", type=float, help="cost of auxiliary edges in amod-loss mode")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--rel-gap", type=float, default=1e-4)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--trace", type=Path)
    p.add_argument("--compare", action="store_true", help="sweep cost models and gamma values")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    values = vars(args)
    values.pop("verbose")
    return run(RunConfig(**values))


if __name__ == "__main__":
    sys.exit(main())
