"""Plain-text network and trip formats, solution JSON and trace CSV."""
from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, Sequence

from .costs import DEFAULT_ALPHA, DEFAULT_BETA, Bpr
from .demand import Request
from .network import Edge, RoadNetwork
from .solver import IterationRecord

TRACE_HEADER = ("iter", "alpha", "objective", "real_cost", "dummy_cost", "delta", "rel_gap", "elapsed_ms")


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"{message} at line {line}")


def _rows(text: str, width: int):
    """Yield ``(line_number, fields)`` for non-blank lines, comments stripped."""
    for number, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        fields = body.split()
        if len(fields) != width:
            raise ParseError(f"expected {width} fields, found {len(fields)}", number)
        yield number, fields


def _vertex(token: str, line: int) -> int:
    try:
        v = int(token)
    except ValueError:
        raise ParseError(f"invalid vertex id {token!r}", line) from None
    if v < 0:
        raise ParseError(f"negative vertex id {v}", line)
    return v


def _number(token: str, what: str, line: int) -> float:
    try:
        x = float(token)
    except ValueError:
        raise ParseError(f"invalid {what} {token!r}", line) from None
    if not math.isfinite(x):
        raise ParseError(f"non-finite {what}", line)
    if x <= 0:
        raise ParseError(f"nonpositive {what}", line)
    return x


def parse_edges(text: str, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA) -> RoadNetwork:
    """Read ``tail head capacity free_flow_time`` lines into a BPR network."""
    edges = []
    top = -1
    for line, (t, h, cap, ff) in _rows(text, 4):
        tail, head = _vertex(t, line), _vertex(h, line)
        kappa = _number(cap, "capacity", line)
        phi = _number(ff, "free-flow time", line)
        edges.append(Edge(tail, head, Bpr(phi, kappa, alpha, beta)))
        top = max(top, tail, head)
    if not edges:
        raise ParseError("no edges found")
    return RoadNetwork(top + 1, edges)


def format_edges(network: RoadNetwork) -> str:
    lines = ["# tail head capacity free_flow_time"]
    for e in network.edges:
        fn = e.cost
        if not isinstance(fn, Bpr):
            raise TypeError("only BPR edges can be written")
        lines.append(f"{e.tail} {e.head} {fn.capacity:.17g} {fn.free_flow:.17g}")
    return "\n".join(lines) + "\n"


def parse_trips(text: str) -> list[Request]:
    """Read ``origin destination demand`` lines."""
    out = []
    for line, (o, d, lam) in _rows(text, 3):
        origin, dest = _vertex(o, line), _vertex(d, line)
        if origin == dest:
            raise ParseError("origin equals destination", line)
        out.append(Request(_number(lam, "demand", line), origin, dest))
    return out


def format_trips(requests: Iterable[Request]) -> str:
    lines = ["# origin destination demand"]
    lines += [f"{r.origin} {r.destination} {r.intensity:.17g}" for r in requests]
    return "\n".join(lines) + "\n"


def _cell(value) -> str:
    return "" if value is None else repr(float(value))


def format_trace(trace: Sequence[IterationRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for rec in trace:
        writer.writerow([
            rec.iteration, _cell(rec.alpha), _cell(rec.objective), _cell(rec.real_cost),
            _cell(rec.dummy_cost), _cell(rec.delta), _cell(rec.relative_gap), _cell(rec.elapsed_ms),
        ])
    return buf.getvalue()


def dump_json(obj) -> str:
    """Deterministic JSON; floats keep their shortest round-tripping repr."""
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def strip_timing(obj: dict) -> dict:
    return {k: v for k, v in obj.items() if k != "timing"}
