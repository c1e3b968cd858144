"""Label-setting shortest paths and all-or-nothing assignment.

Trees are grown per distinct origin, possibly on several threads, and the
resulting loads are pushed onto edges in a fixed origin order so the output is
bit-identical for any thread count.

Among equal-cost relaxations the parent edge with the smaller index wins.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
from numba import njit, prange

log = logging.getLogger(__name__)

# the bundled TBB is often too old; pick a layer that never warns about it
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

# cap on (origins per batch) * (vertex count) held in memory at once
_BATCH_CELLS = 1 << 18
# widest max/min weight ratio still routed through the bucket queue
_MAX_BUCKET_RATIO = 1024.0


class Unreachable(Exception):
    def __init__(self, origin: int, destination: int, request: int | None = None):
        self.origin, self.destination, self.request = int(origin), int(destination), request
        where = f" (request {request})" if request is not None else ""
        super().__init__(f"no path from {self.origin} to {self.destination}{where}")


@dataclass(frozen=True)
class PathResult:
    edges: tuple[int, ...]
    cost: float


@njit(cache=True)
def _grow_tree(indptr, out_edges, heads, weights, source, targets, dist, parent, order):
    """Dijkstra from ``source``; stops once every vertex in ``targets`` is settled.

    ``heads`` and ``weights`` are in CSR slot order; ``out_edges`` maps a slot
    back to its edge index, which is what ``parent`` records.

    An empty ``targets`` grows the full tree.  Only the first ``count`` entries
    of ``order`` (the settled vertices) carry final labels.
    """
    n = dist.shape[0]
    cap = out_edges.shape[0] + 1
    # lazy 4-ary heap of (key, vertex) pairs; stale entries are skipped on pop
    keys = np.empty(cap)
    verts = np.empty(cap, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    wanted = np.zeros(n, dtype=np.bool_)
    remaining = 0
    for t in targets:
        if not wanted[t]:
            wanted[t] = True
            remaining += 1
    early = remaining > 0
    for v in range(n):
        dist[v] = np.inf
        parent[v] = -1
    dist[source] = 0.0
    keys[0] = 0.0
    verts[0] = source
    size = 1
    count = 0
    while size > 0:
        d = keys[0]
        u = verts[0]
        size -= 1
        if size > 0:
            kk = keys[size]
            vv = verts[size]
            i = 0
            while True:
                c = 4 * i + 1
                if c >= size:
                    break
                best = c
                bk = keys[c]
                for j in range(c + 1, min(c + 4, size)):
                    if keys[j] < bk:
                        bk = keys[j]
                        best = j
                if bk < kk:
                    keys[i] = bk
                    verts[i] = verts[best]
                    i = best
                else:
                    break
            keys[i] = kk
            verts[i] = vv
        if done[u]:
            continue
        done[u] = True
        order[count] = u
        count += 1
        if early and wanted[u]:
            remaining -= 1
            if remaining == 0:
                break
        for k in range(indptr[u], indptr[u + 1]):
            v = heads[k]
            if done[v]:
                continue
            e = out_edges[k]
            nd = d + weights[k]
            if nd < dist[v] or (nd == dist[v] and e < parent[v]):
                dist[v] = nd
                parent[v] = e
                i = size
                size += 1
                while i > 0:
                    p = (i - 1) >> 2
                    if nd < keys[p]:
                        keys[i] = keys[p]
                        verts[i] = verts[p]
                        i = p
                    else:
                        break
                keys[i] = nd
                verts[i] = v
    return count


@njit(cache=True)
def _grow_tree_buckets(indptr, out_edges, heads, weights, source, targets, dist, parent, order, inv_width, nb):
    """Dijkstra with a circular bucket queue; same contract as :func:`_grow_tree`.

    The bucket width is just below the smallest edge weight, so a vertex can
    never improve another one in its own bucket: every entry of the current
    bucket is final, and all candidate parents of a vertex sit in strictly
    earlier buckets.  ``nb`` must exceed ``max(weights) * inv_width + 1``.
    """
    n = dist.shape[0]
    cap = out_edges.shape[0] + 1
    first = np.full(nb, -1, dtype=np.int64)
    ent_v = np.empty(cap, dtype=np.int64)
    ent_next = np.empty(cap, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    wanted = np.zeros(n, dtype=np.bool_)
    remaining = 0
    for t in targets:
        if not wanted[t]:
            wanted[t] = True
            remaining += 1
    early = remaining > 0
    for v in range(n):
        dist[v] = np.inf
        parent[v] = -1
    dist[source] = 0.0
    ent_v[0] = source
    ent_next[0] = -1
    first[0] = 0
    used = 1
    pending = 1
    count = 0
    cur = 0
    while pending > 0:
        slot = cur % nb
        while first[slot] != -1:
            q = first[slot]
            first[slot] = ent_next[q]
            pending -= 1
            u = ent_v[q]
            if done[u] or np.int64(dist[u] * inv_width) != cur:
                continue
            done[u] = True
            order[count] = u
            count += 1
            if early and wanted[u]:
                remaining -= 1
                if remaining == 0:
                    return count
            du = dist[u]
            for k in range(indptr[u], indptr[u + 1]):
                v = heads[k]
                if done[v]:
                    continue
                e = out_edges[k]
                nd = du + weights[k]
                if nd < dist[v] or (nd == dist[v] and e < parent[v]):
                    if nd < dist[v]:
                        b = np.int64(nd * inv_width) % nb
                        ent_v[used] = v
                        ent_next[used] = first[b]
                        first[b] = used
                        used += 1
                        pending += 1
                    dist[v] = nd
                    parent[v] = e
        cur += 1
    return count


@njit(cache=True, parallel=True)
def _grow_forest(indptr, out_edges, heads, weights, sources, tptr, tlist, dist, parent, order, counts, inv_width, nb):
    for i in prange(sources.shape[0]):
        targets = tlist[tptr[i] : tptr[i + 1]]
        if nb > 0:
            counts[i] = _grow_tree_buckets(
                indptr, out_edges, heads, weights, sources[i], targets, dist[i], parent[i], order[i], inv_width, nb,
            )
        else:
            counts[i] = _grow_tree(
                indptr, out_edges, heads, weights, sources[i], targets, dist[i], parent[i], order[i],
            )


@njit(cache=True)
def _push_loads(tails, parent, order, counts, loads, flow):
    # walk each tree leaves-first so a vertex's load is complete before it moves up
    for i in range(loads.shape[0]):
        load = loads[i]
        for k in range(counts[i] - 1, 0, -1):
            v = order[i, k]
            a = load[v]
            if a != 0.0:
                e = parent[i, v]
                flow[e] += a
                load[tails[e]] += a


def _set_threads(threads: int | None) -> None:
    limit = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(limit if threads is None else max(1, min(int(threads), limit)))


def _clean_weights(network, weights) -> np.ndarray:
    w = np.ascontiguousarray(weights, dtype=float)
    if w.shape != (network.edge_count,):
        raise ValueError("weights must have one entry per edge")
    if (w < 0).any():
        log.warning("clamping %d negative edge weights to zero", int((w < 0).sum()))
        w = np.maximum(w, 0.0)
    return w


def _bucket_plan(w: np.ndarray) -> tuple[float, int]:
    """Bucket width and count for the bucket queue, or ``(0, 0)`` to use the heap.

    Buckets pay off when weights are positive and within a modest ratio, which
    keeps both the ring and the number of empty buckets scanned small.
    """
    if w.size == 0:
        return 0.0, 0
    lo, hi = float(w.min()), float(w.max())
    if not lo > 0 or hi > _MAX_BUCKET_RATIO * lo:
        return 0.0, 0
    # the margin keeps rounding from landing a relaxed vertex in the current bucket
    inv_width = 1.0 / (lo * (1.0 - 1e-9))
    return inv_width, int(hi * inv_width) + 2


def _forest(network, w, sources, targets=None, threads=None):
    """Trees for each source; ``targets`` is an optional per-source list of vertices to settle."""
    n = network.vertex_count
    k = len(sources)
    if targets is None:
        tptr = np.zeros(k + 1, dtype=np.int64)
        tlist = np.zeros(0, dtype=np.int64)
    else:
        tptr = np.zeros(k + 1, dtype=np.int64)
        np.cumsum([len(t) for t in targets], out=tptr[1:])
        tlist = np.concatenate([np.asarray(t, dtype=np.int64) for t in targets]) if k else np.zeros(0, np.int64)
    dist = np.empty((k, n))
    parent = np.empty((k, n), dtype=np.int64)
    order = np.empty((k, n), dtype=np.int64)
    counts = np.empty(k, dtype=np.int64)
    inv_width, nb = _bucket_plan(w)
    _set_threads(threads)
    _grow_forest(
        network.indptr, network.out_edges, network.csr_heads, w[network.out_edges],
        np.ascontiguousarray(sources, dtype=np.int64), tptr, tlist, dist, parent, order, counts,
        inv_width, nb,
    )
    return dist, parent, order, counts


def shortest_path_tree(network, weights, origin: int):
    """Distances and parent edges from ``origin``; unreachable vertices get ``inf`` / -1."""
    w = _clean_weights(network, weights)
    dist, parent, _, _ = _forest(network, w, [origin], threads=1)
    return dist[0], parent[0]


def shortest_path(network, weights, origin: int, destination: int) -> PathResult:
    if origin == destination:
        raise ValueError("origin equals destination")
    dist, parent = shortest_path_tree(network, weights, origin)
    if not np.isfinite(dist[destination]):
        raise Unreachable(origin, destination)
    edges = []
    v = destination
    while v != origin:
        e = int(parent[v])
        edges.append(e)
        v = int(network.tails[e])
    edges.reverse()
    w = np.asarray(weights, dtype=float)
    return PathResult(tuple(edges), float(sum(max(w[e], 0.0) for e in edges)))


def route(network, weights, sources, targets, amounts, threads: int | None = None):
    """Send ``amounts[m]`` along a shortest ``sources[m] -> targets[m]`` path.

    Returns the summed edge flows and each item's path cost.  Raises
    :class:`Unreachable` naming the first item without a path.
    """
    w = _clean_weights(network, weights)
    sources = np.asarray(sources, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    amounts = np.asarray(amounts, dtype=float)
    flow = np.zeros(network.edge_count)
    costs = np.empty(len(sources))
    if len(sources) == 0:
        return flow, costs
    unique, inverse = np.unique(sources, return_inverse=True)
    by_origin = np.argsort(inverse, kind="stable")
    batch = max(1, _BATCH_CELLS // max(network.vertex_count, 1))
    for lo in range(0, len(unique), batch):
        hi = min(lo + batch, len(unique))
        start, stop = np.searchsorted(inverse[by_origin], [lo, hi])
        items = by_origin[start:stop]
        rows = inverse[items] - lo
        splits = np.searchsorted(rows, np.arange(1, hi - lo))
        wanted = np.split(targets[items], splits)
        dist, parent, order, counts = _forest(network, w, unique[lo:hi], wanted, threads)
        costs[items] = dist[rows, targets[items]]
        missing = ~np.isfinite(costs[items])
        if missing.any():
            m = int(items[np.flatnonzero(missing)[0]])
            raise Unreachable(sources[m], targets[m], m)
        loads = np.zeros_like(dist)
        np.add.at(loads, (rows, targets[items]), amounts[items])
        _push_loads(network.tails, parent, order, counts, loads, flow)
    return flow, costs


def all_or_nothing(network, weights, requests: Sequence, threads: int | None = None) -> np.ndarray:
    """Each request's full intensity on its current shortest path, summed per edge."""
    sources = [r.origin for r in requests]
    targets = [r.destination for r in requests]
    amounts = [r.intensity for r in requests]
    return route(network, weights, sources, targets, amounts, threads)[0]


def reachable(network, sources, targets) -> np.ndarray:
    """Whether each ``targets[m]`` can be reached from ``sources[m]``."""
    w = np.ones(network.edge_count)
    sources = np.asarray(sources, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    out = np.empty(len(sources), dtype=bool)
    unique, inverse = np.unique(sources, return_inverse=True)
    batch = max(1, _BATCH_CELLS // max(network.vertex_count, 1))
    for lo in range(0, len(unique), batch):
        hi = min(lo + batch, len(unique))
        dist, _, order, counts = _forest(network, w, unique[lo:hi])
        sel = (inverse >= lo) & (inverse < hi)
        out[sel] = np.isfinite(dist[inverse[sel] - lo, targets[sel]])
    return out
