"""Shortest-path and alternative-route search over a dual graph.

Costs live on links (dual vertices). A path's cost is the sum of the costs of
every link on it, origin and destination included. Among equal-cost optima
the lexicographically smallest link-id sequence wins; this is exact when
costs are strictly positive and sums are exactly representable (e.g.
integers).
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import DualGraph, Route, make_route

INF = math.inf


class SearchError(ValueError):
    pass


def _check_costs(graph: DualGraph, costs) -> list[float]:
    c = np.asarray(costs, dtype=float)
    if c.shape != (graph.n_links,):
        raise SearchError(f"cost vector has shape {c.shape}, expected ({graph.n_links},)")
    if not np.all(np.isfinite(c)):
        raise SearchError("cost vector contains non-finite entries")
    if np.any(c < 0):
        bad = int(np.argmax(c < 0))
        raise SearchError(f"negative cost {c[bad]} on link {bad}")
    return c.tolist()


def _check_link(graph: DualGraph, link: int, what: str) -> None:
    if not 0 <= link < graph.n_links:
        raise SearchError(f"{what} link {link} out of range [0, {graph.n_links})")


def _walk(ptr: list[int], x: int) -> list[int]:
    out = []
    while x != -1:
        out.append(x)
        x = ptr[x]
    return out


def _prefix(pred: list[int], x: int) -> list[int]:
    p = _walk(pred, x)
    p.reverse()
    return p


def dijkstra_path(graph: DualGraph, costs, origin: int, destination: int) -> tuple[float, list[int]] | None:
    """Unidirectional Dijkstra; returns ``(cost, links)`` or None if unreachable."""
    c = _check_costs(graph, costs)
    _check_link(graph, origin, "origin")
    _check_link(graph, destination, "destination")
    return _dijkstra(graph.succ, c, origin, destination)


def _dijkstra(succ, c: list[float], origin: int, destination: int, allowed=None):
    n = len(succ)
    dist = [INF] * n
    pred = [-1] * n
    done = bytearray(n)
    dist[origin] = c[origin]
    heap = [(c[origin], origin)]
    push, pop = heapq.heappush, heapq.heappop
    while heap:
        d, u = pop(heap)
        if done[u]:
            continue
        done[u] = 1
        if u == destination:
            return d, _prefix(pred, u)
        for v in succ[u]:
            if done[v] or (allowed is not None and not allowed[v]):
                continue
            nd = d + c[v]
            dv = dist[v]
            if nd < dv:
                dist[v] = nd
                pred[v] = u
                push(heap, (nd, v))
            elif nd == dv and _prefix(pred, u) < _prefix(pred, pred[v]):
                pred[v] = u
    return None


def dijkstra_all(succ, c: Sequence[float], origin: int, bound: float = INF) -> list[float]:
    """One-to-all path costs (origin cost included), stopping past ``bound``."""
    n = len(succ)
    dist = [INF] * n
    done = bytearray(n)
    dist[origin] = c[origin]
    heap = [(c[origin], origin)]
    push, pop = heapq.heappush, heapq.heappop
    while heap:
        d, u = pop(heap)
        if done[u]:
            continue
        if d > bound:
            break
        done[u] = 1
        for v in succ[u]:
            nd = d + c[v]
            if nd < dist[v]:
                dist[v] = nd
                push(heap, (nd, v))
    return dist


def bidirectional_dijkstra(graph: DualGraph, costs, origin: int, destination: int) -> Route | None:
    """Minimum-cost route from ``origin`` to ``destination`` (both inclusive)."""
    c = _check_costs(graph, costs)
    _check_link(graph, origin, "origin")
    _check_link(graph, destination, "destination")
    res = _bidirectional(graph.succ, graph.pred, c, origin, destination)
    if res is None:
        return None
    return make_route(graph, res[1], check=False)


def bidirectional_cost(graph: DualGraph, costs, origin: int, destination: int) -> tuple[float, list[int]] | None:
    c = _check_costs(graph, costs)
    _check_link(graph, origin, "origin")
    _check_link(graph, destination, "destination")
    return _bidirectional(graph.succ, graph.pred, c, origin, destination)


def _bidirectional(succ, pred, c: list[float], o: int, t: int):
    if o == t:
        return c[o], [o]
    n = len(succ)
    # forward key: cost from o to x, x included; backward key: cost after x up to t
    gf = [INF] * n
    gb = [INF] * n
    pf = [-1] * n
    sb = [-1] * n
    df = bytearray(n)
    db = bytearray(n)
    gf[o] = c[o]
    gb[t] = 0.0
    hf = [(c[o], o)]
    hb = [(0.0, t)]
    push, pop = heapq.heappush, heapq.heappop
    best = INF
    best_path: list[int] | None = None

    def offer(cost: float, u: int, v: int) -> None:
        # candidate: prefix(u) then suffix(v); v == -1 means prefix(u) reaches t
        nonlocal best, best_path
        if cost > best:
            return
        path = _prefix(pf, u) + (_walk(sb, v) if v != -1 else [])
        if cost < best or path < best_path:
            best, best_path = cost, path

    while True:
        while hf and df[hf[0][1]]:
            pop(hf)
        while hb and db[hb[0][1]]:
            pop(hb)
        tf = hf[0][0] if hf else INF
        tb = hb[0][0] if hb else INF
        if tf == INF and tb == INF:
            break
        if tf + tb > best:
            break
        if tf <= tb:
            d, u = pop(hf)
            df[u] = 1
            if u == t:
                offer(d, u, -1)
            for v in succ[u]:
                nd = d + c[v]
                if db[v]:
                    offer(nd + gb[v], u, v)
                if df[v]:
                    continue
                gv = gf[v]
                if nd < gv:
                    gf[v] = nd
                    pf[v] = u
                    push(hf, (nd, v))
                elif nd == gv and _prefix(pf, u) < _prefix(pf, pf[v]):
                    pf[v] = u
        else:
            d, v = pop(hb)
            db[v] = 1
            nd = d + c[v]
            for u in pred[v]:
                if df[u]:
                    offer(gf[u] + nd, u, v)
                if db[u]:
                    continue
                gu = gb[u]
                if nd < gu:
                    gb[u] = nd
                    sb[u] = v
                    push(hb, (nd, u))
                elif nd == gu and _walk(sb, v) < _walk(sb, sb[u]):
                    sb[u] = v
    if best_path is None:
        return None
    return best, best_path


def route_cost(costs, links: Sequence[int]) -> float:
    """Sum of link costs in path order (the same order every search uses)."""
    total = 0.0
    for l in links:
        total += costs[l]
    return total


def penalty_alternatives(
    graph: DualGraph,
    costs,
    origin: int,
    destination: int,
    k: int = 3,
    penalty_factor: float = 1.4,
    max_rounds: int | None = None,
) -> list[Route]:
    """Up to ``k`` distinct routes by repeatedly penalising used links.

    After each search the working cost of every link on the found route is
    multiplied by ``penalty_factor``. A route identical to an earlier one is
    dropped; searching continues for at most ``max_rounds`` rounds
    (default ``3 * k``).
    """
    if k < 1:
        raise SearchError("k must be >= 1")
    if not penalty_factor > 1:
        raise SearchError("penalty_factor must be > 1")
    work = _check_costs(graph, costs)
    _check_link(graph, origin, "origin")
    _check_link(graph, destination, "destination")
    rounds = 3 * k if max_rounds is None else max_rounds
    found: list[Route] = []
    seen: set[tuple[int, ...]] = set()
    for _ in range(rounds):
        res = _bidirectional(graph.succ, graph.pred, work, origin, destination)
        if res is None:
            break
        links = tuple(res[1])
        if links not in seen:
            seen.add(links)
            found.append(make_route(graph, links, check=False))
            if len(found) == k:
                break
        for l in set(links):
            work[l] *= penalty_factor
    return found


def dominance_filter(points, sense="min") -> list[int]:
    """Indices of non-dominated points, in input order.

    ``sense`` is ``"min"``, ``"max"`` or a per-dimension sequence of +1
    (minimise) / -1 (maximise). Of several identical points only the first
    survives.
    """
    p = np.asarray(points, dtype=float)
    if p.size == 0:
        return []
    if p.ndim != 2:
        raise ValueError("points must be a 2-d array-like of equal-length vectors")
    if isinstance(sense, str):
        sign = {"min": 1.0, "max": -1.0}[sense]
        p = p * sign
    else:
        p = p * np.asarray(sense, dtype=float)
    le = np.all(p[:, None, :] <= p[None, :, :], axis=2)  # le[j, i]: p_j <= p_i everywhere
    lt = np.any(p[:, None, :] < p[None, :, :], axis=2)
    dominated = np.any(le & lt, axis=0)
    eq = le & le.T
    earlier_dup = np.any(np.tril(eq, k=-1), axis=1)
    return [i for i in range(len(p)) if not dominated[i] and not earlier_dup[i]]


@dataclass
class ParetoResult:
    routes: list[Route]
    vectors: list[tuple[float, ...]]
    approximate: bool = False
    capped_nodes: int = 0


def mosp(
    graph: DualGraph,
    multi_costs,
    origin: int,
    destination: int,
    max_labels: int = 512,
) -> ParetoResult:
    """Multi-objective label-setting search (lexicographic label order).

    Returns every Pareto-optimal route by total objective vector; a route is
    reported once per distinct vector. When some link hits ``max_labels``
    non-dominated labels, new labels there are discarded and the result is
    flagged ``approximate``.
    """
    mc = np.asarray(multi_costs, dtype=float)
    if mc.ndim != 2 or mc.shape[0] != graph.n_links:
        raise SearchError(f"multi-cost shape {mc.shape}, expected ({graph.n_links}, d)")
    if mc.shape[1] < 2:
        raise SearchError("mosp needs d >= 2 objectives")
    if not np.all(np.isfinite(mc)) or np.any(mc < 0):
        raise SearchError("multi-costs must be finite and non-negative")
    _check_link(graph, origin, "origin")
    _check_link(graph, destination, "destination")
    rows = [tuple(r) for r in mc.tolist()]
    d = mc.shape[1]

    # label: (vector, link, parent label id); alive flags by id
    vecs: list[tuple[float, ...]] = []
    at: list[int] = []
    parent: list[int] = []
    alive: list[bool] = []
    bag: list[list[int]] = [[] for _ in range(graph.n_links)]
    capped: set[int] = set()

    def new_label(vec, link, par) -> int:
        vecs.append(vec)
        at.append(link)
        parent.append(par)
        alive.append(True)
        return len(vecs) - 1

    def try_insert(vec, link, par):
        labels = bag[link]
        survivors = []
        for lid in labels:
            w = vecs[lid]
            if all(w[i] <= vec[i] for i in range(d)):
                return None  # dominated by or equal to an existing label
        for lid in labels:
            w = vecs[lid]
            if all(vec[i] <= w[i] for i in range(d)):
                alive[lid] = False
            else:
                survivors.append(lid)
        if len(survivors) >= max_labels:
            capped.add(link)
            bag[link] = survivors
            return None
        lid = new_label(vec, link, par)
        survivors.append(lid)
        bag[link] = survivors
        return lid

    heap: list = []
    first = try_insert(rows[origin], origin, -1)
    heapq.heappush(heap, (rows[origin], first))
    while heap:
        vec, lid = heapq.heappop(heap)
        if not alive[lid]:
            continue
        u = at[lid]
        if u == destination:
            continue
        for v in graph.succ[u]:
            cv = rows[v]
            nv = tuple(vec[i] + cv[i] for i in range(d))
            nid = try_insert(nv, v, lid)
            if nid is not None:
                heapq.heappush(heap, (nv, nid))

    final = sorted((vecs[lid], lid) for lid in bag[destination] if alive[lid])
    routes, out_vecs = [], []
    for vec, lid in final:
        path = []
        x = lid
        while x != -1:
            path.append(at[x])
            x = parent[x]
        path.reverse()
        routes.append(make_route(graph, path, check=False))
        out_vecs.append(vec)
    return ParetoResult(routes, out_vecs, approximate=bool(capped), capped_nodes=len(capped))
