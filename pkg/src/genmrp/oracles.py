"""Slow, independent reference implementations used by tests and ``selfcheck``."""
from __future__ import annotations

from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

from .graph import DualGraph, dual_from_adjacency


def simple_paths(graph: DualGraph, origin: int, destination: int) -> Iterator[tuple[int, ...]]:
    """Every simple link path from origin to destination (DFS enumeration)."""
    if origin == destination:
        yield (origin,)
        return
    stack = [(origin, (origin,))]
    while stack:
        u, path = stack.pop()
        for v in graph.succ[u]:
            if v in path:
                continue
            if v == destination:
                yield path + (v,)
            else:
                stack.append((v, path + (v,)))


def path_cost(costs: Sequence[float], path: Sequence[int]) -> float:
    total = 0.0
    for l in path:
        total += costs[l]
    return total


def brute_shortest(graph: DualGraph, costs, origin: int, destination: int):
    """(cost, lexicographically smallest optimal path) or None."""
    best = None
    for p in simple_paths(graph, origin, destination):
        key = (path_cost(costs, p), p)
        if best is None or key < best:
            best = key
    return best


def pairwise_nondominated(points: Sequence[Sequence[float]]) -> list[int]:
    """O(n^2) loop: keep i unless some j dominates it or an earlier j equals it."""
    keep = []
    for i, p in enumerate(points):
        ok = True
        for j, q in enumerate(points):
            if j == i:
                continue
            if all(a <= b for a, b in zip(q, p)) and any(a < b for a, b in zip(q, p)):
                ok = False
                break
            if j < i and tuple(q) == tuple(p):
                ok = False
                break
        if ok:
            keep.append(i)
    return keep


def brute_pareto_vectors(graph: DualGraph, multi_costs, origin: int, destination: int) -> set:
    mc = np.asarray(multi_costs, dtype=float).tolist()
    vecs = []
    for p in simple_paths(graph, origin, destination):
        v = [0.0] * len(mc[0])
        for l in p:
            v = [a + b for a, b in zip(v, mc[l])]
        vecs.append(tuple(v))
    return {vecs[i] for i in pairwise_nondominated(vecs)}


def set_jaccard(a: Sequence[int], b: Sequence[int], lengths: Sequence[float]) -> float:
    """Length-weighted Jaccard over link sets, by explicit Python sets."""
    sa, sb = set(a), set(b)
    inter = sum(lengths[i] for i in sa & sb)
    union = sum(lengths[i] for i in sa | sb)
    return inter / union


def random_dual(rng: np.random.Generator, n_links: int, p_edge: float = 0.3) -> DualGraph:
    """Random sparse dual graph on ``n_links`` links (no self-loops)."""
    pairs = [(a, b) for a in range(n_links) for b in range(n_links)
             if a != b and rng.random() < p_edge]
    return dual_from_adjacency(n_links, pairs)


def all_pairs_lengths(graph: DualGraph, costs) -> np.ndarray:
    """Floyd-Warshall over link-weighted paths (dist includes both endpoints)."""
    n = graph.n_links
    c = np.asarray(costs, dtype=float)
    d = np.full((n, n), np.inf)
    for i in range(n):
        d[i, i] = c[i]
    for a, b in graph.edges:
        d[a, b] = min(d[a, b], c[a] + c[b])
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :] - c[k])
    return d


def pairs(n: int):
    return combinations(range(n), 2)
