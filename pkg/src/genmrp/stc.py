"""Skeleton-to-capillary extraction of a request-level sub-network.

1. r_* (free-flow fastest route) plus randomized-cost Dijkstra candidates.
2. Per candidate: local-optimal proportion l, similarity s and detour d vs r_*.
3. Candidates with l >= l0, s <= s0 and d <= d0 join r_* in the skeleton.
4. Short paths of strategy-eligible links (high heat, familiar, highway)
   hanging between skeleton links are added as capillaries.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .city import HIGHWAY
from .graph import DualGraph, Route, make_route
from .search import bidirectional_cost

SKELETON = "skeleton"
HEAT = "heat"
FAMILIAR = "familiar"
HIGHWAY_STRATEGY = "highway"
STRATEGIES = (HEAT, FAMILIAR, HIGHWAY_STRATEGY)  # also the tagging priority
TAGS = (SKELETON, "capillary-heat", "capillary-familiar", "capillary-highway")
_TAG_OF = {HEAT: TAGS[1], FAMILIAR: TAGS[2], HIGHWAY_STRATEGY: TAGS[3]}

# scenario code (commute, tourism, emergency) -> active strategies
DEFAULT_SCENARIO_STRATEGIES: dict[int, tuple[str, ...]] = {0: STRATEGIES, 1: STRATEGIES, 2: STRATEGIES}

_RTOL = 1e-9


class StcError(ValueError):
    pass


@dataclass(frozen=True)
class StcThresholds:
    l0: float = 0.7
    s0: float = 0.95
    d0: float = 1.5

    def __post_init__(self):
        if not 0 < self.l0 <= 1:
            raise StcError(f"l0 must be in (0, 1], got {self.l0}")
        if not 0 < self.s0 <= 1:
            raise StcError(f"s0 must be in (0, 1], got {self.s0}")
        if not self.d0 >= 1:
            raise StcError(f"d0 must be >= 1, got {self.d0}")

    def keeps(self, l: float, s: float, d: float) -> bool:
        return l >= self.l0 and s <= self.s0 and d <= self.d0


# Thresholds that keep every candidate. StcThresholds forbids l0 = 0, so the
# no-filter case is spelled with a plain namespace object.
@dataclass(frozen=True)
class _Open:
    l0: float = 0.0
    s0: float = 1.0
    d0: float = float("inf")

    def keeps(self, l, s, d) -> bool:
        return True


NO_FILTER = _Open()


@dataclass(frozen=True)
class StcConfig:
    thresholds: StcThresholds = StcThresholds()
    n_candidates: int = 30
    hop_limit: int = 8
    heat_quantile: float = 0.9
    heat_threshold: float | None = None  # absolute; overrides the quantile
    highway_classes: tuple[int, ...] = (HIGHWAY,)
    scenario_strategies: Mapping[int, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_SCENARIO_STRATEGIES))

    def strategies_for(self, scenario: int | None) -> tuple[str, ...]:
        if scenario is None:
            return STRATEGIES
        try:
            return tuple(self.scenario_strategies[int(scenario)])
        except KeyError:
            raise StcError(f"no expansion strategy configured for scenario {scenario}") from None


@dataclass
class SubNetwork:
    """Global link ids (sorted), one provenance tag per link, and the induced
    dual graph whose local index i is global link ``links[i]``."""

    links: np.ndarray
    tags: list[str]
    graph: DualGraph
    origin: int  # local ids
    destination: int
    r_star: tuple[int, ...]  # global ids

    @property
    def n_links(self) -> int:
        return len(self.links)

    def local(self, global_ids: Sequence[int]) -> list[int]:
        idx = np.searchsorted(self.links, global_ids)
        if np.any(idx >= len(self.links)) or np.any(self.links[np.minimum(idx, len(self.links) - 1)] != global_ids):
            raise StcError("link not in sub-network")
        return idx.tolist()

    def tag_counts(self) -> dict[str, int]:
        return {t: self.tags.count(t) for t in TAGS}

    def to_json(self) -> dict:
        return {"links": self.links.tolist(), "tags": self.tags, "r_star": list(self.r_star)}


def _subnetwork(graph: DualGraph, tag_of: dict[int, str], origin: int, destination: int,
                r_star: Sequence[int]) -> SubNetwork:
    links = np.array(sorted(tag_of), dtype=np.int64)
    sub, keep = graph.subgraph(links)
    pos = {int(g): i for i, g in enumerate(keep)}
    return SubNetwork(keep, [tag_of[int(g)] for g in keep], sub, pos[origin], pos[destination], tuple(r_star))


# -- step 1 --------------------------------------------------------------------

def _csr(graph: DualGraph, costs: np.ndarray, template: csr_matrix | None = None) -> csr_matrix:
    """Dual adjacency weighted by the cost of the link being entered."""
    if template is None:
        e = graph.edges.reshape(-1, 2)
        n = graph.n_links
        template = csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    A = template.copy()
    # a zero weight would be dropped as a missing edge
    A.data = np.maximum(np.asarray(costs, dtype=float)[A.indices], 1e-300)
    return A


def _path(pred: np.ndarray, destination: int) -> list[int]:
    out = [destination]
    while pred[out[-1]] >= 0:
        out.append(int(pred[out[-1]]))
    out.reverse()
    return out


def shortest_route(graph: DualGraph, origin: int, destination: int, base_costs=None) -> Route:
    c = graph.fftime_s if base_costs is None else np.asarray(base_costs, dtype=float)
    res = bidirectional_cost(graph, c, origin, destination)
    if res is None:
        raise StcError(f"destination {destination} unreachable from {origin}")
    return make_route(graph, res[1], check=False)


def sample_candidate_routes(graph: DualGraph, origin: int, destination: int, n: int, seed: int = 0,
                            base_costs=None) -> list[Route]:
    """r_* first, then up to n-1 distinct routes that are optimal under the
    base costs scaled by fresh per-link factors from U[1, 3]."""
    if n < 1:
        raise StcError("n must be >= 1")
    c = graph.fftime_s if base_costs is None else np.asarray(base_costs, dtype=float)
    r_star = shortest_route(graph, origin, destination, c)
    out = [r_star]
    seen = {r_star.links}
    rng = np.random.default_rng(seed)
    A = _csr(graph, c)
    for _ in range(n - 1):
        _, pred = dijkstra(_csr(graph, c * rng.uniform(1.0, 3.0, graph.n_links), A), indices=origin,
                           return_predecessors=True)
        if pred[destination] < 0 and destination != origin:
            raise StcError(f"destination {destination} unreachable from {origin}")
        links = tuple(_path(pred, destination))
        if links not in seen:
            seen.add(links)
            out.append(make_route(graph, links, check=False))
    return out


# -- step 2 --------------------------------------------------------------------

def _length(graph: DualGraph, links: Sequence[int]) -> float:
    return float(graph.length_m[list(links)].sum())


def similarity_to(route: Sequence[int], r_star: Sequence[int], graph: DualGraph) -> float:
    shared = set(route) & set(r_star)
    return _length(graph, shared) / _length(graph, set(r_star))


def detour(route: Sequence[int], r_star: Sequence[int], graph: DualGraph) -> float:
    return _length(graph, route) / _length(graph, r_star)


def local_optimal_proportion(route: Sequence[int], graph: DualGraph, base_costs, need: float | None = None,
                             adjacency: csr_matrix | None = None) -> float:
    """Length share of the longest contiguous sub-route that is a shortest
    path between its own end links.

    Sub-paths of shortest paths are shortest paths, so the optimal windows
    can be scanned with two pointers and one bounded Dijkstra per start.
    With ``need`` set the scan may stop as soon as the answer is known to be
    above or below it; the returned value is then only a bound on that side.
    """
    route = [int(x) for x in route]
    if not route:
        raise StcError("empty route")
    c = np.asarray(base_costs, dtype=float)
    lens = graph.length_m[route]
    total = float(lens.sum())
    if total <= 0:
        return 1.0
    n = len(route)
    cl = np.concatenate([[0.0], np.cumsum(lens)])
    cc = np.concatenate([[0.0], np.cumsum(c[route])])
    A = adjacency if adjacency is not None else _csr(graph, c)
    best = 0.0
    j = 0  # window is route[i..j], inclusive
    for i in range(n):
        if cl[n] - cl[i] <= best:
            break
        if need is not None:
            if best >= need * total:
                break
            if cl[n] - cl[i] < need * total:
                break
        j = max(j, i)
        if j + 1 < n:
            dist = dijkstra(A, indices=route[i], limit=(cc[n] - cc[i + 1]) * (1 + _RTOL) + 1e-12)
            while j + 1 < n:
                sub = cc[j + 2] - cc[i + 1]  # cost after leaving route[i]
                if sub <= dist[route[j + 1]] * (1 + _RTOL) + 1e-12:
                    j += 1
                else:
                    break
        best = max(best, cl[j + 1] - cl[i])
    return best / total


def stc_coefficients(route, r_star, graph: DualGraph, base_costs=None) -> tuple[float, float, float]:
    links = list(getattr(route, "links", route))
    star = list(getattr(r_star, "links", r_star))
    if not links or not star:
        raise StcError("empty route")
    c = graph.fftime_s if base_costs is None else base_costs
    return (local_optimal_proportion(links, graph, c), similarity_to(links, star, graph),
            detour(links, star, graph))


# -- step 3 --------------------------------------------------------------------

def build_skeleton(candidates: Sequence, r_star, graph: DualGraph, thresholds=StcThresholds(),
                   base_costs=None, coefficients: Sequence[tuple[float, float, float]] | None = None,
                   origin: int | None = None, destination: int | None = None) -> SubNetwork:
    """r_* plus every candidate passing all three thresholds.

    ``coefficients`` (one (l, s, d) per candidate) skips the computation.
    Otherwise s and d are checked first and l only as far as needed.
    """
    if not candidates:
        raise StcError("no candidate routes")
    star = tuple(int(x) for x in getattr(r_star, "links", r_star))
    c = graph.fftime_s if base_costs is None else np.asarray(base_costs, dtype=float)
    A = None
    tag_of = dict.fromkeys(star, SKELETON)
    for i, cand in enumerate(candidates):
        links = tuple(int(x) for x in getattr(cand, "links", cand))
        if links == star:
            continue
        if coefficients is not None:
            keep = thresholds.keeps(*coefficients[i])
        else:
            s = similarity_to(links, star, graph)
            d = detour(links, star, graph)
            keep = s <= thresholds.s0 and d <= thresholds.d0
            if keep and thresholds.l0 > 0:
                if A is None:
                    A = _csr(graph, c)
                keep = local_optimal_proportion(links, graph, c, need=thresholds.l0, adjacency=A) >= thresholds.l0
        if keep:
            for x in links:
                tag_of[x] = SKELETON
    o = star[0] if origin is None else origin
    t = star[-1] if destination is None else destination
    return _subnetwork(graph, tag_of, o, t, star)


# -- step 4 --------------------------------------------------------------------

def strategy_masks(graph: DualGraph, heat, familiar, strategies: Sequence[str], cfg: StcConfig = StcConfig()
                   ) -> dict[str, np.ndarray]:
    masks = {}
    for s in strategies:
        if s == HEAT:
            h = np.asarray(heat, dtype=float)
            thr = cfg.heat_threshold if cfg.heat_threshold is not None else float(np.quantile(h, cfg.heat_quantile))
            masks[s] = h >= thr
        elif s == FAMILIAR:
            masks[s] = np.asarray(familiar, dtype=bool)
        elif s == HIGHWAY_STRATEGY:
            masks[s] = np.isin(graph.road_class, cfg.highway_classes)
        else:
            raise StcError(f"unknown expansion strategy {s!r}")
    return masks


def _hops(adj, seeds: list[int], eligible: np.ndarray, limit: int) -> np.ndarray:
    """Hop count from the skeleton through eligible links (1 = adjacent)."""
    n = len(eligible)
    h = np.full(n, limit + 1, dtype=np.int64)
    q = deque()
    for x in seeds:
        if h[x] > 1:
            h[x] = 1
            q.append(x)
    while q:
        u = q.popleft()
        if h[u] >= limit:
            continue
        for v in adj[u]:
            if eligible[v] and h[v] > h[u] + 1:
                h[v] = h[u] + 1
                q.append(v)
    return h


def expand_capillary(sub: SubNetwork, graph: DualGraph, heat=None, familiar=None,
                     strategies: Sequence[str] = STRATEGIES, cfg: StcConfig = StcConfig(),
                     masks: Mapping[str, np.ndarray] | None = None) -> SubNetwork:
    """Add every path of at most ``hop_limit`` strategy-eligible links that
    leaves the skeleton and re-enters it. Strategies are applied in
    ``STRATEGIES`` order; a link is tagged by the first one that adds it."""
    if masks is None:
        masks = strategy_masks(graph, heat, familiar, [s for s in STRATEGIES if s in strategies], cfg)
    in_sk = np.zeros(graph.n_links, dtype=bool)
    in_sk[sub.links] = True
    sk = sub.links.tolist()
    tag_of = dict(zip(sk, sub.tags))
    H = cfg.hop_limit
    for s in STRATEGIES:
        if s not in strategies or s not in masks:
            continue
        eligible = masks[s] & ~in_sk
        if not eligible.any():
            continue
        fwd_seeds = [v for u in sk for v in graph.succ[u] if eligible[v]]
        bwd_seeds = [v for u in sk for v in graph.pred[u] if eligible[v]]
        if not fwd_seeds or not bwd_seeds:
            continue
        a = _hops(graph.succ, fwd_seeds, eligible, H)
        b = _hops(graph.pred, bwd_seeds, eligible, H)
        for x in np.flatnonzero(eligible & (a + b - 1 <= H)).tolist():
            tag_of.setdefault(x, _TAG_OF[s])
    if len(tag_of) == len(sk):
        return sub
    o, t = int(sub.links[sub.origin]), int(sub.links[sub.destination])
    return _subnetwork(graph, tag_of, o, t, sub.r_star)


# -- whole pipeline ------------------------------------------------------------

def extract_subnetwork(graph: DualGraph, origin: int, destination: int, heat=None, familiar=None,
                       scenario: int | None = None, cfg: StcConfig = StcConfig(), seed: int = 0,
                       base_costs=None) -> SubNetwork:
    c = graph.fftime_s if base_costs is None else np.asarray(base_costs, dtype=float)
    cands = sample_candidate_routes(graph, origin, destination, cfg.n_candidates, seed, c)
    sk = build_skeleton(cands, cands[0], graph, cfg.thresholds, c, origin=origin, destination=destination)
    strategies = cfg.strategies_for(scenario)
    if heat is None:
        strategies = tuple(s for s in strategies if s != HEAT)
    if familiar is None:
        strategies = tuple(s for s in strategies if s != FAMILIAR)
    return expand_capillary(sk, graph, heat, familiar, strategies, cfg)


def summary_line(sub: SubNetwork, n_total: int) -> str:
    red = 100.0 * (1.0 - sub.n_links / n_total) if n_total else 0.0
    return f"input links {n_total}, output links {sub.n_links}, reduction {red:.1f}%"


def save_subnetwork(path: str | Path, sub: SubNetwork, n_total: int) -> None:
    Path(path).write_text(json.dumps({**sub.to_json(), "n_input_links": n_total,
                                      "tag_counts": sub.tag_counts()}))
