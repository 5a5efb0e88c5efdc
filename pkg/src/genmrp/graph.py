"""Primal road graph, its dual (link-level) graph, and routes.

Links are primal road segments. A dual edge ``(a, b)`` exists when segment
``a`` ends at the intersection where segment ``b`` starts, and carries the
maneuver needed to go from ``a`` to ``b``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

STRAIGHT, LEFT, RIGHT, U_TURN = 0, 1, 2, 3
MANEUVER_NAMES = ("straight", "left", "right", "u_turn")

STRAIGHT_MAX_DEG = 30.0
TURN_MAX_DEG = 150.0

NODE_KEYS = {"id", "x", "y"}
EDGE_KEYS = {"id", "from", "to", "length_m", "road_class", "fftime_s", "toll"}


class GraphError(ValueError):
    """Raised for malformed graph input."""


@dataclass(frozen=True)
class PrimalGraph:
    """Validated intersection/segment graph. Arrays are indexed by dense ids."""

    xy: np.ndarray  # (n_nodes, 2)
    src: np.ndarray  # (n_edges,) int
    dst: np.ndarray
    length_m: np.ndarray
    road_class: np.ndarray  # int codes
    fftime_s: np.ndarray
    toll: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.xy)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n_nodes)

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.n_nodes)


def build_primal(nodes: Iterable[dict], edges: Iterable[dict]) -> PrimalGraph:
    """Validate node/edge records and freeze them into a :class:`PrimalGraph`.

    Node and edge ids must each be dense in ``[0, count)``; records may arrive
    in any order.
    """
    nodes = list(nodes)
    edges = list(edges)
    xy = np.zeros((len(nodes), 2))
    seen = set()
    for rec in nodes:
        nid = int(rec["id"])
        if not 0 <= nid < len(nodes) or nid in seen:
            raise GraphError(f"node ids must be unique and dense, got {nid}")
        seen.add(nid)
        xy[nid] = (float(rec["x"]), float(rec["y"]))

    m = len(edges)
    src = np.zeros(m, dtype=np.int64)
    dst = np.zeros(m, dtype=np.int64)
    length = np.zeros(m)
    road_class = np.zeros(m, dtype=np.int64)
    fftime = np.zeros(m)
    toll = np.zeros(m)
    seen = set()
    for rec in edges:
        eid = int(rec["id"])
        if not 0 <= eid < m or eid in seen:
            raise GraphError(f"edge ids must be unique and dense, got {eid}")
        seen.add(eid)
        a, b = int(rec["from"]), int(rec["to"])
        for end in (a, b):
            if not 0 <= end < len(nodes):
                raise GraphError(f"edge {eid}: unknown node {end}")
        if a == b:
            raise GraphError(f"edge {eid}: self-loop at node {a}")
        ln = float(rec["length_m"])
        if not ln > 0 or not math.isfinite(ln):
            raise GraphError(f"edge {eid}: length must be positive, got {ln}")
        src[eid], dst[eid], length[eid] = a, b, ln
        road_class[eid] = int(rec.get("road_class", 0))
        fftime[eid] = float(rec.get("fftime_s", ln / 13.9))
        toll[eid] = float(rec.get("toll", 0.0))
    for arr in (xy, length, fftime, toll):
        arr.setflags(write=False)
    return PrimalGraph(xy, src, dst, length, road_class, fftime, toll)


def load_primal(path: str | Path) -> PrimalGraph:
    """Read a JSON-lines graph: node records (id, x, y) then edge records."""
    nodes, edges = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            keys = set(rec)
            if keys == NODE_KEYS:
                if edges:
                    raise GraphError(f"line {lineno}: node record after edge records")
                nodes.append(rec)
            elif keys == EDGE_KEYS:
                edges.append(rec)
            else:
                raise GraphError(f"line {lineno}: unexpected keys {sorted(keys)}")
    return build_primal(nodes, edges)


def save_primal(graph: PrimalGraph, path: str | Path) -> None:
    with open(path, "w") as fh:
        for i, (x, y) in enumerate(graph.xy):
            fh.write(json.dumps({"id": i, "x": float(x), "y": float(y)}) + "\n")
        for e in range(graph.n_edges):
            fh.write(json.dumps({
                "id": e,
                "from": int(graph.src[e]),
                "to": int(graph.dst[e]),
                "length_m": float(graph.length_m[e]),
                "road_class": int(graph.road_class[e]),
                "fftime_s": float(graph.fftime_s[e]),
                "toll": float(graph.toll[e]),
            }) + "\n")


def turn_maneuver(p0: Sequence[float], p1: Sequence[float], p2: Sequence[float]) -> int:
    """Classify the turn at ``p1`` when travelling p0 -> p1 -> p2."""
    ax, ay = p1[0] - p0[0], p1[1] - p0[1]
    bx, by = p2[0] - p1[0], p2[1] - p1[1]
    theta = math.degrees(math.atan2(ax * by - ay * bx, ax * bx + ay * by))
    if abs(theta) < STRAIGHT_MAX_DEG:
        return STRAIGHT
    if abs(theta) <= TURN_MAX_DEG:
        return LEFT if theta > 0 else RIGHT
    return U_TURN


@dataclass(frozen=True, eq=False)
class DualGraph:
    """Immutable link-level graph.

    ``succ[i]`` and ``pred[i]`` are ascending tuples of link ids. Per-link
    attribute arrays are copied from the primal edges (or from a parent dual
    graph for induced sub-graphs).
    """

    succ: tuple[tuple[int, ...], ...]
    pred: tuple[tuple[int, ...], ...]
    edges: np.ndarray  # (E, 2) sorted by (from, to)
    maneuver: np.ndarray  # (E,) maneuver code per dual edge
    tail: np.ndarray  # primal from-node per link
    head: np.ndarray
    length_m: np.ndarray
    fftime_s: np.ndarray
    road_class: np.ndarray
    toll: np.ndarray
    _edge_index: dict = field(default=None, repr=False, compare=False)

    @property
    def n_links(self) -> int:
        return len(self.succ)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, link: int, direction: str = "forward") -> list[int]:
        """Successors (``forward``) or predecessors (``backward``) of ``link``."""
        if not 0 <= link < self.n_links:
            raise IndexError(f"link {link} out of range [0, {self.n_links})")
        if direction == "forward":
            return list(self.succ[link])
        if direction == "backward":
            return list(self.pred[link])
        raise ValueError(f"direction must be 'forward' or 'backward', not {direction!r}")

    def has_edge(self, a: int, b: int) -> bool:
        return self.edge_index().get((a, b)) is not None

    def edge_index(self) -> dict[tuple[int, int], int]:
        if self._edge_index is None:
            idx = {(int(a), int(b)): k for k, (a, b) in enumerate(self.edges)}
            object.__setattr__(self, "_edge_index", idx)
        return self._edge_index

    def is_valid_path(self, links: Sequence[int]) -> bool:
        if not links:
            return False
        if any(not 0 <= l < self.n_links for l in links):
            return False
        return all(b in self.succ[a] for a, b in zip(links, links[1:]))

    def link_maneuver(self) -> np.ndarray:
        """Per-link maneuver code: the straightest way of entering the link.

        Links without predecessors are tagged straight.
        """
        out = np.full(self.n_links, STRAIGHT, dtype=np.int64)
        rank = np.array([0, 1, 1, 2])  # straight < left/right < u-turn
        best = np.full(self.n_links, 99)
        for (a, b), code in zip(self.edges, self.maneuver):
            r = rank[code]
            if r < best[b] or (r == best[b] and code < out[b]):
                best[b] = r
                out[b] = code
        return out

    def subgraph(self, links: Iterable[int]) -> tuple["DualGraph", np.ndarray]:
        """Induced sub-graph over ``links``; returns it with the local->global id map."""
        keep = np.unique(np.fromiter((int(l) for l in links), dtype=np.int64))
        if len(keep) and (keep[0] < 0 or keep[-1] >= self.n_links):
            raise IndexError("sub-graph link id out of range")
        local = np.full(self.n_links, -1, dtype=np.int64)
        local[keep] = np.arange(len(keep))
        e = self.edges.reshape(-1, 2)
        mask = (local[e[:, 0]] >= 0) & (local[e[:, 1]] >= 0)
        mapped = local[e[mask]]
        dual = _assemble(
            len(keep),
            mapped.reshape(-1, 2),
            self.maneuver[mask],
            tail=self.tail[keep], head=self.head[keep],
            length_m=self.length_m[keep], fftime_s=self.fftime_s[keep],
            road_class=self.road_class[keep], toll=self.toll[keep],
        )
        return dual, keep


def _assemble(n: int, edges: np.ndarray, maneuver: np.ndarray, **attrs) -> DualGraph:
    order = np.lexsort((edges[:, 1], edges[:, 0])) if len(edges) else np.zeros(0, dtype=np.int64)
    edges = edges[order].astype(np.int64)
    maneuver = np.asarray(maneuver, dtype=np.int64)[order]
    succ: list[list[int]] = [[] for _ in range(n)]
    pred: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges.tolist():
        succ[a].append(b)
        pred[b].append(a)
    for arr in (edges, maneuver, *attrs.values()):
        arr.setflags(write=False)
    return DualGraph(
        succ=tuple(tuple(s) for s in succ),
        pred=tuple(tuple(sorted(p)) for p in pred),
        edges=edges,
        maneuver=maneuver,
        **attrs,
    )


def to_dual(graph: PrimalGraph, allow_u_turn: bool = False) -> DualGraph:
    """Swap edges and vertices: one link per primal edge.

    The immediate reversal of a segment (``head(b) == tail(a)``) is dropped
    unless ``allow_u_turn`` is set.
    """
    by_tail: list[list[int]] = [[] for _ in range(graph.n_nodes)]
    for e in range(graph.n_edges):
        by_tail[int(graph.src[e])].append(e)
    pairs, codes = [], []
    xy = graph.xy
    for a in range(graph.n_edges):
        ta, ha = int(graph.src[a]), int(graph.dst[a])
        for b in by_tail[ha]:
            hb = int(graph.dst[b])
            if hb == ta and not allow_u_turn:
                continue
            pairs.append((a, b))
            codes.append(U_TURN if hb == ta else turn_maneuver(xy[ta], xy[ha], xy[hb]))
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return _assemble(
        graph.n_edges,
        edges,
        np.array(codes, dtype=np.int64),
        tail=graph.src.copy(), head=graph.dst.copy(),
        length_m=graph.length_m.copy(), fftime_s=graph.fftime_s.copy(),
        road_class=graph.road_class.copy(), toll=graph.toll.copy(),
    )


def dual_from_adjacency(
    n_links: int,
    edges: Sequence[Sequence[int]],
    length_m: Sequence[float] | None = None,
    maneuver: Sequence[int] | None = None,
) -> DualGraph:
    """Build a dual graph straight from link adjacency pairs (dataset records, tests)."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e) and (e.min() < 0 or e.max() >= n_links):
        raise GraphError("adjacency references a link outside [0, n_links)")
    if np.any(e[:, 0] == e[:, 1]):
        raise GraphError("dual self-loop")
    length = np.ones(n_links) if length_m is None else np.asarray(length_m, dtype=float)
    man = np.zeros(len(e), dtype=np.int64) if maneuver is None else np.asarray(maneuver, dtype=np.int64)
    minus = np.full(n_links, -1, dtype=np.int64)
    return _assemble(
        n_links, e, man,
        tail=minus.copy(), head=minus.copy(),
        length_m=length.copy(), fftime_s=length.copy(),
        road_class=np.zeros(n_links, dtype=np.int64), toll=np.zeros(n_links),
    )


@dataclass(frozen=True)
class Route:
    """Ordered link sequence from origin link to destination link."""

    links: tuple[int, ...]
    length: float = 0.0
    attributes: tuple[float, ...] | None = None
    coverage: float | None = None

    def __len__(self) -> int:
        return len(self.links)

    @property
    def origin(self) -> int:
        return self.links[0]

    @property
    def destination(self) -> int:
        return self.links[-1]


def make_route(graph: DualGraph, links: Sequence[int], check: bool = True) -> Route:
    links = tuple(int(l) for l in links)
    if check and not graph.is_valid_path(links):
        raise GraphError(f"links do not form a path in the dual graph: {links[:8]}...")
    return Route(links, float(sum(graph.length_m[list(links)])))
