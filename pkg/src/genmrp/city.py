"""Synthetic planar city: jittered grid streets, arterials, a tolled highway ring."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import DualGraph, PrimalGraph, build_primal, to_dual

HIGHWAY, ARTERIAL, COLLECTOR, LOCAL = 0, 1, 2, 3
ROAD_CLASS_NAMES = ("highway", "arterial", "collector", "local")
SPEED_MS = {HIGHWAY: 24.0, ARTERIAL: 14.0, COLLECTOR: 11.0, LOCAL: 8.5}


@dataclass(frozen=True)
class CityConfig:
    width: int = 30
    height: int = 30
    spacing_m: float = 200.0
    jitter: float = 0.18
    arterial_every: int = 5
    random_arterials: int = 3
    ring_margin: float = 0.2
    highway_toll_per_km: float = 1.2
    arterial_toll_prob: float = 0.15
    rough_prob: float = 0.12
    congestion_sd: float = 0.25


@dataclass(frozen=True)
class City:
    """Primal graph plus its dual and the per-link attributes not in the primal file."""

    primal: PrimalGraph
    dual: DualGraph
    lights: np.ndarray  # traffic lights at each link's head intersection (0/1)
    rough_m: np.ndarray  # rough-surface length along each link
    lanes: np.ndarray
    config: CityConfig

    @property
    def n_links(self) -> int:
        return self.dual.n_links


def generate_city(cfg: CityConfig, rng: np.random.Generator) -> City:
    W, H = cfg.width, cfg.height
    ids = np.arange(W * H).reshape(H, W)
    gx, gy = np.meshgrid(np.arange(W), np.arange(H))
    xy = np.stack([gx, gy], axis=-1).reshape(-1, 2).astype(float) * cfg.spacing_m
    xy += rng.uniform(-cfg.jitter, cfg.jitter, size=xy.shape) * cfg.spacing_m

    row_class = np.full(H, LOCAL)
    col_class = np.full(W, LOCAL)
    row_class[::cfg.arterial_every] = ARTERIAL
    col_class[::cfg.arterial_every] = ARTERIAL
    row_class[2::cfg.arterial_every] = COLLECTOR
    col_class[2::cfg.arterial_every] = COLLECTOR
    for _ in range(cfg.random_arterials):
        if rng.random() < 0.5:
            row_class[rng.integers(0, H)] = ARTERIAL
        else:
            col_class[rng.integers(0, W)] = ARTERIAL
    r0, r1 = int(H * cfg.ring_margin), int(H * (1 - cfg.ring_margin))
    c0, c1 = int(W * cfg.ring_margin), int(W * (1 - cfg.ring_margin))

    def seg_class(a_rc, b_rc) -> int:
        (ra, ca), (rb, cb) = a_rc, b_rc
        if ra == rb:  # horizontal
            if ra in (r0, r1) and c0 <= min(ca, cb) and max(ca, cb) <= c1:
                return HIGHWAY
            return int(row_class[ra])
        if ca in (c0, c1) and r0 <= min(ra, rb) and max(ra, rb) <= r1:
            return HIGHWAY
        return int(col_class[ca])

    segs = []
    for r in range(H):
        for c in range(W):
            for dr, dc in ((0, 1), (1, 0)):
                rr, cc = r + dr, c + dc
                if rr < H and cc < W:
                    segs.append(((r, c), (rr, cc), seg_class((r, c), (rr, cc))))

    nodes = [{"id": i, "x": float(x), "y": float(y)} for i, (x, y) in enumerate(xy)]
    edges = []
    attrs = []
    arterial_toll = {}
    for a_rc, b_rc, cls in segs:
        key = (a_rc, b_rc)
        arterial_toll[key] = cls == ARTERIAL and rng.random() < cfg.arterial_toll_prob
        for u_rc, v_rc in ((a_rc, b_rc), (b_rc, a_rc)):
            u, v = int(ids[u_rc]), int(ids[v_rc])
            length = float(np.hypot(*(xy[u] - xy[v])))
            congestion = float(np.exp(rng.normal(0.0, cfg.congestion_sd)))
            if cls == HIGHWAY:
                congestion = min(congestion, 1.3)
            fftime = length / SPEED_MS[cls] * congestion
            if cls == HIGHWAY:
                toll = cfg.highway_toll_per_km * length / 1000.0
            elif arterial_toll[key]:
                toll = 0.5
            else:
                toll = 0.0
            edges.append({
                "id": len(edges), "from": u, "to": v, "length_m": length,
                "road_class": cls, "fftime_s": fftime, "toll": round(toll, 4),
            })
            rough = 0.0
            if cls in (LOCAL, COLLECTOR) and rng.random() < cfg.rough_prob:
                rough = length * rng.uniform(0.4, 1.0)
            lanes = {HIGHWAY: 3, ARTERIAL: 2, COLLECTOR: 2, LOCAL: 1}[cls]
            attrs.append((rough, lanes))
    primal = build_primal(nodes, edges)
    dual = to_dual(primal)

    # intersections where an arterial/collector crosses anything are signalised
    node_major = np.zeros(W * H, dtype=int)
    for e in edges:
        if e["road_class"] in (ARTERIAL, COLLECTOR):
            node_major[e["from"]] += 1
            node_major[e["to"]] += 1
    deg = np.bincount(primal.src, minlength=W * H)
    signal = (node_major >= 2) & (deg >= 3)
    signal &= rng.random(W * H) < 0.85
    lights = np.array([1.0 if signal[e["to"]] and e["road_class"] != HIGHWAY else 0.0 for e in edges])
    rough_m = np.array([a[0] for a in attrs])
    lanes = np.array([a[1] for a in attrs], dtype=float)
    return City(primal, dual, lights, rough_m, lanes, cfg)
