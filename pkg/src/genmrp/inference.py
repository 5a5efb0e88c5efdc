"""K-iteration route generation with the learned cost model, plus baselines.

In deployment mode a link's cost depends only on the request and the link
itself, so after iteration k only the links of r_k (whose memory changed)
are re-evaluated: N + sum_{k<K} |r_k| evaluations instead of N * K.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import model as M
from .attributes import COST_FLOOR, DIST, TIME, TOLL, route_attributes, single_objective_costs
from .dataset import SampleRecord, attribute_table
from .features import FeatureLayout, LinkInputs, Preprocessor, RequestInputs
from .graph import DualGraph, Route, make_route
from .metrics import EvalReport, cov_k, cov_net, coverage, n_pareto, similarity
from .search import SearchError, bidirectional_cost, mosp, penalty_alternatives
from .training import neighbor_edges

BASELINES = ("ST", "SD", "MT", "HF", "KST", "KSD", "KMT", "KHF", "2DP")
SINGLE_BASELINES = ("ST", "SD", "MT", "HF")
SET_BASELINES = ("KST", "KSD", "KMT", "KHF", "2DP")


class PlanError(ValueError):
    pass


@dataclass
class PlanRequest:
    origin: int
    destination: int
    req: RequestInputs
    links: LinkInputs

    @classmethod
    def from_record(cls, rec: SampleRecord, pre: Preprocessor) -> "PlanRequest":
        return cls(rec.origin, rec.destination, pre.request(rec), pre.links(rec))


@dataclass
class PlanResult:
    routes: list[Route]
    eval_counts: list[int]
    duration_ms: float
    costs: list[np.ndarray] = field(default_factory=list, repr=False)  # per iteration, if kept
    raw_routes: list[tuple[int, ...]] = field(default_factory=list, repr=False)  # duplicates included

    def to_json(self) -> dict:
        return {"routes": [list(r.links) for r in self.routes], "eval_counts": self.eval_counts,
                "duration_ms": self.duration_ms}


def plan(request: PlanRequest, graph: DualGraph, P, cfg: M.ModelConfig, K: int = 3,
         mode: str = M.DEPLOYMENT, incremental: bool = True, keep_costs: bool = False,
         edges: tuple[np.ndarray, np.ndarray] | None = None) -> PlanResult:
    """Generate up to K distinct routes; a repeated route is dropped but still
    written to link memory."""
    if K < 1:
        raise PlanError("K must be >= 1")
    if mode not in M.MODES:
        raise PlanError(f"unknown mode {mode!r}")
    N = graph.n_links
    if len(request.links) != N:
        raise PlanError(f"request has {len(request.links)} link rows, sub-network has {N}")
    for what, l in (("origin", request.origin), ("destination", request.destination)):
        if not 0 <= l < N:
            raise PlanError(f"{what} link {l} not in sub-network")
    t0 = time.perf_counter()
    xu = M.user_vector(P, cfg, request.req)
    lm = np.zeros((N, cfg.K))
    counts: list[int] = []
    kept: list[np.ndarray] = []
    if mode == M.OFFLINE:
        dst, src = edges if edges is not None else neighbor_edges(graph)
        seg = np.zeros(N, dtype=np.int64)

        def full() -> np.ndarray:
            return M.forward(P, cfg, request.req, request.links, lm, seg, mode=M.OFFLINE,
                             dst=dst, src=src, xu=xu).costs
    else:
        def full() -> np.ndarray:
            return M.deployment_costs(P, cfg, xu, request.links, lm)

    costs = full()
    counts.append(N)
    routes: list[Route] = []
    raw: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    for k in range(1, K + 1):
        if keep_costs:
            kept.append(costs.copy())
        res = bidirectional_cost(graph, costs, request.origin, request.destination)
        if res is None:
            raise PlanError(f"destination {request.destination} unreachable from {request.origin}")
        links = tuple(res[1])
        raw.append(links)
        if links not in seen:
            seen.add(links)
            routes.append(make_route(graph, links, check=False))
        if k == K:
            break
        changed = np.unique(np.asarray(links, dtype=np.int64))
        lm[changed, k - 1] = 1.0
        if mode == M.DEPLOYMENT and incremental:
            costs = costs.copy()
            costs[changed] = M.deployment_costs(P, cfg, xu, request.links.take(changed), lm[changed])
            counts.append(len(changed))
        else:
            costs = full()
            counts.append(N)
    return PlanResult(routes, counts, (time.perf_counter() - t0) * 1000.0, kept, raw)


# -- baselines -----------------------------------------------------------------

@dataclass(frozen=True)
class BaselineConfig:
    k: int = 3
    penalty_factor: float = 1.4
    hf_lambda: float = 0.5
    max_labels: int = 512


def baseline_costs(table: np.ndarray, familiar: np.ndarray, which: str, hf_lambda: float = 0.5) -> np.ndarray:
    base = which[1:] if which.startswith("K") else which
    if base == "ST":
        return single_objective_costs(table, TIME)
    if base == "SD":
        return single_objective_costs(table, DIST)
    if base == "MT":
        return single_objective_costs(table, TOLL)
    if base == "HF":
        return np.maximum(table[:, DIST] * (1.0 - hf_lambda * np.asarray(familiar, dtype=float)), COST_FLOOR)
    raise PlanError(f"unknown baseline {which!r}")


def plan_baseline(graph: DualGraph, table: np.ndarray, familiar: np.ndarray, origin: int, destination: int,
                  which: str, bc: BaselineConfig = BaselineConfig()) -> PlanResult:
    t0 = time.perf_counter()
    if which == "2DP":
        res = mosp(graph, np.maximum(table[:, [TIME, DIST]], 0.0), origin, destination, bc.max_labels)
        routes = res.routes  # sorted by time, so distance decreases along the list
        if not routes:
            raise PlanError("destination unreachable")
        if len(routes) > bc.k:
            pick = np.unique(np.round(np.linspace(0, len(routes) - 1, bc.k)).astype(int))
            routes = [routes[i] for i in pick]
    elif which in SINGLE_BASELINES:
        res = bidirectional_cost(graph, baseline_costs(table, familiar, which, bc.hf_lambda), origin, destination)
        if res is None:
            raise PlanError("destination unreachable")
        routes = [make_route(graph, res[1], check=False)]
    elif which in ("KST", "KSD", "KMT", "KHF"):
        routes = penalty_alternatives(graph, baseline_costs(table, familiar, which, bc.hf_lambda),
                                      origin, destination, bc.k, bc.penalty_factor)
        if not routes:
            raise PlanError("destination unreachable")
    else:
        raise PlanError(f"unknown baseline {which!r}")
    return PlanResult(routes, [], (time.perf_counter() - t0) * 1000.0)


def plan_baselines(rec: SampleRecord, layout: FeatureLayout, which: Sequence[str] = BASELINES,
                   bc: BaselineConfig = BaselineConfig()) -> dict[str, PlanResult]:
    table = attribute_table(rec, layout)
    fam = rec.familiar()
    g = rec.dual
    return {w: plan_baseline(g, table, fam, rec.origin, rec.destination, w, bc) for w in which}


# -- evaluation ----------------------------------------------------------------

def route_set_metrics(routes: Sequence, rec: SampleRecord, table: np.ndarray) -> dict:
    lengths = rec.lengths
    links = [getattr(r, "links", r) for r in routes]
    return {
        "cov1": coverage(rec.r_u, links[0], lengths),
        "covk": cov_k(links, rec.r_u, lengths),
        "sim": similarity(links, lengths),
        "n_p": n_pareto([route_attributes(table, l) for l in links], sense=(1, 1, 1, -1, 1, 1)),
        "covnet": cov_net(links, rec.r_u, lengths),
    }


def evaluate_model(records: Sequence[SampleRecord], pre: Preprocessor, P, cfg: M.ModelConfig, K: int,
                   mode: str = M.DEPLOYMENT) -> tuple[float, float]:
    """Mean (Cov_1, Cov_K) of planned route sets."""
    c1, ck = [], []
    for rec in records:
        res = plan(PlanRequest.from_record(rec, pre), rec.dual, P, cfg, K, mode)
        lengths = rec.lengths
        c1.append(coverage(rec.r_u, res.routes[0].links, lengths))
        ck.append(cov_k([r.links for r in res.routes], rec.r_u, lengths))
    return float(np.mean(c1)), float(np.mean(ck))


@dataclass
class Model:
    """A trained model to evaluate under a report name."""

    name: str
    params: dict
    cfg: M.ModelConfig
    mode: str = M.DEPLOYMENT


def evaluate(records: Sequence[SampleRecord], layout: FeatureLayout, pre: Preprocessor | None,
             models: Sequence[Model] = (), baselines: Sequence[str] = BASELINES, K: int = 3,
             bc: BaselineConfig = BaselineConfig()) -> EvalReport:
    """Metrics for every model and baseline on every record, grouped by split."""
    report = EvalReport()
    for rec in records:
        splits = rec.splits()
        table = attribute_table(rec, layout)
        if models:
            request = PlanRequest.from_record(rec, pre)
        for m in models:
            res = plan(request, rec.dual, m.params, m.cfg, K, m.mode)
            report.record(m.name, splits, **route_set_metrics(res.routes, rec, table), rt_ms=res.duration_ms)
        fam = rec.familiar()
        for w in baselines:
            try:
                res = plan_baseline(rec.dual, table, fam, rec.origin, rec.destination, w, bc)
            except (PlanError, SearchError):
                continue
            report.record(w, splits, **route_set_metrics(res.routes, rec, table), rt_ms=res.duration_ms)
    return report
