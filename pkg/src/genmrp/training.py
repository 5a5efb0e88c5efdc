"""Route-set sampling, route probabilities, boosted loss and the training loop.

Per sample and epoch the link memory starts at zero. Iteration k scores the
sampled routes with the current link costs, takes the loss
``-w_k * log P_k[label]`` with ``w_k = Cov_* - Cov_{k-1}``, selects the most
probable route and writes it into column k of the memory. A sample stops
once it has reached its best coverage or after K iterations. The selection
and memory are constants for the gradient.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import model as M
from .attributes import ATTRIBUTE_SENSE, COST_FLOOR, route_attributes, search_objectives
from .dataset import SampleRecord
from .features import LinkInputs, Preprocessor, RequestInputs
from .graph import DualGraph, Route, make_route
from .search import _bidirectional, dominance_filter, route_cost

log = logging.getLogger(__name__)
LOG_FLOOR = 1e-12


class TrainingError(RuntimeError):
    pass


# -- route sampling ------------------------------------------------------------

def linear_score(weights: Sequence[float]) -> Callable[[list[Route]], np.ndarray]:
    """Score routes by ``-w . a`` over their attribute vectors (familiar share enters negated)."""
    w = np.asarray(weights, dtype=float) * np.asarray(ATTRIBUTE_SENSE, dtype=float)

    def score(routes: list[Route]) -> np.ndarray:
        return -np.array([np.dot(w, r.attributes) for r in routes])

    return score


DEFAULT_SCORE_WEIGHTS = (1.0, 0.02, 30.0, 200.0, 5.0, 0.02)


def sample_training_routes(
    graph: DualGraph,
    origin: int,
    destination: int,
    table: np.ndarray,
    score_fn: Callable[[list[Route]], np.ndarray] | None = None,
    seed: int | np.random.Generator = 0,
    n_attempts: int = 100,
    n_top: int = 10,
    n_random: int = 10,
    guide_costs: Sequence[np.ndarray] = (),
) -> list[Route]:
    """Sample a diverse, Pareto-efficient route set for one request.

    The candidate pool holds the optimum of each attribute (ties broken by
    travel time), then searches under each ``guide_costs`` vector and under
    random scalarisations of the six objectives, each with per-link
    multiplicative noise, until ``n_attempts`` searches have run. Candidates
    dominated on the six attributes are dropped; the output is the ``n_top``
    best-scored survivors, the best survivor per attribute and ``n_random``
    random survivors, without duplicates.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    score_fn = score_fn or linear_score(DEFAULT_SCORE_WEIGHTS)
    obj = search_objectives(table)
    scale = obj.mean(axis=0)
    scale[scale <= 0] = 1.0
    norm = obj / scale
    succ, pred = graph.succ, graph.pred

    pool: dict[tuple[int, ...], None] = {}

    def search(c: np.ndarray) -> None:
        res = _bidirectional(succ, pred, np.maximum(c, COST_FLOOR).tolist(), origin, destination)
        if res is None:
            raise TrainingError(f"destination {destination} unreachable from {origin}")
        pool.setdefault(tuple(res[1]), None)

    tie = 1e-3 * norm[:, 0]
    for d in range(6):
        search(norm[:, d] + tie)
    attempts = 6
    guides = [np.asarray(g, dtype=float) for g in guide_costs]
    for g in guides:
        search(g)
        attempts += 1
    gi = 0
    while attempts < n_attempts:
        noise = rng.uniform(0.9, 1.4, size=len(norm))
        if guides and attempts % 3 == 0:
            c = guides[gi % len(guides)] * noise
            gi += 1
        else:
            w = rng.dirichlet(np.full(6, 0.5))
            c = (norm @ w) * noise
        search(c)
        attempts += 1

    cands = [make_route(graph, links, check=False) for links in pool]
    cands = [Route(r.links, r.length, route_attributes(table, r.links)) for r in cands]
    keep = dominance_filter([r.attributes for r in cands], ATTRIBUTE_SENSE)
    surv = [cands[i] for i in keep]
    scores = np.asarray(score_fn(surv), dtype=float)
    order = sorted(range(len(surv)), key=lambda i: (-scores[i], i))
    chosen = order[:n_top]
    A = np.array([r.attributes for r in surv]) * np.asarray(ATTRIBUTE_SENSE, dtype=float)
    for d in range(6):
        best = min(range(len(surv)), key=lambda i: (A[i, d], i))
        chosen.append(best)
    rest = [i for i in range(len(surv)) if i not in set(chosen)]
    if rest:
        pick = rng.choice(len(rest), size=min(n_random, len(rest)), replace=False)
        chosen += [rest[int(i)] for i in sorted(pick)]
    out, seen = [], set()
    for i in chosen:
        if surv[i].links not in seen:
            seen.add(surv[i].links)
            out.append(surv[i])
    return out


# -- loss pieces ---------------------------------------------------------------

def route_probs(costs, routes) -> np.ndarray:
    """Softmax over negative route costs."""
    c = np.asarray(costs, dtype=float)
    if len(routes) == 0:
        raise TrainingError("route set is empty")
    tot = np.empty(len(routes))
    for j, r in enumerate(routes):
        links = getattr(r, "links", r)
        for l in links:
            if not 0 <= l < len(c):
                raise TrainingError(f"route {j} contains invalid link {l}")
        tot[j] = route_cost(c, links)
    z = -(tot - tot.min())
    e = np.exp(z)
    return e / e.sum()


def boost_weight(cov_star: float, cov_prev: float) -> float:
    return max(0.0, float(cov_star) - float(cov_prev))


def update_link_memory(lm: np.ndarray, route, k: int) -> np.ndarray:
    """Set column ``k`` (1-based) for the links of ``route``; returns a new array."""
    K = lm.shape[1]
    if not 1 <= k <= K:
        raise TrainingError(f"iteration {k} outside [1, {K}]")
    if np.any(lm[:, k - 1] != 0):
        raise TrainingError(f"link memory column {k} already written")
    out = lm.copy()
    out[list(getattr(route, "links", route)), k - 1] = 1.0
    return out


def iteration_loss(P: np.ndarray, label: int, w: float) -> float:
    """``-w log P[label]`` with the log floored at ``log(1e-12)``."""
    if w == 0:
        return 0.0
    return -w * math.log(max(float(P[label]), LOG_FLOOR))


def _loss_grad_routes(P: np.ndarray, label: int, w: float) -> np.ndarray:
    """d(iteration_loss)/d(route cost) = w (Y - P), since P = softmax(-cost)."""
    if w == 0 or P[label] <= LOG_FLOOR:
        return np.zeros_like(P)
    g = -w * P
    g[label] += w
    return g


# -- training items ------------------------------------------------------------

@dataclass
class TrainItem:
    """Everything about one sample the loop needs besides its link inputs."""

    record: SampleRecord
    rows: np.ndarray  # local link ids evaluated: route links first, then neighbour context
    n_targets: int
    flat: np.ndarray  # concatenated route positions into rows
    starts: np.ndarray  # route start offsets into flat
    route_len: np.ndarray
    cov: np.ndarray
    label: int
    cov_star: float
    dst: np.ndarray | None = None  # attention edges (row positions), offline mode
    src: np.ndarray | None = None

    def route_costs(self, costs: np.ndarray) -> np.ndarray:
        return np.add.reduceat(costs[self.flat], self.starts)


def make_item(rec: SampleRecord, offline: bool = False) -> TrainItem:
    routes = rec.routes
    targets = np.unique(np.concatenate([np.asarray(r) for r in routes]))
    pos = {int(l): i for i, l in enumerate(targets)}
    flat = np.array([pos[l] for r in routes for l in r], dtype=np.int64)
    lens = np.array([len(r) for r in routes])
    starts = np.concatenate([[0], np.cumsum(lens)[:-1]])
    rows = targets
    dst = src = None
    if offline:
        g = rec.dual
        ctx = sorted({n for l in targets for n in (*g.succ[l], *g.pred[l])} - set(pos))
        rows = np.concatenate([targets, np.asarray(ctx, dtype=np.int64)])
        where = {int(l): i for i, l in enumerate(rows)}
        d_, s_ = [], []
        for i, l in enumerate(targets):
            for n in sorted(set(g.succ[l]) | set(g.pred[l])):
                d_.append(i)
                s_.append(where[n])
        dst, src = np.asarray(d_, dtype=np.int64), np.asarray(s_, dtype=np.int64)
    return TrainItem(rec, rows, len(targets), flat, starts, lens, rec.cov.copy(), rec.label,
                     rec.cov_star, dst, src)


def neighbor_edges(graph: DualGraph) -> tuple[np.ndarray, np.ndarray]:
    """Attention edges over all links of ``graph``: (dst, src) sorted by dst."""
    d_, s_ = [], []
    for l in range(graph.n_links):
        for n in sorted(set(graph.succ[l]) | set(graph.pred[l])):
            d_.append(l)
            s_.append(n)
    return np.asarray(d_, dtype=np.int64), np.asarray(s_, dtype=np.int64)


# -- one batch -----------------------------------------------------------------

@dataclass
class BatchTrace:
    """Per-sample iteration trace, for diagnostics and tests."""

    losses: list[list[float]] = field(default_factory=list)
    covs: list[list[float]] = field(default_factory=list)
    weights: list[list[float]] = field(default_factory=list)
    selected: list[list[int]] = field(default_factory=list)


def batch_loss_and_grad(P, cfg: M.ModelConfig, items: Sequence[TrainItem], reqs: Sequence[RequestInputs],
                        links: Sequence[LinkInputs], K: int, mode: str = M.DEPLOYMENT,
                        boost: bool = True, grad: bool = True, scale: float | None = None):
    """Total loss over ``items`` (divided by ``scale``, default the item count)
    and its parameter gradient; the r_k / memory schedule is computed on the fly."""
    n = len(items)
    scale = float(n) if scale is None else scale
    lms = [np.zeros((len(it.rows), K)) for it in items]
    cov_prev = [0.0] * n
    trace = BatchTrace([[] for _ in items], [[] for _ in items], [[] for _ in items], [[] for _ in items])
    G = M.zeros_like(P) if grad else None
    total = 0.0
    done = [False] * n
    offline = mode == M.OFFLINE
    for k in range(1, K + 1):
        active = [i for i in range(n) if not done[i]]
        if not active:
            break
        req = RequestInputs.stack([reqs[i] for i in active])
        T_parts = [items[i].n_targets for i in active]
        T = int(sum(T_parts))
        tgt = LinkInputs.concat([links[i].take(np.arange(items[i].n_targets)) for i in active])
        lm_t = np.concatenate([lms[i][:items[i].n_targets] for i in active])
        seg = np.repeat(np.arange(len(active)), T_parts)
        dst = src = None
        if offline:
            ctx = LinkInputs.concat([links[i].take(np.arange(items[i].n_targets, len(items[i].rows)))
                                     for i in active])
            lm_c = np.concatenate([lms[i][items[i].n_targets:] for i in active])
            all_links = LinkInputs.concat([tgt, ctx])
            lm_all = np.concatenate([lm_t, lm_c])
            t_off = np.concatenate([[0], np.cumsum(T_parts)[:-1]])
            c_parts = [len(items[i].rows) - items[i].n_targets for i in active]
            c_off = T + np.concatenate([[0], np.cumsum(c_parts)[:-1]])
            d_, s_ = [], []
            for j, i in enumerate(active):
                it = items[i]
                d_.append(it.dst + t_off[j])
                s = it.src.copy()
                is_t = s < it.n_targets
                s[is_t] += t_off[j]
                s[~is_t] += c_off[j] - it.n_targets
                s_.append(s)
            dst, src = np.concatenate(d_), np.concatenate(s_)
            fwd = M.forward(P, cfg, req, all_links, lm_all, np.concatenate([seg, np.zeros(len(lm_c), int)]),
                            mode=M.OFFLINE, n_targets=T, dst=dst, src=src)
        else:
            fwd = M.forward(P, cfg, req, tgt, lm_t, seg, mode=M.DEPLOYMENT)
        costs = fwd.costs
        if not np.all(np.isfinite(costs)):
            raise TrainingError(f"non-finite link cost at iteration {k}")
        dcost = np.zeros(T)
        off = 0
        for j, i in enumerate(active):
            it = items[i]
            c = costs[off:off + it.n_targets]
            rc = it.route_costs(c)
            z = -(rc - rc.min())
            p = np.exp(z)
            p /= p.sum()
            w = boost_weight(it.cov_star, cov_prev[i]) if boost else 1.0
            L = iteration_loss(p, it.label, w)
            if not math.isfinite(L):
                raise TrainingError(f"non-finite loss: sample {it.record.sample_id}, iteration {k}")
            total += L
            if grad and w > 0:
                gr = _loss_grad_routes(p, it.label, w) / scale
                np.add.at(dcost, off + it.flat, np.repeat(gr, it.route_len))
            sel = int(np.argmax(p))
            trace.losses[i].append(L)
            trace.weights[i].append(w)
            trace.selected[i].append(sel)
            cov_prev[i] = max(cov_prev[i], float(it.cov[sel]))
            trace.covs[i].append(cov_prev[i])
            if k < K:
                r = it.flat[it.starts[sel]:it.starts[sel] + it.route_len[sel]]
                lms[i] = update_link_memory(lms[i], r, k)
            if boost and cov_prev[i] >= it.cov_star:
                done[i] = True
            off += it.n_targets
        if grad and np.any(dcost):
            M.backward(P, cfg, fwd, dcost, G)
    return total / scale, G, trace


# -- optimiser -----------------------------------------------------------------

class Adam:
    def __init__(self, params, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = M.zeros_like(params)
        self.v = M.zeros_like(params)
        self.t = 0

    def step(self, params, grads) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k in params:
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def clip_grad(G, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in G.values()))
    if norm > max_norm:
        f = max_norm / norm
        for g in G.values():
            g *= f
    return norm


# -- training loop -------------------------------------------------------------

@dataclass
class TrainConfig:
    K: int = 3
    epochs: int = 10
    lr: float = 1e-3
    batch: int = 32
    seed: int = 0
    mode: str = M.DEPLOYMENT
    clip: float = 10.0
    patience: int = 3
    boost: bool = True
    val_size: int = 200
    time_budget_s: float | None = None

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: dict
    history: list[dict]
    best_epoch: int
    seconds: float


def _inputs(pre: Preprocessor, it: TrainItem) -> tuple[RequestInputs, LinkInputs]:
    return pre.request(it.record), pre.links(it.record, it.rows)


def train(records: Sequence[SampleRecord], val_records: Sequence[SampleRecord], pre: Preprocessor,
          cfg: M.ModelConfig, tc: TrainConfig, log_path=None, params=None) -> TrainResult:
    """Adam on the boosted loss; early stopping on validation Cov_K."""
    from .inference import evaluate_model  # inference imports training helpers

    if tc.mode not in M.MODES:
        raise TrainingError(f"unknown mode {tc.mode!r}")
    if cfg.K != tc.K:
        raise TrainingError(f"model K={cfg.K} but training K={tc.K}")
    rng = np.random.default_rng(tc.seed)
    P = params if params is not None else M.init_params(cfg, np.random.default_rng(tc.seed))
    opt = Adam(P, lr=tc.lr)
    offline = tc.mode == M.OFFLINE
    items = [make_item(r, offline) for r in records]
    val = list(val_records)[:tc.val_size]
    history, best, best_epoch, best_P, stale = [], -1.0, 0, None, 0
    t0 = time.perf_counter()
    writer = None
    fh = open(log_path, "w", newline="") if log_path else None
    try:
        if fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "cov1", "covK", "seconds"])
        for epoch in range(1, tc.epochs + 1):
            order = rng.permutation(len(items))
            ep_loss = 0.0
            for b in range(0, len(order), tc.batch):
                batch = [items[i] for i in order[b:b + tc.batch]]
                ins = [_inputs(pre, it) for it in batch]
                loss, G, _ = batch_loss_and_grad(P, cfg, batch, [x[0] for x in ins], [x[1] for x in ins],
                                                 tc.K, tc.mode, tc.boost)
                if not math.isfinite(loss):
                    raise TrainingError(f"non-finite loss in epoch {epoch}")
                clip_grad(G, tc.clip)
                opt.step(P, G)
                ep_loss += loss * len(batch)
            ep_loss /= max(len(items), 1)
            cov1, covk = evaluate_model(val, pre, P, cfg, tc.K, tc.mode) if val else (float("nan"),) * 2
            row = {"epoch": epoch, "loss": ep_loss, "cov1": cov1, "covK": covk,
                   "seconds": time.perf_counter() - t0}
            history.append(row)
            log.info("epoch %d loss %.5f cov1 %.4f covK %.4f", epoch, ep_loss, cov1, covk)
            if writer:
                writer.writerow([epoch, f"{ep_loss:.8f}", f"{cov1:.6f}", f"{covk:.6f}", f"{row['seconds']:.1f}"])
                fh.flush()
            if not val or covk > best:
                best, best_epoch, stale = covk, epoch, 0
                best_P = {k: v.copy() for k, v in P.items()}
            else:
                stale += 1
                if stale >= tc.patience:
                    break
            if tc.time_budget_s is not None and time.perf_counter() - t0 > tc.time_budget_s:
                break
    finally:
        if fh:
            fh.close()
    final = OrderedDict((k, best_P[k]) for k in P) if best_P is not None else P
    return TrainResult(final, history, best_epoch, time.perf_counter() - t0)
