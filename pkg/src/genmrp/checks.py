"""Oracle-equivalence and gradient checks run by ``genmrp selfcheck``."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import model as M
from .metrics import coverage, cov_net, similarity
from .oracles import brute_pareto_vectors, brute_shortest, pairwise_nondominated, random_dual, set_jaccard
from .search import bidirectional_cost, dijkstra_path, dominance_filter, mosp


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(fn):
    def run(*a, **kw) -> CheckResult:
        t = time.perf_counter()
        res = fn(*a, **kw)
        res.seconds = time.perf_counter() - t
        return res
    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


@_timed
def check_search(n_graphs: int = 200, max_links: int = 12, seed: int = 0) -> CheckResult:
    """Bidirectional vs unidirectional Dijkstra vs enumeration, exact costs."""
    rng = np.random.default_rng(seed)
    bad = 0
    reachable = 0
    for _ in range(n_graphs):
        n = int(rng.integers(2, max_links + 1))
        g = random_dual(rng, n, float(rng.uniform(0.15, 0.5)))
        c = rng.integers(1, 20, n).astype(float)
        o, t = (int(x) for x in rng.integers(n, size=2))
        bi = bidirectional_cost(g, c, o, t)
        uni = dijkstra_path(g, c, o, t)
        bf = brute_shortest(g, c, o, t)
        if bf is None:
            bad += bi is not None or uni is not None
            continue
        reachable += 1
        bad += bi is None or uni is None or not (bi[0] == uni[0] == bf[0])
    return CheckResult("search", bad == 0, f"{n_graphs} graphs, {reachable} reachable, {bad} mismatches")


@_timed
def check_pareto(n_instances: int = 100, seed: int = 0) -> CheckResult:
    """mosp (d=2) vs path enumeration; dominance_filter vs the O(n^2) loop."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_instances):
        n = int(rng.integers(3, 10))
        g = random_dual(rng, n, 0.35)
        mc = rng.integers(1, 10, (n, 2)).astype(float)
        o, t = (int(x) for x in rng.integers(n, size=2))
        want = brute_pareto_vectors(g, mc, o, t)
        got = {tuple(v) for v in mosp(g, mc, o, t).vectors}
        bad += got != want
        pts = rng.integers(0, 5, (int(rng.integers(1, 30)), int(rng.integers(1, 4)))).astype(float).tolist()
        bad += dominance_filter(pts) != pairwise_nondominated(pts)
    return CheckResult("pareto", bad == 0, f"{n_instances} instances, {bad} mismatches")


def _oracle_similarity(routes, lengths) -> float:
    vals = [set_jaccard(routes[i], routes[j], lengths)
            for i in range(len(routes)) for j in range(i + 1, len(routes))]
    return sum(vals) / len(vals)


def _oracle_cov_net(routes, r_u, lengths) -> float:
    union = set().union(*map(set, routes))
    return sum(lengths[i] for i in union & set(r_u)) / sum(lengths[i] for i in union)


@_timed
def check_metrics(n_cases: int = 1000, seed: int = 0, tol: float = 1e-9) -> CheckResult:
    """Coverage, similarity and Cov_net vs explicit set arithmetic."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    exact_ok = True
    for _ in range(n_cases):
        n = int(rng.integers(2, 40))
        lengths = rng.uniform(1.0, 500.0, n)
        pick = lambda: rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False).tolist()  # noqa: E731
        a, b = pick(), pick()
        routes = [pick() for _ in range(int(rng.integers(2, 5)))]
        worst = max(worst,
                    abs(coverage(a, b, lengths) - set_jaccard(a, b, lengths)),
                    abs(similarity(routes, lengths) - _oracle_similarity(routes, lengths)),
                    abs(cov_net(routes, a, lengths) - _oracle_cov_net(routes, a, lengths)))
        exact_ok &= coverage(a, a, lengths) == 1.0
        rest = [i for i in range(n) if i not in set(a)]
        if rest:
            exact_ok &= coverage(a, rest, lengths) == 0.0
    ok = worst <= tol and exact_ok
    return CheckResult("metrics", ok, f"{n_cases} cases, max abs error {worst:.2e}, identity/disjoint exact={exact_ok}")


def gradient_errors(P, cfg: M.ModelConfig, items, reqs, links, K: int, mode: str, n_coords: int,
                    rng: np.random.Generator, h: float = 1e-4, floor: float = 1e-6) -> np.ndarray:
    """Relative errors |analytic - central difference| / max(|a|, |n|, floor)
    on ``n_coords`` coordinates: three quarters drawn from those with a
    nonzero analytic gradient, the rest uniformly."""
    from .training import batch_loss_and_grad

    def loss(Q):
        return batch_loss_and_grad(Q, cfg, items, reqs, links, K, mode, True, grad=False)[0]

    _, G, _ = batch_loss_and_grad(P, cfg, items, reqs, links, K, mode, True)
    flat, g = M.flatten(P), M.flatten(G)
    nz = np.flatnonzero(np.abs(g) > 1e-10)
    n_nz = min(len(nz), (3 * n_coords) // 4)
    idx = np.concatenate([rng.choice(nz, n_nz, replace=False),
                          rng.choice(len(flat), n_coords - n_nz, replace=False)])
    errs = []
    for i in idx:
        a, b = flat.copy(), flat.copy()
        a[i] += h
        b[i] -= h
        num = (loss(M.unflatten(a, P)) - loss(M.unflatten(b, P))) / (2 * h)
        errs.append(abs(num - g[i]) / max(abs(num), abs(g[i]), floor))
    return np.asarray(errs)


@_timed
def check_gradients(n_samples: int = 10, n_coords: int = 64, seed: int = 0, tol: float = 1e-4,
                    modes=(M.DEPLOYMENT, M.OFFLINE)) -> CheckResult:
    """Full boosted loss, float64 central differences, one sample per check."""
    from .features import Preprocessor, fit_stats
    from .synthetic import generate_synthetic, tiny_config
    from .training import make_item

    ds = generate_synthetic(tiny_config(seed))
    pre = Preprocessor(ds.layout, fit_stats(ds.train, ds.layout))
    cfg = M.ModelConfig.for_layout(ds.layout, link_widths=(16, 8, 6), head_widths=(12, 8, 5), user_dim=6)
    rng = np.random.default_rng(seed)
    worst = 0.0
    count = 0
    for mode in modes:
        picks = rng.choice(len(ds.records), n_samples, replace=False)
        for j, s in enumerate(picks):
            P = M.init_params(cfg, np.random.default_rng(seed + j))
            it = make_item(ds.records[s], mode == M.OFFLINE)
            errs = gradient_errors(P, cfg, [it], [pre.request(it.record)], [pre.links(it.record, it.rows)],
                                   cfg.K, mode, n_coords, rng)
            worst = max(worst, float(errs.max()))
            count += len(errs)
    return CheckResult("gradients", worst < tol,
                       f"{n_samples} samples x {len(modes)} modes, {count} coordinates, max rel error {worst:.2e}")


ALL_CHECKS = (check_search, check_pareto, check_metrics, check_gradients)


def run_all(quick: bool = False) -> list[CheckResult]:
    if quick:
        return [check_search(40), check_pareto(20), check_metrics(200), check_gradients(2, 16)]
    return [c() for c in ALL_CHECKS]
