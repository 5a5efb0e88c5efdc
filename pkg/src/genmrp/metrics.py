"""Route-set evaluation: coverage, set coverage, similarity, Pareto count, network coverage."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .search import dominance_filter


def _link_set(route, n: int) -> set[int]:
    links = getattr(route, "links", route)
    s = set(int(l) for l in links)
    if not s:
        raise ValueError("route is empty")
    for l in s:
        if not 0 <= l < n:
            raise ValueError(f"unknown link id {l}")
    return s


def _total(lengths, links: Iterable[int]) -> float:
    return float(sum(lengths[l] for l in sorted(links)))


def coverage(r_u, r_i, lengths: Sequence[float]) -> float:
    """Length of shared links over length of the union of links."""
    n = len(lengths)
    a, b = _link_set(r_u, n), _link_set(r_i, n)
    union = _total(lengths, a | b)
    return _total(lengths, a & b) / union if union > 0 else 0.0


def cov_k(routes: Sequence, r_u, lengths: Sequence[float]) -> float:
    return max((coverage(r_u, r, lengths) for r in routes), default=0.0)


def similarity(routes: Sequence, lengths: Sequence[float], include_self: bool = False) -> float | None:
    """Mean pairwise coverage between member routes; None when fewer than two.

    By default only distinct pairs ``i < j`` are averaged; ``include_self``
    averages over all ordered pairs, ``i == j`` included (each term 1).
    """
    m = len(routes)
    if m < 2:
        return None
    vals = [coverage(a, b, lengths) for a, b in combinations(routes, 2)]
    if include_self:
        return float((2.0 * sum(vals) + m) / (m * m))
    return float(np.mean(vals))


def n_pareto(attribute_vectors: Sequence[Sequence[float]], sense="min") -> int:
    """How many member routes are non-dominated within the set."""
    if len(attribute_vectors) == 0:
        return 0
    return len(dominance_filter(attribute_vectors, sense))


def cov_net(routes: Sequence, r_u, lengths: Sequence[float]) -> float:
    """Trajectory length inside the union of generated links, over the union's length."""
    n = len(lengths)
    union: set[int] = set()
    for r in routes:
        union |= _link_set(r, n)
    if not union:
        return 0.0
    ru = _link_set(r_u, n)
    return _total(lengths, ru & union) / _total(lengths, union)


@dataclass
class MethodStats:
    cov1: list[float] = field(default_factory=list)
    covk: list[float] = field(default_factory=list)
    sim: list[float] = field(default_factory=list)
    n_p: list[float] = field(default_factory=list)
    covnet: list[float] = field(default_factory=list)
    rt_ms: list[float] = field(default_factory=list)

    def add(self, cov1, covk, sim, n_p, covnet, rt_ms=None):
        self.cov1.append(cov1)
        self.covk.append(covk)
        if sim is not None:
            self.sim.append(sim)
        self.n_p.append(n_p)
        self.covnet.append(covnet)
        if rt_ms is not None:
            self.rt_ms.append(rt_ms)

    def means(self) -> dict[str, float]:
        def m(x):
            return float(np.mean(x)) if x else float("nan")

        return {
            "cov1": m(self.cov1), "covk": m(self.covk), "sim": m(self.sim),
            "n_p": m(self.n_p), "cov_net": m(self.covnet), "rt_ms": m(self.rt_ms),
            "count": len(self.cov1),
        }


REPORT_FIELDS = ["method", "split", "count", "cov1", "covk", "sim", "n_p", "cov_net", "rt_ms"]


@dataclass
class EvalReport:
    """Per (method, split) aggregates; also keeps per-sample rows."""

    stats: dict[tuple[str, str], MethodStats] = field(default_factory=dict)

    def record(self, method: str, splits: Iterable[str], **values) -> None:
        for split in splits:
            self.stats.setdefault((method, split), MethodStats()).add(**values)

    def rows(self) -> list[dict]:
        out = []
        for (method, split), st in self.stats.items():
            out.append({"method": method, "split": split, **st.means()})
        return out

    def get(self, method: str, split: str = "set1") -> dict[str, float]:
        return self.stats[(method, split)].means()

    def write_csv(self, path_or_file) -> None:
        """``path_or_file``: a path, or an open text file (left open)."""
        if hasattr(path_or_file, "write"):
            self._write(path_or_file)
        else:
            with open(path_or_file, "w", newline="") as fh:
                self._write(fh)

    def _write(self, fh) -> None:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        w.writeheader()
        for row in self.rows():
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
