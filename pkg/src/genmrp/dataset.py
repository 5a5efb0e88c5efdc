"""Sample records, JSON-lines IO and evaluation splits.

A dataset directory holds::

    graph.jsonl    primal road graph (nodes then edges)
    links.jsonl    static per-link features of the full network
    samples.jsonl  header line, then one record per sample
    stats.json     normalisation statistics fitted on the training split
    splits.json    train/val/test sample ids and test subsets set1..set4

Records come in two encodings. ``inline`` records carry their own adjacency,
lengths, link features and heat. ``ref`` records carry ``link_ref`` (global
link ids, ascending) and derive those from the shared network tables; only
per-request quantities (history, frequency events, dynamic heat, routes) are
stored. Frequency events are stored for non-empty links only.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .features import FeatureLayout
from .graph import DualGraph, dual_from_adjacency, load_primal, save_primal, to_dual
from .attributes import link_table
from .metrics import coverage

FORMAT = "genmrp-samples"
VERSION = 1
COV_TOL = 1e-6
SPLITS = ("set1", "set2", "set3", "set4")


class DatasetError(ValueError):
    pass


@dataclass
class NetworkTables:
    """Shared per-link tables of the full network, indexed by global link id."""

    dual: DualGraph
    x_link: np.ndarray  # (N_g, D_l)
    heat0: np.ndarray  # (N_g,) static heat channel

    @property
    def n_links(self) -> int:
        return self.dual.n_links


@dataclass(eq=False)
class SampleRecord:
    sample_id: int
    user_id: int
    seq: int
    origin: int
    destination: int
    n_links: int
    x_s: np.ndarray
    x_h: np.ndarray  # (H, D_h), zero rows are padding
    freq_links: np.ndarray  # (n_f,) local ids with at least one event
    freq_events: np.ndarray  # (n_f, F, 7)
    routes: list[tuple[int, ...]]
    cov: np.ndarray
    r_u: tuple[int, ...]
    link_ref: np.ndarray | None = None
    tables: NetworkTables | None = field(default=None, repr=False)
    heat_dyn: tuple[np.ndarray, np.ndarray] | None = None  # ref: sparse second heat channel
    adjacency: np.ndarray | None = None  # inline
    lengths_inline: np.ndarray | None = None
    x_link_inline: np.ndarray | None = None
    heat_inline: np.ndarray | None = None
    flags: list[str] = field(default_factory=list)
    _dual: DualGraph | None = field(default=None, repr=False)

    @property
    def is_ref(self) -> bool:
        return self.link_ref is not None

    @property
    def dual(self) -> DualGraph:
        if self._dual is None:
            if self.is_ref:
                self._dual = self.tables.dual.subgraph(self.link_ref)[0]
            else:
                self._dual = dual_from_adjacency(self.n_links, self.adjacency, self.lengths_inline)
        return self._dual

    @property
    def lengths(self) -> np.ndarray:
        if self.is_ref:
            return self.tables.dual.length_m[self.link_ref]
        return self.lengths_inline

    @property
    def x_link(self) -> np.ndarray:
        if self.is_ref:
            return self.tables.x_link[self.link_ref]
        return self.x_link_inline

    @property
    def x_heat(self) -> np.ndarray:
        if not self.is_ref:
            return self.heat_inline
        out = np.zeros((self.n_links, 2))
        out[:, 0] = self.tables.heat0[self.link_ref]
        idx, val = self.heat_dyn
        out[idx, 1] = val
        return out

    @property
    def freq_dim(self) -> tuple[int, int]:
        return self.freq_events.shape[1:]

    def freq_dense(self, idx=None) -> np.ndarray:
        F, C = self.freq_events.shape[1:]
        idx = np.arange(self.n_links) if idx is None else np.asarray(idx, dtype=np.int64)
        out = np.zeros((len(idx), F, C))
        if len(self.freq_links):
            pos = np.full(self.n_links, -1, dtype=np.int64)
            pos[self.freq_links] = np.arange(len(self.freq_links))
            p = pos[idx]
            hit = p >= 0
            out[hit] = self.freq_events[p[hit]]
        return out

    def familiar(self) -> np.ndarray:
        """0/1 per local link: the user has earlier frequency records on it."""
        f = np.zeros(self.n_links)
        f[self.freq_links] = 1.0
        return f

    @property
    def has_history(self) -> bool:
        return bool(np.any(self.x_h != 0))

    @property
    def has_freq(self) -> bool:
        return bool(len(self.freq_links)) and bool(np.any(self.freq_events != 0))

    @property
    def cov_star(self) -> float:
        return float(self.cov.max()) if len(self.cov) else 0.0

    @property
    def label(self) -> int:
        """argmax coverage; ties go to the shortest route, then the lowest index."""
        best = self.cov_star
        lengths = self.lengths
        cands = [i for i, c in enumerate(self.cov) if c == best]
        return min(cands, key=lambda i: (float(lengths[list(self.routes[i])].sum()), i))

    def splits(self) -> list[str]:
        out = ["set1"]
        f, h = self.has_freq, self.has_history
        if f:
            out.append("set2")
        if h:
            out.append("set3")
        if f or h:
            out.append("set4")
        return out


def attribute_table(rec: SampleRecord, layout: FeatureLayout) -> np.ndarray:
    """(N, 6) additive attribute table of a record's links (familiarity from x^freq)."""
    xl = rec.x_link
    col = layout.link_index
    return link_table(xl[:, col("fftime_s")], rec.lengths, xl[:, col("toll")], rec.familiar(),
                      xl[:, col("lights")], xl[:, col("rough_m")])


# -- serialisation -------------------------------------------------------------

def _num(x):
    return x.tolist() if isinstance(x, np.ndarray) else x


def record_to_json(rec: SampleRecord) -> dict:
    hist_rows = rec.x_h[np.any(rec.x_h != 0, axis=1)]
    d = {
        "id": rec.sample_id, "user": rec.user_id, "seq": rec.seq,
        "O": rec.origin, "D": rec.destination, "N": rec.n_links,
    }
    if rec.is_ref:
        d["link_ref"] = rec.link_ref.tolist()
        d["heat_dyn"] = {"links": rec.heat_dyn[0].tolist(), "values": rec.heat_dyn[1].tolist()}
    else:
        d["adjacency"] = rec.adjacency.tolist()
        d["lengths"] = rec.lengths_inline.tolist()
        d["x_link"] = rec.x_link_inline.tolist()
        d["x_heat"] = rec.heat_inline.tolist()
    d.update({
        "x_s": _num(rec.x_s),
        "x_h": hist_rows.tolist(),
        "freq": {"links": rec.freq_links.tolist(), "events": rec.freq_events.tolist()},
        "routes": [list(r) for r in rec.routes],
        "cov": rec.cov.tolist(),
        "r_u": list(rec.r_u),
    })
    return d


def header_json(layout: FeatureLayout, encoding: str, **extra) -> dict:
    return {"header": {"format": FORMAT, "version": VERSION, "encoding": encoding,
                       "layout": layout.to_json(), **extra}}


def save(path: str | Path, records: Iterable[SampleRecord], layout: FeatureLayout, encoding: str = "ref",
         **header_extra) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(header_json(layout, encoding, **header_extra), separators=(",", ":")) + "\n")
        for rec in records:
            if rec.is_ref != (encoding == "ref"):
                raise DatasetError(f"record {rec.sample_id} does not match encoding {encoding!r}")
            fh.write(json.dumps(record_to_json(rec), separators=(",", ":")) + "\n")


_REQUIRED = {"id", "user", "seq", "O", "D", "N", "x_s", "x_h", "freq", "routes", "cov", "r_u"}
_INLINE = {"adjacency", "lengths", "x_link", "x_heat"}
_REF = {"link_ref", "heat_dyn"}


def _arr(v, shape_tail: tuple, what: str, dtype=float) -> np.ndarray:
    a = np.asarray(v, dtype=dtype)
    if a.size == 0:
        a = a.reshape((0,) + shape_tail)
    if a.shape[1:] != shape_tail:
        raise DatasetError(f"{what}: expected trailing shape {shape_tail}, got {a.shape[1:]}")
    return a


def record_from_json(d: dict, layout: FeatureLayout, encoding: str, tables: NetworkTables | None) -> SampleRecord:
    keys = set(d)
    want = _REQUIRED | (_REF if encoding == "ref" else _INLINE)
    if keys != want:
        missing, unknown = want - keys, keys - want
        raise DatasetError(f"fields missing {sorted(missing)} / unknown {sorted(unknown)}")
    N = int(d["N"])
    if N < 1:
        raise DatasetError("N must be >= 1")
    H, Dh = layout.history_len, layout.history_dim
    S = len(layout.context)
    x_s = np.asarray(d["x_s"], dtype=float)
    if x_s.shape != (S,):
        raise DatasetError(f"x_s: expected {S} channels, got {x_s.shape}")
    rows = _arr(d["x_h"], (Dh,), "x_h")
    if len(rows) > H:
        raise DatasetError(f"x_h: {len(rows)} rows exceed history length {H}")
    x_h = np.zeros((H, Dh))
    x_h[:len(rows)] = rows
    fl = np.asarray(d["freq"]["links"], dtype=np.int64)
    fe = _arr(d["freq"]["events"], (layout.freq_events, layout.freq_dim), "freq.events")
    if len(fl) != len(fe):
        raise DatasetError("freq: links and events differ in length")
    if len(fl) and (fl.min() < 0 or fl.max() >= N):
        raise DatasetError("freq: link id out of range")
    kw = {}
    if encoding == "ref":
        if tables is None:
            raise DatasetError("ref-encoded record needs the network tables")
        ref = np.asarray(d["link_ref"], dtype=np.int64)
        if ref.shape != (N,) or (N and (ref.min() < 0 or ref.max() >= tables.n_links)):
            raise DatasetError("link_ref: wrong length or unknown global link")
        if np.any(np.diff(ref) <= 0):
            raise DatasetError("link_ref must be strictly ascending")
        hl = np.asarray(d["heat_dyn"]["links"], dtype=np.int64)
        hv = np.asarray(d["heat_dyn"]["values"], dtype=float)
        if hl.shape != hv.shape or (len(hl) and (hl.min() < 0 or hl.max() >= N)):
            raise DatasetError("heat_dyn: malformed")
        kw.update(link_ref=ref, tables=tables, heat_dyn=(hl, hv))
    else:
        adj = _arr(d["adjacency"], (2,), "adjacency", np.int64)
        if len(adj) and (adj.min() < 0 or adj.max() >= N):
            raise DatasetError("adjacency: link id out of range")
        lengths = np.asarray(d["lengths"], dtype=float)
        if lengths.shape != (N,) or np.any(lengths <= 0):
            raise DatasetError("lengths: wrong length or non-positive entry")
        kw.update(
            adjacency=adj, lengths_inline=lengths,
            x_link_inline=_arr(d["x_link"], (len(layout.link),), "x_link"),
            heat_inline=_arr(d["x_heat"], (layout.heat_dim,), "x_heat"),
        )
        if len(kw["x_link_inline"]) != N or len(kw["heat_inline"]) != N:
            raise DatasetError("x_link/x_heat: row count differs from N")
    routes = [tuple(int(x) for x in r) for r in d["routes"]]
    if not routes or any(not r for r in routes):
        raise DatasetError("routes: empty route set or empty route")
    for r in routes + [tuple(d["r_u"])]:
        if any(not 0 <= x < N for x in r):
            raise DatasetError("route link id out of range")
    O, D = int(d["O"]), int(d["D"])
    if not (0 <= O < N and 0 <= D < N):
        raise DatasetError("origin/destination out of range")
    cov = np.asarray(d["cov"], dtype=float)
    if cov.shape != (len(routes),):
        raise DatasetError("cov: one value per route required")
    rec = SampleRecord(
        sample_id=int(d["id"]), user_id=int(d["user"]), seq=int(d["seq"]),
        origin=O, destination=D, n_links=N, x_s=x_s, x_h=x_h,
        freq_links=fl, freq_events=fe, routes=routes, cov=cov,
        r_u=tuple(int(x) for x in d["r_u"]), **kw,
    )
    return rec


def check_record(rec: SampleRecord) -> list[str]:
    """Consistency flags: stored coverage vs recomputation, route validity."""
    flags = []
    lengths = rec.lengths
    fresh = np.array([coverage(rec.r_u, r, lengths) for r in rec.routes])
    bad = np.flatnonzero(np.abs(fresh - rec.cov) > COV_TOL)
    if len(bad):
        flags.append(f"cov mismatch on routes {bad.tolist()}")
    g = rec.dual
    for i, r in enumerate(rec.routes):
        if not g.is_valid_path(r) or r[0] != rec.origin or r[-1] != rec.destination:
            flags.append(f"route {i} is not an origin-destination path")
            break
    return flags


@dataclass
class LoadResult:
    layout: FeatureLayout
    header: dict
    records: list[SampleRecord]
    rejected: list[tuple[int, str]]  # (line number, reason)

    @property
    def flagged(self) -> list[SampleRecord]:
        return [r for r in self.records if r.flags]


def iter_load(path: str | Path, tables: NetworkTables | None = None,
              check: bool = True) -> Iterator[tuple[int, SampleRecord | None, str | None, dict]]:
    with open(path) as fh:
        first = fh.readline()
        try:
            header = json.loads(first)["header"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetError(f"line 1: missing or malformed header ({exc})") from None
        if header.get("format") != FORMAT or header.get("version") != VERSION:
            raise DatasetError(f"line 1: unsupported format {header.get('format')} v{header.get('version')}")
        layout = FeatureLayout.from_json(header["layout"])
        encoding = header.get("encoding")
        if encoding not in ("ref", "inline"):
            raise DatasetError(f"line 1: unknown encoding {encoding!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = record_from_json(json.loads(line), layout, encoding, tables)
                if check:
                    rec.flags = check_record(rec)
                yield lineno, rec, None, header
            except (DatasetError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                yield lineno, None, str(exc), header


def load(path: str | Path, tables: NetworkTables | None = None, check: bool = True) -> LoadResult:
    recs, rejected = [], []
    header = None
    for lineno, rec, err, header in iter_load(path, tables, check):
        if rec is None:
            rejected.append((lineno, err))
        else:
            recs.append(rec)
    if header is None:
        with open(path) as fh:
            header = json.loads(fh.readline())["header"]
    return LoadResult(FeatureLayout.from_json(header["layout"]), header, recs, rejected)


def make_splits(records: Sequence[SampleRecord]) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {s: [] for s in SPLITS}
    for rec in records:
        for s in rec.splits():
            out[s].append(rec.sample_id)
    return out


# -- network tables ------------------------------------------------------------

LINK_KEYS = {"id", "x_link", "heat0"}


def save_network(directory: str | Path, primal, tables: NetworkTables) -> None:
    d = Path(directory)
    save_primal(primal, d / "graph.jsonl")
    with open(d / "links.jsonl", "w") as fh:
        for i in range(tables.n_links):
            rec = {"id": i, "x_link": tables.x_link[i].tolist(), "heat0": float(tables.heat0[i])}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def load_network(directory: str | Path):
    d = Path(directory)
    primal = load_primal(d / "graph.jsonl")
    dual = to_dual(primal)
    xs, heat = [], []
    with open(d / "links.jsonl") as fh:
        for lineno, line in enumerate(fh, start=1):
            rec = json.loads(line)
            if set(rec) != LINK_KEYS:
                raise DatasetError(f"links.jsonl line {lineno}: keys {sorted(rec)}")
            if rec["id"] != lineno - 1:
                raise DatasetError(f"links.jsonl line {lineno}: ids must be dense and ordered")
            xs.append(rec["x_link"])
            heat.append(rec["heat0"])
    if len(xs) != dual.n_links:
        raise DatasetError(f"links.jsonl has {len(xs)} links, graph has {dual.n_links}")
    tables = NetworkTables(dual, np.asarray(xs, dtype=float), np.asarray(heat, dtype=float))
    return primal, tables
