"""Feature layout, normalisation statistics and standardisation.

Continuous channels are standardised with training-split statistics;
categorical channels are mapped to embedding rows, out-of-vocabulary values
going to a reserved UNK row (index ``vocab``).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Channel:
    name: str
    kind: str = "cont"  # "cont" | "cat"
    vocab: int = 0


@dataclass(frozen=True)
class FeatureLayout:
    """Channel descriptions for every feature block of a dataset."""

    context: tuple[Channel, ...]
    link: tuple[Channel, ...]
    history_len: int
    history_dim: int
    freq_events: int
    freq_dim: int = 7
    heat_dim: int = 2

    @property
    def context_cont(self) -> list[int]:
        return [i for i, c in enumerate(self.context) if c.kind == "cont"]

    @property
    def context_cat(self) -> list[int]:
        return [i for i, c in enumerate(self.context) if c.kind == "cat"]

    @property
    def link_cont(self) -> list[int]:
        return [i for i, c in enumerate(self.link) if c.kind == "cont"]

    @property
    def link_cat(self) -> list[int]:
        return [i for i, c in enumerate(self.link) if c.kind == "cat"]

    def link_index(self, name: str) -> int:
        for i, c in enumerate(self.link):
            if c.name == name:
                return i
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "context": [asdict(c) for c in self.context],
            "link": [asdict(c) for c in self.link],
            "history_len": self.history_len,
            "history_dim": self.history_dim,
            "freq_events": self.freq_events,
            "freq_dim": self.freq_dim,
            "heat_dim": self.heat_dim,
        }

    @classmethod
    def from_json(cls, d: dict) -> "FeatureLayout":
        return cls(
            context=tuple(Channel(**c) for c in d["context"]),
            link=tuple(Channel(**c) for c in d["link"]),
            history_len=int(d["history_len"]),
            history_dim=int(d["history_dim"]),
            freq_events=int(d["freq_events"]),
            freq_dim=int(d.get("freq_dim", 7)),
            heat_dim=int(d.get("heat_dim", 2)),
        )


def standardize(x, mean, std):
    return (np.asarray(x, dtype=float) - mean) / np.maximum(std, STD_FLOOR)


def destandardize(z, mean, std):
    return np.asarray(z, dtype=float) * np.maximum(std, STD_FLOOR) + mean


def categorical_index(values, vocab: int) -> np.ndarray:
    v = np.asarray(values).astype(np.int64)
    return np.where((v >= 0) & (v < vocab), v, vocab)


@dataclass
class NormStats:
    """Per-channel mean/std for each continuous block."""

    context: tuple[np.ndarray, np.ndarray]
    history: tuple[np.ndarray, np.ndarray]
    link: tuple[np.ndarray, np.ndarray]
    heat: tuple[np.ndarray, np.ndarray]
    freq: tuple[np.ndarray, np.ndarray]

    BLOCKS = ("context", "history", "link", "heat", "freq")

    def to_json(self) -> dict:
        return {b: {"mean": getattr(self, b)[0].tolist(), "std": getattr(self, b)[1].tolist()}
                for b in self.BLOCKS}

    @classmethod
    def from_json(cls, d: dict) -> "NormStats":
        return cls(**{b: (np.asarray(d[b]["mean"], dtype=float), np.asarray(d[b]["std"], dtype=float))
                      for b in cls.BLOCKS})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "NormStats":
        return cls.from_json(json.loads(Path(path).read_text()))


class _Moments:
    def __init__(self, dim: int):
        self.n = 0
        self.s = np.zeros(dim)
        self.ss = np.zeros(dim)

    def add(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float).reshape(-1, len(self.s))
        self.n += len(x)
        self.s += x.sum(axis=0)
        self.ss += (x * x).sum(axis=0)

    def result(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n == 0:
            return np.zeros_like(self.s), np.ones_like(self.s)
        mean = self.s / self.n
        var = np.maximum(self.ss / self.n - mean * mean, 0.0)
        return mean, np.sqrt(var)


def fit_stats(records: Iterable, layout: FeatureLayout) -> NormStats:
    """Moments over the given (training) records; padded history rows and
    empty frequency events are excluded."""
    ctx = _Moments(len(layout.context_cont))
    hist = _Moments(layout.history_dim)
    link = _Moments(len(layout.link_cont))
    heat = _Moments(layout.heat_dim)
    freq = _Moments(layout.freq_dim)
    for rec in records:
        ctx.add(np.asarray(rec.x_s)[layout.context_cont])
        xh = np.asarray(rec.x_h)
        hist.add(xh[np.any(xh != 0, axis=1)])
        link.add(rec.x_link[:, layout.link_cont])
        heat.add(rec.x_heat)
        if len(rec.freq_links):
            ev = rec.freq_events.reshape(-1, layout.freq_dim)
            freq.add(ev[np.any(ev != 0, axis=1)])
    return NormStats(ctx.result(), hist.result(), link.result(), heat.result(), freq.result())


@dataclass
class RequestInputs:
    """Standardised request-level inputs for a batch of B requests."""

    ctx_cont: np.ndarray  # (B, S_cont)
    ctx_cat: np.ndarray  # (B, S_cat) int
    hist: np.ndarray  # (B, H, D_h)
    hist_mask: np.ndarray  # (B, H) bool

    @property
    def size(self) -> int:
        return len(self.ctx_cont)

    @staticmethod
    def stack(items: Sequence["RequestInputs"]) -> "RequestInputs":
        return RequestInputs(
            np.concatenate([r.ctx_cont for r in items]),
            np.concatenate([r.ctx_cat for r in items]),
            np.concatenate([r.hist for r in items]),
            np.concatenate([r.hist_mask for r in items]),
        )


@dataclass
class LinkInputs:
    """Standardised per-link inputs (memory excluded)."""

    cont: np.ndarray  # (R, D_lc)
    cat: np.ndarray  # (R, D_lcat) int
    heat: np.ndarray  # (R, 2)
    freq: np.ndarray  # (R, F, 7)
    freq_mask: np.ndarray  # (R, F) bool

    def __len__(self) -> int:
        return len(self.cont)

    def take(self, idx) -> "LinkInputs":
        return LinkInputs(self.cont[idx], self.cat[idx], self.heat[idx], self.freq[idx], self.freq_mask[idx])

    @staticmethod
    def concat(items: Sequence["LinkInputs"]) -> "LinkInputs":
        return LinkInputs(*(np.concatenate([getattr(x, f) for x in items]) for f in
                            ("cont", "cat", "heat", "freq", "freq_mask")))


@dataclass
class Preprocessor:
    layout: FeatureLayout
    stats: NormStats

    def request(self, rec) -> RequestInputs:
        lay = self.layout
        xs = np.asarray(rec.x_s, dtype=float)
        ctx = standardize(xs[lay.context_cont], *self.stats.context)
        cats = [categorical_index(xs[i], lay.context[i].vocab) for i in lay.context_cat]
        xh = np.asarray(rec.x_h, dtype=float)
        mask = np.any(xh != 0, axis=1)
        hist = np.where(mask[:, None], standardize(xh, *self.stats.history), 0.0)
        return RequestInputs(
            ctx[None, :],
            np.asarray(cats, dtype=np.int64).reshape(1, -1),
            hist[None],
            mask[None],
        )

    def links(self, rec, idx=None) -> LinkInputs:
        lay = self.layout
        idx = np.arange(rec.n_links) if idx is None else np.asarray(idx, dtype=np.int64)
        xl = rec.x_link[idx]
        cont = standardize(xl[:, lay.link_cont], *self.stats.link)
        cat = np.stack([categorical_index(xl[:, i], lay.link[i].vocab) for i in lay.link_cat], axis=1) \
            if lay.link_cat else np.zeros((len(idx), 0), dtype=np.int64)
        heat = standardize(rec.x_heat[idx], *self.stats.heat)
        raw = rec.freq_dense(idx)
        fmask = np.any(raw != 0, axis=2)
        freq = np.where(fmask[..., None], standardize(raw, *self.stats.freq), 0.0)
        return LinkInputs(cont, cat, heat, freq, fmask)
