"""Link cost model: user-preference pooling, link representation, gated scenario heads.

Everything is plain numpy with hand-written reverse-mode gradients.

cost_i = max(eps, relu(sum_s gate_s(x_u) * head_s([x_u, x_l_i])))

* x_u: target-attention pooling of the user's history against the request
  context, followed by one ELU layer.
* x_l_i: an ELU perceptron (128x64x32) over the link's standardised
  features, heat, a pooled encoding of its frequency events and its link
  memory; in ``offline`` mode a single-head attention layer over dual-graph
  neighbours refines it.
* gate: softmax over the scenario heads, driven by x_u.
"""
from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .features import LinkInputs, NormStats, RequestInputs

OFFLINE, DEPLOYMENT = "offline", "deployment"
MODES = (OFFLINE, DEPLOYMENT)
CHUNK = 64  # rows per block in deployment_costs
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    ctx_cont: int
    hist_dim: int
    link_cont: int
    ctx_vocabs: tuple[int, ...] = ()
    link_vocabs: tuple[int, ...] = ()
    freq_events: int = 20
    freq_dim: int = 7
    heat_dim: int = 2
    K: int = 3
    ctx_emb: int = 3
    link_emb: int = 4
    freq_hidden: int = 8
    att_hidden: int = 16
    user_dim: int = 32
    link_widths: tuple[int, ...] = (128, 64, 32)
    head_widths: tuple[int, ...] = (128, 64, 32)
    scn_heads: int = 4
    use_user: bool = True
    eps: float = 1e-6

    @property
    def ctx_width(self) -> int:
        return self.ctx_cont + len(self.ctx_vocabs) * self.ctx_emb

    @property
    def link_in(self) -> int:
        return (self.link_cont + len(self.link_vocabs) * self.link_emb + self.heat_dim
                + self.freq_hidden + 1 + self.K)

    @property
    def rep_dim(self) -> int:
        return self.link_widths[-1]

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for k in ("ctx_vocabs", "link_vocabs", "link_widths", "head_widths"):
            d[k] = tuple(d[k])
        return cls(**d)

    @classmethod
    def for_layout(cls, layout, **overrides) -> "ModelConfig":
        """Input dims taken from a dataset layout; everything else overridable."""
        for k in ("ctx_vocabs", "link_vocabs", "link_widths", "head_widths"):
            if k in overrides:
                overrides[k] = tuple(overrides[k])
        return cls(
            ctx_cont=len(layout.context_cont), hist_dim=layout.history_dim, link_cont=len(layout.link_cont),
            ctx_vocabs=tuple(layout.context[i].vocab for i in layout.context_cat),
            link_vocabs=tuple(layout.link[i].vocab for i in layout.link_cat),
            freq_events=layout.freq_events, **overrides)


def _glorot(rng, shape, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> "OrderedDict[str, np.ndarray]":
    if len(cfg.head_widths) != 3 or len(cfg.link_widths) != 3:
        raise ModelError("link and head perceptrons have exactly three hidden layers")
    P: OrderedDict[str, np.ndarray] = OrderedDict()
    S, Dh, A, U = cfg.ctx_width, cfg.hist_dim, cfg.att_hidden, cfg.user_dim
    for i, v in enumerate(cfg.ctx_vocabs):
        P[f"emb_ctx{i}"] = rng.normal(0, 0.1, (v + 1, cfg.ctx_emb))
    P["user_P"] = _glorot(rng, (Dh, S), S, Dh)
    P["user_Wa"] = _glorot(rng, (A, 2 * Dh + S), 2 * Dh + S, A)
    P["user_ba"] = np.zeros(A)
    P["user_wa"] = rng.normal(0, 1.0 / np.sqrt(A), A)
    P["user_Wu"] = _glorot(rng, (U, Dh + S + 1), Dh + S + 1, U)
    P["user_bu"] = np.zeros(U)
    P["freq_W"] = _glorot(rng, (cfg.freq_hidden, cfg.freq_dim), cfg.freq_dim, cfg.freq_hidden)
    P["freq_b"] = np.zeros(cfg.freq_hidden)
    for i, v in enumerate(cfg.link_vocabs):
        P[f"emb_link{i}"] = rng.normal(0, 0.1, (v + 1, cfg.link_emb))
    w1, w2, w3 = cfg.link_widths
    P["link_W1"] = _glorot(rng, (w1, cfg.link_in), cfg.link_in, w1)
    P["link_b1"] = np.zeros(w1)
    P["link_W2"] = _glorot(rng, (w2, w1), w1, w2)
    P["link_b2"] = np.zeros(w2)
    P["link_W3"] = _glorot(rng, (w3, w2), w2, w3)
    P["link_b3"] = np.zeros(w3)
    P["gat_W"] = _glorot(rng, (w3, w3), w3, w3)
    P["gat_as"] = rng.normal(0, 0.1, w3)
    P["gat_ad"] = rng.normal(0, 0.1, w3)
    nh = cfg.scn_heads
    h1, h2, h3 = cfg.head_widths
    fin = U + w3
    P["scn_A1"] = _glorot(rng, (nh * h1, fin), fin, h1)
    P["scn_c1"] = np.zeros(nh * h1)
    P["scn_A2"] = _glorot(rng, (nh, h2, h1), h1, h2)
    P["scn_c2"] = np.zeros((nh, h2))
    P["scn_A3"] = _glorot(rng, (nh, h3, h2), h2, h3)
    P["scn_c3"] = np.zeros((nh, h3))
    P["scn_a4"] = rng.normal(0, 0.05, (nh, h3))
    P["scn_c4"] = np.ones(nh)
    P["gate_W"] = _glorot(rng, (nh, U), U, nh)
    P["gate_b"] = np.zeros(nh)
    return P


def flatten(params) -> np.ndarray:
    return np.concatenate([p.ravel() for p in params.values()])


def unflatten(vec: np.ndarray, like) -> "OrderedDict[str, np.ndarray]":
    need = sum(p.size for p in like.values())
    if need != len(vec):
        raise ModelError(f"flat vector has {len(vec)} entries, parameters need {need}")
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    i = 0
    for k, p in like.items():
        out[k] = np.asarray(vec[i:i + p.size], dtype=float).reshape(p.shape).copy()
        i += p.size
    return out


def zeros_like(params) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((k, np.zeros_like(v)) for k, v in params.items())


# -- elementwise helpers -------------------------------------------------------

def _elu(x):
    y = np.expm1(np.minimum(x, 0.0))
    y += np.maximum(x, 0.0)
    return y


def _delu(y):
    """ELU derivative expressed through the ELU output ``y``."""
    return np.minimum(y, 0.0) + 1.0


def _seg_starts(seg: np.ndarray, n_seg: int) -> np.ndarray:
    return np.searchsorted(seg, np.arange(n_seg))


def _seg_sum(x: np.ndarray, seg: np.ndarray, n_seg: int) -> np.ndarray:
    """Sum rows of ``x`` per segment id (``seg`` sorted ascending)."""
    out = np.zeros((n_seg,) + x.shape[1:])
    if len(seg) == 0:
        return out
    starts = _seg_starts(seg, n_seg)
    present = np.unique(seg)
    sums = np.add.reduceat(x, starts[present], axis=0)
    out[present] = sums
    return out


# -- user preference -----------------------------------------------------------

def _context_vector(P, cfg: ModelConfig, req: RequestInputs):
    parts = [req.ctx_cont]
    for i in range(len(cfg.ctx_vocabs)):
        parts.append(P[f"emb_ctx{i}"][req.ctx_cat[:, i]])
    return np.concatenate(parts, axis=1) if len(parts) > 1 else req.ctx_cont.copy()


def user_forward(P, cfg: ModelConfig, req: RequestInputs):
    """Target-attention pooling of history items; returns (x_u, attention, cache)."""
    B = req.size
    if not cfg.use_user:
        return np.zeros((B, cfg.user_dim)), np.zeros(req.hist_mask.shape), None
    s = _context_vector(P, cfg, req)
    h = req.hist
    mask = req.hist_mask
    p = s @ P["user_P"].T
    q = h * p[:, None, :]
    Hn = h.shape[1]
    z = np.concatenate([h, np.broadcast_to(s[:, None, :], (B, Hn, s.shape[1])), q], axis=2)
    a = np.tanh(z @ P["user_Wa"].T + P["user_ba"])
    score = a @ P["user_wa"]
    score = np.where(mask, score, -np.inf)
    has = mask.any(axis=1)
    mx = np.where(has, np.max(np.where(mask, score, -np.inf), axis=1, initial=-np.inf), 0.0)
    ex = np.where(mask, np.exp(score - mx[:, None]), 0.0)
    den = ex.sum(axis=1)
    alpha = np.where(has[:, None], ex / np.where(den > 0, den, 1.0)[:, None], 0.0)
    pooled = np.einsum("bh,bhd->bd", alpha, h)
    flag = (~has).astype(float)[:, None]
    uin = np.concatenate([pooled, s, flag], axis=1)
    upre = uin @ P["user_Wu"].T + P["user_bu"]
    xu = _elu(upre)
    cache = dict(s=s, h=h, mask=mask, p=p, z=z, a=a, alpha=alpha, uin=uin, xu=xu, cat=req.ctx_cat)
    return xu, alpha, cache


def user_backward(P, cfg: ModelConfig, cache, dxu, G) -> None:
    if cache is None:
        return
    Dh = cfg.hist_dim
    S = cache["s"].shape[1]
    dupre = dxu * _delu(cache["xu"])
    G["user_Wu"] += dupre.T @ cache["uin"]
    G["user_bu"] += dupre.sum(axis=0)
    duin = dupre @ P["user_Wu"]
    dpooled = duin[:, :Dh]
    ds = duin[:, Dh:Dh + S].copy()
    h, alpha, mask = cache["h"], cache["alpha"], cache["mask"]
    dalpha = np.einsum("bd,bhd->bh", dpooled, h)
    dscore = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    dscore = np.where(mask, dscore, 0.0)
    a = cache["a"]
    G["user_wa"] += np.einsum("bh,bha->a", dscore, a)
    dapre = dscore[..., None] * P["user_wa"] * (1.0 - a * a)
    G["user_Wa"] += np.einsum("bha,bhz->az", dapre, cache["z"])
    G["user_ba"] += dapre.sum(axis=(0, 1))
    dz = dapre @ P["user_Wa"]
    ds += dz[:, :, Dh:Dh + S].sum(axis=1)
    dq = dz[:, :, Dh + S:]
    dp = (dq * h).sum(axis=1)
    G["user_P"] += dp.T @ cache["s"]
    ds += dp @ P["user_P"]
    off = cfg.ctx_cont
    for i in range(len(cfg.ctx_vocabs)):
        np.add.at(G[f"emb_ctx{i}"], cache["cat"][:, i], ds[:, off:off + cfg.ctx_emb])
        off += cfg.ctx_emb


# -- link representation -------------------------------------------------------

def link_forward(P, cfg: ModelConfig, links: LinkInputs, lm: np.ndarray):
    """Base link representation (R, rep_dim) plus cache."""
    R = len(links)
    if lm.shape != (R, cfg.K):
        raise ModelError(f"link memory has shape {lm.shape}, expected ({R}, {cfg.K})")
    if links.cont.shape[1] != cfg.link_cont:
        raise ModelError(f"link features have {links.cont.shape[1]} continuous channels, expected {cfg.link_cont}")
    F = links.freq.shape[1]
    fpre = (links.freq.reshape(R * F, cfg.freq_dim) @ P["freq_W"].T).reshape(R, F, -1) + P["freq_b"]
    fh = _elu(fpre)
    m = links.freq_mask.astype(float)
    acc = np.zeros((R, cfg.freq_hidden))
    for f in range(F):
        acc = acc + fh[:, f, :] * m[:, f:f + 1]
    n = m.sum(axis=1)
    empty = n == 0
    zero_out = _elu(P["freq_b"])
    fmean = np.where(empty[:, None], zero_out, acc / np.maximum(n, 1.0)[:, None])
    frac = (n / cfg.freq_events)[:, None]
    parts = [links.cont]
    for i in range(len(cfg.link_vocabs)):
        parts.append(P[f"emb_link{i}"][links.cat[:, i]])
    parts += [links.heat, fmean, frac, lm]
    xin = np.concatenate(parts, axis=1)
    pre1 = xin @ P["link_W1"].T + P["link_b1"]
    h1 = _elu(pre1)
    pre2 = h1 @ P["link_W2"].T + P["link_b2"]
    h2 = _elu(pre2)
    pre3 = h2 @ P["link_W3"].T + P["link_b3"]
    base = _elu(pre3)
    cache = dict(links=links, fh=fh, m=m, n=n, empty=empty, xin=xin, h1=h1, h2=h2, base=base)
    return base, cache


def link_backward(P, cfg: ModelConfig, cache, dbase, G) -> None:
    d3 = dbase * _delu(cache["base"])
    G["link_W3"] += d3.T @ cache["h2"]
    G["link_b3"] += d3.sum(axis=0)
    d2 = (d3 @ P["link_W3"]) * _delu(cache["h2"])
    G["link_W2"] += d2.T @ cache["h1"]
    G["link_b2"] += d2.sum(axis=0)
    d1 = (d2 @ P["link_W2"]) * _delu(cache["h1"])
    G["link_W1"] += d1.T @ cache["xin"]
    G["link_b1"] += d1.sum(axis=0)
    dxin = d1 @ P["link_W1"]
    links = cache["links"]
    off = cfg.link_cont
    for i in range(len(cfg.link_vocabs)):
        np.add.at(G[f"emb_link{i}"], links.cat[:, i], dxin[:, off:off + cfg.link_emb])
        off += cfg.link_emb
    off += cfg.heat_dim
    dfmean = dxin[:, off:off + cfg.freq_hidden]
    empty = cache["empty"]
    if empty.any():
        G["freq_b"] += (dfmean[empty] * _delu(_elu(P["freq_b"]))).sum(axis=0)
    full = ~empty
    if full.any():
        m = cache["m"][full]
        share = m / cache["n"][full][:, None]
        dfh = dfmean[full][:, None, :] * share[:, :, None]
        dfpre = dfh * _delu(cache["fh"][full])
        ev = links.freq[full]
        G["freq_W"] += np.einsum("rfh,rfd->hd", dfpre, ev)
        G["freq_b"] += dfpre.sum(axis=(0, 1))


# -- neighbour attention -------------------------------------------------------

def attention_forward(P, base: np.ndarray, n_targets: int, dst: np.ndarray, src: np.ndarray):
    """Refine the first ``n_targets`` rows of ``base`` with attention over
    their neighbour rows. Edges (dst -> src) must be sorted by dst."""
    z = base @ P["gat_W"].T
    es = z @ P["gat_as"]
    ed = z @ P["gat_ad"]
    pre = es[dst] + ed[src]
    e = np.where(pre > 0, pre, 0.2 * pre)
    out = base[:n_targets].copy()
    alpha = np.zeros(len(dst))
    if len(dst):
        present = np.unique(dst)
        starts = np.searchsorted(dst, present)
        mx = np.maximum.reduceat(e, starts)
        full_mx = np.zeros(n_targets)
        full_mx[present] = mx
        ex = np.exp(e - full_mx[dst])
        den = np.zeros(n_targets)
        den[present] = np.add.reduceat(ex, starts)
        alpha = ex / den[dst]
        agg = np.zeros((n_targets, z.shape[1]))
        agg[present] = np.add.reduceat(alpha[:, None] * z[src], starts, axis=0)
        out = out + agg
    cache = dict(base=base, z=z, pre=pre, alpha=alpha, dst=dst, src=src, n_targets=n_targets)
    return out, alpha, cache


def attention_backward(P, cache, dout, G) -> np.ndarray:
    base, z, alpha = cache["base"], cache["z"], cache["alpha"]
    dst, src, T = cache["dst"], cache["src"], cache["n_targets"]
    dbase = np.zeros_like(base)
    dbase[:T] += dout
    if len(dst) == 0:
        return dbase
    dz = np.zeros_like(z)
    dalpha = np.einsum("ed,ed->e", dout[dst], z[src])
    np.add.at(dz, src, alpha[:, None] * dout[dst])
    wsum = np.zeros(T)
    np.add.at(wsum, dst, alpha * dalpha)
    de = alpha * (dalpha - wsum[dst])
    dpre = de * np.where(cache["pre"] > 0, 1.0, 0.2)
    des = np.zeros(len(z))
    ded = np.zeros(len(z))
    np.add.at(des, dst, dpre)
    np.add.at(ded, src, dpre)
    G["gat_as"] += des @ z
    G["gat_ad"] += ded @ z
    dz += np.outer(des, P["gat_as"]) + np.outer(ded, P["gat_ad"])
    G["gat_W"] += dz.T @ base
    dbase += dz @ P["gat_W"]
    return dbase


# -- scenario heads ------------------------------------------------------------

def scenario_forward(P, cfg: ModelConfig, xu: np.ndarray, xl: np.ndarray, seg: np.ndarray):
    nh = cfg.scn_heads
    U = cfg.user_dim
    T = len(xl)
    h1 = cfg.head_widths[0]
    A1 = P["scn_A1"]
    upart = xu @ A1[:, :U].T
    pre1 = upart[seg] + xl @ A1[:, U:].T + P["scn_c1"]
    a1 = _elu(pre1)
    g1 = a1.reshape(T, nh, h1).transpose(1, 0, 2)
    pre2 = g1 @ P["scn_A2"].transpose(0, 2, 1) + P["scn_c2"][:, None, :]
    g2 = _elu(pre2)
    pre3 = g2 @ P["scn_A3"].transpose(0, 2, 1) + P["scn_c3"][:, None, :]
    g3 = _elu(pre3)
    ys = (g3 @ P["scn_a4"][:, :, None])[:, :, 0] + P["scn_c4"][:, None]
    glog = xu @ P["gate_W"].T + P["gate_b"]
    glog = glog - glog.max(axis=1, keepdims=True)
    gate = np.exp(glog)
    gate /= gate.sum(axis=1, keepdims=True)
    grow = gate[seg]
    y = np.einsum("th,ht->t", grow, ys)
    cost = np.maximum(cfg.eps, y)
    cache = dict(xu=xu, xl=xl, seg=seg, a1=a1, g1=g1, g2=g2, g3=g3,
                 ys=ys, gate=gate, grow=grow, y=y)
    return cost, gate, cache


def scenario_backward(P, cfg: ModelConfig, cache, dcost, G):
    """Returns (dxu, dxl)."""
    U = cfg.user_dim
    seg, xu, xl = cache["seg"], cache["xu"], cache["xl"]
    B = len(xu)
    T = len(xl)
    dy = np.where(cache["y"] > cfg.eps, dcost, 0.0)
    ys, grow, gate = cache["ys"], cache["grow"], cache["gate"]
    dgrow = dy[:, None] * ys.T
    dys = (dy[:, None] * grow).T  # (nh, T)
    g3 = cache["g3"]
    G["scn_a4"] += (dys[:, None, :] @ g3)[:, 0, :]
    G["scn_c4"] += dys.sum(axis=1)
    dpre3 = dys[:, :, None] * P["scn_a4"][:, None, :] * _delu(cache["g3"])
    G["scn_A3"] += dpre3.transpose(0, 2, 1) @ cache["g2"]
    G["scn_c3"] += dpre3.sum(axis=1)
    dpre2 = (dpre3 @ P["scn_A3"]) * _delu(cache["g2"])
    G["scn_A2"] += dpre2.transpose(0, 2, 1) @ cache["g1"]
    G["scn_c2"] += dpre2.sum(axis=1)
    dg1 = dpre2 @ P["scn_A2"]  # (nh, T, h1)
    dpre1 = dg1.transpose(1, 0, 2).reshape(T, -1) * _delu(cache["a1"])
    A1 = P["scn_A1"]
    G["scn_c1"] += dpre1.sum(axis=0)
    G["scn_A1"][:, U:] += dpre1.T @ xl
    dxl = dpre1 @ A1[:, U:]
    dup = _seg_sum(dpre1, seg, B)
    G["scn_A1"][:, :U] += dup.T @ xu
    dxu = dup @ A1[:, :U]
    dgate = _seg_sum(dgrow, seg, B)
    dglog = gate * (dgate - (gate * dgate).sum(axis=1, keepdims=True))
    G["gate_W"] += dglog.T @ xu
    G["gate_b"] += dglog.sum(axis=0)
    dxu = dxu + dglog @ P["gate_W"]
    return dxu, dxl


# -- full model ----------------------------------------------------------------

@dataclass
class Forward:
    costs: np.ndarray
    gate: np.ndarray
    user_attention: np.ndarray
    neighbor_attention: np.ndarray | None
    cache: dict = field(repr=False, default_factory=dict)


def forward(P, cfg: ModelConfig, req: RequestInputs, links: LinkInputs, lm: np.ndarray, seg: np.ndarray,
            mode: str = DEPLOYMENT, n_targets: int | None = None, dst=None, src=None,
            xu: np.ndarray | None = None) -> Forward:
    """Costs for the first ``n_targets`` link rows (all rows by default).

    ``seg[r]`` is the request (row of ``req``) link row ``r`` belongs to and
    must be sorted. In offline mode rows past ``n_targets`` are context
    (neighbour) rows and ``dst``/``src`` list attention edges. A precomputed
    ``xu`` may be passed to skip the user module (no gradient then flows to it).
    """
    if mode not in MODES:
        raise ModelError(f"mode must be one of {MODES}")
    T = len(links) if n_targets is None else n_targets
    ucache = None
    if xu is None:
        xu, ualpha, ucache = user_forward(P, cfg, req)
    else:
        ualpha = None
    base, lcache = link_forward(P, cfg, links, lm)
    acache = None
    nalpha = None
    if mode == OFFLINE and dst is not None:
        xl, nalpha, acache = attention_forward(P, base, T, np.asarray(dst), np.asarray(src))
    else:
        xl = base[:T]
    cost, gate, scache = scenario_forward(P, cfg, xu, xl, np.asarray(seg[:T]))
    cache = dict(ucache=ucache, lcache=lcache, acache=acache, scache=scache, n_rows=len(links), T=T)
    return Forward(cost, gate, ualpha, nalpha, cache)


def user_vector(P, cfg: ModelConfig, req: RequestInputs) -> np.ndarray:
    return user_forward(P, cfg, req)[0]


def deployment_costs(P, cfg: ModelConfig, xu: np.ndarray, links: LinkInputs, lm: np.ndarray) -> np.ndarray:
    """Neighbour-free costs for one request, evaluated in zero-padded blocks of
    ``CHUNK`` rows so every row goes through identically shaped arrays: a
    link's cost is bit-identical whichever other links are evaluated with it."""
    R = len(links)
    out = np.empty(R)
    seg = np.zeros(CHUNK, dtype=np.int64)
    for s in range(0, R, CHUNK):
        idx = np.arange(s, min(s + CHUNK, R))
        n = len(idx)
        blk = links.take(np.concatenate([idx, np.full(CHUNK - n, idx[0])]))
        lmb = np.concatenate([lm[idx], np.repeat(lm[idx[:1]], CHUNK - n, axis=0)])
        base, _ = link_forward(P, cfg, blk, lmb)
        cost, _, _ = scenario_forward(P, cfg, xu, base, seg)
        out[idx] = cost[:n]
    return out


def backward(P, cfg: ModelConfig, fwd: Forward, dcost: np.ndarray, G=None):
    """Accumulate d(loss)/d(params) into ``G`` (created if None) and return it."""
    if not fwd.cache:
        raise ModelError("forward cache missing; run forward() first")
    if G is None:
        G = zeros_like(P)
    c = fwd.cache
    dxu, dxl = scenario_backward(P, cfg, c["scache"], np.asarray(dcost, dtype=float), G)
    if c["acache"] is not None:
        dbase = attention_backward(P, c["acache"], dxl, G)
    else:
        dbase = np.zeros((c["n_rows"], dxl.shape[1]))
        dbase[:c["T"]] = dxl
    link_backward(P, cfg, c["lcache"], dbase, G)
    user_backward(P, cfg, c["ucache"], dxu, G)
    return G


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(path: str | Path, P, cfg: ModelConfig, stats: NormStats | None, extra: dict | None = None) -> None:
    blob = {
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_json(),
        "shapes": {k: list(v.shape) for k, v in P.items()},
        "params": flatten(P).tolist(),
        "stats": stats.to_json() if stats is not None else None,
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(blob))


def load_checkpoint(path: str | Path):
    blob = json.loads(Path(path).read_text())
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ModelError(f"unsupported checkpoint version {blob.get('version')}")
    cfg = ModelConfig.from_json(blob["config"])
    template = init_params(cfg, np.random.default_rng(0))
    shapes = {k: list(v.shape) for k, v in template.items()}
    if shapes != blob["shapes"]:
        raise ModelError("checkpoint parameter shapes do not match its config")
    P = unflatten(np.asarray(blob["params"], dtype=float), template)
    stats = NormStats.from_json(blob["stats"]) if blob["stats"] else None
    return P, cfg, stats, blob.get("extra", {})
