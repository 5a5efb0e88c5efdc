"""Synthetic requests with planted user preferences.

Each user has an archetype and a latent per-link utility

    u = fftime * (1 + lam_unfam * (1 - familiar)) + lam_toll * toll
        + lam_light * lights + lam_rough * rough_m

(the four archetypes switch on one of the lam terms each; emergencies are
driven by travel time alone). The user's trajectory is the optimum of a
per-trip noisy copy of u, and "familiar" means traversed on the user's own
earlier trips. Requests are processed in time order across users so heat
counts and histories only look backwards. Each request is planned on an
elliptical corridor sub-network around its origin and destination.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .attributes import link_table, route_attributes
from .city import City, CityConfig, generate_city
from .dataset import NetworkTables, SampleRecord, make_splits, save, save_network
from .features import Channel, FeatureLayout, fit_stats
from .metrics import coverage
from .search import _bidirectional
from .training import sample_training_routes

TIME_USER, TOLL_AVOIDER, FAMILIARITY_SEEKER, COMFORT_SEEKER = range(4)
ARCHETYPES = ("time", "toll_avoider", "familiarity_seeker", "comfort_seeker")
COMMUTE, TOURISM, EMERGENCY = range(3)
SCENARIOS = ("commute", "tourism", "emergency")

LINK_CHANNELS = (
    Channel("length_m"), Channel("fftime_s"), Channel("toll"), Channel("lights"), Channel("rough_m"),
    Channel("speed_ms"), Channel("lanes"), Channel("road_class", "cat", 4), Channel("maneuver", "cat", 4),
    Channel("noise_a"), Channel("noise_b"), Channel("noise_c"),
)
CONTEXT_CHANNELS = (
    Channel("o_x_km"), Channel("o_y_km"), Channel("d_x_km"), Channel("d_y_km"), Channel("od_km"),
    Channel("hour_sin"), Channel("hour_cos"), Channel("night"), Channel("weekday"),
    Channel("scenario", "cat", len(SCENARIOS)),
)
HISTORY_CHANNELS = (
    "time_ratio", "dist_ratio", "toll", "toll_fastest", "toll_avoided", "familiar_share",
    "familiar_share_fastest", "lights_ratio", "lights_per_km", "rough_ratio", "rough_per_km",
    "cov_fastest", "od_km", "hour_sin", "hour_cos", "emergency",
)
FREQ_CHANNELS = ("recency", "origin_km", "destination_km", "hour", "weekday", "count", "position")


@dataclass(frozen=True)
class SyntheticConfig:
    city: CityConfig = CityConfig()
    n_users: int = 250
    samples_per_user: int = 25
    test_per_user: int = 4
    val_per_user: int = 1
    history_len: int = 20
    freq_events: int = 5
    od_km: tuple[float, float] = (1.5, 3.5)
    corridor_slack: float = 1.25
    corridor_pad_m: float = 300.0
    n_anchors: int = 3
    anchor_trip_prob: float = 0.75
    anchor_radius_m: float = 300.0
    emergency_prob: float = 0.1
    tourism_prob: float = 0.2
    lam_toll: float = 300.0
    lam_unfam: float = 0.8
    lam_light: float = 25.0
    lam_rough: float = 0.15
    user_jitter: float = 0.25
    route_noise: float = 0.12
    sampler_attempts: int = 30
    seed: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        d["od_km"] = list(self.od_km)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SyntheticConfig":
        d = dict(d)
        d["city"] = CityConfig(**d.get("city", {}))
        if "od_km" in d:
            d["od_km"] = tuple(d["od_km"])
        return cls(**d)


def tiny_config(seed: int = 0) -> SyntheticConfig:
    """A few seconds' worth of data for tests and examples."""
    return SyntheticConfig(
        city=CityConfig(width=9, height=9, arterial_every=4, random_arterials=1),
        n_users=8, samples_per_user=6, test_per_user=2, val_per_user=1, history_len=5, freq_events=3,
        od_km=(0.6, 1.3), corridor_pad_m=250.0, anchor_radius_m=250.0, sampler_attempts=12, seed=seed,
    )


def layout_for(cfg: SyntheticConfig) -> FeatureLayout:
    return FeatureLayout(CONTEXT_CHANNELS, LINK_CHANNELS, cfg.history_len, len(HISTORY_CHANNELS),
                         cfg.freq_events, len(FREQ_CHANNELS), 2)


@dataclass
class User:
    uid: int
    archetype: int
    lam: dict
    anchors: np.ndarray  # (n_anchors,) link ids
    trips: list = field(default_factory=list)  # (origin, destination, hour, weekday, scenario)
    seen: np.ndarray | None = None  # traversed links (bool, global)
    events: dict = field(default_factory=dict)  # global link -> list of event tuples
    counts: dict = field(default_factory=dict)
    summaries: list = field(default_factory=list)  # x^h rows, oldest first


@dataclass
class SyntheticDataset:
    config: SyntheticConfig
    city: City
    tables: NetworkTables
    layout: FeatureLayout
    records: list[SampleRecord]
    users: list[User]
    split_ids: dict[str, list[int]]

    def subset(self, name: str) -> list[SampleRecord]:
        ids = set(self.split_ids[name])
        return [r for r in self.records if r.sample_id in ids]

    @property
    def train(self) -> list[SampleRecord]:
        return self.subset("train")

    @property
    def val(self) -> list[SampleRecord]:
        return self.subset("val")

    @property
    def test(self) -> list[SampleRecord]:
        return self.subset("test")

    def archetype_of(self, rec: SampleRecord) -> int:
        return self.users[rec.user_id].archetype

    def write(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_network(d, self.city.primal, self.tables)
        save(d / "samples.jsonl", self.records, self.layout, "ref", generator=self.config.to_json())
        fit_stats(self.train, self.layout).save(d / "stats.json")
        test = self.test
        splits = {**self.split_ids, **{f"test_{k}": v for k, v in make_splits(test).items()}}
        (d / "splits.json").write_text(json.dumps(splits))
        (d / "users.json").write_text(json.dumps(
            [{"user": u.uid, "archetype": ARCHETYPES[u.archetype], "lam": u.lam} for u in self.users]))


def _link_tables(city: City, rng: np.random.Generator) -> NetworkTables:
    d = city.dual
    speed = d.length_m / d.fftime_s
    noise = rng.normal(size=(d.n_links, 3))
    x = np.column_stack([
        d.length_m, d.fftime_s, d.toll, city.lights, city.rough_m, speed, city.lanes,
        d.road_class, d.link_maneuver(), noise,
    ]).astype(float)
    base = np.array([400.0, 200.0, 80.0, 20.0])[d.road_class]
    heat0 = np.log1p(base * np.exp(rng.normal(0.0, 0.5, d.n_links)))
    return NetworkTables(d, x, heat0)


_LAM_KEYS = ("toll", "unfam", "light", "rough")


def _make_users(cfg: SyntheticConfig, mid: np.ndarray, rng: np.random.Generator) -> list[User]:
    users = []
    lo, hi = cfg.od_km[0] * 1000, cfg.od_km[1] * 1000
    n = len(mid)
    for uid in range(cfg.n_users):
        arch = uid % 4
        lam = dict.fromkeys(_LAM_KEYS, 0.0)
        j = lambda: float(np.exp(rng.normal(0.0, cfg.user_jitter)))  # noqa: E731
        if arch == TOLL_AVOIDER:
            lam["toll"] = cfg.lam_toll * j()
        elif arch == FAMILIARITY_SEEKER:
            lam["unfam"] = cfg.lam_unfam * j()
        elif arch == COMFORT_SEEKER:
            lam["light"] = cfg.lam_light * j()
            lam["rough"] = cfg.lam_rough * j()
        anchors = [int(rng.integers(n))]
        tries = 0
        while len(anchors) < cfg.n_anchors:
            c = int(rng.integers(n))
            dist = np.hypot(*(mid[anchors] - mid[c]).T)
            tries += 1
            if np.all((dist >= lo) & (dist <= hi)) or tries > 500:
                anchors.append(c)
        users.append(User(uid, arch, lam, np.array(anchors)))
    return users


def _near(mid: np.ndarray, point: np.ndarray, radius: float, rng: np.random.Generator) -> int:
    d = np.hypot(*(mid - point).T)
    cand = np.flatnonzero(d <= radius)
    if len(cand) == 0:
        return int(np.argmin(d))
    return int(cand[rng.integers(len(cand))])


def _plan_trips(cfg: SyntheticConfig, user: User, mid: np.ndarray, rng: np.random.Generator) -> None:
    lo, hi = cfg.od_km[0] * 1000, cfg.od_km[1] * 1000
    for _ in range(cfg.samples_per_user):
        r = rng.random()
        scen = EMERGENCY if r < cfg.emergency_prob else TOURISM if r < cfg.emergency_prob + cfg.tourism_prob \
            else COMMUTE
        for _attempt in range(100):
            a, b = rng.choice(len(user.anchors), size=2, replace=False)
            o = _near(mid, mid[user.anchors[a]], cfg.anchor_radius_m, rng)
            if rng.random() < cfg.anchor_trip_prob:
                dl = _near(mid, mid[user.anchors[b]], cfg.anchor_radius_m, rng)
            else:
                dl = int(rng.integers(len(mid)))
            dd = float(np.hypot(*(mid[o] - mid[dl])))
            if o != dl and lo <= dd <= hi:
                break
        if scen == COMMUTE:
            hour = float(np.clip(rng.normal(8.0 if rng.random() < 0.5 else 18.0, 1.0), 0, 23.99))
            weekday = 1.0
        elif scen == TOURISM:
            hour, weekday = float(rng.uniform(10, 17)), float(rng.random() < 0.3)
        else:
            hour, weekday = float(rng.uniform(0, 24)), float(rng.random() < 0.7)
        user.trips.append((o, dl, hour, weekday, scen))


def utility(lam: dict, fftime, toll, lights, rough, familiar, scenario: int) -> np.ndarray:
    """Planted per-link utility (lower is better)."""
    if scenario == EMERGENCY:
        return np.asarray(fftime, dtype=float).copy()
    return (fftime * (1.0 + lam["unfam"] * (1.0 - familiar)) + lam["toll"] * toll
            + lam["light"] * lights + lam["rough"] * rough)


def _corridor(tables: NetworkTables, xy_tail, xy_head, o: int, dl: int, mid, cfg: SyntheticConfig):
    f1, f2 = mid[o], mid[dl]
    span = cfg.corridor_slack * float(np.hypot(*(f1 - f2))) + cfg.corridor_pad_m
    dual = tables.dual
    for _ in range(8):
        inside = ((np.hypot(*(xy_tail - f1).T) + np.hypot(*(xy_tail - f2).T) <= span)
                  & (np.hypot(*(xy_head - f1).T) + np.hypot(*(xy_head - f2).T) <= span))
        inside[[o, dl]] = True
        keep = np.flatnonzero(inside)
        sub, _ = dual.subgraph(keep)
        lo, ld = int(np.searchsorted(keep, o)), int(np.searchsorted(keep, dl))
        if _bidirectional(sub.succ, sub.pred, sub.fftime_s.tolist(), lo, ld) is not None:
            return keep, sub, lo, ld
        span *= 1.25
    raise ValueError(f"no corridor connects links {o} and {dl}")


def _history_row(t_ru, t_st, cov_st, od_km, hour, scen) -> np.ndarray:
    (tr, dr, xr, fr, lr, rr), (ts, ds, xs, fs, ls, rs) = t_ru, t_st
    km = dr / 1000.0
    return np.array([
        tr / ts, dr / ds, xr, xs, (xs - xr) / xs if xs > 0 else 0.0, fr, fs,
        (lr + 1.0) / (ls + 1.0), lr / km, (rr + 100.0) / (rs + 100.0), rr / km,
        cov_st, od_km, np.sin(2 * np.pi * hour / 24), np.cos(2 * np.pi * hour / 24),
        float(scen == EMERGENCY),
    ])


def generate_synthetic(cfg: SyntheticConfig, progress=None) -> SyntheticDataset:
    """Deterministic given ``cfg.seed``."""
    if cfg.test_per_user + cfg.val_per_user >= cfg.samples_per_user:
        raise ValueError("samples_per_user must exceed test_per_user + val_per_user")
    if cfg.n_users < 1 or cfg.od_km[0] >= cfg.od_km[1]:
        raise ValueError("need at least one user and a non-empty od_km range")
    root = np.random.SeedSequence(cfg.seed)
    s_city, s_tab, s_user, s_trip = (np.random.default_rng(s) for s in root.spawn(4))
    city = generate_city(cfg.city, s_city)
    tables = _link_tables(city, s_tab)
    dual = tables.dual
    xy = city.primal.xy
    xy_tail, xy_head = xy[dual.tail], xy[dual.head]
    mid = (xy_tail + xy_head) / 2.0
    span = np.ptp(mid, axis=0).max()
    if span < cfg.od_km[0] * 1000:
        raise ValueError("city too small for the requested origin-destination distances")
    users = _make_users(cfg, mid, s_user)
    for u in users:
        _plan_trips(cfg, u, mid, s_user)
        u.seen = np.zeros(dual.n_links, dtype=bool)
    layout = layout_for(cfg)
    X = tables.x_link
    lights_g, rough_g = X[:, 3], X[:, 4]
    global_count = np.zeros(dual.n_links)
    records: list[SampleRecord] = []
    H, F = cfg.history_len, cfg.freq_events
    spu = cfg.samples_per_user
    for s in range(spu):
        for u in users:
            o, dl, hour, weekday, scen = u.trips[s]
            keep, sub, lo, ld = _corridor(tables, xy_tail, xy_head, o, dl, mid, cfg)
            fam = u.seen[keep].astype(float)
            ft, ln, tl = dual.fftime_s[keep], dual.length_m[keep], dual.toll[keep]
            li, ro = lights_g[keep], rough_g[keep]
            u_mean = utility(u.lam, ft, tl, li, ro, fam, scen)
            noisy = u_mean * np.exp(s_trip.normal(0.0, cfg.route_noise, len(keep)))
            r_u = tuple(_bidirectional(sub.succ, sub.pred, noisy.tolist(), lo, ld)[1])
            st = tuple(_bidirectional(sub.succ, sub.pred, ft.tolist(), lo, ld)[1])
            table = link_table(ft, ln, tl, fam, li, ro)

            def score(routes, u_mean=u_mean):
                return -np.array([u_mean[list(r.links)].sum() for r in routes])

            routes = sample_training_routes(sub, lo, ld, table, score, s_trip, cfg.sampler_attempts,
                                            guide_costs=[u_mean])
            cov = np.array([coverage(r_u, r.links, ln) for r in routes])

            ox, oy = mid[o] / 1000.0
            dx, dy = mid[dl] / 1000.0
            od_km = float(np.hypot(ox - dx, oy - dy))
            x_s = np.array([ox, oy, dx, dy, od_km, np.sin(2 * np.pi * hour / 24),
                            np.cos(2 * np.pi * hour / 24), float(hour < 6 or hour >= 22), weekday, scen])
            x_h = np.zeros((H, len(HISTORY_CHANNELS)))
            past = u.summaries[::-1][:H]
            if past:
                x_h[:len(past)] = past

            fam_local = np.flatnonzero(fam)
            events = np.zeros((len(fam_local), F, len(FREQ_CHANNELS)))
            for j, l in enumerate(fam_local):
                g = int(keep[l])
                evs = u.events[g][::-1][:F]
                for e, (se, eo, ed, eh, ew, ecount, epos) in enumerate(evs):
                    events[j, e] = [(s - se) / spu, np.hypot(*(eo - mid[o])) / 1000.0,
                                    np.hypot(*(ed - mid[dl])) / 1000.0, eh / 24.0, ew, ecount / 10.0, epos]
            hot = np.flatnonzero(global_count[keep] > 0)
            rec = SampleRecord(
                sample_id=len(records), user_id=u.uid, seq=s, origin=lo, destination=ld,
                n_links=len(keep), x_s=x_s, x_h=x_h, freq_links=fam_local, freq_events=events,
                routes=[r.links for r in routes], cov=cov, r_u=r_u, link_ref=keep, tables=tables,
                heat_dyn=(hot, np.log1p(global_count[keep][hot])), _dual=sub,
            )
            records.append(rec)

            a_ru, a_st = route_attributes(table, r_u), route_attributes(table, st)
            u.summaries.append(_history_row(a_ru, a_st, coverage(r_u, st, ln), od_km, hour, scen))
            g_ru = keep[list(r_u)]
            for pos, g in enumerate(g_ru):
                g = int(g)
                u.counts[g] = u.counts.get(g, 0) + 1
                u.events.setdefault(g, []).append(
                    (s, mid[o], mid[dl], hour, weekday, u.counts[g], pos / max(len(g_ru) - 1, 1)))
            u.seen[g_ru] = True
            global_count[g_ru] += 1
            if progress is not None:
                progress(len(records))
    n_test, n_val = cfg.test_per_user, cfg.val_per_user
    split_ids = {
        "train": [r.sample_id for r in records if r.seq < spu - n_test - n_val],
        "val": [r.sample_id for r in records if spu - n_test - n_val <= r.seq < spu - n_test],
        "test": [r.sample_id for r in records if r.seq >= spu - n_test],
    }
    return SyntheticDataset(cfg, city, tables, layout, records, users, split_ids)


def scaled_config(base: SyntheticConfig, **changes) -> SyntheticConfig:
    return replace(base, **changes)
