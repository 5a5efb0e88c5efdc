"""``genmrp`` command line: data generation, STC, training, planning, evaluation.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 check failure.
"""
from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import model as M
from .dataset import DatasetError, load, load_network
from .features import Preprocessor, fit_stats
from .graph import GraphError
from .inference import BASELINES, BaselineConfig, Model, PlanError, PlanRequest, evaluate, plan, plan_baseline
from .search import SearchError
from .training import TrainConfig, train
from .stc import StcConfig, StcError, StcThresholds, extract_subnetwork, save_subnetwork, summary_line

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ValidationError(Exception):
    pass


_VALIDATION = (ValidationError, DatasetError, GraphError, M.ModelError, PlanError, SearchError, StcError,
               FileNotFoundError, json.JSONDecodeError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _header(cmd: str, seed) -> None:
    _log(f"# genmrp {cmd} seed={seed}")


def _read_json(path) -> dict:
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    if not isinstance(d, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return d


def _load_data(directory, split: str | None = None, limit: int | None = None):
    d = Path(directory)
    if not (d / "samples.jsonl").exists():
        raise ValidationError(f"{d}: no samples.jsonl")
    _, tables = load_network(d)
    res = load(d / "samples.jsonl", tables)
    for line, why in res.rejected:
        _log(f"rejected samples.jsonl line {line}: {why}")
    recs = res.records
    if split:
        splits_path = d / "splits.json"
        if not splits_path.exists():
            raise ValidationError(f"{d}: no splits.json for --split {split}")
        splits = json.loads(splits_path.read_text())
        if split not in splits:
            raise ValidationError(f"unknown split {split!r}; have {sorted(splits)}")
        ids = set(splits[split])
        recs = [r for r in recs if r.sample_id in ids]
    if limit is not None:
        recs = recs[:limit]
    return res.layout, tables, recs


def _load_model(path):
    P, cfg, stats, extra = M.load_checkpoint(path)
    if stats is None:
        raise ValidationError(f"{path}: checkpoint carries no normalization stats")
    return P, cfg, stats, extra


# -- subcommands ---------------------------------------------------------------

def cmd_gen_data(a) -> int:
    from .synthetic import SyntheticConfig, generate_synthetic, scaled_config, tiny_config

    cfg = tiny_config(a.seed) if a.preset == "tiny" else SyntheticConfig(seed=a.seed)
    over = {}
    if a.users is not None:
        over["n_users"] = a.users
    if a.samples_per_user is not None:
        over["samples_per_user"] = a.samples_per_user
    if a.config:
        over.update(_read_json(a.config))
    if over:
        try:
            cfg = scaled_config(cfg, **over)
        except TypeError as exc:
            raise ValidationError(str(exc)) from None
    _header("gen-data", cfg.seed)
    ds = generate_synthetic(cfg)
    ds.write(a.out)
    _log(f"wrote {len(ds.records)} samples ({len(ds.train)} train, {len(ds.val)} val, {len(ds.test)} test) "
         f"on {ds.tables.n_links} links to {a.out}")
    return EXIT_OK


def cmd_stc(a) -> int:
    _header("stc", a.seed)
    _, tables = load_network(a.data)
    g = tables.dual
    req = _read_json(a.request) if a.request else {}
    origin = req.get("origin", a.origin)
    dest = req.get("destination", a.destination)
    if origin is None or dest is None:
        raise UsageError("need --origin and --destination (or --request)")
    for what, l in (("origin", origin), ("destination", dest)):
        if not 0 <= int(l) < g.n_links:
            raise ValidationError(f"{what} link {l} out of range")
    familiar = None
    if "familiar" in req:
        familiar = np.zeros(g.n_links, dtype=bool)
        familiar[np.asarray(req["familiar"], dtype=np.int64)] = True
    cfg = StcConfig(thresholds=StcThresholds(a.l0, a.s0, a.d0), n_candidates=a.candidates, hop_limit=a.hop_limit)
    sub = extract_subnetwork(g, int(origin), int(dest), tables.heat0, familiar, req.get("scenario"), cfg, a.seed)
    if a.out:
        save_subnetwork(a.out, sub, g.n_links)
    else:
        print(json.dumps(sub.to_json()))
    print(summary_line(sub, g.n_links), file=sys.stderr if not a.out else sys.stdout)
    return EXIT_OK


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_MODEL_KEYS = {f.name for f in fields(M.ModelConfig)} - {"ctx_cont", "hist_dim", "link_cont", "ctx_vocabs",
                                                         "link_vocabs", "freq_events", "K"}


def cmd_train(a) -> int:
    conf = {"K": a.k, "epochs": a.epochs, "seed": a.seed, "mode": a.mode}
    if a.lr is not None:
        conf["lr"] = a.lr
    if a.config:
        conf.update(_read_json(a.config))  # the file wins over flags
    unknown = set(conf) - _TRAIN_KEYS - _MODEL_KEYS
    if unknown:
        raise ValidationError(f"unknown training config keys: {sorted(unknown)}")
    tc = TrainConfig(**{k: v for k, v in conf.items() if k in _TRAIN_KEYS})
    if tc.K < 1:
        raise ValidationError("K must be >= 1")
    _header("train", tc.seed)
    layout, _, recs = _load_data(a.data)
    splits = json.loads((Path(a.data) / "splits.json").read_text())
    tr_ids, va_ids = set(splits["train"]), set(splits.get("val", []))
    train_recs = [r for r in recs if r.sample_id in tr_ids]
    val_recs = [r for r in recs if r.sample_id in va_ids]
    if not train_recs:
        raise ValidationError("no training samples")
    stats = fit_stats(train_recs, layout)
    cfg = M.ModelConfig.for_layout(layout, K=tc.K, **{k: v for k, v in conf.items() if k in _MODEL_KEYS})
    res = train(train_recs, val_recs, Preprocessor(layout, stats), cfg, tc, log_path=a.log)
    M.save_checkpoint(a.out, res.params, cfg, stats, {"train": tc.to_json(), "best_epoch": res.best_epoch})
    _log(f"trained {len(train_recs)} samples in {res.seconds:.1f}s; best epoch {res.best_epoch}; wrote {a.out}")
    return EXIT_OK


def cmd_plan(a) -> int:
    if a.k < 1:
        raise ValidationError("K must be >= 1")
    _header("plan", 0)
    P, cfg, stats, _ = _load_model(a.model)
    layout, _, recs = _load_data(a.data)
    by_id = {r.sample_id: r for r in recs}
    if a.sample not in by_id:
        raise ValidationError(f"sample {a.sample} not found")
    rec = by_id[a.sample]
    if a.k > cfg.K:
        raise ValidationError(f"model was built for K <= {cfg.K}")
    mode = a.mode or M.DEPLOYMENT
    res = plan(PlanRequest.from_record(rec, Preprocessor(layout, stats)), rec.dual, P, cfg, a.k, mode,
               incremental=not a.full)
    out = json.dumps(res.to_json())
    if a.out:
        Path(a.out).write_text(out)
    else:
        print(out)
    return EXIT_OK


def _models(a, layout):
    models, pre = [], None
    for spec in a.model or []:
        name, _, path = spec.rpartition("=")
        P, cfg, stats, extra = _load_model(path)
        mode = extra.get("train", {}).get("mode", M.DEPLOYMENT)
        models.append(Model(name or "GenMRP", P, cfg, mode))
        if pre is None:
            pre = Preprocessor(layout, stats)
    return models, pre


def _baselines(a) -> list[str]:
    if a.baselines is None:
        return list(BASELINES)
    names = [b for b in a.baselines.split(",") if b]
    bad = set(names) - set(BASELINES)
    if bad:
        raise ValidationError(f"unknown baselines {sorted(bad)}; choose from {','.join(BASELINES)}")
    return names


def cmd_eval(a) -> int:
    _header("eval", 0)
    layout, _, recs = _load_data(a.data, a.split, a.limit)
    models, pre = _models(a, layout)
    rep = evaluate(recs, layout, pre, models, _baselines(a), a.k, BaselineConfig(k=a.k))
    if a.out:
        rep.write_csv(a.out)
        _log(f"wrote {a.out}")
    else:
        rep.write_csv(sys.stdout)
    return EXIT_OK


def cmd_bench(a) -> int:
    _header("bench", a.seed)
    layout, _, recs = _load_data(a.data, a.split)
    rng = np.random.default_rng(a.seed)
    if len(recs) > a.n:
        recs = [recs[i] for i in sorted(rng.choice(len(recs), a.n, replace=False))]
    models, pre = _models(a, layout)
    names = _baselines(a)
    times: dict[str, list[float]] = {}
    from .dataset import attribute_table
    for rec in recs:
        for m in models:
            req = PlanRequest.from_record(rec, pre)
            times.setdefault(m.name, []).append(plan(req, rec.dual, m.params, m.cfg, a.k, m.mode).duration_ms)
        table, fam = attribute_table(rec, layout), rec.familiar()
        for b in names:
            try:
                r = plan_baseline(rec.dual, table, fam, rec.origin, rec.destination, b, BaselineConfig(k=a.k))
            except (PlanError, SearchError):
                continue
            times.setdefault(b, []).append(r.duration_ms)
    print(f"# host: {platform.machine()} {platform.processor() or 'cpu'}, {os.cpu_count()} cores, "
          f"python {platform.python_version()}, numpy {np.__version__}; {len(recs)} requests, single thread")
    print("method,mean_ms,median_ms,n")
    for name, v in times.items():
        print(f"{name},{np.mean(v):.3f},{np.median(v):.3f},{len(v)}")
    return EXIT_OK


def cmd_selfcheck(a) -> int:
    from .checks import run_all

    _header("selfcheck", 0)
    results = run_all(quick=a.quick)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="genmrp", description="Generative multi-route planning toolkit.")
    sub = p.add_subparsers(dest="cmd", metavar="COMMAND", parser_class=_Parser)

    s = sub.add_parser("gen-data", help="generate a synthetic city and request dataset")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--preset", choices=("tiny", "default"), default="default")
    s.add_argument("--users", type=int)
    s.add_argument("--samples-per-user", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config", help="JSON file of generator overrides (wins over flags)")
    s.set_defaults(fn=cmd_gen_data)

    s = sub.add_parser("stc", help="extract a request-level sub-network")
    s.add_argument("--data", required=True, help="directory with graph.jsonl and links.jsonl")
    s.add_argument("--request", help="JSON {origin, destination, scenario?, familiar?: [link ids]}")
    s.add_argument("--origin", type=int)
    s.add_argument("--destination", type=int)
    s.add_argument("--l0", type=float, default=StcThresholds.l0)
    s.add_argument("--s0", type=float, default=StcThresholds.s0)
    s.add_argument("--d0", type=float, default=StcThresholds.d0)
    s.add_argument("--candidates", type=int, default=StcConfig.n_candidates)
    s.add_argument("--hop-limit", type=int, default=StcConfig.hop_limit)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="sub-network JSON path (default: stdout)")
    s.set_defaults(fn=cmd_stc)

    s = sub.add_parser("train", help="train the link cost model")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--log", help="per-epoch CSV log")
    s.add_argument("--config", help="training config JSON (wins over flags)")
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--epochs", type=int, default=10)
    s.add_argument("--lr", type=float)
    s.add_argument("--mode", choices=M.MODES, default=M.DEPLOYMENT)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("plan", help="plan K routes for one sample")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--sample", type=int, required=True)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--mode", choices=M.MODES)
    s.add_argument("--full", action="store_true", help="recompute every link each iteration")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_plan)

    for name, fn, hlp in (("eval", cmd_eval, "compare models and baselines per split"),
                          ("bench", cmd_bench, "response time per method")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--data", required=True)
        s.add_argument("--model", action="append", help="[NAME=]checkpoint, repeatable")
        s.add_argument("--baselines", help=f"comma list from {','.join(BASELINES)} (default all; '' for none)")
        s.add_argument("--split", default="test")
        s.add_argument("--k", type=int, default=3)
        if name == "eval":
            s.add_argument("--limit", type=int)
            s.add_argument("--out", help="CSV path (default: stdout)")
        else:
            s.add_argument("--n", type=int, default=100)
            s.add_argument("--seed", type=int, default=0)
        s.set_defaults(fn=fn)

    s = sub.add_parser("selfcheck", help="oracle-equivalence and gradient checks")
    s.add_argument("--quick", action="store_true")
    s.set_defaults(fn=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    p = build_parser()
    try:
        a = p.parse_args(argv)
        if a.cmd is None:
            raise UsageError("missing command")
        return a.fn(a)
    except UsageError as exc:
        _log(f"genmrp: usage error: {exc}")
        return EXIT_USAGE
    except _VALIDATION as exc:
        _log(f"genmrp: {exc}")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
