import dataclasses
import json

import numpy as np
import pytest

from genmrp.dataset import (
    DatasetError, attribute_table, check_record, load, load_network, make_splits, record_from_json,
    record_to_json, save,
)
from genmrp.metrics import coverage
from genmrp.synthetic import generate_synthetic, tiny_config


@pytest.fixture(scope="module")
def tiny():
    return generate_synthetic(tiny_config(3))


@pytest.fixture(scope="module")
def written(tiny, tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    tiny.write(d)
    return d


def _inline(rec):
    g = rec.dual
    return dataclasses.replace(rec, link_ref=None, tables=None, heat_dyn=None, adjacency=g.edges.copy(),
                               lengths_inline=rec.lengths.copy(), x_link_inline=rec.x_link.copy(),
                               heat_inline=rec.x_heat.copy(), _dual=None)


def test_generation_is_deterministic(tiny):
    again = generate_synthetic(tiny_config(3))
    assert [r.routes for r in again.records] == [r.routes for r in tiny.records]
    assert all(np.array_equal(a.cov, b.cov) for a, b in zip(again.records, tiny.records))


def test_records_are_consistent(tiny):
    for rec in tiny.records:
        assert check_record(rec) == []
        assert rec.cov_star == max(coverage(rec.r_u, r, rec.lengths) for r in rec.routes)
        assert rec.cov[rec.label] == rec.cov_star


def test_ref_round_trip(tiny, written):
    _, tables = load_network(written)
    res = load(written / "samples.jsonl", tables)
    assert res.rejected == [] and res.flagged == []
    assert len(res.records) == len(tiny.records)
    for a, b in zip(res.records, tiny.records):
        assert a.routes == b.routes and a.r_u == b.r_u
        assert np.array_equal(a.x_heat, b.x_heat) and np.array_equal(a.freq_dense(), b.freq_dense())
        assert np.array_equal(a.x_h, b.x_h)
        assert np.array_equal(attribute_table(a, res.layout), attribute_table(b, tiny.layout))


def test_inline_round_trip(tiny, tmp_path):
    recs = [_inline(r) for r in tiny.records[:5]]
    save(tmp_path / "s.jsonl", recs, tiny.layout, "inline")
    back = load(tmp_path / "s.jsonl").records
    for a, b in zip(back, tiny.records[:5]):
        assert np.array_equal(a.dual.edges, b.dual.edges)
        assert np.array_equal(a.x_link, b.x_link) and np.array_equal(a.lengths, b.lengths)
        assert check_record(a) == []


def test_save_rejects_wrong_encoding(tiny, tmp_path):
    with pytest.raises(DatasetError):
        save(tmp_path / "s.jsonl", tiny.records[:1], tiny.layout, "inline")


def _mutations():
    yield "unknown key", lambda d: d.update(extra=1)
    yield "missing key", lambda d: d.pop("r_u")
    yield "route out of range", lambda d: d["routes"][0].append(d["N"])
    yield "cov length", lambda d: d["cov"].append(0.5)
    yield "x_s width", lambda d: d["x_s"].append(0.0)
    yield "unsorted link_ref", lambda d: d["link_ref"].reverse()
    yield "freq link range", lambda d: d["freq"].update(links=[d["N"]] * len(d["freq"]["links"]) or [d["N"]],
                                                        events=d["freq"]["events"] or [[[0.0] * 7] * 4])


@pytest.mark.parametrize("name,mutate", list(_mutations()), ids=[m[0] for m in _mutations()])
def test_malformed_records_rejected(tiny, name, mutate):
    d = json.loads(json.dumps(record_to_json(tiny.records[0])))
    mutate(d)
    with pytest.raises(DatasetError):
        record_from_json(d, tiny.layout, "ref", tiny.tables)


def test_bad_lines_are_reported_not_fatal(tiny, written, tmp_path):
    src = (written / "samples.jsonl").read_text().splitlines()
    d = json.loads(src[1])
    d["cov"] = [c + 0.1 for c in d["cov"]]
    lines = [src[0], "{not json", json.dumps(d)] + src[2:4]
    (tmp_path / "s.jsonl").write_text("\n".join(lines) + "\n")
    res = load(tmp_path / "s.jsonl", tiny.tables)
    assert [ln for ln, _ in res.rejected] == [2]
    assert len(res.records) == 3
    assert len(res.flagged) == 1 and "cov mismatch" in res.flagged[0].flags[0]


def test_missing_header(tmp_path):
    (tmp_path / "s.jsonl").write_text('{"id": 0}\n')
    with pytest.raises(DatasetError):
        load(tmp_path / "s.jsonl")


def test_splits_nested(tiny):
    sp = make_splits(tiny.records)
    s1, s2, s3, s4 = (set(sp[k]) for k in ("set1", "set2", "set3", "set4"))
    assert s1 == {r.sample_id for r in tiny.records}
    assert s2 | s3 == s4 and s4 <= s1
    for rec in tiny.records:
        assert (rec.sample_id in s2) == rec.has_freq
        assert (rec.sample_id in s3) == rec.has_history


def test_train_val_test_disjoint(tiny):
    ids = [set(tiny.split_ids[k]) for k in ("train", "val", "test")]
    assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
    assert sum(map(len, ids)) == len(tiny.records)
