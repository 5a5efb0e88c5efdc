import csv
import io
import json

import pytest

from genmrp.cli import EXIT_CHECK, EXIT_INVALID, EXIT_OK, EXIT_USAGE, main
from genmrp.dataset import load, load_network


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--preset", "tiny", "--out", str(d / "data")]) == EXIT_OK
    assert main(["train", "--data", str(d / "data"), "--out", str(d / "m.json"), "--log", str(d / "log.csv"),
                 "--epochs", "2"]) == EXIT_OK
    return d


def test_gen_data_files(workdir):
    for name in ("graph.jsonl", "links.jsonl", "samples.jsonl", "stats.json", "splits.json"):
        assert (workdir / "data" / name).exists()


def test_train_log_columns(workdir):
    rows = list(csv.DictReader(open(workdir / "log.csv")))
    assert len(rows) == 2
    assert {"epoch", "loss", "cov1", "covK"} <= set(rows[0])


def test_plan_eval_counts(workdir, capsys):
    _, tables = load_network(workdir / "data")
    rec = load(workdir / "data" / "samples.jsonl", tables).records[3]
    capsys.readouterr()
    assert main(["plan", "--data", str(workdir / "data"), "--model", str(workdir / "m.json"),
                 "--sample", str(rec.sample_id), "--k", "3"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"routes", "eval_counts", "duration_ms"}
    assert 1 <= len(out["routes"]) <= 3
    assert len({tuple(r) for r in out["routes"]}) == len(out["routes"])
    assert out["eval_counts"][0] == rec.n_links
    assert len(out["eval_counts"]) == 3


def test_plan_full_recompute_counts(workdir, capsys):
    _, tables = load_network(workdir / "data")
    rec = load(workdir / "data" / "samples.jsonl", tables).records[3]
    capsys.readouterr()
    main(["plan", "--data", str(workdir / "data"), "--model", str(workdir / "m.json"),
          "--sample", str(rec.sample_id), "--full"])
    assert json.loads(capsys.readouterr().out)["eval_counts"] == [rec.n_links] * 3


def test_eval_csv(workdir, capsys):
    capsys.readouterr()
    assert main(["eval", "--data", str(workdir / "data"), "--model", str(workdir / "m.json"), "--limit", "6"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    methods = {r["method"] for r in rows}
    assert {"GenMRP", "ST", "KST", "2DP"} <= methods
    for r in rows:
        for k in ("cov1", "covk", "cov_net"):
            assert 0.0 <= float(r[k]) <= 1.0


def test_bench_table(workdir, capsys):
    capsys.readouterr()
    assert main(["bench", "--data", str(workdir / "data"), "--model", str(workdir / "m.json"), "--n", "3",
                 "--baselines", "ST,KST"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("# host:")
    assert lines[1] == "method,mean_ms,median_ms,n"
    assert {l.split(",")[0] for l in lines[2:]} == {"GenMRP", "ST", "KST"}


def test_stc_summary(workdir, capsys, tmp_path):
    capsys.readouterr()
    out = tmp_path / "sub.json"
    assert main(["stc", "--data", str(workdir / "data"), "--origin", "3", "--destination", "150",
                 "--out", str(out)]) == EXIT_OK
    assert "reduction" in capsys.readouterr().out
    sub = json.loads(out.read_text())
    assert len(sub["links"]) == len(sub["tags"]) and set(sub["r_star"]) <= set(sub["links"])


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["nope"]) == EXIT_USAGE
    assert main(["plan", "--data", "x"]) == EXIT_USAGE


def test_validation_errors(workdir, tmp_path):
    assert main(["plan", "--data", str(workdir / "data"), "--model", str(workdir / "m.json"),
                 "--sample", "999999"]) == EXIT_INVALID
    assert main(["eval", "--data", str(tmp_path)]) == EXIT_INVALID
    assert main(["eval", "--data", str(workdir / "data"), "--baselines", "XX"]) == EXIT_INVALID
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"not_a_key": 1}))
    assert main(["train", "--data", str(workdir / "data"), "--out", str(tmp_path / "m"), "--config",
                 str(bad)]) == EXIT_INVALID


def test_selfcheck_quick(capsys):
    assert main(["selfcheck", "--quick"]) == EXIT_OK
    assert all(l.startswith("PASS") for l in capsys.readouterr().out.splitlines())


def test_selfcheck_failure_exit_code(monkeypatch):
    from genmrp import checks

    monkeypatch.setattr(checks, "run_all", lambda quick=False: [checks.CheckResult("x", False, "forced")])
    assert main(["selfcheck"]) == EXIT_CHECK
