import csv
import hashlib
import json

import pytest

from rltconic import __version__, cli
from rltconic.instances import random_problem
from rltconic.poly import write_problem
from rltconic.strengthen import ALL_VARIANTS

NAMES = {str(v) for v in ALL_VARIANTS}


@pytest.fixture
def inst_dir(tmp_path):
    d = tmp_path / "inst"
    d.mkdir()
    for i in range(10):
        (d / f"p{i:02d}.pop").write_text(write_problem(random_problem(i, n=2, degree=2, constraints=1)))
    return d


def test_version(capsys):
    assert cli.main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_solve_eq4(capsys):
    assert cli.main(["solve", "builtin:paper_eq4", "--variant", "sdp2"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("status=Optimal objective=1.0 ")


def test_solve_outputs_and_manifest(tmp_path, capsys):
    trace, cbf, dump = tmp_path / "t.csv", tmp_path / "r.cbf", tmp_path / "r.lp"
    rc = cli.main(["solve", "builtin:paper_eq4", "--variant", "socp", "--trace", str(trace),
                   "--dump-cbf", str(cbf), "--dump-relaxation", str(dump), "--seed", "3"])
    assert rc == 0
    rows = list(csv.reader(trace.open()))
    assert rows[0] == ["t_seconds", "lb", "ub", "nodes"]
    lbs = [float(r[1]) for r in rows[1:]]
    assert lbs == sorted(lbs)
    assert cbf.read_text().startswith("VER\n3\n") and "Q 3" in cbf.read_text()
    manifest = json.loads((tmp_path / "r.lp.manifest.json").read_text())
    assert manifest["command"] == "solve" and manifest["seeds"] == {"solver": 3}
    assert manifest["config"]["variant"] == "socp"
    assert set(manifest["outputs"]) == {str(trace), str(cbf), str(dump)}


@pytest.mark.parametrize("argv", [
    ["solve", "missing.pop"],
    ["solve", "builtin:paper_eq4", "--bogus"],
    ["solve", "builtin:paper_eq4", "--variant", "sdp9"],
    ["solve", "builtin:paper_eq4", "--variant", "auto"],
    ["solve", "builtin:nothing"],
    ["frobnicate"],
    [],
])
def test_usage_errors(argv, capsys):
    assert cli.main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_parse_error_is_usage_error(tmp_path):
    bad = tmp_path / "bad.pop"
    bad.write_text("var x in [0, 1]\nmin: x +\n")
    assert cli.main(["solve", str(bad)]) == 1


def test_solver_failure_exit_code(monkeypatch, capsys):
    def boom(*a, **k):
        raise RuntimeError("factorisation exploded")
    monkeypatch.setattr(cli, "solve_problem", boom)
    assert cli.main(["solve", "builtin:paper_eq4"]) == 2


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\ntime_limit_s = 7\ntol = 1e-7\nseed = 5\n")
    man = tmp_path / "m.json"
    assert cli.main(["solve", "builtin:paper_eq4", "--config", str(cfg), "--tol", "1e-9",
                     "--manifest", str(man)]) == 0
    conf = json.loads(man.read_text())["config"]
    assert conf["time_limit_s"] == 7.0 and conf["tol"] == 1e-9 and conf["seed"] == 5
    bad = tmp_path / "bad.cfg"
    bad.write_text("time_limit_s 7\n")
    assert cli.main(["solve", "builtin:paper_eq4", "--config", str(bad)]) == 1


def test_bench_features_train_select(inst_dir, tmp_path, capsys):
    res, prof = tmp_path / "r.csv", tmp_path / "p.csv"
    assert cli.main(["bench", str(inst_dir), "--variants", "all", "--out", str(res), "--profile", str(prof),
                     "--time-limit", "0.5"]) == 0
    rows = list(csv.DictReader(res.open()))
    assert len(rows) == 8 * 10
    assert all(sum(r["instance"] == f"p{i:02d}" for r in rows) == 8 for i in range(10))
    assert list(csv.reader(prof.open()))[0] == ["variant", "tau", "rho"]
    manifest = json.loads((tmp_path / "r.csv.manifest.json").read_text())
    raw = (inst_dir / "p03.pop").read_bytes()
    assert manifest["instances"]["p03"] == hashlib.sha256(raw).hexdigest()

    again = tmp_path / "r2.csv"
    assert cli.main(["bench", str(inst_dir), "--out", str(again), "--time-limit", "0.5"]) == 0
    assert again.read_bytes() == res.read_bytes()

    feats = tmp_path / "f.csv"
    assert cli.main(["features", str(inst_dir), "--out", str(feats)]) == 0
    header = next(csv.reader(feats.open()))
    assert header[0] == "instance" and len(header) == 37

    model = tmp_path / "m.json"
    assert cli.main(["train", "--results", str(res), "--features", str(feats), "--out", str(model),
                     "--trees", "20", "--seed", "42"]) == 0
    capsys.readouterr()
    assert cli.main(["select", str(inst_dir / "p00.pop"), "--model", str(model)]) == 0
    assert capsys.readouterr().out.strip() in NAMES
    assert cli.main(["solve", str(inst_dir / "p00.pop"), "--variant", "auto", "--model", str(model)]) == 0
    assert capsys.readouterr().out.startswith("status=Optimal")


def test_bench_parallel_jobs_match_serial(inst_dir, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["bench", str(inst_dir), "--variants", "rlt,socp", "--out", str(a),
                     "--time-limit", "0.5"]) == 0
    assert cli.main(["bench", str(inst_dir), "--variants", "rlt,socp", "--out", str(b),
                     "--time-limit", "0.5", "--jobs", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_train_too_few_rows(inst_dir, tmp_path):
    small = tmp_path / "small"
    small.mkdir()
    for f in sorted(inst_dir.glob("*.pop"))[:3]:
        (small / f.name).write_bytes(f.read_bytes())
    res, feats = tmp_path / "r.csv", tmp_path / "f.csv"
    assert cli.main(["bench", str(small), "--variants", "rlt,socp", "--out", str(res)]) == 0
    assert cli.main(["features", str(small), "--out", str(feats)]) == 0
    assert cli.main(["train", "--results", str(res), "--features", str(feats),
                     "--out", str(tmp_path / "m.json")]) == 1
