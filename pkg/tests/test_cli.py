import csv
import json
from pathlib import Path

import pytest
from jsonschema import Draft202012Validator
from referencing import Registry, Resource

from batchbnb.cli import main, parse_bytes, parse_gen_spec

SCHEMAS = Path(__file__).resolve().parent.parent / "docs" / "schemas"


def _registry():
    resources = []
    for path in SCHEMAS.glob("*.schema.json"):
        doc = json.loads(path.read_text())
        resources.append((doc["$id"], Resource.from_contents(doc)))
    return Registry().with_resources(resources)


def validate(doc, name):
    schema = json.loads((SCHEMAS / f"{name}.v1.schema.json").read_text())
    Draft202012Validator(schema, registry=_registry()).validate(doc)


def load(path):
    return json.loads(Path(path).read_text())


GEN = "n=40,p=12,k=2,rho=0.9,loss=squared,seed=1"
MODEL = ["--k", "2", "--M", "2", "--lambda2", "1"]


def test_solve_writes_valid_documents(tmp_path, capsys):
    out = tmp_path / "cert.json"
    prof = tmp_path / "prof.csv"
    code = main(["solve", "--gen", GEN, *MODEL, "--out", str(out), "--profile", str(prof)])
    assert code == 0
    assert "gap=0%" in capsys.readouterr().out
    cert = load(out)
    validate(cert, "certificate")
    assert cert["gap_percent"] == 0.0 and cert["status"] == "optimal"
    report = load(tmp_path / "cert.report.json")
    validate(report, "report")
    assert report["certificate"] == cert
    assert report["input"]["generator"]["seed"] == 1
    rows = list(csv.reader(prof.open()))
    assert {r[0] for r in rows[1:]} >= {"lower_bound", "total", "lb_batches", "reopt_batches"}


def test_solve_auto_batch_size_is_echoed(tmp_path):
    rep = tmp_path / "r.json"
    code = main(["solve", "--gen", GEN, *MODEL, "--batch-size", "auto", "--memory-budget", "4GiB",
                 "--report", str(rep)])
    assert code == 0
    cfg = load(rep)["config"]
    assert cfg["batch_size_requested"] == "auto"
    assert cfg["batch_size"] >= 1 and cfg["batch_size"] & (cfg["batch_size"] - 1) == 0
    validate(load(rep), "report")


def test_time_limit_exit_code(tmp_path):
    out = tmp_path / "c.json"
    code = main(["solve", "--gen", "n=60,p=60,k=6,seed=0", "--k", "6", "--M", "2", "--lambda2", "0.1",
                 "--batch-size", "1", "--time-limit", "1e-9", "--out", str(out)])
    assert code == 2
    assert load(out)["status"] == "time_limit"


@pytest.mark.parametrize("argv", [
    ["solve", "--gen", GEN, "--M", "2", "--lambda2", "1"],
    ["solve", "--gen", GEN, "--data", "x.csv", *MODEL],
    ["solve", "--gen", "n=10,p=3", *MODEL],
    ["solve", "--gen", "n=10,p=3,k=1,color=red", *MODEL],
    ["solve", "--gen", GEN, *MODEL, "--batch-size", "0"],
    ["solve", "--gen", GEN, *MODEL, "--memory-budget", "lots"],
    ["rashomon", "--gen", GEN, *MODEL, "--epsilon", "0.1", "--out-dir", "x", "--top-n", "0"],
    ["frobnicate"],
])
def test_usage_errors_exit_64(argv, capsys):
    with pytest.raises(SystemExit) as err:
        code = main(argv)
        raise SystemExit(code)
    assert err.value.code == 64
    assert "error" in capsys.readouterr().err


def test_runtime_error_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,y\n1,x\n")
    assert main(["solve", "--data", str(bad), *MODEL]) == 1
    assert "row 2" in capsys.readouterr().err


def test_gen_is_deterministic_and_sidecar_valid(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["gen", "--gen", GEN, "--out", str(a)]) == 0
    assert main(["gen", "--gen", GEN, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    side = load(f"{a}.json")
    validate(side, "sidecar")
    assert side["generator"]["snr"] == 5.0
    assert side["true_support"] == [6, 12]
    # the written file solves to the same certificate as the generator spec
    c1, c2 = tmp_path / "c1.json", tmp_path / "c2.json"
    assert main(["solve", "--data", str(a), *MODEL, "--out", str(c1)]) == 0
    assert main(["solve", "--gen", GEN, *MODEL, "--out", str(c2)]) == 0
    assert c1.read_bytes() == c2.read_bytes()
    validate(load(tmp_path / "c1.report.json"), "report")


def test_rashomon_outputs(tmp_path):
    out = tmp_path / "pool"
    code = main(["rashomon", "--gen", "n=50,p=10,k=2,loss=logistic,seed=3", *MODEL,
                 "--epsilon", "0.1", "--top-n", "1000", "--out-dir", str(out)])
    assert code == 0
    pool = load(out / "pool.json")
    validate(pool, "pool")
    validate(load(out / "certificate.json"), "certificate")
    validate(load(out / "report.json"), "report")
    n_pool = len(pool["leaves"])
    assert n_pool >= 1
    metrics = list(csv.DictReader((out / "metrics.csv").open()))
    assert len(metrics) == n_pool
    assert {"auc", "accuracy"} <= set(metrics[0])
    assert len(list(csv.reader((out / "frequency.csv").open()))) == 11
    assert len(list(csv.reader((out / "reliance.csv").open()))) == 11


def test_rashomon_epsilon_zero(tmp_path):
    out = tmp_path / "p0"
    assert main(["rashomon", "--gen", GEN, *MODEL, "--epsilon", "0", "--out-dir", str(out)]) == 0
    assert len(load(out / "pool.json")["leaves"]) == 1
    assert len(list(csv.reader((out / "metrics.csv").open()))) == 2


def test_sweep(tmp_path):
    out, plot = tmp_path / "s.csv", tmp_path / "s.json"
    code = main(["sweep", "--gen", GEN, *MODEL, "--sizes", "1,4", "--out", str(out),
                 "--plot-data", str(plot)])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["batch_size"] for r in rows] == ["1", "4"]
    validate(load(plot), "sweep")
    validate(load(tmp_path / "s.report.json"), "report")
    out2 = tmp_path / "t.csv"
    main(["sweep", "--gen", GEN, *MODEL, "--sizes", "4", "--out", str(out2)])
    assert [r["nodes"] for r in csv.DictReader(out2.open())] == [rows[1]["nodes"]]


def test_parsers():
    assert parse_bytes("4GiB") == 4 * 2**30
    assert parse_bytes("512MB") == 512 * 10**6
    spec = parse_gen_spec("n=5,p=4,k=1")
    assert spec == {"n": 5, "p": 4, "k": 1, "rho": 0.9, "loss": "squared", "seed": 0, "snr": 5.0}
