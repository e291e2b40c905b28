import csv
import json
import math
from pathlib import Path

import pytest

from stratvif.cli import content_hash, main

GOLDEN = Path(__file__).parent / "golden"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize(
    "fid, args",
    [
        (1, ["--rho", "0", "0.5", "1"]),
        (2, ["--n", "10", "20", "100"]),
        (3, ["--n", "10", "20", "100"]),
        (5, ["--max-m", "8"]),
    ],
)
def test_figure_golden(tmp_path, fid, args):
    out = tmp_path / f"figure{fid}.csv"
    assert main(["figure", str(fid), *args, "--out", str(out)]) == 0
    assert out.read_bytes() == (GOLDEN / f"figure{fid}.csv").read_bytes()
    manifest = json.loads(Path(str(out) + ".manifest.json").read_text())
    assert manifest["content_hash"] == content_hash(out.read_bytes())
    assert manifest["config"]["figure"] == fid


def test_figure_spot_values(tmp_path):
    out = tmp_path / "f.csv"
    main(["figure", "2", "--n", "10", "--out", str(out)])
    row = read_csv(out)[0]
    assert (row["series"], int(row["x"])) == ("A", 10)
    assert float(row["y"]) == pytest.approx(8 / 6)

    main(["figure", "5", "--out", str(out)])
    row = read_csv(out)[0]
    assert (row["series"], row["x"], round(float(row["y"]), 4)) == ("simple", "1", 0.7979)

    main(["figure", "1", "--rho", "0.5", "--out", str(out)])
    got = {r["series"]: float(r["y"]) for r in read_csv(out)}
    assert got == {"raw": 1.0, "ancova": 0.75, "change": 1.0}


def test_default_grids_row_counts(tmp_path):
    out = tmp_path / "f.csv"
    main(["figure", "1", "--out", str(out)])
    assert len(read_csv(out)) == 3 * 21
    main(["figure", "2", "--out", str(out)])
    assert len(read_csv(out)) == 4 * 100
    main(["figure", "3", "--out", str(out)])
    assert len(read_csv(out)) == 2 * 100
    main(["figure", "5", "--max-m", "11", "--out", str(out)])
    assert len(read_csv(out)) == 2 * 11


def test_figure4(tmp_path):
    out = tmp_path / "f4.csv"
    assert main(["figure", "4", "--n", "12", "20", "--replicates", "300", "--seed", "4", "--out", str(out)]) == 0
    text = out.read_text().splitlines()
    assert text[0] == "series,x,y,mc_se,singular"
    rows = read_csv(out)
    assert len(rows) == 2 * 2 * 2 * 2
    series = {r["series"] for r in rows}
    assert "theory_stratified_D" in series and "empirical_randomized_B" in series
    for r in rows:
        y = float(r["y"])
        assert math.isfinite(y)
        if r["series"].startswith("empirical"):
            assert float(r["mc_se"]) > 0 and int(r["singular"]) >= 0
        else:
            assert r["mc_se"] == "" and r["singular"] == ""


def test_figure_json(tmp_path, capsys):
    assert main(["figure", "3", "--n", "10", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["columns"] == ["series", "x", "y"]
    assert len(doc["rows"]) == 2 and "manifest" in doc


@pytest.mark.parametrize("args", [["figure", "6"], ["figure", "2", "--n", "6"], ["run"], ["verify", "--model", "C"]])
def test_usage_errors(args, capsys):
    with pytest.raises(SystemExit) as exc:
        code = main(args)
        raise SystemExit(code)
    assert exc.value.code == 2


def run_json(tmp_path, name, *args):
    out = tmp_path / name
    assert main(["run", *args, "--out", str(out)]) == 0
    return json.loads(out.read_text())


def test_run_minimal(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 20, "design": "randomized", "model": "B", "replicates": 100, "seed": 1}))
    doc = run_json(tmp_path, "out.json", "--config", str(cfg))
    for key in ("mean_vif", "mc_se_vif", "singular_count"):
        assert key in doc["report"]
    man = doc["manifest"]
    assert man["seed"] == 1 and man["replicates"] == 100
    assert man["config"]["n"] == 20


def test_run_deterministic(tmp_path):
    args = ["--n", "20", "--design", "stratified", "--model", "D", "--replicates", "500", "--seed", "2"]
    a = run_json(tmp_path, "a.json", *args)
    b = run_json(tmp_path, "b.json", *args)
    assert json.dumps(a["report"]) == json.dumps(b["report"])
    assert a["manifest"]["content_hash"] == b["manifest"]["content_hash"]


def test_rerun_from_manifest(tmp_path):
    a = run_json(tmp_path, "a.json", "--n", "16", "--replicates", "300", "--seed", "8", "--rho", "0.4")
    b = run_json(tmp_path, "b.json", "--config", str(tmp_path / "a.json"))
    assert a["report"] == b["report"] and a["decomposition"] == b["decomposition"]


def test_yaml_config_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("n: 20\nmodel: B\nreplicates: 50\nseed: 3\noutcome:\n  rho: 0.3\n")
    doc = run_json(tmp_path, "o.json", "--config", str(cfg), "--model", "D", "--rho", "0.6")
    assert doc["report"]["model"] == "D"
    assert doc["manifest"]["config"]["outcome"]["rho"] == 0.6
    assert "decomposition" in doc


def test_schema_violation_names_field(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 20, "replicates": 10, "colour": "red"}))
    assert main(["run", "--config", str(cfg)]) == 2
    assert "colour" in capsys.readouterr().err
    cfg.write_text(json.dumps({"n": 21}))
    assert main(["run", "--config", str(cfg)]) == 2
    assert "n must be even" in capsys.readouterr().err


def test_run_with_confounded_replicates_exits_zero(tmp_path):
    doc = run_json(tmp_path, "o.json", "--n", "8", "--model", "D", "--replicates", "1000", "--seed", "3")
    assert doc["report"]["singular_count"] > 0
    assert doc["report"]["singular_count"] + doc["report"]["contributing"] == 1000


def test_run_csv(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["run", "--n", "12", "--replicates", "50", "--format", "csv", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 1 and rows[0]["n"] == "12"


def test_verify_pass(capsys, tmp_path):
    out = tmp_path / "v.csv"
    code = main(["verify", "--n", "50", "--design", "randomized", "--model", "B",
                 "--replicates", "2000", "--seed", "1", "--out", str(out)])
    assert code == 0
    assert "PASS" in capsys.readouterr().out
    assert read_csv(out)[0]["pass"] == "True"


def test_verify_failure_exit_code(capsys):
    # a badly mis-specified median drives the stratified VIF to the randomised value
    code = main(["verify", "--n", "20", "--design", "stratified", "--model", "B",
                 "--median", "3", "--replicates", "3000", "--seed", "1"])
    assert code == 1
    assert "FAIL" in capsys.readouterr().out


def test_verify_rejects_small_dof(capsys):
    assert main(["verify", "--n", "6", "--design", "randomized", "--model", "D"]) == 2
    assert "residual dof" in capsys.readouterr().err
