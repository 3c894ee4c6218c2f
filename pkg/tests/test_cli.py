import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ltts.cli import main


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_rank_scan_subset(tmp_path, capsys):
    code = main(["rank-scan", "--families", "separable", "--configs", "4,3", "--out", str(tmp_path)])
    assert code == 0
    recs = rows(tmp_path / "rank_scan.csv")
    assert len(recs) == 48
    for eps in ("0.01", "0.001"):
        for crit in ("common-scale", "self-relative"):
            assert sum(r["epsilon"] == eps and r["criterion"] == crit for r in recs) == 12
    manifest = json.loads((tmp_path / "run.json").read_text())
    assert manifest["command"] == "rank-scan" and manifest["seed"] == 0
    assert "Separable" in capsys.readouterr().out


def test_bad_inputs_exit_one(tmp_path):
    assert main(["rank-scan", "--families", "Bessel", "--out", str(tmp_path)]) == 1
    assert main(["rank-scan", "--configs", "4", "--out", str(tmp_path)]) == 1
    assert main(["certify", "--r", "-0.1", "--out", str(tmp_path)]) == 1
    assert main(["nonsense"]) == 1
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["rank-scan", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"families": ["ProductCos"], "configs": [[4, 3]], "eps": [0.01]}))
    assert main(["rank-scan", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert len(rows(tmp_path / "a" / "rank_scan.csv")) == 2
    assert main(["rank-scan", "--config", str(cfg), "--eps", "0.01,0.001",
                 "--out", str(tmp_path / "b")]) == 0
    assert len(rows(tmp_path / "b" / "rank_scan.csv")) == 4


def test_certify_exact_tt(tmp_path):
    # chi=9 is full rank for N=4, m=3: the TT is exact, so E_det is the Taylor term alone
    radii = [0.05, 0.1, 0.2, 0.3, 0.5, 0.8]
    code = main(["certify", "--family", "ExpSum", "--N", "4", "--chi", "9",
                 "--r", ",".join(map(str, radii)), "--out", str(tmp_path)])
    assert code == 0
    res = json.loads((tmp_path / "certify.json").read_text())["results"]
    for item in res:
        c = item["certificate"]
        assert c["e_tt_raw"] <= 1e-14
        assert c["e_det"] == pytest.approx(c["e_taylor"], rel=1e-9)
    e = [item["certificate"]["e_det"] for item in res]
    assert all(a < b for a, b in zip(e, e[1:]))


def test_certify_quantum_and_eval(tmp_path):
    out = tmp_path / "q"
    assert main(["certify", "--oracle", "quantum", "--r", "0.1", "--chi", "3", "--save-tt", "s.json",
                 "--out", str(out)]) == 0
    meta = json.loads((out / "s.json").read_text())
    x0 = np.array(meta["patch"]["x0"])
    pts = tmp_path / "pts.csv"
    pts.write_text("a,b,c,d,e,f\n" + ",".join(map(str, x0.tolist())) + "\n" + ",".join(["9.0"] * 6) + "\n")
    assert main(["eval", "--model", str(out / "s.json"), "--points", str(pts), "--out", str(out)]) == 0
    pred = rows(out / "predictions.csv")
    from ltts.quantum import QcnnModel
    assert float(pred[0]["prediction"]) == pytest.approx(QcnnModel().evaluate(x0), abs=1e-6)
    assert pred[1]["prediction"] == "" and pred[1]["in_patch"] == "0"
    assert main(["eval", "--model", str(out / "s.json"), "--points", str(pts), "--out", str(out),
                 "--strict"]) == 2


def test_eval_many_points(tmp_path):
    out = tmp_path / "e"
    assert main(["certify", "--family", "Gauss", "--N", "3", "--chi", "2", "--r", "0.5",
                 "--save-tt", "g.npz.json", "--out", str(out)]) == 0
    X = np.random.default_rng(0).uniform(-0.5, 0.5, size=(1_000_000, 3))
    pts = tmp_path / "big.csv"
    np.savetxt(pts, X, delimiter=",", fmt="%.6f")
    assert main(["eval", "--model", str(out / "g.npz.json"), "--points", str(pts), "--out", str(out)]) == 0
    with open(out / "predictions.csv") as fh:
        assert sum(1 for _ in fh) == 1_000_001


def test_validate_deterministic(tmp_path):
    args = ["validate", "--r", "0.1,0.2", "--chi", "1,2", "--n-train", "120", "--n-test", "200"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    for name in ("validation.csv", "table2.csv", "validation_summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len(rows(tmp_path / "a" / "validation.csv")) == 5 * 2 * 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ltts.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "ltts" in proc.stdout
