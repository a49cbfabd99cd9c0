import json
import subprocess
import sys

import pytest

from qtag.cli import main
from qtag.harness import read_csv


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["keygen", "--seed", "3", "--out", "key.json"]) == 0
    assert main(["embed", "--key", "key.json", "--circuit", "c.json", "--latent", "z.qlat"]) == 0
    return tmp_path


def test_keygen_embed_verify(work, capsys):
    capsys.readouterr()
    assert main(["verify", "--circuit", "c.json", "--key", "key.json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["detected"] and report["best_similarity"] == 1.0
    assert (work / "z.qlat").read_bytes()[:4] == b"QTAG"


def test_verify_wrong_key_exit_1(work, capsys):
    main(["keygen", "--seed", "4", "--out", "other.json"])
    assert main(["verify", "--circuit", "c.json", "--key", "other.json", "--no-srm", "--out", "r.json"]) == 1
    assert json.loads((work / "r.json").read_text())["detected"] is False


def test_attack_then_verify(work):
    assert main(["attack", "--circuit", "c.json", "--kind", "insert", "--count", "1", "--seed", "2",
                 "--out", "a.json"]) == 0
    assert main(["verify", "--circuit", "a.json", "--key", "key.json", "--directions", "bidirectional",
                 "--out", "r.json"]) == 0


def test_qasm_output(work):
    assert main(["embed", "--key", "key.json", "--circuit", "c.qasm"]) == 0
    assert (work / "c.qasm").read_text().startswith("qreg q[8];")


def test_usage_errors_exit_2(work, capsys):
    with pytest.raises(SystemExit) as e:
        main(["verify", "--circuit", "c.json"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2
    assert main(["bench", "--trials", "0"]) == 2


def test_runtime_errors_exit_3(work):
    assert main(["verify", "--circuit", "missing.json", "--key", "key.json"]) == 3
    (work / "bad.qasm").write_text("qreg q[8]; rz(0.2) q[0];")
    assert main(["verify", "--circuit", "bad.qasm", "--key", "key.json"]) == 3


def test_bench_and_plot(work):
    assert main(["bench", "--trials", "5", "--attack", "replace:1", "--attack", "delete:2",
                 "--output", "b.csv"]) == 0
    rows = read_csv(work / "b.csv")
    assert [(r["attack_kind"], r["attack_count"]) for r in rows] == [("replace", "1"), ("delete", "2")]
    assert main(["plot", "--input", "b.csv", "--out", "b.svg"]) == 0
    svg = (work / "b.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg


def test_bench_suites(work):
    for suite in ("ablation", "false_accept"):
        assert main(["bench", "--suite", suite, "--trials", "5", "--output", f"{suite}.csv"]) == 0
        assert read_csv(work / f"{suite}.csv")


def test_config_file_and_overrides(work):
    cfg = {"trials": 4, "attacks": [{"kind": "append", "count": 2, "seed": 0, "mode": "strict"}],
           "master_seed": 11}
    (work / "cfg.json").write_text(json.dumps(cfg))
    assert main(["bench", "--config", "cfg.json", "--output", "x.csv"]) == 0
    rows = read_csv(work / "x.csv")
    assert len(rows) == 1 and rows[0]["trials"] == "4"
    assert main(["bench", "--config", "cfg.json", "--trials", "2", "--output", "y.csv"]) == 0
    assert read_csv(work / "y.csv")[0]["trials"] == "2"
    (work / "bad.json").write_text(json.dumps({"nonsense": 1}))
    assert main(["bench", "--config", "bad.json"]) == 2


def test_calibrate_bypass(work, capsys):
    capsys.readouterr()
    assert main(["calibrate", "--samples-w", "100", "--mu0", "9", "--sigma0", "2.43",
                 "--histogram", "h.csv"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["th"] == pytest.approx(16.51, abs=0.05)
    assert main(["plot", "--input", "h.csv", "--out", "h.svg"]) == 0


def test_module_entry_point(work):
    proc = subprocess.run([sys.executable, "-m", "qtag", "verify", "--circuit", "c.json", "--key", "key.json"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["detected"] is True
