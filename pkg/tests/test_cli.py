import hashlib
import json
import subprocess
import sys

import pytest

from dopesym.cli import main


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_kernel_stdout(capsys):
    code, out, _ = _run(["kernel", "--family", "uniform", "--N", "4", "--k", "2"], capsys)
    assert code == 0
    rows = out.splitlines()
    assert rows[0].startswith("node,")
    assert len(rows) == 5


def test_kernel_file_and_manifest(tmp_path, capsys):
    out = tmp_path / "k.csv"
    code, _, _ = _run(["kernel", "--family", "hahn", "--N", "12", "--P", "2", "--k", "3", "--mode", "wall",
                       "--self-check", "--out", str(out)], capsys)
    assert code == 0
    meta = json.loads((tmp_path / "k.json").read_text())
    assert meta["kind"] == "wall_symmetric"
    man = json.loads((tmp_path / "k.csv.manifest.json").read_text())
    assert man["outputs"][str(out)] == hashlib.sha256(out.read_bytes()).hexdigest()
    code, stdout, _ = _run(["replay", "--manifest", str(tmp_path / "k.csv.manifest.json")], capsys)
    assert code == 0 and "MISMATCH" not in stdout


def test_sample_replay(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, _, _ = _run(["sample", "--family", "halfhex", "--k", "3", "--R", "5", "--m", "4",
                       "--n", "200", "--seed", "17", "--out", str(out)], capsys)
    assert code == 0
    man = tmp_path / "s.csv.manifest.json"
    code, stdout, _ = _run(["replay", "--manifest", str(man)], capsys)
    assert code == 0 and stdout.startswith("ok")
    doc = json.loads(man.read_text())
    doc["outputs"][str(out)] = "0" * 64
    man.write_text(json.dumps(doc))
    code, stdout, _ = _run(["replay", "--manifest", str(man)], capsys)
    assert code == 2 and "MISMATCH" in stdout


def test_sample_jobs_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["sample", "--family", "hahn", "--N", "30", "--P", "3", "--k", "7", "--n", "300", "--seed", "5"]
    assert _run(base + ["--out", str(a)], capsys)[0] == 0
    assert _run(base + ["--jobs", "3", "--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_oracle_json(capsys):
    code, out, _ = _run(["oracle", "--family", "uniform", "--N", "4", "--k", "2"], capsys)
    assert code == 0
    d = json.loads(out)
    assert len(d["probabilities"]) == 6
    assert sum(d["probabilities"]) == pytest.approx(1.0, abs=1e-15)


def test_equilibrium_table(capsys):
    code, out, _ = _run(["equilibrium", "--A", "1", "--c", "0.5", "--gridsize", "256"], capsys)
    assert code == 0
    assert "band" in out and "saturated" in out and "l_c" in out


def test_equilibrium_from_weights(tmp_path, capsys):
    from dopesym.ensembles import hahn_ensemble, write_weight_csv

    e = hahn_ensemble(200, 201, 201, 1)
    p = tmp_path / "w.csv"
    p.write_text(write_weight_csv(e.nodes, e.weight))
    code, out, _ = _run(["equilibrium", "--weights", str(p), "--c", "0.5", "--gridsize", "256"], capsys)
    assert code == 0
    band = [ln.split() for ln in out.splitlines() if ln.startswith("band")][0]
    assert float(band[2]) == pytest.approx(0.493, abs=0.02)


def test_limits_tw_orders(capsys):
    code, out, _ = _run(["limits", "tw", "--s", "0", "--order", "40"], capsys)
    v40 = float(out.splitlines()[1].split(",")[1])
    code, out, _ = _run(["limits", "tw", "--s", "0", "--order", "80"], capsys)
    v80 = float(out.splitlines()[1].split(",")[1])
    assert code == 0 and abs(v40 - v80) <= 1e-8


def test_limits_wall_range(capsys):
    code, out, _ = _run(["limits", "wall", "--s-range", "0", "3", "0.5", "--delta0", "2"], capsys)
    rows = out.splitlines()
    assert code == 0 and rows[0] == "s,value" and len(rows) == 8
    vals = [float(r.split(",")[1]) for r in rows[1:]]
    assert vals[0] == 1.0 and all(b <= a for a, b in zip(vals, vals[1:]))


def test_limits_suite(capsys):
    code, out, err = _run(["limits", "suite", "--regime", "gap_void", "--c", "0.1", "--N", "50", "100", "200"], capsys)
    assert code == 0 and json.loads(out)["pass"] is True and "pass" in err


def test_halfhex_tile_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    argv = ["halfhex", "tile", "--k", "4", "--R", "6", "--sweeps", "50", "--seed", "3"]
    assert _run(argv + ["--out", str(a), "--state-out", str(tmp_path / "s.json")], capsys)[0] == 0
    assert _run(argv + ["--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    code, out, _ = _run(argv, capsys)
    assert out.encode() == a.read_bytes()
    code, _, _ = _run(["halfhex", "tile", "--k", "4", "--R", "6", "--sweeps", "0",
                       "--state", str(tmp_path / "s.json"), "--out", str(b)], capsys)
    assert code == 0 and b.read_bytes() == a.read_bytes()


def test_halfhex_tile_needs_seed(capsys):
    code, _, err = _run(["halfhex", "tile", "--k", "2", "--R", "3", "--sweeps", "10"], capsys)
    assert code == 64 and "--seed" in err


def test_halfhex_profile(capsys):
    code, out, err = _run(["halfhex", "profile", "--k", "4", "--R", "8", "--m", "8", "--n", "300", "--seed", "1"], capsys)
    assert code == 0
    assert out.splitlines()[0] == "ordinate,rescaled,frequency,exact,prediction"
    assert "crossing_half" in err


def test_exit_codes(tmp_path, capsys):
    assert _run(["kernel", "--family", "hahn", "--N", "5", "--k", "9"], capsys)[0] == 2
    assert _run(["kernel", "--family", "hahn", "--k", "1"], capsys)[0] == 2
    assert _run(["halfhex", "line", "--k", "2", "--R", "3", "--m", "3", "--n", "5", "--seed", "1"], capsys)[0] == 2
    assert _run(["kernel", "--bogus"], capsys)[0] == 64
    assert _run(["kernel", "--fam", "hahn", "--k", "1"], capsys)[0] == 64
    assert _run([], capsys)[0] == 64
    assert _run(["replay", "--manifest", str(tmp_path / "missing.json")], capsys)[0] == 2


def test_verify_fast(capsys):
    code, out, _ = _run(["verify", "--suite", "oracle"], capsys)
    assert code == 0 and "PASS" in out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "dopesym.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("dopesym")
