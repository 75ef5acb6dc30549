import json
import subprocess
import sys

import pytest

from ellipsoid_cover.cli import fmt, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    pairs = dict(line.split("=", 1) for line in out.splitlines() if "=" in line)
    return code, pairs, err


def test_fmt():
    assert fmt(True) == "true" and fmt(3) == "3"
    assert float(fmt(0.1)) == 0.1
    assert fmt(0.6462207222217067) == "0.64622072222170668"


def test_bounds(capsys):
    code, out, _ = run(capsys, "bounds", "--kappa", "0.9", "--tau", "1", "--p", "0.96")
    assert code == 0
    assert out["density_ok"] == "true"
    assert float(out["lambda"]) == pytest.approx(0.6462207222217067, abs=1e-15)
    code, _, err = run(capsys, "bounds", "--kappa", "0.1", "--tau", "1", "--p", "0.3")
    assert code == 1 and "WindowError" in err


def test_sample_nerve_pipeline(tmp_path, capsys):
    path = tmp_path / "circle.json"
    code, out, _ = run(capsys, "sample", "--model", "circle:1", "--kappa", "0.2", "--out", str(path))
    assert code == 0 and out["points"] == "30"
    nerve = tmp_path / "nerve.json"
    code, out, _ = run(capsys, "nerve", "--cover", str(path), "--p", "0.7", "--out", str(nerve))
    assert code == 0
    assert out["betti"] == "[1, 1, 0]"
    assert out["simplices"] == "[30, 266, 1048, 2408]"
    assert json.loads(nerve.read_text())["betti"] == [1, 1, 0]


def test_nerve_needs_p(tmp_path, capsys):
    path = tmp_path / "c.json"
    run(capsys, "sample", "--model", "circle:1", "--kappa", "0.5", "--out", str(path))
    code, _, err = run(capsys, "nerve", "--cover", str(path))
    assert code == 2 and "'p'" in err
    data = json.loads(path.read_text())
    data["p"] = 0.7
    path.write_text(json.dumps(data))
    code, out, _ = run(capsys, "nerve", "--cover", str(path))
    assert code == 0 and out["betti"] == "[1, 1, 0]"


def test_retract(tmp_path, capsys):
    cover = tmp_path / "c.json"
    run(capsys, "sample", "--model", "circle:1", "--kappa", "0.2", "--out", str(cover))
    starts = tmp_path / "starts.json"
    starts.write_text(json.dumps({"points": [[1.3, 0.0], [0.0, -1.4]]}))
    out_path = tmp_path / "traces.json"
    code, out, _ = run(capsys, "retract", "--cover", str(cover), "--model", "circle:1", "--p", "0.7",
                       "--starts", str(starts), "--t", "1", "--out", str(out_path))
    assert code == 0
    assert float(out["max_distance_law_error"]) < 1e-9
    traces = json.loads(out_path.read_text())
    assert len(traces) == 2
    for tr in traces:
        assert tr[0]["t"] == 0.0 and tr[-1]["t"] == 1.0
        assert tr[-1]["d"] < 1e-12


def test_certify(tmp_path, capsys):
    out_path = tmp_path / "cert.json"
    code, out, _ = run(capsys, "certify", "--delta", "0.01", "--workers", "1", "--out", str(out_path))
    assert code == 0 and out["certified"] == "false"
    assert json.loads(out_path.read_text())["min_v"] == float(out["min_v"])
    code, _, err = run(capsys, "certify", "--delta", "0.05")
    assert code == 1 and "CoverageError" in err


def test_format_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    code, _, err = run(capsys, "nerve", "--cover", str(bad), "--p", "0.7")
    assert code == 2 and "line 1" in err
    code, _, err = run(capsys, "nerve", "--cover", str(tmp_path / "missing.json"), "--p", "0.7")
    assert code == 2
    with pytest.raises(SystemExit) as exc:
        main(["bounds", "--kappa", "0.1"])
    assert exc.value.code == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ellipsoid_cover", "bounds", "--kappa", "0", "--tau", "1"],
                         capture_output=True, text=True, check=True)
    assert "lambda=0" in res.stdout
    assert res.stderr == ""
