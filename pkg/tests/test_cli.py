import csv
import hashlib
import json
import shutil

import pytest

from conftest import DATA
from irvcm.cli import LIMIT_COLUMNS, main
from irvcm.montecarlo import CSV_COLUMNS


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_decide_p5(capsys):
    code, out, _ = run(capsys, "decide", "--rule", "irv", "--profile", str(DATA / "p5.txt"),
                       "--mode", "tiebreak-aware")
    doc = json.loads(out)
    assert code == 0 and doc["manipulable"] and doc["certificate"]["target_winner"] == 2
    assert doc["rule"] == "irv" and doc["tiebreak"] == [1, 2, 3]


def test_decide_pr_and_brute_force(capsys):
    for extra in ([], ["--brute-force"]):
        code, out, _ = run(capsys, "decide", "--rule", "pr", "--profile", str(DATA / "p2.txt"), *extra)
        assert code == 0 and json.loads(out)["manipulable"] is False


def test_analyze_p1(capsys):
    code, out, _ = run(capsys, "analyze", str(DATA / "p1.txt"))
    doc = json.loads(out)
    assert code == 0
    assert doc["irv"]["winner"] == 2 and doc["pr"]["winner"] == 2 and doc["scw"] is None
    assert [r["eliminated"] for r in doc["irv"]["rounds"]] == [3, 1]
    assert doc["irv"]["rounds"][0]["scores"] == {"1": 4, "2": 3, "3": 2}
    assert [1, 2, 3] in doc["violations"]["2"]["violating_subsets"]


def test_analyze_p2(capsys):
    code, out, _ = run(capsys, "analyze", str(DATA / "p2.txt"))
    doc = json.loads(out)
    assert doc["scw"] == 1 and doc["violations"]["1"]["is_scw"]
    assert doc["cm"]["irv"]["manipulable"] is False and doc["cm"]["pr"]["manipulable"] is False


def test_analyze_soc(capsys):
    _, a, _ = run(capsys, "analyze", str(DATA / "p1.soc"))
    _, b, _ = run(capsys, "analyze", str(DATA / "p1.txt"))
    assert a == b


def test_malformed_exit_1(capsys):
    code, out, err = run(capsys, "analyze", str(DATA / "malformed.txt"))
    assert code == 1 and out == "" and "line 3" in err


def test_missing_file_exit_1(capsys):
    code, _, err = run(capsys, "decide", "--profile", str(DATA / "nope.txt"))
    assert code == 1 and err


def test_unknown_flag_usage_exit_1(capsys):
    code, out, err = run(capsys, "mc", "--m", "3", "--n", "10", "--frobnicate")
    assert code == 1 and out == "" and "usage:" in err and "--frobnicate" in err


def test_missing_subcommand(capsys):
    code, _, err = run(capsys)
    assert code == 1 and "usage:" in err


def test_bad_tiebreak(capsys):
    code, _, err = run(capsys, "decide", "--profile", str(DATA / "p5.txt"), "--tiebreak", "1,2")
    assert code == 1 and "tie-break" in err


def test_resource_limit_exit_2(capsys, tmp_path):
    prof = tmp_path / "big.txt"
    assert main(["sample", "--m", "4", "--n", "50", "-o", str(prof)]) == 0
    code, _, err = run(capsys, "decide", "--profile", str(prof), "--brute-force")
    assert code == 2 and "limit" in err


def test_convergence_exit_2(capsys, monkeypatch):
    from irvcm import asymptotics

    real = asymptotics.orthant_probability

    def starved(cov, target_se, seed, **kw):
        return real(cov, target_se, seed, log2_points=4, max_points=2**9, **kw)

    monkeypatch.setattr(asymptotics, "orthant_probability", starved)
    code, _, err = run(capsys, "limits", "--m-min", "6", "--m-max", "6", "--target-se", "1e-8")
    assert code == 2 and "standard error" in err


def test_limits_csv_golden(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code, stdout, _ = run(capsys, "limits", "--m-min", "2", "--m-max", "3", "--seed", "42", "-o", str(out))
    assert code == 0 and stdout == ""
    rows = list(csv.DictReader(out.open()))
    assert tuple(rows[0]) == LIMIT_COLUMNS
    assert [r["m"] for r in rows] == ["2", "3"]
    assert float(rows[0]["p_irv_cm"]) == 0.0
    assert abs(float(rows[1]["p_irv_cm"]) - 0.1688) < 0.0013 + 3 * float(rows[1]["std_error"])


def test_limits_json_stdout(capsys):
    code, out, _ = run(capsys, "limits", "--m-min", "2", "--m-max", "2")
    doc = json.loads(out)
    assert code == 0 and tuple(doc[0]) == LIMIT_COLUMNS


def test_mc_outputs_and_manifest(tmp_path, capsys):
    out = tmp_path / "fig.csv"
    argv = ["mc", "--rule", "irv", "--m", "3", "--n", "20", "40", "--samples", "50", "--seed", "7",
            "-o", str(out)]
    assert main(argv) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS) and len(lines) == 3
    mirror = json.loads(out.with_suffix(".json").read_text())
    assert [e["n"] for e in mirror] == [20, 40]
    manifest = json.loads((tmp_path / "fig.csv.manifest.json").read_text())
    assert manifest["subcommand"] == "mc" and manifest["seed"] == 7 and manifest["argv"] == argv
    assert set(manifest) >= {"parameters", "version", "duration_s", "output_digest", "outputs"}
    digest = hashlib.sha256(out.read_bytes()).hexdigest()
    assert manifest["output_digest"] == digest
    # rerun from the manifest reproduces the bytes
    out.unlink()
    assert main(manifest["argv"]) == 0
    assert hashlib.sha256(out.read_bytes()).hexdigest() == digest


def test_mc_stdout_json(capsys):
    code, out, _ = run(capsys, "mc", "--rule", "pr", "--m", "4", "--n", "15", "--samples", "20")
    doc = json.loads(out)
    assert code == 0 and doc[0]["rule"] == "pr" and doc[0]["quantity"] == "cm-rate"


def test_scw_rate(capsys):
    code, out, _ = run(capsys, "scw-rate", "--m", "2", "--n", "101", "--samples", "50")
    assert code == 0 and json.loads(out)[0]["quantity"] == "scw-rate"


def test_env_overrides(capsys, monkeypatch):
    monkeypatch.setenv("IRVCM_SEED", "5")
    monkeypatch.setenv("IRVCM_WORKERS", "2")
    _, out, _ = run(capsys, "mc", "--m", "3", "--n", "9", "--samples", "10")
    assert json.loads(out)[0]["seed"] == 5
    monkeypatch.setenv("IRVCM_SEED", "five")
    code, _, err = run(capsys, "mc", "--m", "3", "--n", "9", "--samples", "10")
    assert code == 1 and "IRVCM_SEED" in err


def test_sample_and_convert(tmp_path, capsys):
    code, text, _ = run(capsys, "sample", "--m", "3", "--n", "12", "--seed", "4")
    assert code == 0 and text.startswith("m=3\n")
    shutil.copy(DATA / "p1.soc", tmp_path / "in.soc")
    dest = tmp_path / "out.txt"
    assert main(["convert", str(tmp_path / "in.soc"), "-o", str(dest)]) == 0
    assert dest.read_text() == "m=3\n4: 1>2>3\n3: 2>3>1\n2: 3>2>1\n"
    assert (tmp_path / "out.txt.manifest.json").exists()


@pytest.mark.parametrize("sub", ["limits", "mc", "scw-rate", "decide", "analyze", "sample", "convert"])
def test_help_exit_0(sub, capsys):
    code, out, _ = run(capsys, sub, "--help")
    assert code == 0 and "usage:" in out
