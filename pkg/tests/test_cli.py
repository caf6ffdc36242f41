import json
import subprocess
import sys

import numpy as np
import pytest

from quasiloc import io as qio
from quasiloc.cli import main


@pytest.fixture
def line(tmp_path):
    path = tmp_path / "line.json"
    assert main(["space", "gen", "--box", "128", "--out", str(path)]) == 0
    return path


def run_json(capsys, argv):
    code = main(argv)
    return code, json.loads(capsys.readouterr().out)


def test_space_gen(tmp_path, capsys):
    out = tmp_path / "sq.json"
    assert main(["space", "gen", "--box", "8x4", "--norm", "l1", "--out", str(out)]) == 0
    assert "n=32 diameter=10" in capsys.readouterr().out
    assert json.loads(out.read_text()) == {"kind": "zd_box", "dims": [8, 4], "norm": "l1"}
    assert main(["space", "gen", "--graph", "cycle:6"]) == 0
    assert json.loads(capsys.readouterr().out)["n"] == 6


@pytest.mark.parametrize("argv", [
    ["space", "gen", "--box", "0x4"],
    ["space", "gen", "--box", "abc"],
    ["space", "gen", "--graph", "star:5"],
    ["verify", "--suite", "nonesuch"],
])
def test_usage_errors_exit_2(argv):
    assert main(argv) == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["approx", "run"])
    assert exc.value.code == 2


def test_op_gen_and_profile(line, tmp_path, capsys):
    op = tmp_path / "a.bin"
    assert main(["op", "gen", "--space", str(line), "--profile", "exp:1", "--seed", "4",
                 "--contraction", "--out", str(op)]) == 0
    capsys.readouterr()
    assert main(["prop", "profile", "--space", str(line), "--op", str(op), "--grid", "0,2,4"]) == 0
    rows = qio.parse_profile_csv(capsys.readouterr().out)
    assert [r[0] for r in rows] == [0, 2, 4]
    assert all(lo <= up * (1 + 1e-9) for _, up, lo in rows)
    assert rows[0][1] > rows[1][1] > rows[2][1]


def test_missing_operator_exit_2(line, tmp_path):
    assert main(["prop", "profile", "--space", str(line), "--op", str(tmp_path / "nope.bin")]) == 2


def test_cover_and_chain(line, tmp_path, capsys):
    code, cover = run_json(capsys, ["cover", "--space", str(line), "--r", "8"])
    assert code == 0 and cover["bound"] == 7
    assert len(cover["cover"]["colors"]) == 2
    chain_file = tmp_path / "chain.json"
    assert main(["chain", "--space", str(line), "--radii", "4,8", "--out", str(chain_file)]) == 0
    assert [s["R"] for s in json.loads(chain_file.read_text())] == [4.0, 8.0]
    assert main(["chain", "--space", str(line), "--radii", "8,4"]) == 3


def test_approx_run(line, tmp_path, capsys):
    op = tmp_path / "a.json"
    main(["op", "gen", "--space", str(line), "--profile", "exp:40", "--seed", "1", "--contraction",
          "--out", str(op)])
    capsys.readouterr()
    b_file = tmp_path / "b.bin"
    code, report = run_json(capsys, ["approx", "run", "--space", str(line), "--op", str(op),
                                     "--eps", "0.1", "--stages", "2", "--emit-b", str(b_file)])
    assert code == 0 and report["passed"]
    assert report["realized_error"] <= 0.1
    assert report["output_propagation"] <= report["propagation_bound"]
    assert "timestamp" in report
    b = qio.load_operator(qio.load_space(line), b_file)
    assert np.abs(b.matrix).max() > 0


def test_approx_run_shallow_chain_exit_3(line, tmp_path, capsys):
    op = tmp_path / "a.bin"
    main(["op", "gen", "--space", str(line), "--profile", "exp:40", "--seed", "1", "--contraction",
          "--out", str(op)])
    chain_file = tmp_path / "chain.json"
    main(["chain", "--space", str(line), "--radii", "2", "--out", str(chain_file)])
    capsys.readouterr()
    code = main(["approx", "run", "--space", str(line), "--op", str(op), "--eps", "0.1",
                 "--chain", str(chain_file)])
    assert code == 3
    assert "chain too shallow" in capsys.readouterr().err


def test_higson_commands(capsys):
    code, split = run_json(capsys, ["higson", "split", "--fn", "sinlog", "--stages", "6"])
    assert code == 0
    assert split["radii"][:4] == [0.0, 4.0, 12.0, 24.0]
    assert all(a["passed"] for a in split["annuli"])
    code, built = run_json(capsys, ["higson", "build-g", "--seq", "sinusoid", "--length", "16"])
    assert code == 0 and all(r["passed"] for r in built["checks"])
    code, table = run_json(capsys, ["higson", "build-vl", "--fn", "const", "--radii", "2,4,8"])
    assert code == 0 and table["rows"]
    assert main(["higson", "check", "--fn", "cosh"]) == 2


def test_verify_suite_reports(capsys, tmp_path):
    out = tmp_path / "dimnuc.json"
    assert main(["verify", "--suite", "dimnuc", "--seed", "3", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["seed"] == 3 and report["passed"]


def test_verify_is_reproducible(tmp_path):
    # the pipeline version of this check runs in the acceptance suite
    reports = []
    for name in ("one.json", "two.json"):
        out = tmp_path / name
        assert main(["verify", "--suite", "higson", "--seed", "7", "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        rep.pop("timestamp")
        reports.append(rep)
    assert reports[0] == reports[1]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "quasiloc", "space", "gen", "--graph", "path:10"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "diameter=9" in proc.stderr


def test_approx_run_with_saved_two_stage_chain(line, tmp_path, capsys):
    op = tmp_path / "a.bin"
    main(["op", "gen", "--space", str(line), "--profile", "exp:40", "--seed", "2", "--contraction",
          "--out", str(op)])
    chain_file = tmp_path / "chain.json"
    assert main(["chain", "--space", str(line), "--radii", "8,12", "--out", str(chain_file)]) == 0
    capsys.readouterr()
    code, report = run_json(capsys, ["approx", "run", "--space", str(line), "--op", str(op),
                                     "--eps", "0.1", "--chain", str(chain_file)])
    assert code == 0
    assert report["chain_radii"] == [8.0, 12.0]
    assert report["stages"][1]["piece_count"] == 16
    assert report["output_propagation"] <= report["propagation_bound"]


def test_profiles_of_banded_and_diagonal(line, tmp_path, capsys):
    band = tmp_path / "band.bin"
    diag = tmp_path / "diag.bin"
    main(["op", "gen", "--space", str(line), "--profile", "band:3", "--seed", "0", "--out", str(band)])
    main(["op", "gen", "--space", str(line), "--profile", "band:0", "--seed", "0", "--out", str(diag)])
    capsys.readouterr()
    main(["prop", "profile", "--space", str(line), "--op", str(band), "--grid", "0,1,2,3,4"])
    rows = qio.parse_profile_csv(capsys.readouterr().out)
    assert [up == 0 for _, up, _ in rows] == [False, False, False, True, True]
    main(["prop", "profile", "--space", str(line), "--op", str(diag), "--grid", "0,5"])
    assert all(up == lo == 0 for _, up, lo in qio.parse_profile_csv(capsys.readouterr().out))


def test_approx_run_trivial_when_eps_exceeds_norm(line, tmp_path, capsys):
    op = tmp_path / "a.bin"
    main(["op", "gen", "--space", str(line), "--profile", "exp:1", "--seed", "0", "--contraction",
          "--out", str(op)])
    capsys.readouterr()
    code, report = run_json(capsys, ["approx", "run", "--space", str(line), "--op", str(op), "--eps", "1.5"])
    assert code == 0 and report["trivial"]
    assert report["output_propagation"] == 0
