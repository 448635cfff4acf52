import csv
import io
import json
import math

import pytest

from entropy_lab.cli import main
from entropy_lab.config import ExperimentConfig, load_config, merge
from entropy_lab.errors import ValidationError


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def csv_rows(text):
    return list(csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#")))


def test_qsolve_json(capsys):
    code, out, _ = run(capsys, "qsolve", "--d", "2", "--p", "0.33333333,0.16666667")
    assert code == 0
    q = json.loads(out)["result"]["q"]
    assert q[0] == pytest.approx(0.4308, abs=1e-4) and q[2] == pytest.approx(0.2482, abs=1e-4)


def test_boundary_entropy_uniform(capsys):
    code, out, _ = run(capsys, "boundary-entropy", "--d", "2", "--uniform", "--f", "kl")
    assert code == 0
    assert json.loads(out)["result"]["entropy"] == pytest.approx(0.5 * math.log(3), abs=1e-12)


def test_sweep_csv_gap_shrinks(capsys):
    code, out, _ = run(capsys, "sweep", "--d", "2", "--uniform", "--f", "kl", "--a", "0.9,0.99,0.999",
                       "--format", "csv")
    assert code == 0
    rows = csv_rows(out)
    assert list(rows[0]) == ["a", "h_group", "h_boundary", "gap", "residual_mass_identity"]
    gaps = [float(r["gap"]) for r in rows]
    assert gaps[0] > gaps[1] > gaps[2] > 0


@pytest.mark.parametrize("argv", [
    ["criterion", "--p", "0.33333333,0.16666667"],
    ["tmap", "--p", "0.33333333,0.16666667", "--f", "chi2"],
    ["tmap-inv", "--lambda", "0.3,0.2"],
    ["amenable", "--a", "0.9"],
    ["kv", "--n", "10,100"],
    ["walk-sim", "--paths", "5000", "--depth", "2"],
    ["oracle-abel", "--uniform", "--radius", "2"],
    ["minimize-check", "--uniform", "--depth", "2", "--samples", "50"],
])
def test_every_command_runs(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    assert json.loads(out)["command"] == argv[0]


def test_tmap_report_fields(capsys):
    _, out, _ = run(capsys, "tmap", "--p", "0.33333333,0.16666667")
    res = json.loads(out)["result"]
    assert set(res) == {"p", "q", "lambda", "f", "residual"}
    assert res["lambda"][0] == pytest.approx(0.32378, abs=5e-4)


def test_minimize_check_examples(capsys):
    _, out, _ = run(capsys, "minimize-check", "--uniform", "--depth", "4", "--samples", "1000")
    res = json.loads(out)["result"]
    assert res["sampled_min"] >= 0.5493061443340548 - 1e-12
    _, out, _ = run(capsys, "minimize-check", "--p", "0.33333333,0.16666667",
                    "--lambda", "0.33333333,0.16666667", "--depth", "4", "--samples", "1000")
    res = json.loads(out)["result"]
    assert res["below_unit"] >= 1 and res["local_search_best"] < res["unit_density_entropy"]
    assert res["sampled_min"] >= res["closed_form_min"] - 1e-12
    _, out, _ = run(capsys, "minimize-check", "--uniform", "--f", "linear", "--depth", "2", "--samples", "100")
    res = json.loads(out)["result"]
    assert abs(res["sampled_min"]) < 1e-12 and abs(res["sampled_median"]) < 1e-12


def test_reports_are_byte_identical(capsys):
    argv = ["walk-sim", "--p", "0.4,0.1", "--paths", "20000", "--depth", "2", "--seed", "9"]
    _, first, _ = run(capsys, *argv)
    _, second, _ = run(capsys, *argv)
    assert first == second
    assert "runtime_s" not in first


def test_out_file_and_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "qsolve", "d": 2, "p": [0.25, 0.25]}))
    out = tmp_path / "r.json"
    code, stdout, _ = run(capsys, "qsolve", "--config", str(cfg), "--out", str(out))
    assert code == 0 and stdout == ""
    assert json.loads(out.read_text())["result"]["q"] == pytest.approx([1 / 3] * 4)


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "kv", "d": 2, "n_list": [5]}))
    _, out, _ = run(capsys, "kv", "--config", str(cfg), "--n", "7")
    assert [r["n"] for r in json.loads(out)["rows"]] == [7]


def test_exit_codes(capsys):
    assert run(capsys, "qsolve", "--p", "0.3,0.3")[0] == 2
    assert run(capsys, "sweep", "--a", "1.0")[0] == 2
    assert run(capsys, "qsolve", "--d", "1")[0] == 2
    assert run(capsys, "qsolve", "--p", "x")[0] == 2
    assert run(capsys, "no-such-command")[0] == 2
    assert run(capsys, "qsolve", "--bogus")[0] == 2
    code, _, err = run(capsys, "amenable", "--k", "2", "--a", "0.999")
    assert code == 3 and "numerical failure" in err


def test_load_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"command": "qsolve", "d": 2, "p": [0.25, 0.25]}))
    assert load_config(path).p == [0.25, 0.25]
    for bad, field in [({"command": "sweep", "a": 1.0}, "'a'"),
                       ({"command": "qsolve", "d": 2, "p": [0.3, 0.3]}, "'p'"),
                       ({"command": "qsolve", "depth": "deep"}, "'depth'"),
                       ({"command": "qsolve", "colour": 1}, "colour")]:
        path.write_text(json.dumps(bad))
        with pytest.raises(ValidationError, match=field):
            load_config(path)
    path.write_text("{not json")
    with pytest.raises(ValidationError):
        load_config(path)


def test_global_flags_before_command(capsys):
    _, out, _ = run(capsys, "--seed", "5", "--format", "csv", "kv", "--n", "3")
    assert out.startswith("# entropy-lab")


def test_merge_ignores_unset_flags():
    base = ExperimentConfig(command="sweep", a_list=[0.5])
    assert merge(base, {"a_list": None, "seed": 4}).a_list == [0.5]


def test_walk_sim_example_reports_three_routes(capsys):
    code, out, _ = run(capsys, "walk-sim", "--p", "0.33333333,0.16666667", "--paths", "20000",
                       "--lambda", "0.32378234292549124,0.17621765707450876", "--seed", "2")
    assert code == 0
    res = json.loads(out)["result"]
    assert res["entropy_closed_form"] == pytest.approx(res["entropy_unit_density"], abs=1e-12)
    assert res["entropy_mc"] == pytest.approx(res["entropy_closed_form"], abs=5 * res["entropy_stderr"])
    assert res["reference_value_reported"] == 2.398017
    code, out, _ = run(capsys, "walk-sim", "--p", "0.4,0.1", "--paths", "1000")
    assert "reference_value_reported" not in json.loads(out)["result"]
