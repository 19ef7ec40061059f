import json
import subprocess
import sys

import numpy as np
import pytest

from resilient_ne.builtins import BUILDERS
from resilient_ne.cli import main
from resilient_ne.errors import ParseError, ValidationError
from resilient_ne.scenario import (
    apply_overrides, builtin_names, dumps, load_scenario, loads, parse_scenario, read_document,
    to_dict,
)


def write_doc(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("name", sorted(BUILDERS))
def test_builtin_files_match_builders_and_round_trip(name):
    config = load_scenario(name)
    assert dumps(config) == dumps(BUILDERS[name]())
    again = parse_scenario(loads(dumps(config)))
    assert dumps(again) == dumps(config)


def test_builtin_library_contents():
    assert builtin_names() == sorted(BUILDERS)
    grid = load_scenario("grid-24-adv3")
    assert grid.game.num_agents == 24 and len(grid.active_adversaries) == 3 and grid.D == 1
    sensor = load_scenario("sensor-96-analog")
    assert sensor.game.num_agents == 96 and len(sensor.active_adversaries) == 12
    assert sensor.alpha == 1 / 40 and sensor.game.dims == (2,) * 96


def test_override_equals_file_edit(tmp_path):
    doc = read_document("baseline-noadv-8")
    edited = json.loads(json.dumps(doc))
    edited["run"]["alpha"] = 0.05
    edited["game"]["b"][3] = 7.5
    edited["run"]["init"] = {"kind": "zeros"}
    via_set = apply_overrides(doc, ["run.alpha=0.05", "game.b.3=7.5", 'run.init={"kind": "zeros"}'])
    assert dumps(parse_scenario(via_set)) == dumps(parse_scenario(edited))
    assert doc["run"]["alpha"] == 0.1  # the original document is untouched


def test_missing_and_unknown_fields(tmp_path):
    doc = read_document("baseline-noadv-8")
    del doc["filter"]["D"]
    with pytest.raises(ParseError, match="filter.D"):
        parse_scenario(doc)
    doc = read_document("baseline-noadv-8")
    doc["run"]["alpah"] = 0.1
    with pytest.raises(ValidationError, match="alpah"):
        parse_scenario(doc)
    doc = read_document("baseline-noadv-8")
    doc["graphs"]["communication"].append([0, 99])
    with pytest.raises(ValidationError):
        parse_scenario(doc)
    with pytest.raises(ParseError, match="line 2"):
        loads('{\n "game": ,\n}')


def test_cli_reports_parse_errors(tmp_path, capsys):
    doc = read_document("baseline-noadv-8")
    del doc["filter"]["D"]
    code, _, err = cli(capsys, "run", "--scenario", write_doc(tmp_path, doc),
                       "--out", str(tmp_path / "o"))
    assert code == 2 and "filter.D" in err


def test_run_baseline(tmp_path, capsys):
    out = tmp_path / "base"
    code, stdout, _ = cli(capsys, "run", "--scenario", "baseline-noadv-8", "--out", str(out))
    assert code == 0 and "exit: Converged" in stdout
    summary = json.loads((out / "summary.json").read_text())
    assert summary["exit"] == "Converged" and summary["final_dist_to_ne"] <= 1e-8
    assert (out / "metrics.csv").exists() and (out / "beliefs.csv").exists()


def test_run_counterexample_keeps_a_gap(tmp_path, capsys):
    out = tmp_path / "cx"
    code, stdout, _ = cli(capsys, "run", "--scenario", "counterexample-7", "--out", str(out))
    assert code == 0 and "exit: MaxIters" in stdout
    summary = json.loads((out / "summary.json").read_text())
    assert summary["final_dist_to_ne"] > 0.1


def test_strict_run_refuses(tmp_path, capsys):
    code, _, err = cli(capsys, "run", "--scenario", "counterexample-7", "--strict",
                       "--out", str(tmp_path / "o"))
    assert code == 1 and "information_robust" in err


def test_seed_flag_changes_the_run(tmp_path, capsys):
    runs = []
    for seed in ("1", "1", "2"):
        out = tmp_path / f"r{len(runs)}"
        cli(capsys, "run", "--scenario", "grid-24-adv3", "--set", "run.max_iters=20",
            "--seed", seed, "--out", str(out))
        runs.append((out / "beliefs.csv").read_text())
    assert runs[0] == runs[1] != runs[2]


def test_check_graph_verdicts(tmp_path, capsys):
    code, out, _ = cli(capsys, "check-graph", "--scenario", "counterexample-7")
    assert code == 1 and "information_robust: FAILS" in out
    code, out, _ = cli(capsys, "check-graph", "--scenario", "baseline-noadv-8")
    assert code == 0 and "all assumptions hold" in out
    code, out, _ = cli(capsys, "check-graph", "--scenario", "grid-24-adv3")
    assert code == 0
    code, out, _ = cli(capsys, "check-graph", "--scenario", "counterexample-7",
                       "--mode", "exhaustive")
    assert code == 1


def test_check_graph_reports_locality_three(tmp_path, capsys):
    # three adversaries along the bottom edge all feed the node above the middle one
    doc = read_document("grid-24-adv3")
    doc["adversaries"] = [{"agent": a, "policy": "gaussian_noise", "sigma": 1.0}
                          for a in (0, 1, 2)]
    code, out, _ = cli(capsys, "check-graph", "--scenario", write_doc(tmp_path, doc))
    assert code == 1 and "locality_number: 3" in out


def test_check_graph_sampled_and_too_large(capsys):
    code, out, _ = cli(capsys, "check-graph", "--scenario", "counterexample-7", "--sampled", "200")
    assert code == 1 and "mode = sampled" in out
    code, _, err = cli(capsys, "check-graph", "--scenario", "sensor-96-analog",
                       "--mode", "exhaustive")
    assert code == 2 and "--sampled" in err


def test_step_size(capsys):
    code, out, _ = cli(capsys, "step-size", "--scenario", "sensor-96-analog")
    assert code == 0 and "pbar" in out and "conservative" in out
    code, _, err = cli(capsys, "step-size", "--scenario", "baseline-noadv-8",
                       "--set", "run.alpha=0")
    assert code == 2 and "run.alpha" in err
    code, out, _ = cli(capsys, "step-size", "--scenario", "baseline-noadv-8")
    amax = float(next(l for l in out.splitlines() if l.startswith("max feasible")).split("=")[1])
    code, out, _ = cli(capsys, "step-size", "--scenario", "baseline-noadv-8",
                       "--set", f"run.alpha={amax / 2!r}")
    assert code == 0 and "certified" in out


def test_oracle(capsys):
    code, out, _ = cli(capsys, "oracle", "--scenario", "sensor-96-analog")
    assert code == 0
    assert float(out.splitlines()[-1].split("=")[1]) <= 1e-10
    code, out, _ = cli(capsys, "oracle", "--scenario", "baseline-noadv-8")
    expected = BUILDERS["baseline-noadv-8"]().game
    from resilient_ne.game import solve_ne_oracle
    x = solve_ne_oracle(expected)
    got = [float(l.split("[")[2].rstrip("]")) for l in out.splitlines() if l.startswith("x[")]
    np.testing.assert_allclose(got, x, rtol=1e-10)


def test_analyze_recorded_run(tmp_path, capsys):
    out = tmp_path / "rec"
    code, _, _ = cli(capsys, "run", "--scenario", "counterexample-7", "--out", str(out),
                     "--set", "run.max_iters=30", "--set", "run.record_weights=true")
    assert code == 0 and (out / "weights.npz").exists()
    code, text, _ = cli(capsys, "analyze", "--run", str(out), "--r-max", "2")
    assert code == 0
    assert "[contraction]" in text and "[lyapunov matrices]" in text
    code, _, err = cli(capsys, "analyze", "--run", str(tmp_path / "missing"))
    assert code == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "resilient_ne", "oracle", "--scenario",
                           "baseline-noadv-8"], capture_output=True, text=True)
    assert proc.returncode == 0 and "residual" in proc.stdout
