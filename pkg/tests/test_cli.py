import json
import subprocess
import sys

import pytest

CLI = [sys.executable, "-m", "demoproof.cli"]


def run_cli(*args, expect=0):
    proc = subprocess.run([*CLI, *map(str, args)], capture_output=True,
                          text=True)
    assert proc.returncode == expect, proc.stderr
    return proc


def gen_quad(tmp_path):
    path = tmp_path / "scenario.json"
    run_cli("gen", "--seed", 3, "--width", 4, "--height", 4, "--goal", 3, 3,
            "--obstacle", 2, 0, "--agent", 0, 0, "--landmark", 1, 2,
            "--out", path)
    return path


def test_hoeffding_values():
    assert run_cli("hoeffding", "--eps", 0.05, "--delta", 0.01).stdout.strip() \
        == "1060"
    assert run_cli("hoeffding", "--eps", 0.05, "--delta", 0.01,
                   "--efficiency", 4).stdout.strip() == "265"


def test_fixture_check_values(tmp_path):
    out = run_cli("check", "--fixture", "tradeoff", "--p", 0.5, "--lam", 0.8)
    payload = json.loads(out.stdout)
    assert payload["prob"] == pytest.approx(0.833333, abs=1e-6)
    assert payload["verdict"] == "SAT"
    assert {"prob", "cost", "verdict", "states", "build_ms",
            "check_ms"} <= set(payload)
    run_cli("check", "--fixture", "tradeoff", "--p", 0.5, "--lam", 0.9,
            "--expect-sat", expect=3)
    bound = json.loads(run_cli("bound", "--fixture", "tradeoff").stdout)
    assert bound["bound"] == pytest.approx(1.0, abs=1e-9)


def test_pipeline_and_determinism(tmp_path):
    scenario = gen_quad(tmp_path)
    artifacts = {}
    for tag in ("a", "b"):
        base = tmp_path / tag
        base.mkdir()
        demo = base / "demo.jsonl"
        run_cli("demo", "--scenario", scenario, "--episodes", 6, "--seed", 2,
                "--out", demo, "--training-csv", base / "train.csv")
        strategy = base / "strategy.json"
        run_cli("clone", "--trajectories", demo, "--out", strategy)
        result = base / "result.json"
        run_cli("check", "--scenario", scenario, "--strategy", strategy,
                "--lam", 0.8, "--out", result)
        heat = base / "heat.csv"
        run_cli("heatmap", "--scenario", scenario, "--strategy", strategy,
                "--out", heat)
        refine_dir = base / "refine"
        run_cli("refine", "--scenario", scenario, "--trajectories", demo,
                "--lam", 0.95, "--iters", 2, "--k", 3, "--seed", 5,
                "--outdir", refine_dir)
        artifacts[tag] = {
            "demo": demo.read_bytes(),
            "train": (base / "train.csv").read_bytes(),
            "strategy": strategy.read_bytes(),
            "result": result.read_bytes(),
            "heat": heat.read_bytes(),
            "history": (refine_dir / "history.jsonl").read_bytes(),
            "final": (refine_dir / "final_strategy.json").read_bytes(),
        }
    assert artifacts["a"] == artifacts["b"]


def test_demo_zero_episodes_writes_empty_log(tmp_path):
    scenario = gen_quad(tmp_path)
    out = tmp_path / "none.jsonl"
    proc = run_cli("demo", "--scenario", scenario, "--episodes", 0, "--seed", 1,
                   "--out", out)
    assert out.read_text() == "\n" or out.read_text() == ""
    assert json.loads(proc.stdout)["episodes"] == 0


def test_model_export_round_trips(tmp_path):
    scenario = gen_quad(tmp_path)
    model_path = tmp_path / "model.json"
    out = run_cli("model", "--scenario", scenario, "--out", model_path)
    assert json.loads(out.stdout)["states"] == 257
    from demoproof.model_io import load_model

    pomdp, labels = load_model(model_path)
    assert len(labels["goal"]) > 0 and len(labels["bad"]) > 0


def test_invalid_input_gives_json_stderr_and_exit_2(tmp_path):
    proc = run_cli("check", "--scenario", tmp_path / "missing.json",
                   "--strategy", tmp_path / "missing2.json", expect=2)
    err = json.loads(proc.stderr)
    assert err["error"] == "FileNotFoundError"
    proc = run_cli("gen", "--width", 2, "--height", 4, "--goal", 0, 0,
                   "--obstacle", 1, 1, "--agent", 3, 3, expect=2)
    assert json.loads(proc.stderr)["error"] == "InvalidScenario"
    proc = run_cli("hoeffding", "--eps", 0, "--delta", 0.5, expect=2)
    assert json.loads(proc.stderr)["error"] == "InvalidParams"


def test_sampled_scenario_generation(tmp_path):
    out1 = run_cli("gen", "--sample", "--seed", 9, "--width-range", 4, 6,
                   "--height-range", 4, 6, "--out", tmp_path / "s1.json")
    out2 = run_cli("gen", "--sample", "--seed", 9, "--width-range", 4, 6,
                   "--height-range", 4, 6, "--out", tmp_path / "s2.json")
    assert (tmp_path / "s1.json").read_bytes() == (tmp_path / "s2.json").read_bytes()
    payload = json.loads(out1.stdout)
    assert 4 <= payload["width"] <= 6 and 4 <= payload["height"] <= 6
