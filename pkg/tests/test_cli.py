import json
import math
from pathlib import Path

import pytest
import yaml

from noisyflock import cli
from noisyflock.config import RunConfig, load_config
from noisyflock.montecarlo import Verdict

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def base(**over):
    cfg = {
        "seed": 5,
        "mode": "discrete",
        "params": {"k": 3, "K": 1.0, "alpha": 2.0, "nu": 0.02, "h": 0.05},
        "initial": {"generator": {"kind": "coincident", "v_dissimilarity": 0.2}},
        "noise": {"kind": "none"},
        "montecarlo": {"trials": 50},
    }
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(cfg.get(key), dict) and key != "initial":
            cfg[key] = {**cfg[key], **val}
        else:
            cfg[key] = val
    return cfg


def write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg) if name.endswith(".yaml") else json.dumps(cfg))
    return str(path)


def run(tmp_path, cmd, cfg, *extra):
    out = tmp_path / "out"
    code = cli.main([cmd, "--config", write(tmp_path, cfg), "--out", str(out), *extra])
    report = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None
    return code, report, out


def test_config_requires_seed_and_rejects_unknown_keys():
    cfg = base()
    del cfg["seed"]
    with pytest.raises(ValueError):
        RunConfig.model_validate(cfg)
    with pytest.raises(ValueError):
        RunConfig.model_validate(base(extra_key=1))
    with pytest.raises(ValueError):
        RunConfig.model_validate(base(mode="continuous", noise={"kind": "gaussian", "sigma": 0.1}))


def test_zero_sigma_rejected(tmp_path, capsys):
    cfg = base(mode="continuous", noise={"kind": "smoothed_wiener", "sigma": 0.0, "delta": 0.1})
    assert cli.main(["noise-check", "--config", write(tmp_path, cfg)]) == cli.EXIT_USAGE
    assert "invalid config" in capsys.readouterr().err


def test_json_config_and_explicit_state(tmp_path):
    cfg = base(initial={"positions": [[0, 0, 0], [1, 0, 0], [0, 1, 0]],
                        "velocities": [[0.1, 0, 0], [-0.1, 0, 0], [0, 0, 0]]})
    c = load_config(write(tmp_path, cfg, "cfg.json"))
    x, v = c.initial_state()
    assert x.shape == (3, 3) and v[0, 0] == 0.1


def test_theory_table(tmp_path, capsys):
    cfg = base(params={"k": 5, "nu": 0.1, "h": 0.01},
               initial={"generator": {"kind": "coincident", "v_dissimilarity": 1.0}})
    code, report, _ = run(tmp_path, "theory", cfg)
    out = capsys.readouterr().out
    assert "U0     2" in out and "H0     0.15625" in out
    assert report["theory"]["discrete"]["U0"] == 2.0
    # this classic example sits outside the case (iii) hypothesis
    assert code == cli.EXIT_HYPOTHESIS


def test_theory_hypothesis_error(tmp_path, capsys):
    cfg = base(params={"k": 2, "alpha": 1.0},
               initial={"generator": {"kind": "coincident", "v_dissimilarity": 1.0}})
    code, report, _ = run(tmp_path, "theory", cfg)
    assert code == cli.EXIT_HYPOTHESIS
    assert "hypothesis violated" in capsys.readouterr().err
    assert report["exit_code"] == 2


def test_theory_no_noise_bounds_are_one(tmp_path):
    code, report, _ = run(tmp_path, "theory", base())
    assert code == 0
    assert all(m["bound"] == 1.0 for m in report["theory"].values())


def test_simulate_deterministic_alignment(tmp_path, capsys):
    code, report, out = run(tmp_path, "simulate", base())
    assert code == 0
    sim = report["simulation"]
    assert sim["first_alignment"] <= math.ceil(sim["T0"])
    assert (out / "trajectory.csv").read_text().startswith("t,vdis,xdis,fiedler,noise_ok")
    assert "first alignment: step" in capsys.readouterr().out


def test_simulate_already_aligned(tmp_path):
    cfg = base(params={"nu": 0.5})
    code, report, _ = run(tmp_path, "simulate", cfg)
    assert code == 0 and report["simulation"]["first_alignment"] == 0


def test_simulate_zero_velocity(tmp_path):
    cfg = base(initial={"positions": [[0, 0, 0], [1, 0, 0], [0, 2, 0]], "velocities": [[0, 0, 0]] * 3},
               simulation={"max_steps": 20}, output={"states_jsonl": True})
    code, report, out = run(tmp_path, "simulate", cfg)
    assert code == 0 and report["simulation"]["first_alignment"] == 0
    states = [json.loads(l) for l in (out / "states.jsonl").read_text().splitlines()]
    assert all(s["x"] == states[0]["x"] for s in states)


def test_simulate_continuous_writes_noise(tmp_path):
    cfg = base(mode="continuous", noise={"kind": "smoothed_wiener", "sigma": 3.2e-4, "delta": 0.1},
               output={"noise_csv": True})
    code, report, out = run(tmp_path, "simulate", cfg)
    assert code == 0 and report["simulation"]["first_alignment"] < report["simulation"]["T0"]
    assert (out / "noise.csv").read_text().startswith("t,W,W_delta,X_delta")


def test_simulate_numerical_failure(tmp_path):
    cfg = base(noise={"kind": "gaussian", "sigma": 1e300}, simulation={"max_steps": 50})
    code, report, _ = run(tmp_path, "simulate", cfg)
    assert code == cli.EXIT_NUMERICAL and report["exit_code"] == 3


def test_montecarlo_shipped_scenario_passes(tmp_path, capsys):
    code = cli.main(["montecarlo", "--config", str(CONFIGS / "disc-uniform-k5.yaml"),
                     "--out", str(tmp_path), "--workers", "2"])
    assert code == 0
    assert "verdict: PASS" in capsys.readouterr().out
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["summary"]["bound"] == 1.0 and report["summary"]["empirical"] == 1.0
    assert (tmp_path / "trials.csv").exists()


def test_montecarlo_zero_bound_passes(tmp_path):
    code, report, _ = run(tmp_path, "montecarlo", base(noise={"kind": "gaussian", "sigma": 0.05}))
    assert code == 0
    assert report["summary"]["bound"] == 0.0 and report["verdict"]["label"] == "PASS"


def test_montecarlo_broken_scenario_skips(tmp_path, capsys):
    cfg = base(params={"h": 0.5}, noise={"kind": "gaussian", "sigma": 0.5}, montecarlo={"trials": 10})
    code, report, _ = run(tmp_path, "montecarlo", cfg)
    assert code == 0 and report["verdict"]["label"] == "SKIPPED"
    assert "skipped" in capsys.readouterr().err


def test_montecarlo_fail_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "compare_to_bound", lambda s: Verdict(False, 0.1, 0.5, 0.6))
    code, report, _ = run(tmp_path, "montecarlo", base(montecarlo={"trials": 3}))
    assert code == cli.EXIT_FAIL and report["verdict"]["label"] == "FAIL"


def test_report_round_trip_is_bitwise(tmp_path):
    cfg = base(noise={"kind": "gaussian", "sigma": 4.3e-4}, montecarlo={"trials": 40})
    code, _, out = run(tmp_path, "montecarlo", cfg)
    first = (out / "report.json").read_bytes()
    assert cli.main(["montecarlo", "--config", str(out / "report.json"), "--out", str(out)]) == code
    assert (out / "report.json").read_bytes() == first


def test_overrides(tmp_path):
    code, report, _ = run(tmp_path, "theory", base(), "--seed", "77", "--variant", "paper")
    assert report["config"]["seed"] == 77
    assert report["config"]["variants"]["chi_tail"] == "paper"
    assert report["config"]["variants"]["continuous_rate"] == "paper"
    code, report, _ = run(tmp_path, "theory", base(), "--variant", "derived", "--workers", "3")
    assert report["config"]["variants"]["davies"] == "derived"
    assert report["config"]["workers"] == 3


def test_noise_check(tmp_path, capsys):
    cfg = base(mode="continuous", params={"k": 2, "alpha": 1.0},
               initial={"generator": {"kind": "coincident", "v_dissimilarity": 0.0}},
               noise={"kind": "smoothed_wiener", "sigma": 1.0, "delta": 0.1},
               noise_check={"paths": 100_000, "batch": 5000}, output={"noise_csv": True})
    code, report, out = run(tmp_path, "noise-check", cfg)
    assert code == 0
    d = report["noise_check"]
    assert all(abs(v - 1.0) <= 0.03 for v in d["var_e"])
    assert abs(d["corr_lag_2delta"]) <= 3 / math.sqrt(100_000)
    assert (out / "noise.csv").exists()
    assert "kurtosis" in capsys.readouterr().out


def test_noise_check_needs_wiener(tmp_path):
    assert cli.main(["noise-check", "--config", write(tmp_path, base())]) == cli.EXIT_USAGE
