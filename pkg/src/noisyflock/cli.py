"""Command line entry point.

Exit codes: 0 ok / PASS, 2 hypothesis violation, 3 numerical failure,
4 bound FAIL.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from .config import RunConfig, load_config
from .dynamics import integrate_continuous, simulate_discrete
from .exceptions import HypothesisError, InvalidInputError, NumericalError
from .flock_core import FlockState
from .montecarlo import ExperimentSpec, compare_to_bound, default_dt, run_experiment, write_trials_csv
from .noise import NoNoise, SmoothedWiener, build_agent_paths, dump_path_csv, noise_diagnostics, stream
from .theory import CONTINUOUS, DISCRETE, bound_report, initial_quantities
from .theory import alignment_horizon

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_HYPOTHESIS = 2
EXIT_NUMERICAL = 3
EXIT_FAIL = 4

VARIANT_PRESETS = {
    "paper": {"chi_tail": "paper", "continuous_rate": "paper", "davies": "paper"},
    "derived": {"chi_tail": "standard", "continuous_rate": "derived", "davies": "derived"},
}


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    data = cfg.model_dump()
    if args.seed is not None:
        data["seed"] = args.seed
    if args.workers is not None:
        data["workers"] = args.workers
    if args.out is not None:
        data["output"]["dir"] = args.out
    if args.variant is not None:
        data["variants"].update(VARIANT_PRESETS[args.variant])
    return RunConfig.model_validate(data)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(cfg: RunConfig, payload: dict) -> Path:
    path = _outdir(cfg) / "report.json"
    payload = {"config": cfg.model_dump(mode="json"), **payload}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return str(v)
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _table(rows) -> str:
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"  {k:<{width}}  {_fmt(v)}" for k, v in rows)


# ---------------------------------------------------------------------------


def cmd_theory(cfg: RunConfig) -> int:
    p = cfg.model_params()
    x0, v0 = cfg.initial_state()
    noise = cfg.noise_model()
    variants = cfg.variant_dict()
    try:
        initial_quantities(x0, v0, p)
    except HypothesisError as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        _write_report(cfg, {"error": str(exc), "exit_code": EXIT_HYPOTHESIS})
        return EXIT_HYPOTHESIS

    reports = {}
    modes = [DISCRETE, CONTINUOUS] if p.h is not None else [CONTINUOUS]
    for mode in modes:
        applies = isinstance(noise, NoNoise) or (mode == CONTINUOUS) == isinstance(noise, SmoothedWiener)
        rep = bound_report(x0, v0, p, noise if applies else NoNoise(), mode, variants)
        d = rep.to_dict()
        if not applies:
            d["bound"] = d["log_bound"] = None
            d["noise"] = f"{noise.kind} (not defined in {mode} mode)"
        reports[mode] = d

    first = reports[modes[0]]
    print("initial quantities")
    print(_table([(k, first[k]) for k in ("case", "a", "b", "U0", "B0", "H0", "h_max")]))
    for mode, d in reports.items():
        print(f"{mode} mode")
        rows = [("hypothesis", "holds" if d["hypothesis_ok"] else "VIOLATED"),
                ("hypothesis lhs", d["hypothesis_lhs"]), ("hypothesis rhs", d["hypothesis_rhs"]),
                ("T0", d["T0"]), ("rate", d["rate"]), ("noise", d["noise"]),
                ("probability bound", "n/a" if d["bound"] is None else d["bound"]),
                ("log bound", "n/a" if d["log_bound"] is None else d["log_bound"])]
        print(_table(rows))
    code = EXIT_OK if reports.get(cfg.mode, first)["hypothesis_ok"] else EXIT_HYPOTHESIS
    if code:
        print(f"warning: {cfg.mode} convergence hypotheses do not hold", file=sys.stderr)
    _write_report(cfg, {"theory": reports, "exit_code": code})
    return code


def cmd_simulate(cfg: RunConfig) -> int:
    p = cfg.model_params()
    x0, v0 = cfg.initial_state()
    noise = cfg.noise_model()
    state0 = FlockState(0.0, x0, v0)
    sim = cfg.simulation
    out = _outdir(cfg)
    try:
        q = initial_quantities(x0, v0, p)
        T0 = alignment_horizon(q, p, mode=cfg.mode, variant=cfg.variants.continuous_rate) \
            if p.nu < q.v0_norm else 0.0
    except HypothesisError as exc:
        q, T0 = None, None
        if (cfg.mode == DISCRETE and sim.max_steps is None) or (cfg.mode == CONTINUOUS and sim.T is None):
            print(f"no horizon available: {exc}", file=sys.stderr)
            return EXIT_HYPOTHESIS
    try:
        if cfg.mode == DISCRETE:
            steps = sim.max_steps if sim.max_steps is not None else int(math.ceil(T0))
            rng = None if isinstance(noise, NoNoise) else stream(cfg.seed, 0)
            traj = simulate_discrete(state0, p, noise, steps, rng=rng, record_fiedler=sim.record_fiedler,
                                     stride=sim.stride, keep_states=cfg.output.states_jsonl)
            horizon = steps
        else:
            dt = sim.dt if sim.dt is not None else default_dt(p, noise)
            T = sim.T if sim.T is not None else max(T0, dt)
            paths = None
            if isinstance(noise, SmoothedWiener):
                paths = build_agent_paths(noise, p.k, T, cfg.seed, 0)
                if cfg.output.noise_csv:
                    dump_path_csv(paths, out / "noise.csv", coordinate=0)
            traj = integrate_continuous(state0, p, T, dt, paths=paths, record_fiedler=sim.record_fiedler,
                                        stride=sim.stride, keep_states=cfg.output.states_jsonl)
            horizon = T
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        _write_report(cfg, {"error": str(exc), "exit_code": EXIT_NUMERICAL})
        return EXIT_NUMERICAL

    if cfg.output.trajectory_csv:
        traj.to_csv(out / "trajectory.csv")
    if cfg.output.states_jsonl:
        traj.to_jsonl(out / "states.jsonl")
    unit = "step" if cfg.mode == DISCRETE else "time"
    if traj.first_alignment is None:
        print(f"first alignment: none within horizon ({unit} {_fmt(float(horizon))})")
    else:
        print(f"first alignment: {unit} {_fmt(float(traj.first_alignment))} (horizon {_fmt(float(horizon))})")
    _write_report(cfg, {
        "simulation": {
            "mode": cfg.mode, "horizon": float(horizon),
            "T0": T0, "H0": None if q is None else q.H0,
            "first_alignment": traj.first_alignment, "steps": traj.steps,
            "noise_condition_violations": traj.violations,
            "final_vdis": float(traj.vdis[-1]), "final_xdis": float(traj.xdis[-1]),
        },
        "exit_code": EXIT_OK,
    })
    return EXIT_OK


def cmd_montecarlo(cfg: RunConfig) -> int:
    p = cfg.model_params()
    x0, v0 = cfg.initial_state()
    try:
        spec = ExperimentSpec(p, x0, v0, cfg.noise_model(), cfg.mode, cfg.montecarlo.trials, cfg.seed,
                              cfg.variant_dict(), cfg.simulation.dt, cfg.montecarlo.confidence, cfg.workers)
        summary = run_experiment(spec)
    except HypothesisError as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        _write_report(cfg, {"error": str(exc), "exit_code": EXIT_HYPOTHESIS})
        return EXIT_HYPOTHESIS
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        _write_report(cfg, {"error": str(exc), "exit_code": EXIT_NUMERICAL})
        return EXIT_NUMERICAL

    if cfg.output.trials_csv:
        write_trials_csv(summary, _outdir(cfg) / "trials.csv")
    verdict = compare_to_bound(summary)
    print(_table([
        ("trials", summary.trials), ("successes", summary.successes),
        ("empirical", summary.empirical),
        (f"wilson {summary.confidence:g}", f"[{summary.interval[0]:.6g}, {summary.interval[1]:.6g}]"),
        ("bound", summary.bound), ("horizon", summary.horizon),
        ("violation rate", summary.violation_rate),
        ("numerical failures", summary.numerical_failures),
    ]))
    if summary.verifiable:
        label, code = verdict.label, (EXIT_OK if verdict.passed else EXIT_FAIL)
    else:
        label, code = "SKIPPED", EXIT_OK
        print("warning: convergence hypotheses unmet; bound comparison skipped", file=sys.stderr)
    print(f"verdict: {label}")
    _write_report(cfg, {
        "summary": summary.to_dict(),
        "verdict": {"label": label, "passed": verdict.passed, "margin": verdict.margin,
                    "upper": verdict.upper, "bound": verdict.bound},
        "exit_code": code,
    })
    return code


def cmd_noise_check(cfg: RunConfig) -> int:
    noise = cfg.noise_model()
    if not isinstance(noise, SmoothedWiener):
        print("noise-check needs noise.kind = smoothed_wiener", file=sys.stderr)
        return EXIT_USAGE
    nc = cfg.noise_check
    diag = noise_diagnostics(noise, nc.paths, nc.times, cfg.seed, batch=nc.batch)
    rows = []
    for t, vx, ve, se in zip(diag["times"], diag["var_X"], diag["var_e"], diag["var_e_se"]):
        rows.append((f"Var X(t={t:g})", f"{vx:.6g} (expected {diag['var_X_expected']:.6g})"))
        rows.append((f"Var e(t={t:g})", f"{ve:.6g} +- {se:.2g} (expected {diag['var_e_expected']:.6g})"))
    rows += [("corr lag delta", f"{diag['corr_lag_delta']:.4g} (se {diag['corr_se']:.2g})"),
             ("corr lag 2 delta", f"{diag['corr_lag_2delta']:.4g} (se {diag['corr_se']:.2g})"),
             ("kurtosis", diag["kurtosis"])]
    print(_table(rows))
    if cfg.output.noise_csv:
        path = build_agent_paths(noise, 1, max(nc.times), cfg.seed, 0)
        dump_path_csv(path, _outdir(cfg) / "noise.csv", coordinate=0)
    _write_report(cfg, {"noise_check": diag, "exit_code": EXIT_OK})
    return EXIT_OK


COMMANDS = {
    "theory": cmd_theory,
    "simulate": cmd_simulate,
    "montecarlo": cmd_montecarlo,
    "noise-check": cmd_noise_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisyflock", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML or JSON config (or a report.json)")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--workers", type=int, help="worker processes for montecarlo")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--variant", choices=sorted(VARIANT_PRESETS), help="bound variant preset")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
    except (ValidationError, InvalidInputError, OSError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return COMMANDS[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
