"""Repeated-trial estimation of P(nu-alignment within the horizon T0)."""
from __future__ import annotations

import csv
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import integrate_continuous, simulate_discrete
from .exceptions import InvalidInputError, NumericalError
from .flock_core import FlockState, dissimilarity
from .graph import laplacian_norm_bound
from .noise import RNG_STREAM_VERSION, NoNoise, NoiseModel, SmoothedWiener, build_agent_paths, stream
from .theory import CONTINUOUS, DISCRETE, BoundReport, ModelParams, bound_report

MAX_FAILURE_FRACTION = 0.01


@dataclass
class ExperimentSpec:
    params: ModelParams
    x0: np.ndarray
    v0: np.ndarray
    noise: NoiseModel
    mode: str = DISCRETE
    trials: int = 1000
    seed: int = 0
    variants: dict = field(default_factory=dict)
    dt: float | None = None
    confidence: float = 0.95
    workers: int = 1

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.v0 = np.asarray(self.v0, dtype=float)
        if self.trials < 1:
            raise InvalidInputError("trials must be at least 1")
        if self.mode not in (DISCRETE, CONTINUOUS):
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if self.mode == CONTINUOUS and not isinstance(self.noise, (NoNoise, SmoothedWiener)):
            raise InvalidInputError("continuous mode supports no noise or smoothed Wiener noise")
        if self.mode == DISCRETE and isinstance(self.noise, SmoothedWiener):
            raise InvalidInputError("smoothed Wiener noise requires continuous mode")
        if self.mode == CONTINUOUS and self.dt is None:
            self.dt = default_dt(self.params, self.noise)

    @property
    def state0(self) -> FlockState:
        return FlockState(0.0, self.x0, self.v0)


def default_dt(p: ModelParams, noise) -> float:
    cap = 0.1 / laplacian_norm_bound(p.k, p.K)
    if isinstance(noise, SmoothedWiener):
        return min(noise.delta / 32, cap)
    return min(1e-3, cap)


@dataclass(frozen=True)
class TrialResult:
    trial: int
    aligned_at: float | None
    violations: int
    error: str | None = None

    @property
    def success(self) -> bool:
        return self.error is None and self.aligned_at is not None


@dataclass
class ExperimentSummary:
    successes: int
    trials: int
    empirical: float
    interval: tuple
    confidence: float
    bound: float | None
    log_bound: float | None = None
    numerical_failures: int = 0
    mean_alignment: float | None = None
    median_alignment: float | None = None
    violation_rate: float = 0.0
    condition_held_trials: int = 0
    condition_held_successes: int = 0
    horizon: float = 0.0
    verifiable: bool = True
    report: dict | None = None
    rng_version: str = RNG_STREAM_VERSION
    results: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("results")
        d["interval"] = list(self.interval)
        return d


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise InvalidInputError("need 0 <= successes <= trials and trials >= 1")
    if not 0 < confidence < 1:
        raise InvalidInputError("confidence must lie in (0, 1)")
    z = statistics.NormalDist().inv_cdf(0.5 + confidence / 2)
    n = trials
    phat = successes / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z / denom * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class Verdict:
    passed: bool
    margin: float
    upper: float
    bound: float

    @property
    def label(self) -> str:
        return "PASS" if self.passed else "FAIL"


def compare_to_bound(summary: ExperimentSummary) -> Verdict:
    """PASS unless the whole confidence interval lies below the lower bound."""
    if summary.bound is None:
        raise InvalidInputError("summary carries no theoretical bound")
    upper = summary.interval[1]
    return Verdict(upper >= summary.bound, abs(upper - summary.bound), upper, summary.bound)


def _run_trial(spec: ExperimentSpec, trial: int, horizon: float, H0: float | None) -> TrialResult:
    state0 = spec.state0
    p = spec.params
    try:
        if dissimilarity(spec.v0) <= p.nu:
            return TrialResult(trial, 0.0, 0)
        if spec.mode == DISCRETE:
            rng = None if isinstance(spec.noise, NoNoise) else stream(spec.seed, trial, 0)
            tr = simulate_discrete(state0, p, spec.noise, int(math.ceil(horizon)), rng=rng, H0=H0,
                                   stop_on_alignment=True, stride=10**9)
        else:
            paths = None
            if isinstance(spec.noise, SmoothedWiener):
                paths = build_agent_paths(spec.noise, p.k, horizon, spec.seed, trial)
            tr = integrate_continuous(state0, p, horizon, spec.dt, paths=paths, H0=H0,
                                      stop_on_alignment=True, stride=10**9)
    except NumericalError as exc:
        return TrialResult(trial, None, 0, error=str(exc))
    return TrialResult(trial, None if tr.first_alignment is None else float(tr.first_alignment), tr.violations)


def _run_chunk(args):
    spec, trials, horizon, H0 = args
    return [_run_trial(spec, i, horizon, H0) for i in trials]


def run_experiment(spec: ExperimentSpec) -> ExperimentSummary:
    """Run ``spec.trials`` independent trials and compare with the theory.

    Trial ``i`` draws all randomness from streams keyed by ``(seed, i, ...)``
    so the summary does not depend on the number of workers.
    """
    p = spec.params
    report: BoundReport = bound_report(spec.x0, spec.v0, p, spec.noise, spec.mode, spec.variants)
    horizon = report.T0_steps if spec.mode == DISCRETE else report.T0
    verifiable = report.hypothesis_ok and (spec.mode == CONTINUOUS or p.h < report.h_max)

    indices = list(range(spec.trials))
    if spec.workers > 1:
        chunks = [indices[i :: spec.workers] for i in range(spec.workers)]
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            parts = pool.map(_run_chunk, [(spec, c, horizon, report.H0) for c in chunks])
            results = sorted((r for part in parts for r in part), key=lambda r: r.trial)
    else:
        results = _run_chunk((spec, indices, horizon, report.H0))

    failed = [r for r in results if r.error is not None]
    if len(failed) > MAX_FAILURE_FRACTION * spec.trials:
        raise NumericalError(
            f"{len(failed)} of {spec.trials} trials failed numerically; first: {failed[0].error}"
        )
    valid = [r for r in results if r.error is None]
    if not valid:
        raise NumericalError("every trial failed numerically")
    wins = [r for r in valid if r.success]
    times = [r.aligned_at for r in wins]
    held = [r for r in valid if r.violations == 0]
    n = len(valid)
    return ExperimentSummary(
        successes=len(wins),
        trials=n,
        empirical=len(wins) / n,
        interval=wilson_interval(len(wins), n, spec.confidence),
        confidence=spec.confidence,
        bound=report.bound,
        log_bound=report.log_bound,
        numerical_failures=len(failed),
        mean_alignment=statistics.fmean(times) if times else None,
        median_alignment=statistics.median(times) if times else None,
        violation_rate=sum(r.violations > 0 for r in valid) / n,
        condition_held_trials=len(held),
        condition_held_successes=sum(r.success for r in held),
        horizon=float(horizon),
        verifiable=verifiable,
        report=report.to_dict(),
        results=results,
    )


def write_trials_csv(summary: ExperimentSummary, file) -> None:
    with open(file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "aligned_step_or_time", "condition_violations"])
        for r in summary.results:
            aligned = "" if r.aligned_at is None else repr(r.aligned_at)
            writer.writerow([r.trial, aligned, r.violations])
