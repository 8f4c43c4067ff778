"""Time steppers for the discrete system and the noise-driven ODE.

Both integrate the full state in (R^3)^k and record the dissimilarities
(norms of the projections orthogonal to the diagonal) along the way.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import HypothesisError, InvalidInputError, NumericalError
from .flock_core import FlockState
from .graph import (
    _adjacency_unchecked,
    _laplacian_unchecked,
    fiedler_lower_bound,
    fiedler_number,
    laplacian_norm_bound,
)
from .noise import NoNoise, NoiseModel, SmoothedWiener, SmoothedWienerPath, sample_noise_vector, stream
from .theory import ModelParams, initial_quantities, max_step_size

TRAJECTORY_COLUMNS = ("t", "vdis", "xdis", "fiedler", "noise_ok")


def _perp_norm(w: np.ndarray) -> float:
    return float(np.linalg.norm(w - w.mean(axis=0)))


def noise_condition(H, v, H0: float) -> bool:
    """``||H_perp|| <= H0 ||v_perp||`` (inclusive)."""
    return _perp_norm(np.asarray(H, dtype=float)) <= H0 * _perp_norm(np.asarray(v, dtype=float))


@dataclass
class Trajectory:
    """Recorded run; ``fiedler`` holds exact Fiedler numbers when
    ``fiedler_exact`` is set and the ``k * min a_ij`` lower bound otherwise."""

    times: np.ndarray
    vdis: np.ndarray
    xdis: np.ndarray
    fiedler: np.ndarray
    noise_ok: np.ndarray
    first_alignment: float | None
    final_state: FlockState
    fiedler_exact: bool = False
    monitored: bool = True
    violations: int = 0
    steps: int = 0
    positions: np.ndarray | None = None
    velocities: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def to_csv(self, file) -> None:
        rows = zip(self.times, self.vdis, self.xdis, self.fiedler, self.noise_ok)
        with _open(file) as fh:
            writer = csv.writer(fh)
            writer.writerow(TRAJECTORY_COLUMNS)
            for t, vd, xd, phi, ok in rows:
                writer.writerow([repr(float(t)), repr(float(vd)), repr(float(xd)), repr(float(phi)), int(ok)])

    def to_jsonl(self, file) -> None:
        if self.positions is None:
            raise InvalidInputError("trajectory was recorded without full states")
        with _open(file) as fh:
            for t, x, v in zip(self.times, self.positions, self.velocities):
                fh.write(json.dumps({"t": float(t), "x": x.tolist(), "v": v.tolist()}) + "\n")


class _open:
    def __init__(self, file):
        self.file = file
        self.own = isinstance(file, str) or hasattr(file, "__fspath__")

    def __enter__(self):
        self.fh = open(self.file, "w", newline="") if self.own else self.file
        return self.fh

    def __exit__(self, *exc):
        if self.own:
            self.fh.close()


class _Recorder:
    def __init__(self, stride: int, keep_states: bool):
        self.stride = max(1, int(stride))
        self.keep = keep_states
        self.rows = []
        self.xs = []
        self.vs = []

    def add(self, n, t, x, v, phi, ok, force=False):
        if n % self.stride and not force:
            return
        self.rows.append((t, _perp_norm(v), _perp_norm(x), phi, ok))
        if self.keep:
            self.xs.append(x.copy())
            self.vs.append(v.copy())

    def build(self, **kw) -> Trajectory:
        cols = np.array(self.rows, dtype=float).reshape(-1, 5)
        return Trajectory(
            times=cols[:, 0], vdis=cols[:, 1], xdis=cols[:, 2], fiedler=cols[:, 3],
            noise_ok=cols[:, 4].astype(bool),
            positions=np.array(self.xs) if self.keep else None,
            velocities=np.array(self.vs) if self.keep else None,
            **kw,
        )


def _resolve_H0(state0: FlockState, p: ModelParams, H0):
    if H0 is not None:
        return float(H0)
    try:
        return initial_quantities(state0.positions, state0.velocities, p).H0
    except HypothesisError:
        return None


def _connectivity(A: np.ndarray, L: np.ndarray, exact: bool) -> float:
    return fiedler_number(L) if exact else fiedler_lower_bound(A)


def step_discrete(state: FlockState, p: ModelParams, H) -> FlockState:
    """One step: ``x += h v``, ``v = (Id - h L_x) v + h H`` with L from the current x."""
    if p.h is None:
        raise InvalidInputError("discrete stepping needs the step size h")
    x, v = state.positions, state.velocities
    L = _laplacian_unchecked(_adjacency_unchecked(x, p.K, p.alpha))
    H = np.asarray(H, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        x_new = x + p.h * v
        v_new = v - p.h * (L @ v) + p.h * H
    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(v_new))):
        raise NumericalError(f"non-finite state after step at t={state.time}")
    return FlockState(state.time + p.h, x_new, v_new)


def simulate_discrete(
    state0: FlockState,
    p: ModelParams,
    model: NoiseModel,
    max_steps: int,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
    H0: float | None = None,
    record_fiedler: bool = False,
    stop_on_alignment: bool = False,
    stride: int = 1,
    keep_states: bool = False,
    check_step: bool = False,
) -> Trajectory:
    """Iterate the discrete system for up to ``max_steps`` steps.

    ``first_alignment`` is the first step index ``t`` with
    ``||v_perp[t]|| <= nu``.  ``noise_ok[t]`` records whether the noise
    drawn at step ``t`` satisfied ``||H_perp|| <= H0 ||v_perp[t]||``.
    """
    if p.h is None:
        raise InvalidInputError("discrete simulation needs the step size h")
    if isinstance(model, SmoothedWiener):
        raise InvalidInputError("smoothed Wiener noise drives the continuous system only")
    if check_step:
        q = initial_quantities(state0.positions, state0.velocities, p)
        h_max = max_step_size(q, p)
        if not p.h < h_max:
            raise InvalidInputError(f"h={p.h} is not below the admissible step {h_max}")
    if rng is None and not isinstance(model, NoNoise):
        if seed is None:
            raise InvalidInputError("a seed (or generator) is required for noisy runs")
        rng = stream(seed, 0)
    H0 = _resolve_H0(state0, p, H0)
    monitored = H0 is not None

    x = np.array(state0.positions)
    v = np.array(state0.velocities)
    k = x.shape[0]
    h, nu = p.h, p.nu
    rec = _Recorder(stride, keep_states)
    first = None
    violations = 0
    n = 0
    for n in range(max_steps + 1):
        t = state0.time + n * h
        vdis = _perp_norm(v)
        if not math.isfinite(vdis):
            raise NumericalError(f"non-finite velocities at step {n}")
        if first is None and vdis <= nu:
            first = n
        A = _adjacency_unchecked(x, p.K, p.alpha)
        L = _laplacian_unchecked(A)
        phi = _connectivity(A, L, record_fiedler)
        last = n == max_steps or (stop_on_alignment and first is not None)
        if last:
            rec.add(n, t, x, v, phi, True, force=True)
            break
        H = sample_noise_vector(model, k, rng=rng)
        ok = (not monitored) or _perp_norm(H) <= H0 * vdis
        violations += not ok
        rec.add(n, t, x, v, phi, ok)
        x, v = x + h * v, v - h * (L @ v) + h * H
    final = FlockState(state0.time + n * h, x, v)
    return rec.build(first_alignment=first, final_state=final, fiedler_exact=record_fiedler,
                     monitored=monitored, violations=violations, steps=n)


def integrate_continuous(
    state0: FlockState,
    p: ModelParams,
    T: float,
    dt: float,
    paths: SmoothedWienerPath | None = None,
    H0: float | None = None,
    record_fiedler: bool = False,
    stop_on_alignment: bool = False,
    stride: int = 1,
    keep_states: bool = False,
) -> Trajectory:
    """Classical RK4 for ``x' = v, v' = -L_x v + H(t)`` with frozen noise paths.

    The noise is evaluated at the stage times from ``paths`` (``3k``
    coordinates); ``paths=None`` integrates the noiseless system.  The
    first alignment time is located by linear interpolation of
    ``||v_perp||`` between the bracketing steps.
    """
    if not T > 0 or not dt > 0:
        raise InvalidInputError("T and dt must be positive")
    k = state0.k
    cap = 0.1 / laplacian_norm_bound(k, p.K)
    if dt > cap * (1 + 1e-12):
        raise InvalidInputError(f"dt={dt} exceeds the stability cap {cap}")
    n_steps = int(math.ceil(T / dt - 1e-9))
    dt = T / n_steps
    if paths is not None:
        if paths.shape != (3 * k,):
            raise InvalidInputError(f"need {3 * k} coordinate paths, got shape {paths.shape}")
        if dt > paths.delta / 16 * (1 + 1e-12):
            raise InvalidInputError(f"dt={dt} exceeds delta/16={paths.delta / 16}")
        if paths.T < state0.time + T - 1e-12:
            raise InvalidInputError(f"noise paths cover [0, {paths.T}] but the run needs {state0.time + T}")
        half_times = np.minimum(state0.time + 0.5 * dt * np.arange(2 * n_steps + 1), paths.T)
        noise = np.moveaxis(paths.noise(half_times), -1, 0).reshape(-1, k, 3)
    else:
        noise = np.zeros((2 * n_steps + 1, k, 3))
    H0 = _resolve_H0(state0, p, H0)
    monitored = H0 is not None and paths is not None
    K, alpha, nu = p.K, p.alpha, p.nu

    def accel(x, v, H):
        L = _laplacian_unchecked(_adjacency_unchecked(x, K, alpha))
        return H - L @ v

    x = np.array(state0.positions)
    v = np.array(state0.velocities)
    rec = _Recorder(stride, keep_states)
    first = None
    violations = 0
    prev_vdis = None
    n = 0
    for n in range(n_steps + 1):
        t = state0.time + n * dt
        vdis = _perp_norm(v)
        if not math.isfinite(vdis):
            raise NumericalError(f"non-finite velocities at step {n} (t={t})")
        if first is None and vdis <= nu:
            if prev_vdis is None:
                first = t
            else:
                first = t - dt + dt * (prev_vdis - nu) / (prev_vdis - vdis)
        prev_vdis = vdis
        H_now = noise[2 * n]
        ok = (not monitored) or _perp_norm(H_now) <= H0 * vdis
        violations += not ok
        if record_fiedler:
            A = _adjacency_unchecked(x, K, alpha)
            phi = fiedler_number(_laplacian_unchecked(A))
        else:
            phi = fiedler_lower_bound(_adjacency_unchecked(x, K, alpha))
        last = n == n_steps or (stop_on_alignment and first is not None)
        rec.add(n, t, x, v, phi, ok, force=last)
        if last:
            break
        H_mid, H_next = noise[2 * n + 1], noise[2 * n + 2]
        k1x, k1v = v, accel(x, v, H_now)
        k2x, k2v = v + 0.5 * dt * k1v, accel(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v, H_mid)
        k3x, k3v = v + 0.5 * dt * k2v, accel(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v, H_mid)
        k4x, k4v = v + dt * k3v, accel(x + dt * k3x, v + dt * k3v, H_next)
        x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    final = FlockState(state0.time + n * dt, x, v)
    return rec.build(first_alignment=first, final_state=final, fiedler_exact=record_fiedler,
                     monitored=monitored, violations=violations, steps=n, meta={"dt": dt})
