"""Noise generators: uniform ball, i.i.d. Gaussian and mollified Wiener noise.

The continuous-time noise is the time derivative of a Wiener path smoothed
by a compactly supported C^1 kernel ``psi_delta(x) = psi(x / delta) / delta``.
Each scalar coordinate is

    e(t) = sigma * sqrt(delta) * scale * sum_j psi_delta(t - s_j) * dW_j

a left-point Riemann sum of the stochastic integral over the Wiener
increments on a grid ``s_j = j * dt_w``.  For ``s < 0`` the path is
continued by an independent Wiener process run backwards, ``W(s) = W'(-s)``.

``scale`` is ``1 / ||psi||_2`` by default, which makes ``Var e(t) = sigma**2``
exactly (see :class:`SmoothedWiener`).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy import integrate

from .exceptions import InvalidInputError

RNG_STREAM_VERSION = "philox4x64/seedsequence-spawnkey/v1"

DEFAULT_DT_W_DIVISOR = 128
MAX_DT_W_FRACTION = 1.0 / 64.0


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent deterministic generator for ``(seed, *key)``.

    Streams are Philox counter-based generators keyed through
    ``SeedSequence(seed, spawn_key=key)``; distinct keys give statistically
    independent streams and the mapping is stable across runs and platforms.
    """
    if seed is None:
        raise InvalidInputError("a master seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# kernels


def _cos2_psi(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) <= 0.5, 2.0 * np.cos(np.pi * x) ** 2, 0.0)


def _cos2_dpsi(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) <= 0.5, -2.0 * np.pi * np.sin(2.0 * np.pi * x), 0.0)


@dataclass(frozen=True)
class KernelSpec:
    """A mollifier ``psi`` supported in [-1/2, 1/2] with unit mass.

    ``psi`` and ``dpsi`` must be vectorized and return 0 outside the support.
    Mass and L2 norms are computed by adaptive quadrature on construction;
    a kernel that is negative somewhere or whose mass differs from 1 by more
    than 1e-10 is rejected.
    """

    psi: Callable
    dpsi: Callable
    name: str = "custom"
    mass: float = field(init=False)
    psi_norm: float = field(init=False)
    dpsi_norm: float = field(init=False)

    def __post_init__(self):
        opts = dict(limit=200, epsabs=1e-14, epsrel=1e-13)
        mass = integrate.quad(lambda u: float(self.psi(u)), -0.5, 0.5, **opts)[0]
        psi2 = integrate.quad(lambda u: float(self.psi(u)) ** 2, -0.5, 0.5, **opts)[0]
        dpsi2 = integrate.quad(lambda u: float(self.dpsi(u)) ** 2, -0.5, 0.5, **opts)[0]
        if abs(mass - 1.0) > 1e-10:
            raise InvalidInputError(f"kernel {self.name!r} has mass {mass!r}, expected 1")
        probe = np.linspace(-0.5, 0.5, 2001)
        if np.any(self.psi(probe) < 0):
            raise InvalidInputError(f"kernel {self.name!r} takes negative values")
        outside = np.array([-0.75, -0.5000001, 0.5000001, 0.75])
        if np.any(self.psi(outside) != 0):
            raise InvalidInputError(f"kernel {self.name!r} is not supported in [-1/2, 1/2]")
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "psi_norm", math.sqrt(psi2))
        object.__setattr__(self, "dpsi_norm", math.sqrt(dpsi2))


_DEFAULT_KERNEL = None


def default_kernel() -> KernelSpec:
    """``psi(x) = 2 cos^2(pi x)`` on [-1/2, 1/2]: ||psi||^2 = 3/2, ||psi'||^2 = 2 pi^2."""
    global _DEFAULT_KERNEL
    if _DEFAULT_KERNEL is None:
        _DEFAULT_KERNEL = KernelSpec(_cos2_psi, _cos2_dpsi, name="cos2")
    return _DEFAULT_KERNEL


# ---------------------------------------------------------------------------
# noise models


@dataclass(frozen=True)
class NoNoise:
    kind = "none"


@dataclass(frozen=True)
class UniformBall:
    r: float
    kind = "uniform"

    def __post_init__(self):
        if not self.r > 0:
            raise InvalidInputError(f"uniform noise radius must be positive, got {self.r}")


@dataclass(frozen=True)
class GaussianIID:
    sigma: float
    kind = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidInputError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class SmoothedWiener:
    """Mollified Wiener noise with marginal standard deviation ``sigma``.

    With ``unit_variance=False`` the coordinates are the raw
    ``sigma * sqrt(delta) * X_delta(t)``, whose variance is
    ``sigma**2 * ||psi||**2``; since ``||psi|| > 1`` for every admissible
    kernel, the default rescales by ``1 / ||psi||``.
    """

    sigma: float
    delta: float
    kernel: KernelSpec = field(default_factory=default_kernel)
    dt_w: float | None = None
    unit_variance: bool = True
    kind = "smoothed_wiener"

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidInputError(f"sigma must be positive, got {self.sigma}")
        if not self.delta > 0:
            raise InvalidInputError(f"delta must be positive, got {self.delta}")
        if self.dt_w is None:
            object.__setattr__(self, "dt_w", self.delta / DEFAULT_DT_W_DIVISOR)
        _check_grid(self.delta, self.dt_w)

    @property
    def scale(self) -> float:
        return 1.0 / self.kernel.psi_norm if self.unit_variance else 1.0


NoiseModel = Union[NoNoise, UniformBall, GaussianIID, SmoothedWiener]


def _check_grid(delta: float, dt_w: float) -> None:
    if not 0 < dt_w <= delta * MAX_DT_W_FRACTION * (1 + 1e-12):
        raise InvalidInputError(
            f"Wiener grid step dt_w={dt_w} must lie in (0, delta/64] with delta={delta}"
        )


# ---------------------------------------------------------------------------
# discrete-time samplers


def sample_uniform_ball(dim: int, r: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform point(s) in the closed ball of radius ``r`` in R^dim.

    Direction from a normalized Gaussian vector, radius ``r * U**(1/dim)``.
    """
    if dim < 1:
        raise InvalidInputError(f"dim must be at least 1, got {dim}")
    if not r >= 0:
        raise InvalidInputError(f"radius must be nonnegative, got {r}")
    shape = (dim,) if size is None else (size, dim)
    g = rng.standard_normal(shape)
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    u = rng.random(shape[:-1] + (1,))
    return r * g / norms * u ** (1.0 / dim)


def sample_gaussian_iid(dim: int, sigma: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    if dim < 1:
        raise InvalidInputError(f"dim must be at least 1, got {dim}")
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    shape = (dim,) if size is None else (size, dim)
    return sigma * rng.standard_normal(shape)


# ---------------------------------------------------------------------------
# smoothed Wiener paths


@dataclass(frozen=True)
class SmoothedWienerPath:
    """Frozen Wiener increments for one or more scalar coordinates.

    ``wiener[..., i]`` holds ``W(s)`` at ``s = (i - offset) * dt_w`` and
    ``increments[..., i] = wiener[..., i + 1] - wiener[..., i]``.  Leading
    axes index independent coordinates (or independent sample paths).
    """

    T: float
    delta: float
    dt_w: float
    sigma: float
    kernel: KernelSpec
    offset: int
    wiener: np.ndarray
    increments: np.ndarray
    scale: float = 1.0

    @property
    def shape(self) -> tuple:
        return self.increments.shape[:-1]

    @property
    def grid(self) -> np.ndarray:
        return (np.arange(self.wiener.shape[-1]) - self.offset) * self.dt_w

    def _window(self, t, want: str):
        t = np.asarray(t, dtype=np.float64)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        slack = 1e-12 * max(1.0, self.T)
        if np.any(t < -slack) or np.any(t > self.T + slack):
            raise InvalidInputError(f"noise queried outside [0, {self.T}]")
        half = 0.5 * self.delta
        width = int(math.ceil(self.delta / self.dt_w)) + 2
        j_lo = np.floor((t - half) / self.dt_w).astype(np.int64)
        j = j_lo[:, None] + np.arange(width)
        s = j * self.dt_w
        u = (t[:, None] - s) / self.delta
        if want == "dpsi":
            w = self.kernel.dpsi(u) / self.delta**2
        else:
            w = self.kernel.psi(u) / self.delta
        idx = j + self.offset
        return scalar, idx, w

    def _contract(self, values: np.ndarray, idx, w, scalar):
        out = np.einsum("...ml,ml->...m", values[..., idx], w)
        return out[..., 0] if scalar else out

    def mollified_derivative(self, t):
        """``X_delta(t) = sum_j psi_delta(t - s_j) dW_j``, variance ``||psi||^2 / delta``."""
        scalar, idx, w = self._window(t, "psi")
        return self._contract(self.increments, idx, w, scalar)

    def noise(self, t):
        """Noise coordinate ``e(t)``; deterministic given the frozen path."""
        factor = self.sigma * math.sqrt(self.delta) * self.scale
        return factor * self.mollified_derivative(t)

    def smoothed(self, t):
        """``W_delta(t) = sum_j psi_delta(t - s_j) W(s_j) dt_w``."""
        scalar, idx, w = self._window(t, "psi")
        return self.dt_w * self._contract(self.wiener, idx, w, scalar)

    def smoothed_derivative(self, t):
        """Exact time derivative of :meth:`smoothed` (kernel differentiated)."""
        scalar, idx, w = self._window(t, "dpsi")
        return self.dt_w * self._contract(self.wiener, idx, w, scalar)

    def wiener_at(self, t):
        """``W`` at the grid point nearest to ``t``."""
        i = np.rint(np.asarray(t) / self.dt_w).astype(np.int64) + self.offset
        return self.wiener[..., i]


def _grid_sizes(T: float, delta: float, dt_w: float) -> tuple[int, int]:
    neg = int(math.ceil(0.5 * delta / dt_w)) + 2
    pos = int(math.ceil((T + 0.5 * delta) / dt_w)) + int(math.ceil(delta / dt_w)) + 4
    return neg, pos


def build_wiener_path(
    T: float,
    delta: float,
    dt_w: float,
    sigma: float,
    kernel: KernelSpec,
    rng: np.random.Generator,
    mirror_rng: np.random.Generator | None = None,
    n_paths: int | None = None,
    unit_variance: bool = True,
) -> SmoothedWienerPath:
    """Sample Wiener increments on a grid covering every kernel window in [0, T].

    ``mirror_rng`` drives the independent backward process used for
    negative times; it defaults to a stream spawned from ``rng``.
    """
    if not T > 0:
        raise InvalidInputError(f"T must be positive, got {T}")
    if not delta > 0:
        raise InvalidInputError(f"delta must be positive, got {delta}")
    _check_grid(delta, dt_w)
    if mirror_rng is None:
        mirror_rng = rng.spawn(1)[0]
    neg, pos = _grid_sizes(T, delta, dt_w)
    prefix = () if n_paths is None else (n_paths,)
    sd = math.sqrt(dt_w)
    fwd = sd * rng.standard_normal(prefix + (pos,))
    back = sd * mirror_rng.standard_normal(prefix + (neg,))
    wiener = np.empty(prefix + (neg + pos + 1,))
    wiener[..., neg] = 0.0
    np.cumsum(fwd, axis=-1, out=wiener[..., neg + 1 :])
    # W(-m dt_w) = W_back(m dt_w), stored in reverse order
    wiener[..., :neg] = np.cumsum(back, axis=-1)[..., ::-1]
    scale = 1.0 / kernel.psi_norm if unit_variance else 1.0
    return SmoothedWienerPath(
        T=float(T),
        delta=float(delta),
        dt_w=float(dt_w),
        sigma=float(sigma),
        kernel=kernel,
        offset=neg,
        wiener=wiener,
        increments=np.diff(wiener, axis=-1),
        scale=scale,
    )


def eval_noise(path: SmoothedWienerPath, t):
    return path.noise(t)


def build_agent_paths(model: SmoothedWiener, k: int, T: float, seed: int, *key: int) -> SmoothedWienerPath:
    """Paths for all ``3k`` coordinates; coordinate ``c = 3 i + l`` is agent i, axis l.

    Each coordinate uses stream ``(seed, *key, c, 0)`` and its backward
    extension stream ``(seed, *key, c, 1)``.
    """
    rows = []
    for c in range(3 * k):
        p = build_wiener_path(
            T, model.delta, model.dt_w, model.sigma, model.kernel,
            stream(seed, *key, c, 0), stream(seed, *key, c, 1),
            unit_variance=model.unit_variance,
        )
        rows.append(p.wiener)
    wiener = np.stack(rows)
    return SmoothedWienerPath(
        T=p.T, delta=p.delta, dt_w=p.dt_w, sigma=p.sigma, kernel=p.kernel,
        offset=p.offset, wiener=wiener, increments=np.diff(wiener, axis=-1), scale=p.scale,
    )


def sample_noise_vector(model: NoiseModel, k: int, t: float = 0.0, paths: SmoothedWienerPath | None = None,
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """Noise vector H(t) as a ``(k, 3)`` array."""
    if isinstance(model, NoNoise):
        return np.zeros((k, 3))
    if isinstance(model, SmoothedWiener):
        if paths is None or paths.shape != (3 * k,):
            raise InvalidInputError(f"smoothed Wiener noise needs {3 * k} coordinate paths")
        return np.asarray(paths.noise(t)).reshape(k, 3)
    if rng is None:
        raise InvalidInputError(f"{model.kind} noise needs a random generator")
    if isinstance(model, UniformBall):
        return sample_uniform_ball(3 * k, model.r, rng).reshape(k, 3)
    if isinstance(model, GaussianIID):
        return sample_gaussian_iid(3 * k, model.sigma, rng).reshape(k, 3)
    raise InvalidInputError(f"unknown noise model {model!r}")


def dump_path_csv(path: SmoothedWienerPath, file, coordinate: int = 0, times=None) -> None:
    """Write ``t, W, W_delta, X_delta`` for one coordinate on the Wiener grid."""
    if times is None:
        n = int(math.floor(path.T / path.dt_w + 1e-9))
        times = np.arange(n + 1) * path.dt_w
    sub = path
    if path.shape:
        flat_w = path.wiener.reshape(-1, path.wiener.shape[-1])[coordinate]
        sub = SmoothedWienerPath(path.T, path.delta, path.dt_w, path.sigma, path.kernel,
                                 path.offset, flat_w, np.diff(flat_w), path.scale)
    W = sub.wiener_at(times)
    Wd = sub.smoothed(times)
    X = sub.mollified_derivative(times)
    own = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    fh = open(file, "w", newline="") if own else file
    try:
        writer = csv.writer(fh)
        writer.writerow(["t", "W", "W_delta", "X_delta"])
        for row in zip(times, W, Wd, X):
            writer.writerow([repr(float(v)) for v in row])
    finally:
        if own:
            fh.close()


def _kurtosis(x: np.ndarray) -> float:
    c = x - x.mean()
    m2 = np.mean(c * c)
    return float(np.mean(c**4) / (m2 * m2))


def noise_diagnostics(model: SmoothedWiener, n_paths: int, times, seed: int, batch: int = 2000) -> dict:
    """Monte Carlo moments of the mollified noise for ``n_paths`` independent paths.

    For each query time reports the variance of ``X_delta`` and of ``e``;
    also the sample correlation of ``e(t)`` with ``e(t + delta)`` and
    ``e(t + 2 delta)`` at the first query time, and the kurtosis there.
    Batch ``b`` uses streams ``(seed, b, 0)`` and ``(seed, b, 1)``.
    """
    times = np.asarray(sorted(times), dtype=float)
    if n_paths < 2:
        raise InvalidInputError("need at least two paths")
    t0 = times[0]
    query = np.concatenate([times, [t0 + model.delta, t0 + 2 * model.delta]])
    T = float(query.max())
    X_parts, e_parts = [], []
    done, b = 0, 0
    while done < n_paths:
        m = min(batch, n_paths - done)
        path = build_wiener_path(T, model.delta, model.dt_w, model.sigma, model.kernel,
                                 stream(seed, b, 0), stream(seed, b, 1), n_paths=m,
                                 unit_variance=model.unit_variance)
        X = path.mollified_derivative(query)
        X_parts.append(X)
        e_parts.append(path.sigma * math.sqrt(path.delta) * path.scale * X)
        done += m
        b += 1
    X = np.concatenate(X_parts)
    e = np.concatenate(e_parts)
    nt = len(times)
    var_X = X[:, :nt].var(axis=0, ddof=1)
    var_e = e[:, :nt].var(axis=0, ddof=1)
    expected_e = model.sigma**2 * (1.0 if model.unit_variance else model.kernel.psi_norm**2)
    return {
        "n_paths": int(n_paths),
        "times": times.tolist(),
        "var_X": var_X.tolist(),
        "var_X_expected": model.kernel.psi_norm**2 / model.delta,
        "var_e": var_e.tolist(),
        "var_e_expected": expected_e,
        "var_e_se": (var_e * math.sqrt(2.0 / (n_paths - 1))).tolist(),
        "corr_lag_delta": float(np.corrcoef(e[:, 0], e[:, nt])[0, 1]),
        "corr_lag_2delta": float(np.corrcoef(e[:, 0], e[:, nt + 1])[0, 1]),
        "corr_se": 1.0 / math.sqrt(n_paths),
        "kurtosis": _kurtosis(e[:, 0]),
    }
