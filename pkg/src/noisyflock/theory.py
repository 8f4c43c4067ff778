"""Closed-form alignment horizons and probability lower bounds.

Everything here is a pure function of the initial dissimilarities and the
model parameters.  Probability bounds are accumulated in log space and
returned as a :class:`Bound` pair ``(log, value)`` so that astronomically
small (or astronomically close to one) bounds survive.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import HypothesisError, InvalidInputError, NumericalError
from .flock_core import dissimilarity
from .graph import laplacian_norm_bound
from .noise import GaussianIID, KernelSpec, NoNoise, SmoothedWiener, UniformBall
from .special import gammainc_lower, gammainc_upper, norm_pdf, norm_sf

SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)

DISCRETE = "discrete"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class ModelParams:
    k: int
    K: float
    alpha: float
    nu: float
    h: float | None = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise InvalidInputError(f"k must be an integer >= 2, got {self.k}")
        if not self.K > 0:
            raise InvalidInputError(f"K must be positive, got {self.K}")
        if not self.alpha >= 0:
            raise InvalidInputError(f"alpha must be nonnegative, got {self.alpha}")
        if not self.nu > 0:
            raise InvalidInputError(f"nu must be positive, got {self.nu}")
        if self.h is not None and not self.h > 0:
            raise InvalidInputError(f"h must be positive, got {self.h}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def kK(self) -> float:
        return self.k * self.K


def _case(alpha: float) -> str:
    if alpha < 1:
        return "alpha<1"
    if alpha == 1:
        return "alpha=1"
    return "alpha>1"


@dataclass(frozen=True)
class InitialQuantities:
    a: float
    b: float
    U0: float
    B0: float
    H0: float
    case: str
    x0_norm: float
    v0_norm: float


def quantities_from_norms(x0_norm: float, v0_norm: float, p: ModelParams) -> InitialQuantities:
    """``a, b, U0, B0, H0`` from the initial position and velocity dissimilarities."""
    if x0_norm < 0 or v0_norm < 0:
        raise InvalidInputError("dissimilarities are nonnegative")
    alpha = p.alpha
    a = 2.0 * SQRT2 / p.kK * v0_norm
    b = 1.0 + SQRT2 * x0_norm
    case = _case(alpha)
    if case == "alpha<1":
        U0 = max((2.0 * a) ** (1.0 / (1.0 - alpha)), 2.0 * b)
    elif case == "alpha=1":
        if a >= 1.0:
            raise HypothesisError(
                f"alpha = 1 needs a < 1 (||v(0)|| < kK/(2 sqrt 2)); got a = {a:.6g}"
            )
        U0 = b / (1.0 - a)
    else:
        U0 = alpha / (alpha - 1.0) * b
    B0 = (U0 - 1.0) / SQRT2
    H0 = 2.0 ** (-alpha - 1.0) * p.kK / U0**alpha
    return InitialQuantities(a, b, U0, B0, H0, case, float(x0_norm), float(v0_norm))


def initial_quantities(x0, v0, p: ModelParams) -> InitialQuantities:
    return quantities_from_norms(dissimilarity(x0), dissimilarity(v0), p)


def max_step_size(q: InitialQuantities, p: ModelParams, v0_norm: float | None = None) -> float:
    """Supremum of admissible discrete steps; use ``h`` strictly below it."""
    v0_norm = q.v0_norm if v0_norm is None else v0_norm
    first = 1.0 / laplacian_norm_bound(p.k, p.K)
    if p.alpha == 0 or v0_norm == 0:
        return first
    second = (p.kK / (2.0 * q.H0)) ** (1.0 / p.alpha) / (2.0 * SQRT2 * v0_norm)
    return min(first, second)


@dataclass(frozen=True)
class HypothesisVerdict:
    ok: bool
    case: str
    lhs: float
    rhs: float
    detail: str

    def __bool__(self):
        return self.ok


def hypothesis_check(q: InitialQuantities, p: ModelParams, mode: str = DISCRETE,
                     literal: bool = False) -> HypothesisVerdict:
    """Check the case hypothesis (i)/(ii)/(iii) behind the convergence guarantees.

    In discrete mode case (iii) carries the extra ``2 k K h a`` term.  With
    ``literal=True`` the continuous case (iii) uses ``(alpha / a)`` in place
    of ``1 / (alpha a)`` as an alternative reading of that inequality.
    """
    _check_mode(mode)
    if q.case == "alpha<1":
        return HypothesisVerdict(True, q.case, math.nan, math.nan, "unconditional")
    if q.case == "alpha=1":
        lhs, rhs = q.v0_norm, p.kK / (2.0 * SQRT2)
        return HypothesisVerdict(lhs < rhs, q.case, lhs, rhs, "||v(0)|| < kK/(2 sqrt 2)")
    alpha, a = p.alpha, q.a
    if a == 0:
        lhs = math.inf
    else:
        base = alpha / a if (literal and mode == CONTINUOUS) else 1.0 / (alpha * a)
        lhs = base ** (1.0 / (alpha - 1.0)) * (alpha - 1.0) / alpha
    rhs = q.b
    detail = "(1/(alpha a))^(1/(alpha-1)) (alpha-1)/alpha > b"
    if mode == DISCRETE:
        if p.h is None:
            raise InvalidInputError("discrete mode needs the step size h")
        rhs += 2.0 * p.kK * p.h * a
        detail += " + 2kKha"
    return HypothesisVerdict(lhs > rhs, q.case, lhs, rhs, detail)


def _check_mode(mode: str) -> None:
    if mode not in (DISCRETE, CONTINUOUS):
        raise InvalidInputError(f"mode must be 'discrete' or 'continuous', got {mode!r}")


def _check_variant(variant: str, allowed=("paper", "derived")) -> None:
    if variant not in allowed:
        raise InvalidInputError(f"variant must be one of {allowed}, got {variant!r}")


def alignment_horizon(q: InitialQuantities, p: ModelParams, v0_norm: float | None = None,
                      mode: str = DISCRETE, variant: str = "derived") -> float:
    """Time (continuous) or number of steps (discrete, real-valued) to nu-alignment.

    The continuous ``variant="paper"`` uses rate ``kK / U0^alpha``;
    ``"derived"`` uses the factor-two-safe rate ``kK / (2 U0^alpha)``.
    """
    _check_mode(mode)
    _check_variant(variant)
    v0_norm = q.v0_norm if v0_norm is None else v0_norm
    if not p.nu < v0_norm:
        raise InvalidInputError(f"need nu < ||v(0)||, got nu={p.nu}, ||v(0)||={v0_norm}")
    log_ratio = math.log(v0_norm / p.nu)
    if mode == DISCRETE:
        if p.h is None:
            raise InvalidInputError("discrete mode needs the step size h")
        return 2.0 * q.U0**p.alpha / (p.h * p.kK) * log_ratio
    factor = 1.0 if variant == "paper" else 2.0
    return factor * q.U0**p.alpha / p.kK * log_ratio


def contraction_factor(q: InitialQuantities, p: ModelParams, mode: str = DISCRETE,
                       variant: str = "derived") -> float:
    """Per-step factor ``1 - h kK / (2 U0^alpha)`` (discrete) or decay rate (continuous)."""
    _check_mode(mode)
    _check_variant(variant)
    rate = p.kK / (2.0 * q.U0**p.alpha)
    if mode == CONTINUOUS:
        return 2.0 * rate if variant == "paper" else rate
    if p.h is None:
        raise InvalidInputError("discrete mode needs the step size h")
    factor = 1.0 - p.h * rate
    if not 0.0 < factor < 1.0:
        raise HypothesisError(f"contraction factor {factor} outside (0, 1)")
    return factor


# ---------------------------------------------------------------------------
# probability bounds


class Bound(NamedTuple):
    log: float
    value: float


def _from_log(logp: float) -> Bound:
    logp = min(0.0, logp)
    return Bound(logp, math.exp(logp) if logp > -math.inf else 0.0)


def prob_bound_uniform(q: InitialQuantities, p: ModelParams, r: float, T0_steps: int) -> Bound:
    """``(H0 nu / r)^(3 k T0)``, or 1 when ``r <= H0 nu``."""
    if not r > 0:
        raise InvalidInputError(f"r must be positive, got {r}")
    if T0_steps < 0:
        raise InvalidInputError("T0 must be nonnegative")
    eps = q.H0 * p.nu
    if r <= eps or T0_steps == 0:
        return Bound(0.0, 1.0)
    return _from_log(3 * p.k * T0_steps * math.log(eps / r))


def _chi_argument(eps: float, sigma: float, variant: str) -> float:
    if variant == "paper":
        return math.sqrt(eps / (2.0 * sigma))
    return eps * eps / (2.0 * sigma * sigma)


def chi_tail(eps: float, sigma: float, k: int, variant: str = "standard") -> float:
    """Probability that the projected Gaussian noise has norm at most ``eps``.

    ``"standard"``: ``P((3k-3)/2, eps^2 / (2 sigma^2))``, the exact law of
    ``||H_perp||`` when ``||H_perp / sigma||^2`` is chi-square with
    ``3k - 3`` degrees of freedom.  ``"paper"``: the same regularized
    incomplete gamma evaluated at ``sqrt(eps / (2 sigma))``.
    """
    _check_variant(variant, ("standard", "paper"))
    if eps < 0 or not sigma > 0 or k < 2:
        raise InvalidInputError("chi_tail needs eps >= 0, sigma > 0, k >= 2")
    return gammainc_lower(1.5 * (k - 1), _chi_argument(eps, sigma, variant))


def chi_tail_complement(eps: float, sigma: float, k: int, variant: str = "standard") -> float:
    _check_variant(variant, ("standard", "paper"))
    return gammainc_upper(1.5 * (k - 1), _chi_argument(eps, sigma, variant))


def gamma_closed_form(n: int, x: float) -> float:
    """``1 - exp(-x) sum_{j<n} x^j / j!``, equal to ``P(n, x)`` for integer n."""
    term, total = 1.0, 1.0
    for j in range(1, n):
        term *= x / j
        total += term
    return 1.0 - math.exp(-x) * total


def prob_bound_gaussian(q: InitialQuantities, p: ModelParams, sigma: float, T0_steps: int,
                        variant: str = "standard") -> Bound:
    """``chi_tail(H0 nu, sigma, k)^T0``."""
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    if T0_steps == 0:
        return Bound(0.0, 1.0)
    tail = chi_tail_complement(q.H0 * p.nu, sigma, p.k, variant)
    if tail >= 1.0:
        return Bound(-math.inf, 0.0)
    return _from_log(T0_steps * math.log1p(-tail))


def gaussian_bound_asymptotic(q: InitialQuantities, p: ModelParams, sigma: float, T0_steps: int,
                              variant: str = "paper") -> float:
    """Small-noise equivalent ``T0 / Gamma(n) e^-x x^(n-1)`` of the Gaussian bound deficit."""
    n = 1.5 * (p.k - 1)
    x = _chi_argument(q.H0 * p.nu, sigma, variant)
    return T0_steps * math.exp(-x + (n - 1) * math.log(x) - math.lgamma(n))


def _davies_rate(sigma: float, delta: float, kernel: KernelSpec, variant: str) -> float:
    # coefficient c such that the first term reads c * phi(x / sigma) per unit time
    if variant == "paper":
        return sigma * kernel.dpsi_norm / (delta * SQRT_2PI)
    return kernel.dpsi_norm / (kernel.psi_norm * delta * SQRT_2PI)


def davies_bound(x: float, sigma: float, T: float, delta: float, kernel: KernelSpec,
                 variant: str = "paper") -> float:
    """Upper bound on ``P(max_{[0,T]} |e(t)| >= x)``, clamped to [0, 1].

    ``"paper"`` uses ``sqrt(r11) = sigma ||psi'|| / delta`` literally.
    ``"derived"`` uses the upcrossing rate of the unit-variance process,
    ``||psi'|| / (||psi|| delta)``, which does not scale with sigma.
    """
    _check_variant(variant)
    if not (sigma > 0 and T > 0 and delta > 0) or x < 0:
        raise InvalidInputError("davies_bound needs x >= 0 and positive sigma, T, delta")
    u = x / sigma
    value = 2.0 * (T * _davies_rate(sigma, delta, kernel, variant) * norm_pdf(u) + norm_sf(u))
    return min(1.0, max(0.0, value))


def prob_bound_continuous(q: InitialQuantities, p: ModelParams, sigma: float, delta: float,
                          kernel: KernelSpec, T0: float, variant: str = "paper") -> Bound:
    """``{2 Phi(u) - 2 T0 c phi(u) - 1}^(3k)`` with ``u = nu H0 / (sigma sqrt(3k))``.

    Reported as 0 when the brace is nonpositive.
    """
    _check_variant(variant)
    if not (sigma > 0 and delta > 0) or T0 < 0:
        raise InvalidInputError("prob_bound_continuous needs positive sigma, delta and T0 >= 0")
    u = p.nu * q.H0 / (sigma * math.sqrt(3 * p.k))
    deficit = 2.0 * norm_sf(u) + 2.0 * T0 * _davies_rate(sigma, delta, kernel, variant) * norm_pdf(u)
    if deficit >= 1.0:
        return Bound(-math.inf, 0.0)
    return _from_log(3 * p.k * math.log1p(-deficit))


def continuous_bound_asymptotic(q: InitialQuantities, p: ModelParams, sigma: float, delta: float,
                                kernel: KernelSpec, T0: float) -> float:
    """Small-noise deficit ``6 k sigma (sqrt(3k)/(nu H0) + T0 ||psi'||/(delta sqrt(2 pi))) phi(u)``."""
    u = p.nu * q.H0 / (sigma * math.sqrt(3 * p.k))
    inner = math.sqrt(3 * p.k) / (p.nu * q.H0) + T0 * kernel.dpsi_norm / (delta * SQRT_2PI)
    return 6.0 * p.k * sigma * inner * norm_pdf(u)


def deficit(bound: Bound) -> float:
    """``1 - bound`` computed from the log without cancellation."""
    return -math.expm1(bound.log)


# ---------------------------------------------------------------------------
# root finding


def positive_root(c1: float, c2: float, s: float, q_exp: float) -> float:
    """Unique positive zero of ``z^s - c1 z^q - c2`` (``c1, c2 > 0``, ``s > q > 0``).

    Bisection on ``[0, max{(2 c1)^(1/(s-q)), (2 c2)^(1/s)}]`` run until the
    bracket cannot shrink further in floating point.
    """
    if not (c1 > 0 and c2 > 0 and s > q_exp > 0):
        raise InvalidInputError("positive_root needs c1, c2 > 0 and s > q > 0")

    def F(z):
        return z**s - c1 * z**q_exp - c2

    hi = max((2.0 * c1) ** (1.0 / (s - q_exp)), (2.0 * c2) ** (1.0 / s))
    lo = 0.0
    f_hi = F(hi)
    if f_hi < 0:
        raise NumericalError(f"root bound {hi} does not bracket: F = {f_hi}")
    if f_hi == 0:
        return hi
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if F(mid) < 0:
            lo = mid
        else:
            hi = mid
    return lo if abs(F(lo)) < abs(F(hi)) else hi


# ---------------------------------------------------------------------------
# report


@dataclass
class BoundReport:
    mode: str
    case: str
    a: float
    b: float
    U0: float
    B0: float
    H0: float
    h_max: float
    hypothesis_ok: bool
    hypothesis_lhs: float
    hypothesis_rhs: float
    T0: float
    T0_steps: int | None
    rate: float
    bound: float
    log_bound: float
    variants: dict = field(default_factory=dict)
    noise: str = "none"

    def to_dict(self) -> dict:
        return {key: _jsonable(val) for key, val in asdict(self).items()}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, np.floating):
        return _jsonable(float(v))
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def noise_bound(q: InitialQuantities, p: ModelParams, noise, mode: str, T0: float,
                variants: dict | None = None) -> Bound:
    """Probability lower bound matching the noise model and time mode."""
    variants = variants or {}
    if isinstance(noise, NoNoise) or T0 == 0:
        return Bound(0.0, 1.0)
    if mode == DISCRETE:
        steps = int(math.ceil(T0))
        if isinstance(noise, UniformBall):
            return prob_bound_uniform(q, p, noise.r, steps)
        if isinstance(noise, GaussianIID):
            return prob_bound_gaussian(q, p, noise.sigma, steps, variants.get("chi_tail", "standard"))
    elif isinstance(noise, SmoothedWiener):
        return prob_bound_continuous(q, p, noise.sigma, noise.delta, noise.kernel, T0,
                                     variants.get("davies", "derived"))
    raise InvalidInputError(f"no bound for {noise.kind} noise in {mode} mode")


def bound_report(x0, v0, p: ModelParams, noise, mode: str = DISCRETE, variants: dict | None = None) -> BoundReport:
    """All theory quantities for one scenario; raises HypothesisError when U0 is undefined."""
    variants = dict(variants or {})
    variants.setdefault("chi_tail", "standard")
    variants.setdefault("continuous_rate", "derived")
    variants.setdefault("davies", "derived")
    variants.setdefault("hypothesis_literal", False)
    q = initial_quantities(x0, v0, p)
    verdict = hypothesis_check(q, p, mode, literal=variants["hypothesis_literal"])
    if p.nu < q.v0_norm:
        T0 = alignment_horizon(q, p, mode=mode, variant=variants["continuous_rate"])
    else:
        T0 = 0.0
    steps = int(math.ceil(T0)) if mode == DISCRETE else None
    if mode == DISCRETE:
        try:
            rate = contraction_factor(q, p, mode)
        except HypothesisError:
            rate = math.nan
    else:
        rate = contraction_factor(q, p, mode, variants["continuous_rate"])
    b = noise_bound(q, p, noise, mode, T0, variants)
    return BoundReport(
        mode=mode, case=q.case, a=q.a, b=q.b, U0=q.U0, B0=q.B0, H0=q.H0,
        h_max=max_step_size(q, p), hypothesis_ok=verdict.ok,
        hypothesis_lhs=verdict.lhs, hypothesis_rhs=verdict.rhs,
        T0=T0, T0_steps=steps, rate=rate, bound=b.value, log_bound=b.log,
        variants=variants, noise=noise.kind,
    )
