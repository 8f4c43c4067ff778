import csv
import math

import numpy as np
import pytest
from scipy.integrate import quad

from noisyflock.exceptions import InvalidInputError
from noisyflock.noise import (
    GaussianIID,
    KernelSpec,
    NoNoise,
    SmoothedWiener,
    UniformBall,
    build_agent_paths,
    build_wiener_path,
    default_kernel,
    dump_path_csv,
    eval_noise,
    sample_gaussian_iid,
    sample_noise_vector,
    sample_uniform_ball,
    stream,
)


def test_default_kernel_norms():
    ker = default_kernel()
    assert math.isclose(quad(ker.psi, -0.5, 0.5)[0], 1.0, rel_tol=1e-12)
    assert math.isclose(ker.psi_norm**2, 1.5, rel_tol=1e-10)
    assert math.isclose(ker.dpsi_norm**2, 2 * math.pi**2, rel_tol=1e-10)
    assert ker.psi(0.7) == 0 and ker.psi(-0.51) == 0
    assert math.isclose(ker.dpsi(0.25), -2 * math.pi)


def test_kernel_spec_rejects_bad_mass():
    with pytest.raises(InvalidInputError):
        KernelSpec(lambda x: 3.0 * np.cos(np.pi * np.asarray(x)) ** 2 * (np.abs(x) <= 0.5),
                   lambda x: np.zeros_like(np.asarray(x, dtype=float)))


def test_models_validate():
    for bad in (lambda: UniformBall(-1.0), lambda: GaussianIID(0.0),
                lambda: SmoothedWiener(1.0, 0.0), lambda: SmoothedWiener(1.0, 0.1, dt_w=0.01)):
        with pytest.raises(InvalidInputError):
            bad()


def test_uniform_ball_membership_and_radius_law(rng):
    assert np.array_equal(sample_uniform_ball(6, 0.0, rng), np.zeros(6))
    r, dim = 2.5, 9
    pts = sample_uniform_ball(dim, r, rng, size=50_000)
    norms = np.linalg.norm(pts, axis=1)
    assert norms.max() <= r
    # P(|X| <= c r) = c^dim for the uniform ball
    frac = np.mean(norms <= 0.9 * r)
    assert abs(frac - 0.9**dim) < 4 * math.sqrt(0.9**dim / 50_000)


def test_gaussian_moments():
    sigma = 0.7
    draws = sample_gaussian_iid(3, sigma, stream(5), size=1_000_000)
    assert np.all(np.abs(draws.mean(axis=0)) <= 4 * sigma / 1e3)
    assert np.allclose(draws.var(axis=0), sigma**2, rtol=0.01)


def test_chi_square_norm_of_projected_noise():
    k, sigma, n = 4, 0.3, 100_000
    rng = stream(9)
    H = np.stack([sample_noise_vector(GaussianIID(sigma), k, rng=rng) for _ in range(n)])
    perp = H - H.mean(axis=1, keepdims=True)
    s = np.sum(perp**2, axis=(1, 2)) / sigma**2
    assert abs(s.mean() - (3 * k - 3)) < 0.02 * (3 * k - 3)


def test_wiener_path_basics():
    ker = default_kernel()
    p = build_wiener_path(1.0, 0.1, 0.1 / 128, 1.0, ker, stream(1, 0), stream(1, 1), n_paths=10_000)
    assert np.all(p.wiener_at(0.0) == 0.0)
    var = p.wiener_at(1.0).var()
    assert abs(var - 1.0) < 0.05
    # disjoint increments are uncorrelated
    a = p.wiener_at(0.5) - p.wiener_at(0.25)
    b = p.wiener_at(1.0) - p.wiener_at(0.75)
    assert abs(np.corrcoef(a, b)[0, 1]) < 3 / math.sqrt(10_000)
    # the mirrored part is independent of the forward part
    c = p.wiener_at(-0.05)
    assert abs(np.corrcoef(c, p.wiener_at(0.05))[0, 1]) < 3 / math.sqrt(10_000)


def test_wiener_grid_too_coarse():
    with pytest.raises(InvalidInputError):
        build_wiener_path(1.0, 0.1, 0.1 / 32, 1.0, default_kernel(), stream(0))


def test_eval_noise_zero_increments_and_domain():
    p = build_wiener_path(1.0, 0.1, 0.1 / 128, 1.0, default_kernel(), stream(0))
    zero = type(p)(**{**p.__dict__, "wiener": np.zeros_like(p.wiener),
                      "increments": np.zeros_like(p.increments)})
    assert eval_noise(zero, 0.3) == 0.0
    for t in (-0.01, 1.01):
        with pytest.raises(InvalidInputError):
            eval_noise(p, t)


def test_noise_is_scaled_mollified_derivative():
    p = build_wiener_path(2.0, 0.2, 0.2 / 128, 0.4, default_kernel(), stream(3))
    t = np.linspace(0, 2, 11)
    expect = 0.4 * math.sqrt(0.2) / default_kernel().psi_norm * p.mollified_derivative(t)
    assert np.allclose(p.noise(t), expect)


def test_smoothed_path_is_c1():
    delta = 0.1
    p = build_wiener_path(1.0, delta, delta / 128, 1.0, default_kernel(), stream(4))
    for t in (0.2, 0.5137, 0.8):
        dt = 1e-5 * delta
        fd = (p.smoothed(t + dt) - p.smoothed(t - dt)) / (2 * dt)
        exact = p.smoothed_derivative(t)
        assert math.isclose(fd, exact, rel_tol=1e-3)


def test_noise_vector_assembly():
    k = 3
    assert np.array_equal(sample_noise_vector(NoNoise(), k), np.zeros((k, 3)))
    model = SmoothedWiener(0.5, 0.1)
    paths = build_agent_paths(model, k, 1.0, 11, 0)
    H = sample_noise_vector(model, k, 0.4, paths)
    assert H.shape == (k, 3)
    assert H[1, 2] == paths.noise(0.4)[3 * 1 + 2]
    with pytest.raises(InvalidInputError):
        sample_noise_vector(model, k, 0.4)
    r = sample_noise_vector(UniformBall(0.2), k, rng=stream(2))
    assert np.linalg.norm(r) <= 0.2


def test_reproducible_streams():
    model = SmoothedWiener(1.0, 0.1)
    a = build_agent_paths(model, 2, 1.0, 42, 7)
    b = build_agent_paths(model, 2, 1.0, 42, 7)
    c = build_agent_paths(model, 2, 1.0, 42, 8)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, c.increments)
    x = sample_gaussian_iid(12, 1.0, stream(3, 1, 4))
    assert np.array_equal(x, sample_gaussian_iid(12, 1.0, stream(3, 1, 4)))


def test_dump_path_csv(tmp_path):
    p = build_wiener_path(0.5, 0.1, 0.1 / 128, 1.0, default_kernel(), stream(0), n_paths=2)
    f = tmp_path / "noise.csv"
    dump_path_csv(p, f, coordinate=1)
    rows = list(csv.reader(f.open()))
    assert rows[0] == ["t", "W", "W_delta", "X_delta"]
    assert float(rows[1][0]) == 0.0 and float(rows[1][1]) == 0.0
    assert math.isclose(float(rows[-1][0]), 0.5)
