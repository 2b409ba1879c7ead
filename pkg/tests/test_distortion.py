import math
import warnings

import numpy as np
import pytest
from scipy import stats

from sklab.distortion import (
    DistortionBreakdown,
    QuadratureError,
    SourceSpec,
    SuboptimalParameterizationWarning,
    approximation_distortion_bound,
    channel_distortion,
    channel_mse_at,
    expectation,
    sdr_db,
    weak_noise_distortion,
    weak_noise_mse_at,
)
from sklab.geometry import SignalMapping
from sklab.mappings import make_circles_2_1, make_linear, make_spiral_1_2
from sklab.simulation import sample_uniform_ball

# sqrt(pi/2) e^(1/2) erfc(1/sqrt 2), mpmath at 30 digits
E_INV_1_PLUS_X2 = 0.65567954241879847


def quadratic_curve():
    # reduction surface S(z) = (z, z^2)
    return SignalMapping(2, 1, lambda p: np.hstack([p, p * p]),
                         lambda p: np.stack([np.ones_like(p), 2 * p], 1),
                         direction="reduction", lower=-1.0, upper=1.0)


def skewed_linear():
    A = np.array([[1.0, 0.5], [0.0, 1.0], [0.3, -0.2]])
    return A, SignalMapping(2, 3, lambda p: p @ A.T, lambda p: np.broadcast_to(A, (len(p), 3, 2)))


def test_weak_mse_examples():
    assert weak_noise_mse_at(make_linear(1, 2), [0.3], 0.1) == pytest.approx(0.005)
    assert weak_noise_mse_at(make_spiral_1_2(1.0), [2.0], 0.1) == pytest.approx(0.01 / 5)
    assert weak_noise_mse_at(make_linear(2, 4, 2.0), [0.1, 0.2], 1.0) == pytest.approx(1 / 8)


def test_weak_distortion_spiral_oracle():
    D = weak_noise_distortion(make_spiral_1_2(1.0), SourceSpec(), 1.0, rtol=1e-8)
    assert D == pytest.approx(E_INV_1_PLUS_X2, rel=1e-7)


def test_weak_distortion_linear():
    assert weak_noise_distortion(make_linear(2, 4, 1.5), SourceSpec(2), 0.2) == \
        pytest.approx(0.04 / (2 * 2.25), rel=1e-10)


def test_full_form_warning():
    A, m = skewed_linear()
    G = A.T @ A
    expected = 0.25 / 2 * np.trace(np.linalg.inv(G))
    with pytest.warns(SuboptimalParameterizationWarning):
        v = weak_noise_mse_at(m, [0.1, 0.2], 0.5)
    assert v == pytest.approx(expected, rel=1e-12)
    assert v > 0.25 / 2 * np.sum(1 / np.diag(G))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert weak_noise_mse_at(m, [0.1, 0.2], 0.5, full=True) == pytest.approx(expected)
    with pytest.warns(SuboptimalParameterizationWarning):
        D = weak_noise_distortion(m, SourceSpec(2), 0.5)
    assert D == pytest.approx(expected, rel=1e-8)


def test_channel_mse_examples():
    c = make_circles_2_1(0.5)
    assert channel_mse_at(c, [1.3], 0.2) == pytest.approx(0.02)
    q = quadratic_curve()
    assert channel_mse_at(q, [0.5], 1.0) == pytest.approx(1.0)


def test_channel_distortion_circles():
    c = make_circles_2_1(0.5)
    dens = stats.uniform(0, c.total_length)
    assert channel_distortion(c, dens, 1.0) == pytest.approx(0.5, rel=1e-8)


def test_channel_distortion_quadratic_closed_form():
    q = quadratic_curve()
    D = channel_distortion(q, stats.uniform(-1, 2), 1.0, rtol=1e-8)
    assert D == pytest.approx(7 / 6, rel=1e-9)
    # direct Monte-Carlo of the same expectation
    z = np.random.default_rng(0).uniform(-1, 1, 10_000_000)
    assert np.mean((1 + 4 * z * z) / 2) == pytest.approx(D, rel=5e-3)


def test_scaling_with_gain():
    c = 2.5
    s = make_spiral_1_2(0.8)
    assert weak_noise_mse_at(s.scaled(c), [1.1], 0.3) == \
        pytest.approx(weak_noise_mse_at(s, [1.1], 0.3) / c ** 2, rel=1e-12)
    q = quadratic_curve()
    assert channel_mse_at(q.scaled(c), [0.4], 0.3) == \
        pytest.approx(channel_mse_at(q, [0.4], 0.3) * c ** 2, rel=1e-12)


@pytest.mark.parametrize("M,N,den", [(2, 1, 24), (3, 1, 24), (4, 2, 32), (3, 2, 36)])
def test_approximation_bound_examples(M, N, den):
    assert approximation_distortion_bound(M, N, 0.6) == pytest.approx(0.36 / den, rel=1e-14)


def test_approximation_bound_rejects():
    with pytest.raises(ValueError):
        approximation_distortion_bound(2, 2, 0.5)
    with pytest.raises(ValueError):
        approximation_distortion_bound(3, 1, 0.0)


@pytest.mark.parametrize("m", [1, 2, 4])
def test_uniform_ball_error_small_sample(m):
    # per-source-dim bound times M equals E||u||^2 for u uniform in an m-ball of radius delta/2
    d = 0.8
    u = sample_uniform_ball(m, d / 2, 200_000, np.random.default_rng(m))
    M = m + 1
    assert np.mean(np.sum(u * u, axis=1)) == pytest.approx(M * approximation_distortion_bound(M, 1, d),
                                                          rel=0.01)


def test_orthogonal_jacobian_weak_noise_mc():
    rng = np.random.default_rng(4)
    Q, _ = np.linalg.qr(rng.normal(size=(4, 2)))
    J = Q * np.array([0.5, 3.0])
    G = J.T @ J
    n = 0.1 * rng.standard_normal((400_000, 4))
    err = n @ J @ np.linalg.inv(G).T
    assert np.mean(np.sum(err * err, axis=1)) / 2 == pytest.approx(0.01 / 2 * np.sum(1 / np.diag(G)),
                                                                     rel=0.01)


def test_expectation_rules():
    sq = lambda p: np.sum(p * p, axis=1)  # noqa: E731
    assert expectation(sq, 1, scale=2.0, lo=-12, hi=12) == pytest.approx(4.0, rel=1e-6)
    assert expectation(sq, 2, scale=1.0, lo=-6, hi=6) == pytest.approx(2.0, rel=1e-6)
    assert expectation(sq, 3, weight=stats.uniform(0, 1)) == pytest.approx(1.0, rel=1e-6)
    assert expectation(sq, 5, scale=1.0, lo=-6, hi=6, rtol=1e-3) == pytest.approx(5.0, rel=3e-3)


def test_expectation_errors():
    with pytest.raises(ValueError):
        expectation(lambda p: p[:, 0], 1, weight="cauchy")
    with pytest.raises(ValueError):
        expectation(lambda p: p[:, 0], 1)  # untruncated normal
    wild = lambda p: np.sin(400 * p[:, 0]) * np.cos(300 * p[:, 1])  # noqa: E731
    with pytest.raises(QuadratureError):
        expectation(wild, 2, weight=stats.uniform(0, 1), max_level=2, rtol=1e-12)


def test_direction_checks():
    with pytest.raises(ValueError):
        weak_noise_mse_at(make_circles_2_1(0.5), [1.0], 0.1)
    with pytest.raises(ValueError):
        channel_mse_at(make_linear(1, 2), [0.0], 0.1)
    with pytest.raises(ValueError):
        weak_noise_distortion(make_linear(1, 2), SourceSpec(2), 0.1)


def test_source_spec_and_breakdown():
    with pytest.raises(ValueError):
        SourceSpec(truncation=4.0)
    b = DistortionBreakdown(0.01, 0.002, 0.003, 1.0)
    assert b.total == pytest.approx(0.015)
    assert b.sdr_db == pytest.approx(10 * math.log10(1 / 0.015))
    assert sdr_db(1.0, 0.0) == math.inf
