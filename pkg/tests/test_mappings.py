import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sklab.geometry import metric_tensor
from sklab.mappings import (
    MappingSpec,
    Stretch,
    build_mapping,
    make_circles_2_1,
    make_linear,
    make_spiral_1_2,
    make_stacked_circles_3_1,
)


def test_linear_1_2_metric():
    assert metric_tensor(make_linear(1, 2), [0.7]).metric_tensor[0, 0] == pytest.approx(2.0)


@pytest.mark.parametrize("M,N", [(1, 2), (2, 4), (2, 3), (3, 3)])
def test_linear_channel_power(M, N):
    m = make_linear(M, N, 1.7)
    x = np.random.default_rng(0).normal(size=(200_000, M))
    assert np.mean(m(x) ** 2) == pytest.approx(1.7 ** 2, rel=0.02)


def test_linear_decode_inverts():
    m = make_linear(2, 5, 0.4)
    x = np.random.default_rng(1).normal(size=(10, 2))
    assert m.decode(m(x)) == pytest.approx(x)


def test_linear_rejects():
    with pytest.raises(ValueError):
        make_linear(3, 2)
    with pytest.raises(ValueError):
        make_linear(1, 2, 0.0)


@pytest.mark.parametrize("beta", [1.0, 1.3, 0.8])
def test_spiral_metric_formula(beta):
    s = make_spiral_1_2(0.7, Stretch(beta))
    for x in (0.4, 1.9, -3.2):
        phi = math.copysign(abs(x) ** beta, x)
        g = 0.49 * (1 + phi * phi) * (beta * abs(x) ** (beta - 1)) ** 2
        assert metric_tensor(s, [x]).metric_tensor[0, 0] == pytest.approx(g, rel=1e-12)
        assert s.metric_analytic(x) == pytest.approx(g, rel=1e-12)


def test_spiral_arc_length_superlinear():
    s = make_spiral_1_2(1.0)
    L = [s.arc_length(0, t) for t in (1.0, 2.0, 4.0, 8.0)]
    assert all(b > 2 * a for a, b in zip(L, L[1:]))
    # closed form of the Archimedean arc length
    t = 4.0
    exact = 0.5 * (t * math.sqrt(1 + t * t) + math.asinh(t))
    assert L[2] == pytest.approx(exact, rel=1e-10)


def test_spiral_branch_pitch_along_ray():
    a = 0.6
    s = make_spiral_1_2(a)
    # points on the +x ray: phi = 2 pi k on the positive arm
    pts = s(np.array([[2 * math.pi], [4 * math.pi]]))
    assert pts[1, 0] - pts[0, 0] == pytest.approx(s.branch_pitch, rel=1e-12)
    assert s.branch_pitch == pytest.approx(2 * math.pi * a)
    # the negative arm crosses the same ray halfway in between
    neg = s(np.array([[-3 * math.pi]]))
    assert neg[0, 0] - pts[0, 0] == pytest.approx(s.fold_gap, rel=1e-12)
    assert s.fold_gap == pytest.approx(math.pi * a)


def test_spiral_odd_and_gain():
    s = make_spiral_1_2(1.2)
    x = np.array([[0.3], [2.5]])
    assert s(-x) == pytest.approx(-s(x))
    assert s.scaled(3.0)(x) == pytest.approx(3.0 * s(x))
    assert s.scaled(3.0).fold_gap == pytest.approx(3 * s.fold_gap)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(-50, 50), st.floats(1e-3, 10))
def test_stretch_strictly_increasing(beta, x, dx):
    f = Stretch(beta)
    assert f(x + dx) > f(x)
    assert float(f.inverse(f(x))) == pytest.approx(x, rel=1e-9, abs=1e-12)


def test_stretch_rejects():
    with pytest.raises(ValueError):
        Stretch(0.0)
    assert Stretch().seams == () and Stretch(2.0).seams == (0.0,)


# -- ring chains ------------------------------------------------------------

def test_circles_roundtrip():
    c = make_circles_2_1(0.35)
    rng = np.random.default_rng(2)
    idx = rng.integers(1, len(c.radii), 10_000)
    theta = rng.uniform(0, 2 * math.pi, 10_000)
    z = c.chain_parameter(idx, theta)
    k, th = c.chain_position(z)
    assert np.all(k == idx)
    d = np.angle(np.exp(1j * (th - theta)))
    assert np.max(np.abs(d)) < 1e-9


def test_circles_fixed_points():
    c = make_circles_2_1(0.5)
    x = np.array([[1.0 * math.cos(0.4), 1.0 * math.sin(0.4)], [-1.5, 0.0]])
    p, idx, _ = c.project(x)
    assert p == pytest.approx(x, abs=1e-12)
    assert c(c.encode(x)) == pytest.approx(x, abs=1e-9)


def test_circles_projection_error():
    d = 0.4
    c = make_circles_2_1(d)
    # just outside a midpoint the error is delta / 2
    x = np.array([[1.5 * d + 1e-12, 0.0]])
    p, _, _ = c.project(x)
    assert np.linalg.norm(x - p) == pytest.approx(d / 2, rel=1e-9)
    assert c.ring_index(np.array([[1.4 * d, 0.0]]))[0] == 1
    assert c.ring_index(np.array([[0.0, 0.0]]))[0] == 0
    # exact tie goes to the inner ring
    assert c.ring_index(np.array([[0.5 * d, 0.0]]))[0] == 0


def test_circles_surface_continuous():
    c = make_circles_2_1(0.3)
    z = np.linspace(0, c.total_length, 200_001)[:, None]
    S = c(z)
    step = np.linalg.norm(np.diff(S, axis=0), axis=1)
    assert step.max() <= (z[1, 0] - z[0, 0]) * (1 + 1e-9)


def test_stacked_nearest_ring_brute_force():
    c = make_stacked_circles_3_1(0.7, extent=4.0)
    x = np.random.default_rng(3).uniform(-4, 4, (2000, 3))
    x = x[np.linalg.norm(x, axis=1) < 4]
    p, idx, _ = c.project(x)
    rho = np.hypot(x[:, 0], x[:, 1])
    d2 = (rho[:, None] - c.radii[None, :]) ** 2 + (x[:, 2:3] - c.heights[None, :]) ** 2
    best = d2.min(axis=1)
    assert np.sum((x - p) ** 2, axis=1) == pytest.approx(best, abs=1e-12)


def test_stacked_surface_continuous():
    c = make_stacked_circles_3_1(0.8, extent=3.0)
    z = np.linspace(0, c.total_length, 100_001)[:, None]
    step = np.linalg.norm(np.diff(c(z), axis=0), axis=1)
    assert step.max() <= (z[1, 0] - z[0, 0]) * (1 + 1e-9)


def test_ring_rejects_delta():
    with pytest.raises(ValueError):
        make_circles_2_1(0.0)
    with pytest.raises(ValueError):
        make_stacked_circles_3_1(-1.0)


# -- specs ------------------------------------------------------------------

def test_mapping_spec_dims():
    assert MappingSpec("linear", {"M": 2, "N": 4}).dims == (2, 4)
    assert MappingSpec("circles_2_1", {"delta": 0.3}).direction == "reduction"
    assert MappingSpec("spiral_1_2").direction == "expansion"


@pytest.mark.parametrize("spec", [
    MappingSpec("circles_2_1", {"delta": -0.1}),
    MappingSpec("spiral_1_2", {"a": 0.0}),
    MappingSpec("linear", {"M": 1, "N": 2, "alpha": 0.0}),
])
def test_build_mapping_rejects(spec):
    with pytest.raises(ValueError):
        build_mapping(spec)


def test_mapping_spec_rejects():
    with pytest.raises(ValueError):
        MappingSpec("torus")
    with pytest.raises(ValueError):
        MappingSpec("spiral_1_2", stretch_beta=0.0)
    with pytest.raises(ValueError):
        build_mapping(MappingSpec("circles_2_1", {"delta": "opt"}))
