import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from sklab.asymptotics import (
    ChannelSpec,
    expansion_distortion_asymptotic,
    expansion_distortion_finite,
    expansion_radius_bound,
    max_curve_length,
    normal_noise_excess,
    opta_distortion,
    opta_gap_curve,
    opta_sdr,
    predict,
    received_norm_excess,
    reduction_delta_opt,
    reduction_distortion,
    reduction_total_distortion,
)
from sklab.special import (
    ball_ratio,
    beta_integral,
    expansion_beta_exponents,
    log_beta_integral,
    reduction_beta_exponents,
    unit_ball_volume,
)

# 40-digit mpmath evaluation of the length bound at N=2, P=1, sigma_n=0.3
L_2_1_03 = 8.071237337654365348745517131943593552483


def test_opta_examples():
    assert opta_sdr(15, 2) == 256.0
    assert opta_sdr(7.0, 1) == 8.0
    assert opta_sdr(255, 0.5) == pytest.approx(16.0, rel=1e-15)
    with pytest.raises(ValueError):
        opta_sdr(0.0, 2)
    with pytest.raises(ValueError):
        opta_sdr(1.0, 0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e6), st.floats(0.01, 16))
def test_opta_log_domain(c, r):
    assert opta_sdr(c, r) == pytest.approx(math.exp(r * math.log1p(c)), rel=1e-12)


def test_channel_spec():
    ch = ChannelSpec.from_csnr_db(20.0, power=2.0)
    assert ch.csnr == pytest.approx(100.0)
    assert ch.sigma_n == pytest.approx(math.sqrt(0.02))
    with pytest.raises(ValueError):
        ChannelSpec(0.0, 1.0)


def test_curve_length_oracle():
    assert max_curve_length(2, 1.0, 0.3) == pytest.approx(L_2_1_03, rel=1e-12)


def test_curve_length_monotone():
    assert max_curve_length(4, 2.0, 0.1) > max_curve_length(4, 1.0, 0.1)
    # fixed CSNR, growing N
    L = [max_curve_length(N, 1.0, 0.1) for N in (2, 3, 5, 8)]
    assert all(b > a for a, b in zip(L, L[1:]))


def test_radius_matches_half_length():
    for P, s in ((100.0, 1.0), (1.0, 0.1)):
        assert expansion_radius_bound(1, 10, P, s) == pytest.approx(max_curve_length(10, P, s) / 2,
                                                                   rel=1e-12)


def test_radius_back_substitution():
    # volume of the stretched source ball times the normal noise ball fills the channel sphere
    M, N, P, s = 2, 4, 100.0, 1.0
    rho = expansion_radius_bound(M, N, P, s)
    lhs = unit_ball_volume(M) * rho ** M * unit_ball_volume(N - M) * (s * math.sqrt(1 - M / N)) ** (N - M)
    assert lhs == pytest.approx(unit_ball_volume(N) * (P + s * s) ** (N / 2), rel=1e-12)


def test_radius_bound_rules():
    assert expansion_radius_bound(2, 6, 1.0, 0.1) > expansion_radius_bound(2, 4, 1.0, 0.1)
    with pytest.raises(ValueError):
        expansion_radius_bound(4, 4, 1.0, 0.1)


@pytest.mark.parametrize("r,limit", [(1.5, 1.5 * (1 / 3) ** -0.5), (2, 4.0), (3, 3 * (2 / 3) ** -2)])
def test_holder_limit_expansion(r, limit):
    Ns = [int(r * k) for k in (2, 8, 32, 128, 512, 2048, 8192)]
    v = [math.exp(-2 * r / N * log_beta_integral(*expansion_beta_exponents(N, r))) for N in Ns]
    assert all(b < a for a, b in zip(v, v[1:]))
    assert v[-1] == pytest.approx(limit, rel=2e-3)


@pytest.mark.parametrize("r", [0.25, 0.5, 0.75])
def test_holder_limit_reduction(r):
    Ms = [int(k / r) for k in (1, 4, 16, 64, 256, 1024, 4096)]
    v = [math.exp(2 / M * log_beta_integral(*reduction_beta_exponents(M, r))) for M in Ms]
    assert all(b > a for a, b in zip(v, v[1:]))
    assert v[-1] == pytest.approx((1 - r) ** (1 - r) * r ** r, rel=2e-3)


@pytest.mark.parametrize("M,N", [(2, 1), (3, 1), (5, 2), (10, 4), (64, 32), (300, 7)])
def test_btilde_beta_identity(M, N):
    assert ball_ratio(M, (M - N, N)) == pytest.approx(
        (M / 2 + 1) * beta_integral((M - N) / 2, N / 2), rel=1e-10)


# -- expansion ----------------------------------------------------------------

def test_expansion_r1_is_opta():
    for N in (1, 4, 33):
        for c in (1.0, 100.0):
            assert expansion_distortion_asymptotic(N, 1, c).d_total == pytest.approx(1 / (1 + c), rel=1e-13)
            assert expansion_distortion_finite(N, 1, c).gap_db == pytest.approx(0.0, abs=1e-12)


def test_expansion_large_n_limit():
    assert abs(expansion_distortion_asymptotic(10_000, 2, 100).gap_db) < 0.05


def test_expansion_rejects():
    with pytest.raises(ValueError):
        expansion_distortion_asymptotic(5, 2, 100)
    with pytest.raises(ValueError):
        expansion_distortion_asymptotic(4, 0.5, 100)
    with pytest.raises(ValueError):
        expansion_distortion_finite(8, 2, 100, p_anomaly=1.0)


def test_finite_ordering_n8():
    f = expansion_distortion_finite(8, 2, 100).d_total
    a = expansion_distortion_asymptotic(8, 2, 100).d_total
    assert f > opta_distortion(100, 2) > a


def test_finite_corrections_vanish():
    d = [expansion_distortion_finite(N, 2, 100).intermediates for N in (8, 64, 512, 4096)]
    mn = [x["delta_MN_sq"] for x in d]
    n = [x["delta_N_sq"] for x in d]
    assert all(b < a for a, b in zip(mn, mn[1:])) and mn[-1] < 0.1
    assert all(b < a for a, b in zip(n, n[1:])) and n[-1] < 0.1


def test_finite_p_to_one_recovers_uncorrected():
    assert normal_noise_excess(8, 4, 1 - 1e-9) == 0.0
    assert received_norm_excess(8, 1 - 1e-9, 100.0) == 0.0
    f = expansion_distortion_finite(8, 2, 100, p_anomaly=1 - 1e-9).d_total
    # both corrections zero: the finite form collapses to the asymptotic one
    assert f == pytest.approx(expansion_distortion_asymptotic(8, 2, 100).d_total, rel=1e-12)


def test_received_norm_models():
    assert received_norm_excess(16, 1e-3, 100.0, model="gaussian") > received_norm_excess(16, 1e-3, 100.0)
    with pytest.raises(ValueError):
        received_norm_excess(16, 1e-3, 1.0, model="rician")


@pytest.mark.parametrize("cdb", [10, 15, 20, 30, 40])
def test_finite_never_beats_opta(cdb):
    c = 10 ** (cdb / 10)
    for r in (2, 3, 4):
        for M in (1, 2, 4, 16, 256):
            assert expansion_distortion_finite(M * r, r, c).gap_db >= -0.01


# -- reduction ----------------------------------------------------------------

def d_tot_init_2_1(delta, csnr):
    # approximation delta^2/24 plus channel 2 (pi/4)^2 (delta/2)^-2 / (1 + csnr)
    return delta ** 2 / 24 + 2 * (math.pi / 4) ** 2 * (delta / 2) ** -2 / (1 + csnr)


def test_delta_opt_2_1_golden_section():
    res = optimize.minimize_scalar(lambda d: d_tot_init_2_1(d, 100.0), bracket=(0.1, 1.0, 5.0),
                                   method="golden", tol=1e-12)
    assert reduction_delta_opt(2, 1, 1.0, 100.0) == pytest.approx(res.x, rel=1e-4)
    assert reduction_total_distortion(res.x, 2, 1, 1.0, 100.0) == pytest.approx(res.fun, rel=1e-12)


def test_delta_opt_random_tuples():
    rng = np.random.default_rng(7)
    for _ in range(20):
        M = int(rng.integers(2, 40))
        N = int(rng.integers(1, M))
        sx = float(rng.uniform(0.2, 5))
        c = float(10 ** rng.uniform(0.5, 5))
        d0 = reduction_delta_opt(M, N, sx, c)
        f = lambda t: reduction_total_distortion(d0 * math.exp(t), M, N, sx, c) / \
            reduction_total_distortion(d0, M, N, sx, c)  # noqa: E731
        res = optimize.minimize_scalar(f, bracket=(-1.0, 0.0, 1.0), method="golden", tol=1e-10)
        assert abs(math.expm1(res.x)) < 1e-4


def test_delta_opt_scaling():
    d = reduction_delta_opt(3, 1, 1.0, 50.0)
    assert reduction_delta_opt(3, 1, 2.5, 50.0) == pytest.approx(2.5 * d, rel=1e-12)
    assert reduction_delta_opt(3, 1, 1.0, 500.0) < d
    with pytest.raises(ValueError):
        reduction_delta_opt(2, 2, 1.0, 10.0)


def test_reduction_distortion_matches_sum():
    for M, N, c in ((2, 1, 100.0), (5, 2, 30.0), (40, 13, 1e4)):
        pred = reduction_distortion(M, N, 1.0, c)
        d = pred.intermediates["delta_opt"]
        assert pred.d_total == pytest.approx(reduction_total_distortion(d, M, N, 1.0, c), rel=1e-10)


def test_reduction_2_1_value():
    pred = reduction_distortion(2, 1, 1.0, 100.0)
    assert pred.d_total == pytest.approx(d_tot_init_2_1(1.0406145750446552, 100.0), rel=1e-9)
    assert pred.intermediates["delta_opt"] == pytest.approx(1.0406145750446552, rel=1e-12)
    # closed form lands below OPTA at this small M
    assert pred.d_total < opta_distortion(100.0, 0.5)


def test_reduction_sigma_scaling():
    a = reduction_distortion(4, 2, 1.0, 77.0).d_total
    assert reduction_distortion(4, 2, 3.0, 77.0).d_total == pytest.approx(9 * a, rel=1e-12)


def test_reduction_large_m():
    assert abs(predict("reduce", 0.5, 1000, 255.0).gap_db) < 0.05


# -- gap curves -----------------------------------------------------------------

def test_gap_curve_r1_zero():
    for _, g in opta_gap_curve("expansion", 1, [1, 4, 64, 4096], 100.0):
        assert g == pytest.approx(0.0, abs=1e-12)


def test_gap_curve_expansion():
    dims = [4 ** k for k in range(1, 8)]
    g = [abs(v) for _, v in opta_gap_curve("expansion", 2, dims, 100.0)]
    assert all(b <= a + 0.01 for a, b in zip(g, g[1:]))
    assert g[-1] < 0.1
    gf = [v for _, v in opta_gap_curve("expansion", 2, dims, 100.0, model="finite")]
    assert all(b <= a for a, b in zip(gf, gf[1:])) and gf[-1] < 0.5


def test_gap_curve_reduction():
    dims = [4 ** k for k in range(2, 8)]
    g = [v for _, v in opta_gap_curve("reduction", 0.5, dims, 255.0)]
    assert all(b <= a + 0.01 for a, b in zip(g, g[1:]))
    assert g[-1] < 0.1


def test_predict_validation():
    with pytest.raises(ValueError):
        predict("sideways", 2, 4, 10.0)
    with pytest.raises(ValueError):
        predict("reduction", 0.5, 5, 10.0)
    with pytest.raises(ValueError):
        predict("reduction", 0.5, 4, 10.0, model="finite")
    row = predict("expand", 2, 8, 100.0).row()
    assert set(row) == {"N", "M", "r", "csnr_db", "d_total", "sdr_db", "opta_db", "gap_db"}
    assert row["gap_db"] == pytest.approx(row["opta_db"] - row["sdr_db"])
