"""Closed-form performance predictions for M:N mappings and their OPTA gaps.

All Gamma/power products are accumulated as logarithms and exponentiated
once at the end, so dimensions in the tens of thousands are fine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .special import (
    _quantile,
    expansion_beta_exponents,
    log_ball_ratio,
    log_beta_integral,
    log_unit_ball_volume,
    reduction_beta_exponents,
)

__all__ = [
    "ChannelSpec",
    "AsymptoticPrediction",
    "opta_sdr",
    "opta_distortion",
    "max_curve_length",
    "expansion_radius_bound",
    "expansion_distortion_asymptotic",
    "expansion_distortion_finite",
    "normal_noise_excess",
    "received_norm_excess",
    "reduction_delta_opt",
    "reduction_total_distortion",
    "reduction_amplification_bound",
    "reduction_distortion",
    "opta_gap_curve",
    "predict",
    "db",
]

DEFAULT_P_ANOMALY = 1e-3


def db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class ChannelSpec:
    """AWGN channel with per-dimension power and noise variance."""

    power: float = 1.0
    noise_var: float = 1.0

    def __post_init__(self):
        if not (self.power > 0 and self.noise_var > 0):
            raise ValueError("channel power and noise variance must be positive")

    @classmethod
    def from_csnr_db(cls, csnr_db: float, power: float = 1.0) -> "ChannelSpec":
        return cls(power, power / 10.0 ** (csnr_db / 10.0))

    @property
    def csnr(self) -> float:
        return self.power / self.noise_var

    @property
    def csnr_db(self) -> float:
        return db(self.csnr)

    @property
    def sigma_n(self) -> float:
        return math.sqrt(self.noise_var)


@dataclass
class AsymptoticPrediction:
    direction: str
    M: int
    N: int
    csnr: float
    d_total: float
    sigma_x: float = 1.0
    model: str = "asymptotic"
    intermediates: dict = field(default_factory=dict)

    @property
    def r(self) -> float:
        return self.N / self.M

    @property
    def sdr_db(self) -> float:
        return db(self.sigma_x ** 2 / self.d_total)

    @property
    def opta_sdr_db(self) -> float:
        return db(opta_sdr(self.csnr, self.r))

    @property
    def gap_db(self) -> float:
        """OPTA SDR minus predicted SDR; negative values beat OPTA."""
        return self.opta_sdr_db - self.sdr_db

    @property
    def csnr_db(self) -> float:
        return db(self.csnr)

    def row(self) -> dict:
        return {"N": self.N, "M": self.M, "r": self.r, "csnr_db": self.csnr_db,
                "d_total": self.d_total, "sdr_db": self.sdr_db, "opta_db": self.opta_sdr_db,
                "gap_db": self.gap_db}


def _check_csnr(csnr):
    if not csnr > 0:
        raise ValueError(f"csnr must be positive, got {csnr}")


def opta_sdr(csnr: float, r: float) -> float:
    """Best attainable SDR, (1 + csnr)^r."""
    _check_csnr(csnr)
    if not r > 0:
        raise ValueError("r must be positive")
    return (1.0 + csnr) ** r


def opta_distortion(csnr: float, r: float, sigma_x: float = 1.0) -> float:
    return sigma_x ** 2 / opta_sdr(csnr, r)


# ---------------------------------------------------------------------------
# expansion
# ---------------------------------------------------------------------------

def max_curve_length(N: int, power: float, sigma_n: float) -> float:
    """Upper bound on the length of a 1:N signal curve without anomalies."""
    if N < 2:
        raise ValueError("curve length bound needs N >= 2")
    if not (power > 0 and sigma_n > 0):
        raise ValueError("power and sigma_n must be positive")
    log_l = (log_unit_ball_volume(N) - log_unit_ball_volume(N - 1) + math.log(sigma_n)
             - 0.5 * (N - 1) * math.log1p(-1.0 / N)
             + 0.5 * N * math.log1p(power / sigma_n ** 2))
    return math.exp(log_l)


def expansion_radius_bound(M: int, N: int, power: float, sigma_n: float) -> float:
    """Largest radius rho_M of the stretched source ball that fits the channel sphere."""
    if not 1 <= M < N:
        raise ValueError("radius bound needs 1 <= M < N")
    if not (power > 0 and sigma_n > 0):
        raise ValueError("power and sigma_n must be positive")
    log_rho = (log_ball_ratio(N, (N - M, M)) / M + math.log(sigma_n)
               - (N - M) / (2.0 * M) * math.log1p(-M / N)
               + N / (2.0 * M) * math.log1p(power / sigma_n ** 2))
    return math.exp(log_rho)


def _source_dim(N, r):
    if not r >= 1:
        raise ValueError("expansion needs r >= 1")
    M = N / r
    Mi = int(round(M))
    if Mi < 1 or abs(M - Mi) > 1e-9 * max(1.0, M):
        raise ValueError(f"N={N}, r={r} gives non-integral M={M}")
    return Mi


def _log_expansion_core(N, r):
    """log of (1/r)(1-1/r)^(r-1) (N/2+1)^(-2r/N) B_(N,r)^(-2r/N)."""
    a, b = expansion_beta_exponents(N, r)
    log_b = log_beta_integral(a, b)
    lead = -math.log(r) + ((r - 1.0) * math.log1p(-1.0 / r) if r > 1 else 0.0)
    return lead - 2.0 * r / N * (math.log(N / 2.0 + 1.0) + log_b), log_b


def expansion_distortion_asymptotic(N: int, r: float, csnr: float, *, sigma_x: float = 1.0
                                    ) -> AsymptoticPrediction:
    """Weak-noise distortion of an optimally packed shape-preserving M:N expansion."""
    _check_csnr(csnr)
    M = _source_dim(N, r)
    r = N / M
    core, log_b = _log_expansion_core(N, r)
    log_d = core - r * math.log1p(csnr)
    inter = {"beta_integral": math.exp(log_b), "log_beta_integral": log_b}
    if M < N:
        inter["ball_ratio"] = math.exp(log_ball_ratio(N, (N - M, M)))
        inter["rho_M"] = expansion_radius_bound(M, N, csnr, 1.0)
    return AsymptoticPrediction("expansion", M, N, csnr, sigma_x ** 2 * math.exp(log_d),
                                sigma_x, "asymptotic", inter)


def normal_noise_excess(N: int, M: int, p_anomaly: float, sigma_n: float = 1.0) -> float:
    """delta_MN^2: squared-norm excess of the N-M normal noise components.

    The (1 - p_anomaly)-quantile rho_q of the normalized norm on N-M
    dimensions gives delta_MN^2 = max(rho_q^2 - sigma_n^2, 0).
    """
    K = N - M
    if K <= 0:
        return 0.0
    q = _quantile(1.0 - p_anomaly, K, sigma_n)
    return max(q * q - sigma_n ** 2, 0.0)


def received_norm_excess(N: int, p_anomaly: float, power: float, sigma_n: float = 1.0,
                         model: str = "noise") -> float:
    """delta_N^2: excess of the normalized received norm over its mean square.

    ``model="noise"`` takes the excess of the noise norm alone (the signal
    sits on the shell of radius sqrt(power)); ``model="gaussian"`` treats
    the whole received vector as Gaussian with per-dimension variance
    power + sigma_n^2.
    """
    if model == "noise":
        s2 = sigma_n ** 2
    elif model == "gaussian":
        s2 = power + sigma_n ** 2
    else:
        raise ValueError(f"unknown received-norm model {model!r}")
    q = _quantile(1.0 - p_anomaly, N, math.sqrt(s2))
    return max(q * q - s2, 0.0)


def expansion_distortion_finite(N: int, r: float, csnr: float,
                                p_anomaly: float = DEFAULT_P_ANOMALY, *,
                                received_norm: str = "noise", sigma_x: float = 1.0
                                ) -> AsymptoticPrediction:
    """Finite-N weak-noise distortion with sphere-hardening corrections.

    D = (s2/r)(1-1/r)^(r-1)(N/2+1)^(-2r/N) B^(-2r/N) (s2+dMN)^(r-1) (P+s2+dN)^(-r)
    with s2 = sigma_n^2 = 1 and P = csnr.  r = 1 has no normal components,
    so both corrections vanish and the result equals OPTA.
    """
    _check_csnr(csnr)
    if not 0 < p_anomaly < 1:
        raise ValueError("p_anomaly must lie in (0, 1)")
    M = _source_dim(N, r)
    r = N / M
    core, log_b = _log_expansion_core(N, r)
    if M == N:
        d_mn = d_n = 0.0
    else:
        d_mn = normal_noise_excess(N, M, p_anomaly)
        d_n = received_norm_excess(N, p_anomaly, csnr, 1.0, received_norm)
    log_d = core + (r - 1.0) * math.log1p(d_mn) - r * math.log(1.0 + csnr + d_n)
    inter = {"beta_integral": math.exp(log_b), "delta_MN_sq": d_mn, "delta_N_sq": d_n,
             "p_anomaly": p_anomaly, "received_norm": received_norm}
    return AsymptoticPrediction("expansion", M, N, csnr, sigma_x ** 2 * math.exp(log_d),
                                sigma_x, "finite", inter)


# ---------------------------------------------------------------------------
# reduction
# ---------------------------------------------------------------------------

def _check_reduction(M, N, sigma_x, csnr):
    if not (float(M).is_integer() and float(N).is_integer()):
        raise ValueError("M and N must be integers")
    if not 1 <= N < M:
        raise ValueError("reduction needs 1 <= N < M")
    if not sigma_x > 0:
        raise ValueError("sigma_x must be positive")
    _check_csnr(csnr)
    return int(M), int(N)


def _log_btilde_red(M, N):
    return log_ball_ratio(M, (M - N, N))


def reduction_delta_opt(M: int, N: int, sigma_x: float, csnr: float) -> float:
    """Fold spacing minimizing approximation + channel distortion."""
    M, N = _check_reduction(M, N, sigma_x, csnr)
    m = M - N
    log_d = ((m / (2.0 * M)) * math.log(M)
             + N / (2.0 * M) * math.log(4.0 * M * (m + 2) / m)
             + N / (2.0 * M) * math.log(m / N)
             + (1.0 - N / M) * math.log(2.0)
             + _log_btilde_red(M, N) / M + math.log(sigma_x)
             - N / (2.0 * M) * math.log1p(csnr))
    return math.exp(log_d)


def reduction_total_distortion(delta: float, M: int, N: int, sigma_x: float, csnr: float
                               ) -> float:
    """Approximation bound plus channel distortion at fold spacing ``delta``."""
    M, N = _check_reduction(M, N, sigma_x, csnr)
    if not delta > 0:
        raise ValueError("delta must be positive")
    m = M - N
    approx = m * delta ** 2 / (4.0 * M * (m + 2))
    log_ch = ((M / N - 1.0) * math.log(M) + 2.0 / N * _log_btilde_red(M, N)
              - 2.0 * m / N * math.log(delta / 2.0) + 2.0 * M / N * math.log(sigma_x)
              - math.log1p(csnr))
    return approx + math.exp(log_ch)


def reduction_amplification_bound(delta: float, M: int, N: int, sigma_x: float,
                                  sigma_n: float, csnr: float) -> float:
    """Smallest gain alpha for which the stretched channel ball covers the source ball."""
    M, N = _check_reduction(M, N, sigma_x, csnr)
    m = M - N
    log_a = (0.5 * (M / N * math.log(M) - math.log(N)) + _log_btilde_red(M, N) / N
             - m / N * math.log(delta / 2.0) + M / N * math.log(sigma_x) - math.log(sigma_n)
             - 0.5 * math.log1p(csnr))
    return math.exp(log_a)


def reduction_distortion(M: int, N: int, sigma_x: float, csnr: float, *, sigma_n: float = 1.0
                         ) -> AsymptoticPrediction:
    """Total distortion at the optimal fold spacing (closed form)."""
    M, N = _check_reduction(M, N, sigma_x, csnr)
    m = M - N
    a, b = m / 2.0, N / 2.0
    log_b = log_beta_integral(a, b)
    log_d = (math.log1p(N / m) + (1.0 - N / M) * math.log(m / (m + 2.0))
             + N / M * math.log(m / N) + 2.0 / M * (math.log(M / 2.0 + 1.0) + log_b)
             + 2.0 * math.log(sigma_x) - N / M * math.log1p(csnr))
    delta = reduction_delta_opt(M, N, sigma_x, csnr)
    approx = m * delta ** 2 / (4.0 * M * (m + 2))
    inter = {"delta_opt": delta, "beta_integral": math.exp(log_b),
             "ball_ratio": math.exp(_log_btilde_red(M, N)),
             "approximation": approx, "channel": math.exp(log_d) - approx,
             "alpha_min": reduction_amplification_bound(delta, M, N, sigma_x, sigma_n, csnr)}
    return AsymptoticPrediction("reduction", M, N, csnr, math.exp(log_d), sigma_x,
                                "asymptotic", inter)


# ---------------------------------------------------------------------------
# tabulation
# ---------------------------------------------------------------------------

def _norm_direction(direction):
    d = direction.lower()
    if d in ("expansion", "expand", "exp"):
        return "expansion"
    if d in ("reduction", "reduce", "red"):
        return "reduction"
    raise ValueError(f"unknown direction {direction!r}")


def predict(direction: str, r: float, dim: int, csnr: float, *, model: str = "asymptotic",
            p_anomaly: float = DEFAULT_P_ANOMALY, sigma_x: float = 1.0,
            received_norm: str = "noise") -> AsymptoticPrediction:
    """Prediction at dimension ``dim`` (N for expansion, M for reduction)."""
    direction = _norm_direction(direction)
    if direction == "expansion":
        if model == "asymptotic":
            return expansion_distortion_asymptotic(dim, r, csnr, sigma_x=sigma_x)
        if model == "finite":
            return expansion_distortion_finite(dim, r, csnr, p_anomaly,
                                               received_norm=received_norm, sigma_x=sigma_x)
        raise ValueError(f"unknown model {model!r}")
    if model != "asymptotic":
        raise ValueError("reduction predictions only have the asymptotic model")
    if not 0 < r < 1:
        raise ValueError("reduction needs 0 < r < 1")
    N = dim * r
    if abs(N - round(N)) > 1e-9 * max(1.0, N):
        raise ValueError(f"M={dim}, r={r} gives non-integral N={N}")
    return reduction_distortion(int(dim), int(round(N)), sigma_x, csnr)


def opta_gap_curve(direction: str, r: float, dims, csnr: float, **kw) -> list[tuple[int, float]]:
    """(dim, gap_db) pairs; dim is N for expansion and M for reduction."""
    return [(int(d), predict(direction, r, d, csnr, **kw).gap_db) for d in dims]
