"""Gamma/Beta quantities, unit-ball volumes and the normalized noise-norm law.

Everything that can overflow for large dimensions (ball volumes, Gamma
quotients, Beta integrals) has a ``log_`` twin; the plain versions just
exponentiate at the end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import betaln, gammaln

__all__ = [
    "unit_ball_volume",
    "log_unit_ball_volume",
    "unit_ball_volume_factorial",
    "ball_ratio",
    "log_ball_ratio",
    "beta_integral",
    "log_beta_integral",
    "beta_integral_quadrature",
    "log_beta_integral_quadrature",
    "expansion_beta_exponents",
    "reduction_beta_exponents",
    "beta_sup_bound",
    "log_beta_sup_bound",
    "uniform_ball_sq_radius",
    "noise_norm_pdf",
    "noise_norm_cdf",
    "noise_norm_quantile",
    "NoiseNormDistribution",
]


def _check_dim(n, name="n", minimum=1):
    if isinstance(n, bool) or int(n) != n or n < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {n!r}")
    return int(n)


# ---------------------------------------------------------------------------
# Ball volumes
# ---------------------------------------------------------------------------

def log_unit_ball_volume(n: int) -> float:
    """log of the volume of the unit ball in R^n, n >= 1."""
    n = _check_dim(n)
    return 0.5 * n * math.log(math.pi) - gammaln(0.5 * n + 1.0)


def unit_ball_volume(n: int) -> float:
    """Volume B_n = pi^(n/2) / Gamma(n/2 + 1) of the unit ball in R^n.

    Underflows to 0.0 somewhere past n ~ 1500; use `log_unit_ball_volume`
    there.
    """
    return math.exp(log_unit_ball_volume(n))


def unit_ball_volume_factorial(n: int) -> float:
    """Unit-ball volume from the separate even/odd factorial expressions.

    Kept as an independent route to cross-check the Gamma form.
    """
    n = _check_dim(n)
    if n % 2 == 0:
        k = n // 2
        return math.exp(k * math.log(math.pi) - math.lgamma(k + 1))
    k = (n - 1) // 2
    # 2^n pi^k k! / n!
    return math.exp(n * math.log(2.0) + k * math.log(math.pi)
                    + math.lgamma(k + 1) - math.lgamma(n + 1))


def log_ball_ratio(n: int, factor_dims: tuple[int, int]) -> float:
    """log of B_n / (B_a B_b) with a + b = n, via the Gamma quotient."""
    n = _check_dim(n, "numerator_dim")
    a, b = (_check_dim(d, "factor dim") for d in factor_dims)
    if a + b != n:
        raise ValueError(f"factor dims {factor_dims} do not sum to {n}")
    return gammaln(0.5 * a + 1.0) + gammaln(0.5 * b + 1.0) - gammaln(0.5 * n + 1.0)


def ball_ratio(n: int, factor_dims: tuple[int, int]) -> float:
    """B_n / (B_a B_b), the volume ratio in the covering/packing inequalities."""
    return math.exp(log_ball_ratio(n, factor_dims))


# ---------------------------------------------------------------------------
# Beta integrals  int_0^1 t^a (1-t)^b dt
# ---------------------------------------------------------------------------

def _check_exponents(a, b):
    if not (a >= 0 and b >= 0) or not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError(f"Beta exponents must be finite and >= 0, got ({a}, {b})")
    return float(a), float(b)


def log_beta_integral(exp_t: float, exp_1mt: float) -> float:
    a, b = _check_exponents(exp_t, exp_1mt)
    return float(betaln(a + 1.0, b + 1.0))


def beta_integral(exp_t: float, exp_1mt: float, check: bool = False) -> float:
    """int_0^1 t^a (1-t)^b dt = Gamma(a+1) Gamma(b+1) / Gamma(a+b+2).

    With ``check=True`` the value is also computed by adaptive quadrature and
    a ``ArithmeticError`` is raised if the two disagree by more than 1e-10.
    """
    lg = log_beta_integral(exp_t, exp_1mt)
    if check:
        lq = log_beta_integral_quadrature(exp_t, exp_1mt)
        if abs(math.expm1(lq - lg)) > 1e-10:
            raise ArithmeticError(
                f"Beta integral routes disagree: gamma={math.exp(lg)!r}, "
                f"quadrature={math.exp(lq)!r}")
    return math.exp(lg)


def _log_xlogy(a, s):
    # a*log(a/s) with the 0*log(0) = 0 convention; logs taken apart so tiny a cannot underflow
    return 0.0 if a == 0 else a * (math.log(a) - math.log(s))


def log_beta_integral_quadrature(exp_t: float, exp_1mt: float) -> float:
    """log of the Beta integral computed by adaptive Gauss-Kronrod quadrature.

    The integrand is divided by its peak value before integrating so the
    result stays representable at exponents in the thousands.
    """
    a, b = _check_exponents(exp_t, exp_1mt)
    if a + b == 0:
        return 0.0
    t_max = a / (a + b)
    log_peak = _log_xlogy(a, a + b) + _log_xlogy(b, a + b)

    def scaled(t):
        if t <= 0.0:
            return 1.0 if a == 0 else 0.0
        if t >= 1.0:
            return 1.0 if b == 0 else 0.0
        return math.exp(a * math.log(t) + b * math.log1p(-t) - log_peak)

    # peak width ~ sqrt(t(1-t)/(a+b)); give QUADPACK breakpoints around it
    width = math.sqrt(max(t_max * (1 - t_max), 1e-300) / (a + b))
    total = 0.0
    edges = [0.0, t_max, 1.0]
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        pts = sorted({min(max(t_max + k * width, lo), hi) for k in (-8, -4, -2, -1, 1, 2, 4, 8)}
                     - {lo, hi})
        val, _ = integrate.quad(scaled, lo, hi, points=pts or None,
                                epsabs=1e-15, epsrel=1e-13, limit=400)
        total += val
    return log_peak + math.log(total)


def beta_integral_quadrature(exp_t: float, exp_1mt: float) -> float:
    return math.exp(log_beta_integral_quadrature(exp_t, exp_1mt))


def expansion_beta_exponents(N: float, r: float) -> tuple[float, float]:
    """Exponents (N(r-1)/(2r), N/(2r)) of the expansion Beta integrand."""
    return N * (r - 1.0) / (2.0 * r), N / (2.0 * r)


def reduction_beta_exponents(M: float, r: float) -> tuple[float, float]:
    """Exponents (M(1-r)/2, Mr/2) of the reduction Beta integrand."""
    return M * (1.0 - r) / 2.0, M * r / 2.0


def _regime(r, regime):
    inferred = "expansion" if r > 1 else "reduction"
    if regime is None:
        regime = inferred
    if regime == "expansion":
        if not r > 1:
            raise ValueError(f"expansion regime needs r > 1, got r={r}")
    elif regime == "reduction":
        if not 0 < r < 1:
            raise ValueError(f"reduction regime needs 0 < r < 1, got r={r}")
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return regime


def log_beta_sup_bound(dim: float, r: float, regime: str | None = None) -> float:
    if not dim > 0:
        raise ValueError(f"dimension must be positive, got {dim}")
    regime = _regime(r, regime)
    if regime == "expansion":
        a, b = expansion_beta_exponents(dim, r)
        t_max = 1.0 - 1.0 / r
    else:
        a, b = reduction_beta_exponents(dim, r)
        t_max = 1.0 - r
    return a * math.log(t_max) + b * math.log1p(-t_max)


def beta_sup_bound(dim: float, r: float, regime: str | None = None) -> float:
    """Sup norm of the Beta integrand, an upper bound on the integral.

    ``dim`` is N with r = N/M > 1 (expansion) or M with r = N/M < 1
    (reduction); the regime is inferred from r unless given explicitly.
    """
    return math.exp(log_beta_sup_bound(dim, r, regime))


def uniform_ball_sq_radius(m: int, delta: float) -> float:
    """E{rho^2} for a uniform point in an m-ball of diameter delta."""
    m = _check_dim(m, "m")
    if not delta > 0:
        raise ValueError("delta must be positive")
    return m * delta ** 2 / (4.0 * (m + 2))


# ---------------------------------------------------------------------------
# Distribution of the normalized noise norm ||n|| / sqrt(N)
# ---------------------------------------------------------------------------

def _check_norm_args(N, sigma_n, minimum=2):
    N = _check_dim(N, "N", minimum)
    if not sigma_n > 0:
        raise ValueError(f"sigma_n must be positive, got {sigma_n}")
    return N, float(sigma_n)


def _log_pdf(rho, N, sigma):
    rho = np.asarray(rho, dtype=float)
    half = 0.5 * N
    with np.errstate(divide="ignore"):
        out = (math.log(2.0) + half * math.log(half) - gammaln(half) - N * math.log(sigma)
               + (N - 1) * np.log(rho) - half * rho ** 2 / sigma ** 2)
    return np.where(rho > 0, out, -np.inf) if N > 1 else np.where(rho >= 0, out, -np.inf)


def _pdf(rho, N, sigma):
    return np.exp(_log_pdf(rho, N, sigma))


def noise_norm_pdf(rho, N: int, sigma_n: float):
    """Density of rho = ||n||/sqrt(N) for n ~ N(0, sigma_n^2 I_N), N >= 2."""
    N, sigma_n = _check_norm_args(N, sigma_n)
    if np.any(np.asarray(rho) < 0):
        raise ValueError("rho must be non-negative")
    out = _pdf(rho, N, sigma_n)
    return float(out) if np.ndim(out) == 0 else out


def _cdf(rho, N, sigma):
    if rho <= 0:
        return 0.0
    mode = sigma * math.sqrt((N - 1) / N)
    width = sigma / math.sqrt(2.0 * N)
    pts = sorted({mode + k * width for k in (-10, -5, -2, -1, 0, 1, 2, 5, 10)
                  if 0 < mode + k * width < rho})
    f = lambda t: math.exp(float(_log_pdf(t, N, sigma)))  # noqa: E731
    val, _ = integrate.quad(f, 0.0, rho, points=pts or None,
                            epsabs=1e-13, epsrel=1e-12, limit=400)
    return min(val, 1.0)


def noise_norm_cdf(rho: float, N: int, sigma_n: float) -> float:
    """CDF of the normalized noise norm by quadrature of its density."""
    N, sigma_n = _check_norm_args(N, sigma_n)
    return _cdf(float(rho), N, sigma_n)


def _quantile(p, N, sigma, tol=1e-9):
    if not 0 < p < 1:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    lo, hi = 0.0, sigma
    while _cdf(hi, N, sigma) < p:
        lo, hi = hi, 2.0 * hi
    # coarse bisection, then Newton on the CDF
    while hi - lo > 1e-6 * sigma:
        mid = 0.5 * (lo + hi)
        if _cdf(mid, N, sigma) < p:
            lo = mid
        else:
            hi = mid
    rho = 0.5 * (lo + hi)
    for _ in range(50):
        err = _cdf(rho, N, sigma) - p
        if abs(err) < tol:
            return rho
        dens = float(_pdf(rho, N, sigma))
        step = rho - err / dens if dens > 0 else 0.5 * (lo + hi)
        if err < 0:
            lo = rho
        else:
            hi = rho
        rho = step if lo < step < hi else 0.5 * (lo + hi)
    raise ArithmeticError(f"quantile solver did not reach |CDF - p| < {tol}")


def noise_norm_quantile(p: float, N: int, sigma_n: float) -> float:
    """rho with CDF(rho) = p (to 1e-9 absolute in probability)."""
    N, sigma_n = _check_norm_args(N, sigma_n)
    return _quantile(p, N, sigma_n)


@dataclass(frozen=True)
class NoiseNormDistribution:
    """Law of ||n||/sqrt(N) for i.i.d. N(0, sigma_n^2) noise in N dimensions."""

    dimension: int
    sigma_n: float

    def __post_init__(self):
        _check_norm_args(self.dimension, self.sigma_n)

    def pdf(self, rho):
        return noise_norm_pdf(rho, self.dimension, self.sigma_n)

    def cdf(self, rho):
        return noise_norm_cdf(rho, self.dimension, self.sigma_n)

    def quantile(self, p):
        return noise_norm_quantile(p, self.dimension, self.sigma_n)

    @property
    def mode(self) -> float:
        return self.sigma_n * math.sqrt((self.dimension - 1) / self.dimension)

    @property
    def mean(self) -> float:
        N = self.dimension
        return self.sigma_n * math.sqrt(2.0 / N) * math.exp(
            gammaln(0.5 * (N + 1)) - gammaln(0.5 * N))

    @property
    def variance(self) -> float:
        # E{rho^2} = sigma_n^2 exactly
        return self.sigma_n ** 2 - self.mean ** 2
