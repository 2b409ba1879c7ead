"""Analytic distortion calculus for expansion and reduction mappings."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats
from scipy.stats import qmc

from .geometry import SignalMapping, jacobian, metric_inverse, metric_tensor, metric_tensors

__all__ = [
    "SourceSpec",
    "DistortionBreakdown",
    "QuadratureError",
    "SuboptimalParameterizationWarning",
    "weak_noise_mse_at",
    "weak_noise_distortion",
    "channel_mse_at",
    "channel_distortion",
    "approximation_distortion_bound",
    "sdr_db",
    "expectation",
]

DIAG_TOL = 1e-8


class QuadratureError(RuntimeError):
    """Expectation integral failed to reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message if achieved is None else f"{message} (achieved rel {achieved:.3g})")
        self.achieved = achieved


class SuboptimalParameterizationWarning(UserWarning):
    """Metric tensor has non-negligible off-diagonal terms."""


@dataclass(frozen=True)
class SourceSpec:
    """i.i.d. zero-mean Gaussian source; ``truncation`` is in units of sigma_x."""

    dim: int = 1
    sigma_x: float = 1.0
    truncation: float = 6.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("source dimension must be positive")
        if not self.sigma_x > 0:
            raise ValueError("sigma_x must be positive")
        if self.truncation < 6.0:
            raise ValueError("truncation must be at least 6 sigma_x")

    @property
    def variance(self) -> float:
        return self.sigma_x ** 2

    @property
    def radius(self) -> float:
        return self.truncation * self.sigma_x


def sdr_db(signal_var: float, distortion: float) -> float:
    if distortion <= 0:
        return math.inf
    return 10.0 * math.log10(signal_var / distortion)


@dataclass
class DistortionBreakdown:
    weak_noise_or_channel: float
    anomalous: float = 0.0
    approximation: float = 0.0
    signal_var: float = 1.0

    @property
    def total(self) -> float:
        return self.weak_noise_or_channel + self.anomalous + self.approximation

    @property
    def sdr_db(self) -> float:
        return sdr_db(self.signal_var, self.total)

    def as_dict(self) -> dict:
        return {"weak_noise_or_channel": self.weak_noise_or_channel, "anomalous": self.anomalous,
                "approximation": self.approximation, "total": self.total, "sdr_db": self.sdr_db}


# ---------------------------------------------------------------------------
# pointwise formulas
# ---------------------------------------------------------------------------

def weak_noise_mse_at(mapping: SignalMapping, x0, sigma_n: float, *, full: bool = False) -> float:
    """Weak-noise MSE per source dimension at x0: (sigma_n^2 / M) sum 1/g_ii.

    When G has off-diagonal terms above 1e-8 mean(g_ii) (or ``full=True``)
    the general form (sigma_n^2 / M) tr(G^-1) is returned instead and a
    `SuboptimalParameterizationWarning` is issued for the former case.
    """
    if mapping.direction != "expansion":
        raise ValueError("weak-noise MSE applies to expansion mappings")
    md = metric_tensor(mapping, x0)
    G = md.metric_tensor
    M = mapping.M
    off = np.abs(G - np.diag(md.diagonal)).max() if M > 1 else 0.0
    if full or off > DIAG_TOL * md.diagonal.mean():
        if not full:
            warnings.warn("non-orthogonal Jacobian columns; using tr(G^-1)",
                          SuboptimalParameterizationWarning, stacklevel=2)
        return float(sigma_n ** 2 / M * np.trace(metric_inverse(G)))
    if not md.positive_definite:
        metric_inverse(G)  # raises DegenerateMetricError
    return float(sigma_n ** 2 / M * np.sum(1.0 / md.diagonal))


def channel_mse_at(mapping: SignalMapping, z0, sigma_n: float) -> float:
    """Channel distortion density at z0: (sigma_n^2 / M) sum_i g_ii(z0)."""
    if mapping.direction != "reduction":
        raise ValueError("channel MSE applies to reduction surfaces")
    J = jacobian(mapping, z0)
    return float(sigma_n ** 2 / mapping.M * np.sum(J * J))


def approximation_distortion_bound(M: int, N: int, delta: float) -> float:
    """Lower bound (M-N) delta^2 / (4M(M-N+2)) on the approximation MSE."""
    if not (M > N >= 1):
        raise ValueError("approximation bound needs M > N >= 1")
    if not delta > 0:
        raise ValueError("delta must be positive")
    m = M - N
    return m * delta ** 2 / (4.0 * M * (m + 2))


# ---------------------------------------------------------------------------
# expectations
# ---------------------------------------------------------------------------

def _pairwise_sum(v):
    # numpy's sum is pairwise for contiguous float arrays
    return float(np.sum(np.ascontiguousarray(v, dtype=float)))


def _quad_1d(f, lo, hi, breaks, pdf, rtol):
    pts = [lo] + [b for b in breaks if lo < b < hi] + [hi]
    total, err = 0.0, 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, e, info = integrate.quad(lambda t: f(t) * pdf(t), a, b, epsabs=0.0, epsrel=rtol * 0.1,
                                      limit=400, full_output=True)[:3]
        total += val
        err += e
    if not math.isfinite(total) or err > rtol * abs(total) + 1e-300:
        raise QuadratureError("1-D quadrature did not converge", err / max(abs(total), 1e-300))
    return total


def expectation(fbatch, dim: int, *, weight="normal", scale: float = 1.0, lo=None, hi=None,
                breaks=(), rtol: float = 1e-4, max_level: int = 7, seed: int = 0) -> float:
    """E{f(X)} for X with i.i.d. components.

    ``weight`` is "normal" (N(0, scale^2), truncated to [lo, hi]) or a frozen
    1-D scipy distribution.  1-D integrals use adaptive quadrature split at
    ``breaks``; dims <= 3 use a tensor Gauss rule with doubling node count;
    higher dims use scrambled Sobol points with doubling sample size.
    """
    normal = isinstance(weight, str)
    if normal and weight != "normal":
        raise ValueError(f"unknown weight {weight!r}")
    dist = stats.norm(0.0, scale) if normal else weight
    s_lo, s_hi = dist.support()
    lo = s_lo if lo is None else max(lo, s_lo)
    hi = s_hi if hi is None else min(hi, s_hi)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("integration range must be finite (truncate the density)")

    if dim == 1:
        return _quad_1d(lambda t: float(fbatch(np.array([[t]]))[0]), lo, hi, breaks, dist.pdf, rtol)

    if dim <= 3:
        prev = None
        for level in range(max_level):
            n = 16 * 2 ** level
            if normal and lo <= -6 * scale and hi >= 6 * scale:
                t, w = np.polynomial.hermite_e.hermegauss(n)
                nodes, weights = scale * t, w / math.sqrt(2 * math.pi)
            else:
                t, w = np.polynomial.legendre.leggauss(n)
                nodes = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
                weights = 0.5 * (hi - lo) * w * dist.pdf(nodes)
            grids = np.meshgrid(*([nodes] * dim), indexing="ij")
            wgrid = np.prod(np.meshgrid(*([weights] * dim), indexing="ij"), axis=0)
            pts = np.stack([g.ravel() for g in grids], axis=1)
            val = _pairwise_sum(wgrid.ravel() * np.asarray(fbatch(pts), float))
            if prev is not None and abs(val - prev) <= rtol * abs(val):
                return val
            prev = val
        raise QuadratureError(f"tensor quadrature in {dim} dims did not converge",
                              abs(val - prev) / max(abs(val), 1e-300))

    prev = None
    clo, chi = dist.cdf(lo), dist.cdf(hi)
    for level in range(max_level + 6):
        m = 12 + level
        u = qmc.Sobol(dim, scramble=True, seed=seed).random_base2(m)
        pts = dist.ppf(clo + (chi - clo) * u)
        val = (chi - clo) ** dim * _pairwise_sum(np.asarray(fbatch(pts), float)) / len(pts)
        if prev is not None and abs(val - prev) <= rtol * abs(val):
            return val
        prev = val
    raise QuadratureError(f"QMC in {dim} dims did not converge", abs(val - prev) / max(abs(val), 1e-300))


def _weak_batch(mapping, sigma_n, full):
    M = mapping.M

    def f(pts):
        G = metric_tensors(mapping, pts)
        if full:
            return sigma_n ** 2 / M * np.trace(np.linalg.inv(G), axis1=1, axis2=2)
        return sigma_n ** 2 / M * np.sum(1.0 / np.einsum("kii->ki", G), axis=1)
    return f


def weak_noise_distortion(mapping: SignalMapping, source: SourceSpec, sigma_n: float, *,
                          rtol: float = 1e-4, full: bool | None = None) -> float:
    """Average weak-noise MSE over the (truncated) Gaussian source.

    ``full=None`` picks tr(G^-1) automatically when a probe of the metric
    shows non-orthogonal columns.
    """
    if mapping.direction != "expansion":
        raise ValueError("weak-noise distortion applies to expansion mappings")
    if source.dim != mapping.M:
        raise ValueError("source dimension does not match mapping")
    R = source.radius
    if full is None:
        probe = np.random.default_rng(0).uniform(-R / 3, R / 3, size=(16, mapping.M))
        probe = probe[~mapping.on_seam(probe)]
        G = metric_tensors(mapping, probe)
        diag = np.einsum("kii->ki", G)
        off = np.abs(G - diag[:, :, None] * np.eye(mapping.M)).max()
        full = bool(off > DIAG_TOL * diag.mean())
        if full:
            warnings.warn("non-orthogonal Jacobian columns; using tr(G^-1)",
                          SuboptimalParameterizationWarning, stacklevel=2)
    return expectation(_weak_batch(mapping, sigma_n, full), mapping.M, scale=source.sigma_x,
                       lo=-R, hi=R, breaks=tuple(mapping.seams), rtol=rtol)


def channel_distortion(mapping: SignalMapping, channel_density, sigma_n: float, *,
                       rtol: float = 1e-4) -> float:
    """Channel distortion: E{(sigma_n^2 / M) sum g_ii(z)} under the channel density.

    ``channel_density`` is a frozen scipy distribution for each of the N
    i.i.d. channel components; it is truncated to the surface's domain.
    """
    if mapping.direction != "reduction":
        raise ValueError("channel distortion applies to reduction surfaces")
    M = mapping.M
    lo = float(np.max(mapping.lower)) if np.all(np.isfinite(mapping.lower)) else None
    hi = float(np.min(mapping.upper)) if np.all(np.isfinite(mapping.upper)) else None
    dlo, dhi = channel_density.support()
    if lo is None and not math.isfinite(dlo):
        lo = float(channel_density.ppf(1e-12))
    if hi is None and not math.isfinite(dhi):
        hi = float(channel_density.ppf(1 - 1e-12))

    def f(pts):
        pts = np.clip(pts, mapping.lower, mapping.upper)
        J = _off_seam_jacobian(mapping, pts)
        return sigma_n ** 2 / M * np.einsum("kij,kij->k", J, J)

    return expectation(f, mapping.param_dim, weight=channel_density, lo=lo, hi=hi,
                       breaks=tuple(mapping.seams), rtol=rtol)


def _off_seam_jacobian(mapping, pts):
    # seams have measure zero; nudge exact seam hits off the seam, inward
    on = mapping.on_seam(pts)
    if on.any():
        pts = pts.copy()
        step = 1e-9 * np.maximum(1.0, np.abs(pts[on]))
        up = pts[on] + step
        pts[on] = np.where(up <= mapping.upper, up, pts[on] - step)
    return jacobian(mapping, pts)
