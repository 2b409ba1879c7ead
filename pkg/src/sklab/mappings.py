"""Catalog of concrete mappings: linear M:N, 1:2 spiral, 2:1 and 3:1 ring chains."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .geometry import SignalMapping

__all__ = [
    "Stretch",
    "LinearMapping",
    "SpiralMapping",
    "RingChainMapping",
    "MappingSpec",
    "make_linear",
    "make_spiral_1_2",
    "make_circles_2_1",
    "make_stacked_circles_3_1",
    "build_mapping",
    "MAPPING_KINDS",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Stretch:
    """Odd stretching function phi(x) = sign(x) |x|^beta (identity for beta = 1)."""

    beta: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("stretch exponent beta must be positive")

    @classmethod
    def identity(cls) -> "Stretch":
        return cls(1.0)

    @property
    def kind(self) -> str:
        return "identity" if self.beta == 1.0 else "power"

    @property
    def seams(self) -> tuple[float, ...]:
        # |x|^beta is not C1 (or has phi' = 0) at the origin unless beta == 1
        return () if self.beta == 1.0 else (0.0,)

    def __call__(self, x):
        x = np.asarray(x, float)
        if self.beta == 1.0:
            return x
        return np.sign(x) * np.abs(x) ** self.beta

    def derivative(self, x):
        x = np.asarray(x, float)
        if self.beta == 1.0:
            return np.ones_like(x)
        with np.errstate(divide="ignore"):
            return self.beta * np.abs(x) ** (self.beta - 1.0)

    def inverse(self, y):
        y = np.asarray(y, float)
        if self.beta == 1.0:
            return y
        return np.sign(y) * np.abs(y) ** (1.0 / self.beta)


# ---------------------------------------------------------------------------
# Linear
# ---------------------------------------------------------------------------

class LinearMapping(SignalMapping):
    """S(x) = alpha E x with E having orthogonal columns of norm sqrt(N/M).

    E repeats each source component N/M times when M divides N, otherwise it
    is the first M columns of the identity scaled by sqrt(N/M).  Either way a
    unit-variance source gives per-dimension channel power alpha^2.
    """

    def __init__(self, M: int, N: int, alpha: float = 1.0):
        if alpha == 0 or not math.isfinite(alpha):
            raise ValueError("linear gain must be finite and nonzero")
        super().__init__(M, N, direction="expansion", name="linear")
        self.alpha = float(alpha)
        if N % M == 0:
            E = np.tile(np.eye(M), (N // M, 1))
        else:
            E = math.sqrt(N / M) * np.eye(N, M)
        self.embedding = E

    @property
    def matrix(self) -> np.ndarray:
        return self.gain * self.alpha * self.embedding

    def _evaluate(self, p):
        return p @ (self.alpha * self.embedding).T

    def _jacobian(self, p):
        return np.broadcast_to(self.alpha * self.embedding, (len(p), self.N, self.M)).copy()

    def decode(self, received):
        """Closed-form ML (least-squares) estimate."""
        A = self.matrix
        received = np.atleast_2d(received)
        sol = np.linalg.solve(A.T @ A, A.T @ received.T).T
        return sol


def make_linear(M: int, N: int, alpha: float = 1.0) -> LinearMapping:
    if M > N:
        raise ValueError("linear expansion needs M <= N")
    return LinearMapping(M, N, alpha)


# ---------------------------------------------------------------------------
# Spiral 1:2
# ---------------------------------------------------------------------------

class SpiralMapping(SignalMapping):
    """Double Archimedean spiral s(x) = sign(phi) a |phi| (cos|phi|, sin|phi|).

    phi = stretch(x).  The negative branch is the point reflection of the
    positive one, so the two arms interleave: along a ray the spacing between
    turns of one arm is 2 pi a and the gap between neighbouring folds is pi a.
    """

    folded = True

    def __init__(self, a: float = 1.0, stretch: Stretch | None = None):
        if not a > 0:
            raise ValueError("spiral pitch a must be positive")
        stretch = stretch or Stretch()
        super().__init__(1, 2, direction="expansion", seams=stretch.seams, name="spiral_1_2")
        self.a = float(a)
        self.stretch = stretch

    @property
    def fold_gap(self) -> float:
        """Radial distance between neighbouring folds (arm to opposite arm)."""
        return math.pi * self.a * abs(self.gain)

    @property
    def branch_pitch(self) -> float:
        """Radial distance between successive turns of a single arm."""
        return TWO_PI * self.a * abs(self.gain)

    def _evaluate(self, p):
        phi = self.stretch(p[:, 0])
        u = np.abs(phi)
        sgn = np.where(phi < 0, -1.0, 1.0)
        return (self.a * sgn * u)[:, None] * np.stack([np.cos(u), np.sin(u)], axis=1)

    def _jacobian(self, p):
        x = p[:, 0]
        u = np.abs(self.stretch(x))
        dphi = self.stretch.derivative(x)
        t = np.stack([np.cos(u) - u * np.sin(u), np.sin(u) + u * np.cos(u)], axis=1)
        return (self.a * dphi)[:, None, None] * t[:, :, None]

    def metric_analytic(self, x):
        """g_11(x) = a^2 (1 + phi^2) phi'^2 (times gain^2)."""
        x = np.asarray(x, float)
        phi = self.stretch(x)
        return (self.gain * self.a) ** 2 * (1 + phi ** 2) * self.stretch.derivative(x) ** 2

    def arc_length(self, t0: float, t1: float) -> float:
        val, _ = integrate.quad(lambda x: math.sqrt(float(self.metric_analytic(x))), t0, t1,
                                limit=200)
        return val

    def fold_offset(self, p_true, p_hat):
        u = np.abs(self.stretch(np.asarray(p_true, float).reshape(-1)))
        v = np.abs(self.stretch(np.asarray(p_hat, float).reshape(-1)))
        return np.rint((v - u) / math.pi).astype(int)


def make_spiral_1_2(a: float = 1.0, stretch: Stretch | None = None) -> SpiralMapping:
    return SpiralMapping(a, stretch)


# ---------------------------------------------------------------------------
# Ring chains (reduction surfaces)
# ---------------------------------------------------------------------------

class RingChainMapping(SignalMapping):
    """Dimension-reducing curve made of circles traversed one after another.

    The channel scalar z is arc length along the chain.  Each circle starts and
    ends at angle 0 and successive circles alternate their sense of rotation;
    consecutive start points are joined by straight connectors so that the
    decoder surface S(z) is continuous and unit speed everywhere.  The encoder
    projects onto the circles only (never onto connectors).

    ``radii``/``heights`` describe the circles in chain order; ``heights`` is
    None for a planar (2:1) chain.
    """

    folded = True

    def __init__(self, delta: float, radii, heights=None, name: str = "ring_chain"):
        if not delta > 0:
            raise ValueError("ring spacing delta must be positive")
        radii = np.asarray(radii, float)
        M = 2 if heights is None else 3
        self.delta = float(delta)
        self.radii = radii
        self.heights = np.zeros_like(radii) if heights is None else np.asarray(heights, float)
        self.directions = np.where(np.arange(len(radii)) % 2 == 0, 1.0, -1.0)
        starts_pts = np.zeros((len(radii), M))
        starts_pts[:, 0] = radii
        if M == 3:
            starts_pts[:, 2] = self.heights
        self.start_points = starts_pts
        self.ring_lengths = TWO_PI * radii
        conn = np.linalg.norm(np.diff(starts_pts, axis=0), axis=1)
        self.connector_lengths = np.append(conn, 0.0)
        self.starts = np.concatenate([[0.0], np.cumsum(self.ring_lengths + self.connector_lengths)[:-1]])
        self.total_length = float(self.starts[-1] + self.ring_lengths[-1])
        seams = np.unique(np.concatenate([self.starts[1:], (self.starts + self.ring_lengths)[:-1]]))
        super().__init__(M, 1, direction="reduction", lower=0.0, upper=self.total_length,
                         seams=seams, name=name)
        if M == 3:
            self._index = {(int(round(r / delta)), int(round(h / delta))): i
                           for i, (r, h) in enumerate(zip(radii, self.heights))}
        self.max_ring = int(round(radii.max() / delta))

    # -- surface S(z) --------------------------------------------------------
    def _locate(self, z):
        z = np.clip(z, 0.0, self.total_length)
        k = np.clip(np.searchsorted(self.starts, z, side="right") - 1, 0, len(self.starts) - 1)
        s = z - self.starts[k]
        on_ring = s < self.ring_lengths[k]
        return k, s, on_ring

    def _evaluate(self, p):
        k, s, on_ring = self._locate(p[:, 0])
        R = self.radii[k]
        out = np.empty((len(k), self.M))
        with np.errstate(invalid="ignore", divide="ignore"):
            theta = np.where(on_ring, self.directions[k] * s / np.where(R > 0, R, 1.0), 0.0)
        out[:, 0] = R * np.cos(theta)
        out[:, 1] = R * np.sin(theta)
        if self.M == 3:
            out[:, 2] = self.heights[k]
        off = ~on_ring
        if off.any():
            kk = k[off]
            L = self.connector_lengths[kk]
            t = np.where(L > 0, (s[off] - self.ring_lengths[kk]) / np.where(L > 0, L, 1.0), 0.0)
            nxt = np.minimum(kk + 1, len(self.radii) - 1)
            P0 = self.start_points[kk]
            out[off] = P0 + t[:, None] * (self.start_points[nxt] - P0)
        return out

    def _jacobian(self, p):
        k, s, on_ring = self._locate(p[:, 0])
        R = self.radii[k]
        J = np.zeros((len(k), self.M, 1))
        with np.errstate(invalid="ignore", divide="ignore"):
            theta = self.directions[k] * s / np.where(R > 0, R, 1.0)
        J[on_ring, 0, 0] = -self.directions[k][on_ring] * np.sin(theta[on_ring])
        J[on_ring, 1, 0] = self.directions[k][on_ring] * np.cos(theta[on_ring])
        off = ~on_ring
        if off.any():
            kk = k[off]
            nxt = np.minimum(kk + 1, len(self.radii) - 1)
            d = self.start_points[nxt] - self.start_points[kk]
            L = np.linalg.norm(d, axis=1)
            J[off, :, 0] = d / np.where(L > 0, L, 1.0)[:, None]
        return J

    # -- encoder side ---------------------------------------------------------
    def _cyl(self, x):
        x = np.atleast_2d(np.asarray(x, float)) / self.gain
        rho = np.hypot(x[:, 0], x[:, 1])
        h = x[:, 2] if self.M == 3 else np.zeros(len(x))
        theta = np.mod(np.arctan2(x[:, 1], x[:, 0]), TWO_PI)
        return rho, h, theta

    def ring_index(self, x) -> np.ndarray:
        """Chain index of the circle nearest to each source point."""
        rho, h, _ = self._cyl(x)
        d = self.delta
        # ties at midpoints go to the inner ring
        n = np.maximum(np.ceil(rho / d - 0.5), 0).astype(int)
        if self.M == 2:
            return np.minimum(n, len(self.radii) - 1)
        j = (np.sign(h) * np.maximum(np.ceil(np.abs(h) / d - 0.5), 0)).astype(int)
        idx = np.array([self._index.get((a, b), -1) for a, b in zip(n, j)], dtype=int)
        miss = idx < 0
        if miss.any():
            d2 = (rho[miss, None] - self.radii[None, :]) ** 2 + (h[miss, None] - self.heights[None, :]) ** 2
            idx[miss] = np.argmin(d2, axis=1)
        return idx

    def project(self, x):
        """Nearest point p(x) on the circles, with its chain index and angle."""
        rho, h, theta = self._cyl(x)
        idx = self.ring_index(x)
        R = self.radii[idx]
        p = np.empty((len(idx), self.M))
        p[:, 0] = R * np.cos(theta)
        p[:, 1] = R * np.sin(theta)
        if self.M == 3:
            p[:, 2] = self.heights[idx]
        return self.gain * p, idx, theta

    def chain_parameter(self, idx, theta) -> np.ndarray:
        """ell: (circle index, angle) -> arc-length position z."""
        idx = np.asarray(idx, int)
        R = self.radii[idx]
        return self.starts[idx] + R * np.mod(self.directions[idx] * np.asarray(theta, float), TWO_PI)

    def chain_position(self, z):
        """Inverse of `chain_parameter`: z -> (circle index, angle) on circles."""
        k, s, on_ring = self._locate(np.asarray(z, float).reshape(-1))
        if not np.all(on_ring | (self.ring_lengths[k] == 0)):
            raise ValueError("z lies on a connector, not on a circle")
        R = self.radii[k]
        theta = np.where(R > 0, np.mod(self.directions[k] * s / np.where(R > 0, R, 1.0), TWO_PI), 0.0)
        return k, theta

    def encode(self, x) -> np.ndarray:
        """z = ell(p(x)) for source points x, shape (k, 1)."""
        _, idx, theta = self.project(x)
        return self.chain_parameter(idx, theta)[:, None]

    def fold_offset(self, p_true, x_hat):
        """Number of ring spacings between two source-space points in the (rho, h) half-plane."""
        r1, h1, _ = self._cyl(p_true)
        r2, h2, _ = self._cyl(x_hat)
        return np.rint(np.hypot(r2 - r1, h2 - h1) / self.delta).astype(int)


def make_circles_2_1(delta: float, extent: float = 6.0) -> RingChainMapping:
    """Concentric circles of radius k delta, k = 0..K, covering radius ``extent``."""
    if not delta > 0:
        raise ValueError("ring spacing delta must be positive")
    K = int(math.ceil(extent / delta)) + 1
    radii = delta * np.arange(K + 1)
    return RingChainMapping(delta, radii, name="circles_2_1")


def make_stacked_circles_3_1(delta: float, extent: float = 6.0) -> RingChainMapping:
    """Circles of radius n delta on planes spaced delta apart, filling a ball.

    Chain order is plane-major: planes bottom to top, circles within a plane
    alternately inside-out and outside-in.
    """
    if not delta > 0:
        raise ValueError("ring spacing delta must be positive")
    K = int(math.ceil(extent / delta)) + 1
    radii, heights = [], []
    for row, j in enumerate(range(-K, K + 1)):
        n_max = int(math.isqrt(K * K - j * j))
        ns = range(n_max + 1) if row % 2 == 0 else range(n_max, -1, -1)
        for n in ns:
            radii.append(n * delta)
            heights.append(j * delta)
    return RingChainMapping(delta, radii, heights, name="stacked_circles_3_1")


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

MAPPING_KINDS = ("linear", "spiral_1_2", "circles_2_1", "stacked_circles_3_1")


@dataclass
class MappingSpec:
    """Addressable description of a catalog mapping.

    ``params`` keys: linear -> M, N, alpha; spiral_1_2 -> a;
    circles_2_1 / stacked_circles_3_1 -> delta (a float, or "opt" to use the
    asymptotically optimal spacing for the channel CSNR).
    """

    kind: str
    params: dict = field(default_factory=dict)
    stretch_beta: float = 1.0

    def __post_init__(self):
        if self.kind not in MAPPING_KINDS:
            raise ValueError(f"unknown mapping kind {self.kind!r}; expected one of {MAPPING_KINDS}")
        if not self.stretch_beta > 0:
            raise ValueError("stretch_beta must be positive")

    @property
    def dims(self) -> tuple[int, int]:
        if self.kind == "linear":
            return int(self.params.get("M", 1)), int(self.params.get("N", 1))
        return {"spiral_1_2": (1, 2), "circles_2_1": (2, 1), "stacked_circles_3_1": (3, 1)}[self.kind]

    @property
    def direction(self) -> str:
        return "reduction" if self.kind in ("circles_2_1", "stacked_circles_3_1") else "expansion"


def build_mapping(spec: MappingSpec, *, extent: float = 6.0, delta: float | None = None
                  ) -> SignalMapping:
    """Instantiate a catalog mapping; ``delta`` overrides a symbolic spacing."""
    p = spec.params
    if spec.kind == "linear":
        M, N = spec.dims
        return make_linear(M, N, float(p.get("alpha", 1.0)))
    if spec.kind == "spiral_1_2":
        return make_spiral_1_2(float(p.get("a", 1.0)), Stretch(spec.stretch_beta))
    d = delta if delta is not None else p.get("delta")
    if d is None or isinstance(d, str):
        raise ValueError("ring mappings need a numeric delta")
    if spec.kind == "circles_2_1":
        return make_circles_2_1(float(d), extent)
    return make_stacked_circles_3_1(float(d), extent)
