"""Signal mappings and their local differential geometry.

A `SignalMapping` is a parametric map between Euclidean spaces.  For an
expansion it sends a source vector x in R^M to a channel point S(x) in R^N;
for a reduction it is the decoder surface S(z) in source space, parameterized
by the channel vector z in R^N.  In both cases the *parameter* space is where
the Jacobian's columns live, and G = J^T J is the metric tensor.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from scipy import linalg

__all__ = [
    "MappingDomainError",
    "SeamError",
    "DegenerateMetricError",
    "SignalMapping",
    "MetricData",
    "ShapePreservationReport",
    "jacobian",
    "finite_difference_jacobian",
    "metric_tensor",
    "metric_tensors",
    "metric_diagonal",
    "projection_matrix",
    "shape_preservation_report",
]

PD_TOL = 1e-10


class MappingDomainError(ValueError):
    """Point outside the declared parameter domain."""


class SeamError(MappingDomainError):
    """Point lies on a declared seam of a piecewise-C1 mapping."""


class DegenerateMetricError(ValueError):
    """Metric tensor is singular or not positive definite at the point."""


class SignalMapping:
    """Parametric map R^param_dim -> R^out_dim with an overall gain.

    Subclasses override `_evaluate` (and optionally `_jacobian`). Generic
    mappings can be built from plain callables with ``func``/``jac``; both
    must accept an array of shape (k, param_dim) and return (k, out_dim)
    resp. (k, out_dim, param_dim).

    ``seams`` lists parameter values (1-D parameters only) where the mapping
    is not C1; ``fold_offset`` is implemented by mappings with folded
    structure and returns the number of folds separating two parameter
    points (see the simulation classifier).
    """

    folded = False

    def __init__(self, source_dim: int, channel_dim: int, func=None, jac=None, *,
                 direction: str = "expansion", lower=None, upper=None,
                 seams=(), name: str = "custom", gain: float = 1.0):
        if direction not in ("expansion", "reduction"):
            raise ValueError(f"unknown direction {direction!r}")
        if source_dim < 1 or channel_dim < 1:
            raise ValueError("dimensions must be positive")
        if direction == "expansion" and source_dim > channel_dim:
            raise ValueError("expansion needs M <= N")
        if direction == "reduction" and channel_dim > source_dim:
            raise ValueError("reduction needs N <= M")
        self.source_dim = int(source_dim)
        self.channel_dim = int(channel_dim)
        self.direction = direction
        self.name = name
        self.gain = float(gain)
        self._func = func
        self._jac = jac
        d = self.param_dim
        self.lower = np.full(d, -np.inf) if lower is None else np.broadcast_to(
            np.asarray(lower, float), (d,)).copy()
        self.upper = np.full(d, np.inf) if upper is None else np.broadcast_to(
            np.asarray(upper, float), (d,)).copy()
        self.seams = np.sort(np.asarray(seams, float).ravel())
        if self.seams.size and d != 1:
            raise ValueError("seams are supported for 1-D parameters only")

    # -- shapes --------------------------------------------------------------
    @property
    def param_dim(self) -> int:
        return self.source_dim if self.direction == "expansion" else self.channel_dim

    @property
    def out_dim(self) -> int:
        return self.channel_dim if self.direction == "expansion" else self.source_dim

    @property
    def M(self) -> int:
        return self.source_dim

    @property
    def N(self) -> int:
        return self.channel_dim

    def __repr__(self):
        return (f"{type(self).__name__}(name={self.name!r}, {self.source_dim}:{self.channel_dim}, "
                f"{self.direction}, gain={self.gain:g})")

    def _as_batch(self, p):
        p = np.asarray(p, dtype=float)
        single = p.ndim <= 1
        p = p.reshape(-1, self.param_dim)
        return p, single

    # -- evaluation ----------------------------------------------------------
    def _evaluate(self, p):
        if self._func is None:
            raise NotImplementedError
        return np.asarray(self._func(p), dtype=float).reshape(len(p), self.out_dim)

    def _jacobian(self, p):
        if self._jac is None:
            return None
        return np.asarray(self._jac(p), dtype=float).reshape(len(p), self.out_dim, self.param_dim)

    @property
    def has_analytic_jacobian(self) -> bool:
        return self._jac is not None or type(self)._jacobian is not SignalMapping._jacobian

    def __call__(self, p):
        p, single = self._as_batch(p)
        out = self.gain * self._evaluate(p)
        return out[0] if single else out

    def analytic_jacobian(self, p):
        p, single = self._as_batch(p)
        J = self._jacobian(p)
        if J is None:
            return None
        J = self.gain * J
        return J[0] if single else J

    def scaled(self, c: float) -> "SignalMapping":
        """Copy of this mapping with the output multiplied by ``c``."""
        if c == 0 or not np.isfinite(c):
            raise ValueError("scale must be finite and nonzero")
        new = copy.copy(self)
        new.gain = self.gain * float(c)
        return new

    # -- domain --------------------------------------------------------------
    def in_domain(self, p) -> np.ndarray:
        p, _ = self._as_batch(p)
        return np.all((p >= self.lower) & (p <= self.upper), axis=1)

    def on_seam(self, p, tol: float = 0.0) -> np.ndarray:
        p, _ = self._as_batch(p)
        if not self.seams.size:
            return np.zeros(len(p), bool)
        dist = np.abs(p[:, :1] - self.seams[None, :]).min(axis=1)
        return dist <= np.maximum(tol, 1e-12 * np.maximum(1.0, np.abs(p[:, 0])))

    def fold_offset(self, p_true, p_hat):
        """Number of folds between two parameter points; None if unfolded."""
        return None


def _validate_points(mapping, p):
    if not np.all(np.isfinite(p)):
        raise MappingDomainError("non-finite parameter point")
    if not np.all(mapping.in_domain(p)):
        raise MappingDomainError(f"point outside domain [{mapping.lower}, {mapping.upper}]")
    if np.any(mapping.on_seam(p)):
        raise SeamError("point lies on a seam; evaluate one-sided")


def finite_difference_jacobian(mapping: SignalMapping, point) -> np.ndarray:
    """Central-difference Jacobian, step max(1e-6, 1e-6 |x_j|).

    Near a seam (or domain edge) the stencil is made one-sided so it never
    straddles the non-smooth point.
    """
    p, single = mapping._as_batch(point)
    k, d = p.shape
    J = np.empty((k, mapping.out_dim, d))
    for j in range(d):
        h = np.maximum(1e-6, 1e-6 * np.abs(p[:, j]))
        fwd = p.copy()
        bwd = p.copy()
        fwd[:, j] += h
        bwd[:, j] -= h
        mode = np.zeros(k, int)  # 0 central, +1 forward, -1 backward
        if mapping.seams.size:
            for s in mapping.seams:
                straddle = (bwd[:, j] < s) & (fwd[:, j] > s)
                mode[straddle & (p[:, j] > s)] = 1
                mode[straddle & (p[:, j] < s)] = -1
        mode[bwd[:, j] < mapping.lower[j]] = 1
        mode[fwd[:, j] > mapping.upper[j]] = -1
        f0 = mapping(p)
        col = np.empty((k, mapping.out_dim))
        c = mode == 0
        if c.any():
            col[c] = (mapping(fwd[c]) - mapping(bwd[c])) / (2 * h[c, None])
        for sgn in (1, -1):
            m = mode == sgn
            if m.any():
                # second-order one-sided stencil
                p1 = p[m].copy()
                p2 = p[m].copy()
                p1[:, j] += sgn * h[m]
                p2[:, j] += sgn * 2 * h[m]
                col[m] = sgn * (-3 * f0[m] + 4 * mapping(p1) - mapping(p2)) / (2 * h[m, None])
        J[:, :, j] = col
    return J[0] if single else J


def jacobian(mapping: SignalMapping, point, *, numeric: bool = False) -> np.ndarray:
    """Jacobian d mapping / d parameter at ``point`` (or a batch of points).

    Returns shape (out_dim, param_dim), or (k, out_dim, param_dim) for a
    batch.  Uses the analytic Jacobian when the mapping has one.
    """
    p, single = mapping._as_batch(point)
    _validate_points(mapping, p)
    J = None if numeric else mapping.analytic_jacobian(p)
    if J is None:
        J = finite_difference_jacobian(mapping, p)
    return J[0] if single else J


@dataclass
class MetricData:
    point: np.ndarray
    jacobian: np.ndarray
    metric_tensor: np.ndarray
    diagonal: np.ndarray
    positive_definite: bool


def metric_tensors(mapping: SignalMapping, points, *, numeric: bool = False) -> np.ndarray:
    J = jacobian(mapping, np.reshape(points, (-1, mapping.param_dim)), numeric=numeric)
    return np.einsum("kij,kil->kjl", J, J)


def metric_diagonal(mapping: SignalMapping, points, *, numeric: bool = False) -> np.ndarray:
    """g_ii at each point: squared norms of the Jacobian columns, shape (k, param_dim)."""
    J = jacobian(mapping, np.reshape(points, (-1, mapping.param_dim)), numeric=numeric)
    return np.einsum("kij,kij->kj", J, J)


def _is_pd(G):
    w = np.linalg.eigvalsh(G)
    return bool(w[0] > PD_TOL * max(w[-1], 1e-300))


def metric_tensor(mapping: SignalMapping, point, *, numeric: bool = False) -> MetricData:
    """G = J^T J at a single point."""
    p = np.asarray(point, float).reshape(mapping.param_dim)
    J = jacobian(mapping, p, numeric=numeric)
    G = J.T @ J
    G = 0.5 * (G + G.T)
    return MetricData(point=p, jacobian=J, metric_tensor=G, diagonal=np.diag(G).copy(),
                      positive_definite=_is_pd(G))


def _cholesky(G):
    if not _is_pd(G):
        raise DegenerateMetricError("metric tensor is singular at this point")
    try:
        return linalg.cho_factor(G)
    except linalg.LinAlgError as exc:
        raise DegenerateMetricError(str(exc)) from exc


def projection_matrix(mapping: SignalMapping, point, *, numeric: bool = False) -> np.ndarray:
    """Orthogonal projector J G^{-1} J^T onto the tangent space (expansion)."""
    if mapping.direction != "expansion":
        raise ValueError("projection matrix is defined for expansion mappings")
    md = metric_tensor(mapping, point, numeric=numeric)
    J = md.jacobian
    cf = _cholesky(md.metric_tensor)
    return J @ linalg.cho_solve(cf, J.T)


def metric_inverse(G: np.ndarray) -> np.ndarray:
    """G^{-1} through a Cholesky factorization; raises on degenerate G."""
    cf = _cholesky(G)
    return linalg.cho_solve(cf, np.eye(len(G)))


@dataclass
class ShapePreservationReport:
    is_shape_preserving: bool
    max_diagonal_spread: float
    max_off_diagonal: float
    alpha: float
    mean_diagonal: float


def shape_preservation_report(mapping: SignalMapping, sample_points, tol: float = 1e-6
                              ) -> ShapePreservationReport:
    """Check whether all g_ii are equal and constant and all g_ij vanish.

    Spreads are measured over the whole sample set relative to mean(g_ii).
    """
    pts = np.asarray(sample_points, float).reshape(-1, mapping.param_dim)
    if len(pts) == 0:
        raise ValueError("empty sample set")
    G = metric_tensors(mapping, pts)
    diag = np.einsum("kii->ki", G)
    mean_g = float(diag.mean())
    spread = float(diag.max() - diag.min())
    d = mapping.param_dim
    off = G[:, ~np.eye(d, dtype=bool)]
    max_off = float(np.abs(off).max()) if off.size else 0.0
    ok = spread <= tol * mean_g and max_off <= tol * mean_g
    return ShapePreservationReport(is_shape_preserving=bool(ok), max_diagonal_spread=spread,
                                   max_off_diagonal=max_off, alpha=float(np.sqrt(mean_g)),
                                   mean_diagonal=mean_g)
