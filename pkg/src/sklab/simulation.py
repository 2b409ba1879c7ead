"""Seeded Monte-Carlo harness: source -> mapping -> AWGN -> ML decoder -> error split."""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .asymptotics import ChannelSpec, db, opta_sdr, reduction_delta_opt
from .distortion import SourceSpec, approximation_distortion_bound, weak_noise_distortion
from .geometry import SignalMapping, finite_difference_jacobian
from .mappings import LinearMapping, MappingSpec, RingChainMapping, build_mapping
from .rng import NOISE_STREAM, SOURCE_STREAM, normal_chunk

__all__ = [
    "DecoderConfig",
    "ExperimentConfig",
    "PowerReport",
    "PowerEstimateError",
    "TrialRecord",
    "DistortionReport",
    "ExpansionDecoder",
    "power_normalize",
    "ml_decode_expansion",
    "encode_reduction",
    "decode_reduction",
    "classify_error",
    "classify_errors",
    "predicted_weak_rms",
    "sample_source",
    "sample_uniform_ball",
    "approximation_error",
    "run_experiment",
    "run_sweep",
    "write_trial_dump",
]

CI_Z = 1.959963984540054


class PowerEstimateError(RuntimeError):
    """Channel power of a mapping could not be estimated reliably."""


@dataclass(frozen=True)
class DecoderConfig:
    points_per_rms: float = 2.0
    max_iter: int = 30
    max_grid: int = 4_000_000
    mmse: bool = False

    def __post_init__(self):
        if self.points_per_rms < 2:
            raise ValueError("decoder grid needs >= 2 points per predicted weak-noise RMS")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")


@dataclass
class ExperimentConfig:
    mapping: MappingSpec
    source: SourceSpec = field(default_factory=SourceSpec)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    trials: int = 10_000
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    anomaly_threshold: float = 5.0
    seed: int = 0
    csnr_sweep: tuple | None = None
    noiseless: bool = False
    chunk_size: int = 4096

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.anomaly_threshold > 1:
            raise ValueError("anomaly threshold must exceed 1")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        M, _ = self.mapping.dims
        if self.source.dim != M:
            self.source = SourceSpec(M, self.source.sigma_x, self.source.truncation)
        if not 0 <= self.seed <= (1 << 64) - 1:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def at_csnr_db(self, csnr_db: float) -> "ExperimentConfig":
        cfg = ExperimentConfig(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        cfg.channel = ChannelSpec.from_csnr_db(csnr_db, self.channel.power)
        cfg.csnr_sweep = None
        return cfg


# ---------------------------------------------------------------------------
# source and power
# ---------------------------------------------------------------------------

def _truncate(x, source: SourceSpec, radial: bool):
    R = source.radius
    if radial:
        nrm = np.linalg.norm(x, axis=1, keepdims=True)
        return np.where(nrm > R, x * (R / np.maximum(nrm, 1e-300)), x)
    return np.clip(x, -R, R)


def sample_source(source: SourceSpec, n: int, rng: np.random.Generator, radial: bool = False):
    x = source.sigma_x * rng.standard_normal((n, source.dim))
    return _truncate(x, source, radial)


def sample_uniform_ball(m: int, radius: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points uniform in the m-ball of the given radius."""
    g = rng.standard_normal((n, m))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (radius * rng.random(n) ** (1.0 / m))[:, None]


@dataclass
class PowerReport:
    scale: float
    offset: np.ndarray
    achieved_power: float
    target_power: float
    raw_power: float
    rel_std_err: float
    n_points: int


def _qmc_source(source: SourceSpec, m: int, seed: int, radial: bool):
    u = qmc.Sobol(source.dim, scramble=True, seed=seed).random_base2(m)
    u = np.clip(u, 1e-16, 1 - 1e-16)
    return _truncate(source.sigma_x * stats.norm.ppf(u), source, radial)


def _channel_signal(mapping, x):
    if isinstance(mapping, RingChainMapping):
        return mapping.encode(x)
    return mapping(x)


def power_normalize(mapping: SignalMapping, source: SourceSpec, target_power: float, *,
                    log2_points: int = 17, replicates: int = 4, seed: int = 0):
    """Scale factor c with E||c (T(x) - mu)||^2 / N = target_power.

    T is the mapping itself for expansions and z = ell(p(x)) for
    reductions, where mu = E{z} is removed first.  The expectation uses
    ``replicates`` independently scrambled Sobol sets of 2^log2_points
    points each.  Returns (mapping to transmit with, PowerReport); for
    expansion the first item is the scaled mapping, for reduction the
    unchanged surface (apply scale/offset in the transmitter).
    """
    if not target_power > 0:
        raise ValueError("target power must be positive")
    reduction = mapping.direction == "reduction"
    N = mapping.N
    means, powers = [], []
    for k in range(replicates):
        x = _qmc_source(source, log2_points, seed * 7919 + k, reduction)
        with np.errstate(over="ignore", invalid="ignore"):
            s = _channel_signal(mapping, x)
        means.append(s.mean(axis=0))
        powers.append(np.mean(np.sum(s * s, axis=1)))
    mu = np.mean(means, axis=0) if reduction else np.zeros(N)
    raw = float(np.mean(powers) - (np.sum(mu * mu) if reduction else 0.0)) / N
    spread = float(np.std(powers, ddof=1) / math.sqrt(replicates) / np.mean(powers)) if replicates > 1 else 0.0
    if not math.isfinite(raw) or raw <= 0 or not spread < 0.05:
        raise PowerEstimateError(f"unstable channel power estimate (raw={raw:g}, rel spread={spread:g})")
    c = math.sqrt(target_power / raw)
    rep = PowerReport(scale=c, offset=mu, achieved_power=c * c * raw, target_power=target_power,
                      raw_power=raw, rel_std_err=spread, n_points=replicates << log2_points)
    return (mapping if reduction else mapping.scaled(c)), rep


# ---------------------------------------------------------------------------
# expansion decoding
# ---------------------------------------------------------------------------

def _safe_jacobian(mapping, x):
    # no domain/seam validation: seam hits yield inf/0 entries the callers tolerate
    with np.errstate(divide="ignore", invalid="ignore"):
        J = mapping.analytic_jacobian(x)
        if J is None:
            J = finite_difference_jacobian(mapping, x)
    return J


def predicted_weak_rms(mapping: SignalMapping, x, sigma_n: float) -> np.ndarray:
    """sqrt(sigma_n^2 sum 1/g_ii(x)): RMS norm of the weak-noise error vector."""
    J = _safe_jacobian(mapping, np.reshape(x, (-1, mapping.M)))
    g = np.einsum("kij,kij->kj", J, J)
    with np.errstate(divide="ignore"):
        return sigma_n * np.sqrt(np.sum(1.0 / g, axis=1))


class ExpansionDecoder:
    """Nearest-point ML decoder: grid search over the parameter box, then Gauss-Newton.

    The grid spacing is the smallest predicted weak-noise parameter RMS over
    the box divided by ``points_per_rms``.
    """

    def __init__(self, mapping: SignalMapping, sigma_n: float, extent: float,
                 cfg: DecoderConfig = DecoderConfig()):
        if mapping.direction != "expansion":
            raise ValueError("expansion decoder needs an expansion mapping")
        self.mapping = mapping
        self.cfg = cfg
        self.extent = float(extent)
        self.sigma_n = float(sigma_n)
        self.closed_form = isinstance(mapping, LinearMapping)
        if self.closed_form:
            return
        M = mapping.M
        ax = np.linspace(-extent, extent, 2001 if M == 1 else 41)
        probe = np.stack(np.meshgrid(*([ax] * M), indexing="ij"), -1).reshape(-1, M)
        with np.errstate(divide="ignore", invalid="ignore"):
            J = _safe_jacobian(mapping, probe)
            g = np.einsum("kij,kij->kj", J, J)
        g = g[np.all(np.isfinite(g), axis=1)]
        rms = sigma_n / math.sqrt(float(g.max())) if sigma_n > 0 else 0.0
        spacing = min(rms / cfg.points_per_rms if rms > 0 else math.inf, 2 * extent / 2000)
        n = int(math.ceil(2 * extent / spacing)) + 1
        if n ** M > cfg.max_grid:
            n = int(cfg.max_grid ** (1.0 / M))
            warnings.warn(f"decoder grid capped at {n} points per axis", RuntimeWarning, stacklevel=2)
        axis = np.linspace(-extent, extent, n)
        self.spacing = axis[1] - axis[0]
        self.grid = np.stack(np.meshgrid(*([axis] * M), indexing="ij"), -1).reshape(-1, M)
        self.tree = cKDTree(mapping(self.grid))

    def decode(self, received) -> tuple[np.ndarray, dict]:
        y = np.atleast_2d(np.asarray(received, float))
        if not np.all(np.isfinite(y)):
            raise ValueError("received vectors must be finite")
        if self.closed_form:
            xh = self.mapping.decode(y)
            if self.cfg.mmse:
                # per-component Wiener shrink for a unit-variance source
                A = self.mapping.matrix
                g = np.sum(A * A, axis=0)
                xh = xh * (g / (g + self.sigma_n ** 2))
            return xh, {"fallbacks": 0, "not_converged": 0}
        _, idx = self.tree.query(y)
        x = self.grid[idx].copy()
        r = self.mapping(x) - y
        cost = np.sum(r * r, axis=1)
        grid_cost = cost.copy()
        tol = 1e-8 * np.linalg.norm(y, axis=1)
        active = np.ones(len(y), bool)
        for _ in range(self.cfg.max_iter):
            J = _safe_jacobian(self.mapping, x[active])
            ra = r[active]
            grad = np.einsum("kij,ki->kj", J, ra)
            ok = np.all(np.isfinite(grad), axis=1)
            gn = np.linalg.norm(grad, axis=1)
            done = (gn < tol[active]) | ~ok
            ids = np.flatnonzero(active)
            active[ids[done]] = False
            if not active.any():
                break
            keep = ~done
            J, ra, grad, ids = J[keep], ra[keep], grad[keep], ids[keep]
            G = np.einsum("kij,kil->kjl", J, J)
            G += 1e-12 * np.trace(G, axis1=1, axis2=2)[:, None, None] * np.eye(G.shape[1])
            step = -np.linalg.solve(G, grad[:, :, None])[:, :, 0]
            t = np.ones(len(ids))
            moved = np.zeros(len(ids), bool)
            for _half in range(30):
                trial = x[ids] + t[:, None] * step
                rt = self.mapping(trial) - y[ids]
                ct = np.sum(rt * rt, axis=1)
                better = (ct <= cost[ids]) & ~moved
                sel = ids[better]
                x[sel], r[sel], cost[sel] = trial[better], rt[better], ct[better]
                moved |= better
                if moved.all():
                    break
                t = np.where(moved, t, 0.5 * t)
            active[ids[~moved]] = False  # cannot decrease further
        not_conv = int(active.sum())
        bad = ~np.all(np.isfinite(x), axis=1) | (cost > grid_cost)
        if bad.any():
            x[bad] = self.grid[idx[bad]]
        return x, {"fallbacks": int(bad.sum()), "not_converged": not_conv}


def ml_decode_expansion(mapping: SignalMapping, received, cfg: DecoderConfig = DecoderConfig(), *,
                        sigma_n: float = 0.01, extent: float = 6.0) -> np.ndarray:
    """ML estimate of the source vector(s) from received channel vector(s)."""
    received = np.asarray(received, float)
    single = received.ndim == 1
    xh, _ = ExpansionDecoder(mapping, sigma_n, extent, cfg).decode(received)
    return xh[0] if single else xh


# ---------------------------------------------------------------------------
# reduction coding
# ---------------------------------------------------------------------------

def encode_reduction(mapping: RingChainMapping, x) -> np.ndarray:
    """Channel parameter z = ell(p(x)) for each source vector."""
    x = np.asarray(x, float)
    single = x.ndim == 1
    z = mapping.encode(np.atleast_2d(x))
    return z[0] if single else z


def decode_reduction(mapping: RingChainMapping, z_hat) -> np.ndarray:
    z = np.clip(np.atleast_2d(np.asarray(z_hat, float)), mapping.lower, mapping.upper)
    return mapping(z)


def approximation_error(mapping: RingChainMapping, x) -> float:
    """Mean ||x - p(x)||^2 / M over the sample."""
    x = np.atleast_2d(np.asarray(x, float))
    p, _, _ = mapping.project(x)
    return float(np.sum((x - p) ** 2) / x.size)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

@dataclass
class TrialRecord:
    trial: int
    x: np.ndarray
    z: np.ndarray
    n: np.ndarray
    x_hat: np.ndarray
    squared_error: float
    classified: str = "weak"
    fold_offset: int | None = None


def classify_errors(err_norm, rms, threshold: float, fold_offset=None) -> np.ndarray:
    """Boolean anomaly flags: error beyond threshold*rms or a non-zero fold offset."""
    err_norm = np.asarray(err_norm, float)
    rms = np.asarray(rms, float)
    if np.any(rms <= 0):
        raise ValueError("predicted weak-noise RMS must be positive")
    flag = err_norm > threshold * rms
    if fold_offset is not None:
        flag |= np.asarray(fold_offset) != 0
    return flag


def classify_error(trial: TrialRecord, predicted_weak_rms: float, threshold: float = 5.0) -> str:
    err = math.sqrt(trial.squared_error * len(np.atleast_1d(trial.x)))
    flag = classify_errors(err, predicted_weak_rms, threshold, trial.fold_offset)
    return "anomalous" if bool(flag) else "weak"


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

@dataclass
class DistortionReport:
    mapping: str
    direction: str
    M: int
    N: int
    csnr_db: float
    trials: int
    seed: int
    mse: float
    sdr_db: float
    sdr_ci_db: float
    opta_db: float
    anomaly_rate: float
    weak_mse: float
    weak_contribution: float
    anomalous_contribution: float
    predicted_mse: float | None
    approx_mse: float = 0.0
    channel_mse: float = 0.0
    cross_term: float = 0.0
    approx_bound: float | None = None
    delta: float | None = None
    power_scale: float = 1.0
    achieved_power: float = 0.0
    fold_gap: float | None = None
    noise_norm_mean: float = 0.0
    noise_norm_std: float = 0.0
    decoder_fallbacks: int = 0
    decoder_not_converged: int = 0
    classifier: str = ""
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)

    def csv_row(self) -> dict:
        return {"csnr_db": self.csnr_db, "sdr_db": self.sdr_db, "sdr_ci_db": self.sdr_ci_db,
                "opta_db": self.opta_db, "anomaly_rate": self.anomaly_rate,
                "weak_mse": self.weak_mse, "approx_mse": self.approx_mse,
                "trials": self.trials, "seed": self.seed}


class _Pipeline:
    """Per-configuration state shared by all chunks (read-only once built)."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        spec = cfg.mapping
        self.reduction = spec.direction == "reduction"
        sx = cfg.source.sigma_x
        extent = cfg.source.radius
        delta = None
        if self.reduction and (spec.params.get("delta") in (None, "opt")):
            M, N = spec.dims
            delta = reduction_delta_opt(M, N, sx, cfg.channel.csnr)
        base = build_mapping(spec, extent=extent, delta=delta)
        self.delta = getattr(base, "delta", None)
        self.sigma_n = 0.0 if cfg.noiseless else cfg.channel.sigma_n
        sigma_for_grid = cfg.channel.sigma_n
        self.mapping, self.power = power_normalize(base, cfg.source, cfg.channel.power,
                                                   seed=cfg.seed & 0xFFFF)
        self.M, self.N = base.M, base.N
        if self.reduction:
            self.c = self.power.scale
            self.mu = self.power.offset
        else:
            self.decoder = ExpansionDecoder(self.mapping, sigma_for_grid, extent, cfg.decoder)

    def run_chunk(self, k: int, n: int):
        cfg = self.cfg
        cs = cfg.chunk_size
        x = cfg.source.sigma_x * normal_chunk(cfg.seed, SOURCE_STREAM, k, cs, self.M)[:n]
        x = _truncate(x, cfg.source, self.reduction)
        noise = self.sigma_n * normal_chunk(cfg.seed, NOISE_STREAM, k, cs, self.N)[:n]
        out = {"x": x, "n": noise}
        thr = cfg.anomaly_threshold
        m = self.mapping
        if self.reduction:
            z = m.encode(x)
            s = self.c * (z - self.mu)
            zh = (s + noise) / self.c + self.mu
            xh = decode_reduction(m, zh)
            p, _, _ = m.project(x)
            rms = self.sigma_n / self.c if self.sigma_n > 0 else 1.0
            fold = m.fold_offset(p, xh)
            anomalous = classify_errors(np.linalg.norm(p - xh, axis=1), np.full(n, rms), thr, fold)
            out.update(s=s, xh=xh, fold=fold, anomalous=anomalous,
                       approx=np.sum((x - p) ** 2, axis=1) / self.M,
                       chan=np.sum((p - xh) ** 2, axis=1) / self.M)
            diag = {"fallbacks": 0, "not_converged": 0}
        else:
            s = m(x)
            xh, diag = self.decoder.decode(s + noise)
            err = np.linalg.norm(x - xh, axis=1)
            if m.folded and self.sigma_n > 0:
                fold = m.fold_offset(x[:, 0], xh[:, 0])
                rms = predicted_weak_rms(m, x, self.sigma_n)
                rms = np.where(np.isfinite(rms) & (rms > 0), rms, np.inf)
                anomalous = classify_errors(err, rms, thr, fold)
            else:
                # unfolded (linear) mappings have no anomalous errors
                fold = None
                anomalous = np.zeros(n, bool)
            out.update(s=s, xh=xh, fold=fold, anomalous=anomalous)
        out["se"] = np.sum((x - xh) ** 2, axis=1) / self.M
        out["diag"] = diag
        return out


def _predicted(pipe: _Pipeline):
    cfg = pipe.cfg
    try:
        if pipe.reduction:
            # ring chains are unit speed, so the channel distortion is constant
            return (pipe.sigma_n / pipe.c) ** 2 / pipe.M
        if isinstance(pipe.mapping, LinearMapping) or pipe.mapping.M == 1:
            return weak_noise_distortion(pipe.mapping, cfg.source, pipe.sigma_n)
    except Exception:  # prediction is advisory only
        return None
    return None


def run_experiment(cfg: ExperimentConfig, *, jobs: int = 1, keep_trials: bool = False):
    """Run one configuration; returns DistortionReport (and trial arrays if requested)."""
    if cfg.csnr_sweep:
        raise ValueError("config has a csnr sweep; use run_sweep")
    pipe = _Pipeline(cfg)
    cs = cfg.chunk_size
    n_chunks = -(-cfg.trials // cs)
    sizes = [min(cs, cfg.trials - k * cs) for k in range(n_chunks)]
    if jobs > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(pipe.run_chunk, range(n_chunks), sizes))
    else:
        parts = [pipe.run_chunk(k, n) for k, n in enumerate(sizes)]

    def cat(key):
        return np.concatenate([p[key] for p in parts])

    se = cat("se")
    anomalous = cat("anomalous")
    T = cfg.trials
    mse = float(np.sum(se) / T)
    weak = ~anomalous
    n_weak = int(weak.sum())
    weak_mse = float(np.sum(se[weak]) / n_weak) if n_weak else math.nan
    sx2 = cfg.source.variance
    std = float(np.std(se, ddof=1)) if T > 1 else math.nan
    ci = CI_Z * std / math.sqrt(T) / mse * 10.0 / math.log(10.0) if (T > 1 and mse > 0) else math.nan
    noise = cat("n")
    warn = []
    if T < 1000:
        warn.append(f"low trial count ({T}); confidence interval is unreliable")
    if pipe.sigma_n > 0:
        nn = np.linalg.norm(noise, axis=1) / math.sqrt(pipe.N) / pipe.sigma_n
        nn_mean, nn_std = float(np.mean(nn)), float(np.std(nn))
    else:
        nn_mean = nn_std = 0.0
    fall = sum(p["diag"]["fallbacks"] for p in parts)
    nconv = sum(p["diag"]["not_converged"] for p in parts)
    if fall:
        warn.append(f"{fall} decodes fell back to the best grid point")
    r = pipe.N / pipe.M
    rep = DistortionReport(
        mapping=pipe.mapping.name, direction=pipe.mapping.direction, M=pipe.M, N=pipe.N,
        csnr_db=cfg.channel.csnr_db, trials=T, seed=cfg.seed, mse=mse,
        sdr_db=db(sx2 / mse) if mse > 0 else math.inf, sdr_ci_db=ci,
        opta_db=db(opta_sdr(cfg.channel.csnr, r)), anomaly_rate=float(anomalous.sum() / T),
        weak_mse=weak_mse, weak_contribution=float(np.sum(se[weak]) / T),
        anomalous_contribution=float(np.sum(se[anomalous]) / T),
        predicted_mse=_predicted(pipe), power_scale=pipe.power.scale,
        achieved_power=pipe.power.achieved_power,
        noise_norm_mean=nn_mean, noise_norm_std=nn_std,
        decoder_fallbacks=fall, decoder_not_converged=nconv,
        classifier=(f"anomalous if ||error|| > {cfg.anomaly_threshold:g} x predicted weak RMS "
                    "or decoded fold differs" if pipe.mapping.folded else
                    "unfolded mapping: no anomalous errors"),
        warnings=warn)
    if pipe.reduction:
        approx = float(np.sum(cat("approx")) / T)
        chan = float(np.sum(cat("chan")) / T)
        rep.approx_mse, rep.channel_mse = approx, chan
        rep.cross_term = mse - approx - chan
        rep.delta = pipe.delta
        rep.approx_bound = approximation_distortion_bound(pipe.M, pipe.N, pipe.delta)
    elif getattr(pipe.mapping, "fold_gap", None) is not None:
        rep.fold_gap = pipe.mapping.fold_gap
    if keep_trials:
        trials = {"x": cat("x"), "s": cat("s"), "n": noise, "x_hat": cat("xh"), "se": se,
                  "anomalous": anomalous}
        if parts[0]["fold"] is not None:
            trials["fold"] = cat("fold")
        return rep, trials
    return rep


def run_sweep(cfg: ExperimentConfig, *, jobs: int = 1) -> list[DistortionReport]:
    sweep = cfg.csnr_sweep or (cfg.channel.csnr_db,)
    return [run_experiment(cfg.at_csnr_db(c), jobs=jobs) for c in sweep]


def write_trial_dump(path, trials: dict) -> None:
    """One line per trial: trial, x..., s..., n..., x_hat..., se, class (17 significant digits)."""
    x, s, n, xh = trials["x"], trials["s"], trials["n"], trials["x_hat"]
    header = (["trial"] + [f"x{i}" for i in range(x.shape[1])] + [f"s{i}" for i in range(s.shape[1])]
              + [f"n{i}" for i in range(n.shape[1])] + [f"xhat{i}" for i in range(xh.shape[1])]
              + ["se", "class"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(len(x)):
            vals = np.concatenate([x[t], s[t], n[t], xh[t], [trials["se"][t]]])
            w.writerow([t] + [f"{v:.17g}" for v in vals]
                       + ["anomalous" if trials["anomalous"][t] else "weak"])
