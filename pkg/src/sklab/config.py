"""Sectioned key=value experiment configs.

Sections: mapping, source, channel, decoder, run.  Example::

    [mapping]
    kind = spiral_1_2
    a = 1.0

    [channel]
    csnr_db = 40

    [run]
    trials = 100000
    seed = 7
    csnr_sweep = 0:40:5
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os

import numpy as np

from .asymptotics import ChannelSpec
from .distortion import SourceSpec
from .mappings import MAPPING_KINDS, MappingSpec
from .simulation import DecoderConfig, ExperimentConfig

__all__ = ["ConfigError", "parse_config", "load_config", "config_digest", "canonical_config",
           "parse_sweep"]

SCHEMA = {
    "mapping": {"kind", "a", "alpha", "M", "N", "delta", "stretch_beta"},
    "source": {"sigma_x", "truncation"},
    "channel": {"power", "csnr_db", "noiseless"},
    "decoder": {"points_per_rms", "max_iter", "max_grid", "mmse"},
    "run": {"trials", "seed", "csnr_sweep", "anomaly_threshold", "chunk_size"},
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def _reader() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep M/N case
    return cp


def canonical_config(text: str) -> dict:
    cp = _reader()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from exc
    out = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(sec, f"unknown section; expected one of {sorted(SCHEMA)}")
        for key, val in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{sec}.{key}", "unknown key")
            out.setdefault(sec, {})[key] = val.strip()
    if "mapping" not in out or "kind" not in out["mapping"]:
        raise ConfigError("mapping.kind", "missing")
    return out


def config_digest(canon: dict) -> str:
    blob = json.dumps(canon, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def parse_sweep(text: str) -> tuple[float, ...]:
    """"a:b:step" (inclusive) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("range must be start:stop:step")
        a, b, st = map(float, parts)
        if st <= 0 or b < a:
            raise ValueError("need step > 0 and stop >= start")
        n = int(np.floor((b - a) / st + 1e-9)) + 1
        return tuple(round(a + i * st, 12) for i in range(n))
    return tuple(float(v) for v in text.split(",") if v.strip())


def _get(canon, sec, key, conv, default):
    raw = canon.get(sec, {}).get(key)
    if raw is None:
        return default
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{sec}.{key}", f"bad value {raw!r} ({exc})") from exc


def _bool(s):
    v = s.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _int(s):
    v = float(s)
    if not v.is_integer():
        raise ValueError("expected an integer")
    return int(v)


def parse_config(text: str, *, seed: int | None = None, trials: int | None = None,
                 csnr_db: float | None = None, env=None) -> tuple[ExperimentConfig, dict]:
    """Parse config text into an ExperimentConfig plus its canonical form.

    Keyword overrides win over the file; the ``SKLAB_SEED`` environment
    variable is used only when neither gives a seed.
    """
    env = os.environ if env is None else env
    canon = canonical_config(text)
    kind = canon["mapping"]["kind"]
    if kind not in MAPPING_KINDS:
        raise ConfigError("mapping.kind", f"unknown kind {kind!r}; expected one of {MAPPING_KINDS}")
    params = {}
    for key, conv in (("a", float), ("alpha", float), ("M", _int), ("N", _int)):
        v = _get(canon, "mapping", key, conv, None)
        if v is not None:
            params[key] = v
    delta = canon["mapping"].get("delta")
    if delta is not None:
        params["delta"] = "opt" if delta == "opt" else _get(canon, "mapping", "delta", float, None)
    try:
        spec = MappingSpec(kind, params, _get(canon, "mapping", "stretch_beta", float, 1.0))
        source = SourceSpec(spec.dims[0], _get(canon, "source", "sigma_x", float, 1.0),
                            _get(canon, "source", "truncation", float, 6.0))
        power = _get(canon, "channel", "power", float, 1.0)
        cdb = csnr_db if csnr_db is not None else _get(canon, "channel", "csnr_db", float, 20.0)
        channel = ChannelSpec.from_csnr_db(cdb, power)
        decoder = DecoderConfig(_get(canon, "decoder", "points_per_rms", float, 2.0),
                                _get(canon, "decoder", "max_iter", _int, 30),
                                _get(canon, "decoder", "max_grid", _int, 4_000_000),
                                _get(canon, "decoder", "mmse", _bool, False))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("config", str(exc)) from exc
    if seed is None:
        seed = _get(canon, "run", "seed", _int, None)
    if seed is None:
        try:
            seed = int(env["SKLAB_SEED"]) if "SKLAB_SEED" in env else 0
        except ValueError as exc:
            raise ConfigError("SKLAB_SEED", "not an integer") from exc
    run = {
        "csnr_sweep": _get(canon, "run", "csnr_sweep", parse_sweep, None),
        "trials": trials if trials is not None else _get(canon, "run", "trials", _int, 10_000),
        "anomaly_threshold": _get(canon, "run", "anomaly_threshold", float, 5.0),
        "noiseless": _get(canon, "channel", "noiseless", _bool, False),
        "chunk_size": _get(canon, "run", "chunk_size", _int, 4096),
    }
    try:
        cfg = ExperimentConfig(mapping=spec, source=source, channel=channel, decoder=decoder,
                               seed=seed, **run)
    except ValueError as exc:
        raise ConfigError("run", str(exc)) from exc
    return cfg, canon


def load_config(path, **kw):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text, **kw)
