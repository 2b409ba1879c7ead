"""Command line front end: ``sklab predict | simulate | pdf``.

Errors go to stderr as a single line ``sklab-error: <kind>: <detail>``;
exit code 2 for bad arguments or configs, 3 for runtime failures.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import DEFAULT_P_ANOMALY, predict
from .config import ConfigError, config_digest, load_config
from .simulation import run_experiment, write_trial_dump
from .special import _pdf, noise_norm_pdf

PREDICT_COLUMNS = ["N", "M", "r", "csnr_db", "d_total", "sdr_db", "opta_db", "gap_db"]
SWEEP_COLUMNS = ["csnr_db", "sdr_db", "sdr_ci_db", "opta_db", "anomaly_rate", "weak_mse",
                 "approx_mse", "trials", "seed"]


class CliError(Exception):
    def __init__(self, kind, message, code=2):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("invalid-argument", message.replace("\n", " "))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_table(rows, columns, fmt, out):
    if fmt == "json":
        text = json.dumps([{c: r[c] for c in columns} for r in rows], indent=2, allow_nan=True) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
        text = buf.getvalue()
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
    return text


def _list(field, conv):
    def parse(s):
        try:
            vals = [conv(v) for v in s.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"{field}: cannot parse {s!r}")
        if not vals:
            raise argparse.ArgumentTypeError(f"{field}: empty list")
        return vals
    return parse


def _posint(s):
    v = int(s)
    if v < 1:
        raise ValueError
    return v


def _seed(s):
    v = int(s)
    if not 0 <= v < 1 << 64:
        raise ValueError
    return v


# ---------------------------------------------------------------------------

def cmd_predict(args):
    direction = args.direction
    if args.r is None:
        raise CliError("invalid-argument", "--r: required")
    if direction == "expansion":
        dims = args.N
        if dims is None:
            raise CliError("invalid-argument", "--N: required for expansion")
        model = args.model or "finite"
    else:
        dims = args.M
        if dims is None:
            raise CliError("invalid-argument", "--M: required for reduction")
        model = args.model or "asymptotic"
    if not 0 < args.p_anomaly < 1:
        raise CliError("invalid-argument", "--p-anomaly: must lie in (0, 1)")
    rows = []
    for cdb in args.csnr_db:
        for d in dims:
            try:
                pred = predict(direction, args.r, d, 10.0 ** (cdb / 10.0), model=model,
                               p_anomaly=args.p_anomaly)
            except ValueError as exc:
                field = "--N" if direction == "expansion" else "--M"
                raise CliError("invalid-argument", f"{field}/--r: {exc}") from exc
            row = pred.row()
            row["csnr_db"] = cdb
            rows.append(row)
    _write_table(rows, PREDICT_COLUMNS, args.format, args.out)
    return 0


def cmd_pdf(args):
    if args.sigma_n <= 0:
        raise CliError("invalid-argument", "--sigma-n: must be positive")
    if any(n < 2 for n in args.N):
        raise CliError("invalid-argument", "--N: noise-norm pdf needs N >= 2")
    rho_max = args.rho_max if args.rho_max is not None else 4.0 * args.sigma_n
    if rho_max <= 0 or args.points < 2:
        raise CliError("invalid-argument", "--rho-max/--points: need rho_max > 0 and points >= 2")
    rho = np.linspace(0.0, rho_max, args.points)
    rows = []
    for n in args.N:
        noise_norm_pdf(rho[:1], n, args.sigma_n)  # argument validation
        for x, f in zip(rho, _pdf(rho, n, args.sigma_n)):
            rows.append({"N": n, "rho": float(x), "pdf": float(f)})
    _write_table(rows, ["N", "rho", "pdf"], args.format, args.out)
    return 0


def _report_json(rep):
    d = rep.as_dict()
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def cmd_simulate(args):
    started = datetime.now(timezone.utc).isoformat()
    csnr_override = args.csnr_db[0] if args.csnr_db else None
    if args.csnr_db and len(args.csnr_db) > 1:
        raise CliError("invalid-argument", "--csnr-db: simulate takes one value (use run.csnr_sweep)")
    try:
        cfg, canon = load_config(args.config, seed=args.seed, trials=args.trials,
                                 csnr_db=csnr_override)
    except ConfigError as exc:
        raise CliError("config", str(exc)) from exc
    if args.jobs < 1:
        raise CliError("invalid-argument", "--jobs: must be >= 1")
    effective = copy.deepcopy(canon)
    effective.setdefault("run", {})["seed"] = str(cfg.seed)
    effective["run"]["trials"] = str(cfg.trials)
    if csnr_override is not None:
        effective.setdefault("channel", {})["csnr_db"] = repr(float(csnr_override))
        effective["run"].pop("csnr_sweep", None)
        cfg.csnr_sweep = None
    outdir = Path(args.out or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    sweep = cfg.csnr_sweep or (cfg.channel.csnr_db,)
    reports, files = [], []
    try:
        for c in sweep:
            sub = cfg.at_csnr_db(c) if cfg.csnr_sweep else cfg
            if args.dump_trials and len(sweep) == 1:
                rep, trials = run_experiment(sub, jobs=args.jobs, keep_trials=True)
                write_trial_dump(args.dump_trials, trials)
                files.append(str(args.dump_trials))
            else:
                rep = run_experiment(sub, jobs=args.jobs)
            rep.csnr_db = float(c)
            reports.append(rep)
    except Exception as exc:  # noqa: BLE001
        if reports:
            _write_table([r.csv_row() for r in reports], SWEEP_COLUMNS, "csv",
                         outdir / "sweep.partial.csv")
        note = f"partial results for {len(reports)}/{len(sweep)} points in sweep.partial.csv" \
            if reports else "no results"
        raise CliError("runtime", f"{type(exc).__name__}: {exc}; {note}", code=3) from exc
    csv_path = outdir / "sweep.csv"
    _write_table([r.csv_row() for r in reports], SWEEP_COLUMNS, "csv", csv_path)
    rep_path = outdir / "report.json"
    rep_path.write_text(json.dumps([_report_json(r) for r in reports], indent=2, default=_jsonable)
                        + "\n")
    files = [str(csv_path), str(rep_path)] + files
    manifest = {"config_digest": config_digest(effective), "config": effective,
                "version": __version__, "seed": cfg.seed, "started": started,
                "finished": datetime.now(timezone.utc).isoformat(), "files": files}
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    if args.format == "json":
        sys.stdout.write(rep_path.read_text())
    else:
        sys.stdout.write(csv_path.read_text())
    return 0


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


# ---------------------------------------------------------------------------

def _direction(s):
    v = s.lower()
    if v in ("expand", "expansion"):
        return "expansion"
    if v in ("reduce", "reduction"):
        return "reduction"
    raise argparse.ArgumentTypeError(f"--direction: expected expand or reduce, got {s!r}")


def build_parser():
    p = _Parser(prog="sklab", description="Shannon-Kotel'nikov mapping predictions and simulations")
    p.add_argument("--version", action="version", version=f"sklab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pr = sub.add_parser("predict", help="closed-form distortion predictions")
    pr.add_argument("--direction", type=_direction, required=True)
    pr.add_argument("--r", type=float)
    pr.add_argument("--N", type=_list("--N", _posint))
    pr.add_argument("--M", type=_list("--M", _posint))
    pr.add_argument("--csnr-db", type=_list("--csnr-db", float), required=True)
    pr.add_argument("--model", choices=["asymptotic", "finite"])
    pr.add_argument("--p-anomaly", type=float, default=DEFAULT_P_ANOMALY)
    pr.add_argument("--format", choices=["csv", "json"], default="csv")
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_predict)

    sm = sub.add_parser("simulate", help="Monte-Carlo experiment from a config file")
    sm.add_argument("config")
    sm.add_argument("--trials", type=_posint)
    sm.add_argument("--seed", type=_seed)
    sm.add_argument("--jobs", type=int, default=1)
    sm.add_argument("--csnr-db", type=_list("--csnr-db", float))
    sm.add_argument("--out", help="output directory")
    sm.add_argument("--format", choices=["csv", "json"], default="csv")
    sm.add_argument("--dump-trials", help="per-trial dump file (single-CSNR runs)")
    sm.set_defaults(func=cmd_simulate)

    pd = sub.add_parser("pdf", help="normalized noise-norm density curves")
    pd.add_argument("--N", type=_list("--N", int), required=True)
    pd.add_argument("--sigma-n", type=float, default=0.1)
    pd.add_argument("--rho-max", type=float, help="grid end (default 4 sigma_n)")
    pd.add_argument("--points", type=int, default=1001)
    pd.add_argument("--format", choices=["csv", "json"], default="csv")
    pd.add_argument("--out")
    pd.set_defaults(func=cmd_pdf)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"sklab-error: {exc.kind}: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, OSError) as exc:
        print(f"sklab-error: invalid-argument: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
