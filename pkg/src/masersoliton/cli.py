"""
Command-line entry point.

    masersoliton normalize     --config phys.json
    masersoliton simulate-lle  --config lle.json --out DIR
    masersoliton simulate-mbe  --config mbe.json --out DIR
    masersoliton sweep         --config plan.json --out DIR --threads 4
    masersoliton analyze       DATA.csv [--config analysis.json] [--out DIR]
    masersoliton occupation    NU_HZ T_K

Exit codes: 0 success, 2 configuration error, 3 domain error,
4 numerical failure (1 is reserved for a failed --check).

Flags may also come from the environment: MASERSOLITON_CONFIG, _SEED, _OUT,
_THREADS, _FORMAT. Command-line flags win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import replace

import numpy as np

from . import __version__
from .analysis import comb_spectrum, detect_pulses, fit_sech, intersoliton_periods
from .config import (build_lle, build_mbe, config_hash, lle_initial_field, load_json,
                     mbe_initial_state, validate, build_physical)
from .errors import BlowUpError, ConfigError, FitFailure, MaserError
from .formats import (read_series_csv, series_from_trajectory, write_series_csv,
                      write_trajectory_csv, write_trajectory_npz)
from .lle import run_lle
from .mbe import mbe_cw_fixed_point, run_mbe
from .presets import preset
from .params import derive_scalings, thermal_occupation, to_normalized
from .sweep import SweepPlan, analyze_output, run_sweep

log = logging.getLogger("masersoliton")

ENV_PREFIX = "MASERSOLITON_"


def _env(name, cast=str):
    v = os.environ.get(ENV_PREFIX + name)
    return cast(v) if v not in (None, "") else None


def _common(p, config_required=False):
    p.add_argument("--config", help="JSON config document")
    p.add_argument("--seed", type=int, help="noise seed (overrides the config)")
    p.add_argument("--out", help="output (run) directory")
    p.add_argument("--threads", type=int, help="worker processes for sweeps")
    p.add_argument("--format", choices=["json", "csv"], help="csv: CSV trajectories and spectra; json: binary trajectories")
    p.add_argument("--check", action="store_true", help="verify the hashes recorded in --out and exit")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="masersoliton", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("normalize", "simulate-lle", "simulate-mbe", "sweep"):
        _common(sub.add_parser(name))
    p = sub.add_parser("analyze")
    p.add_argument("data", help="series CSV (t,re,im) or trajectory file")
    _common(p)
    p = sub.add_parser("occupation")
    p.add_argument("nu", type=float, help="transition frequency (Hz)")
    p.add_argument("temperature", type=float, help="temperature (K)")
    _common(p)
    return parser


def _resolve(args):
    args.config = args.config or _env("CONFIG")
    args.seed = args.seed if args.seed is not None else _env("SEED", int)
    args.out = args.out or _env("OUT")
    args.threads = args.threads or _env("THREADS", int)
    args.format = args.format or _env("FORMAT") or "csv"
    return args


def _need_config(args):
    if not args.config:
        raise ConfigError("--config is required for this command", path="--config")
    return load_json(args.config)


# ---- run directories ---------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _finish_run(out, command, config_doc, seed, status="ok"):
    files = {}
    for name in sorted(os.listdir(out)):
        if name == "provenance.json" or os.path.isdir(os.path.join(out, name)):
            continue
        files[name] = _sha256(os.path.join(out, name))
    _write_json(os.path.join(out, "provenance.json"), {
        "command": command,
        "config_hash": config_hash(config_doc),
        "seed": seed,
        "version": __version__,
        "status": status,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "files": files,
    })


def check_run_dir(out):
    """Re-hash a run directory against its provenance. Returns a list of problems."""
    prov_path = os.path.join(out, "provenance.json")
    if not os.path.exists(prov_path):
        return [f"{prov_path} missing"]
    with open(prov_path) as fh:
        prov = json.load(fh)
    problems = []
    cfg_path = os.path.join(out, "config.json")
    if not os.path.exists(cfg_path):
        problems.append("config.json missing")
    elif config_hash(load_json(cfg_path)) != prov.get("config_hash"):
        problems.append("config.json does not match config_hash")
    for name, digest in prov.get("files", {}).items():
        path = os.path.join(out, name)
        if not os.path.exists(path):
            problems.append(f"{name} missing")
        elif _sha256(path) != digest:
            problems.append(f"{name} hash mismatch")
    return problems


def _out_dir(args, prefix, doc):
    out = args.out or f"{prefix}-{config_hash(doc)[:8]}"
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out!r}: {exc}", path="--out")
    return out


# ---- commands ------------------------------------------------------------------

def cmd_normalize(args):
    doc = _need_config(args)
    validate(doc, "normalize")
    phys = build_physical(doc["physical"])
    C = doc["C"]
    mode = doc.get("mode_index", 1)
    norm = to_normalized(phys, mode, C)
    m = mode - 1
    sc = derive_scalings(phys.g_m[m], phys.gamma_m[m], phys.gamma_a, phys.gamma_I, C)
    res = sc.residuals(phys.g_m[m], phys.gamma_m[m], phys.gamma_a, phys.gamma_I)
    result = {
        "normalized": norm.to_dict(),
        "scalings": {"zeta": sc.zeta, "xi": sc.xi, "chi": sc.chi, "C": sc.C},
        "constraint_residuals": {"field_coupling": res[0], "polarization_drive": res[1],
                                 "inversion_coupling": res[2]},
        "derived": {"gamma_I": phys.gamma_I, "gamma_a": phys.gamma_a, "D0": phys.D0,
                    "omega_0": phys.frame},
    }
    _emit(result)
    if args.out:
        out = _out_dir(args, "normalize", doc)
        _write_json(os.path.join(out, "config.json"), doc)
        _write_json(os.path.join(out, "normalized.json"), result)
        _finish_run(out, "normalize", doc, None)
    return 0


def _emit(doc):
    json.dump(doc, sys.stdout, indent=2, sort_keys=True, default=_json_default)
    sys.stdout.write("\n")


def cmd_simulate_lle(args):
    doc = _need_config(args)
    cfg, init = build_lle(doc)
    if args.seed is not None:
        cfg = replace(cfg, noise_seed=args.seed)
    run_doc = dict(doc, noise_seed=cfg.noise_seed)
    out = _out_dir(args, "lle", run_doc)
    _write_json(os.path.join(out, "config.json"), run_doc)
    field0 = lle_initial_field(cfg, init)
    meta = {"kind": "lle", "channels": ["F"], "phi_spacing": 2 * math.pi / cfg.grid_points,
            "time_unit": "t_bar", "dt": cfg.dt_bar}
    status = "ok"
    try:
        traj = run_lle(cfg, field0)
    except BlowUpError as exc:
        traj = exc.partial
        status = "failed"
        _write_json(os.path.join(out, "error.json"),
                    {"status": "failed", "error": str(exc), "step": exc.step})
    _write_trajectory(out, args.format, traj.snapshot_times, traj.snapshots, meta)
    write_series_csv(os.path.join(out, "series.csv"), [traj.output], {"kind": "lle"})
    n0 = float(traj.norm_sq[0])
    analysis = {
        "norm_sq_initial": n0,
        "norm_sq_final": float(traj.norm_sq[-1]),
        "t_bar_final": traj.final.t_bar,
        "max_abs_final": float(np.max(np.abs(traj.final.samples))),
        "completed": traj.completed,
    }
    if cfg.drive_amplitude == 0 and cfg.loss_enabled:
        expected = n0 * math.exp(-2 * traj.final.t_bar)
        analysis["norm_sq_expected"] = expected
        analysis["norm_decay_ratio"] = analysis["norm_sq_final"] / expected if expected > 0 else None
    if traj.completed:
        analysis["regime"] = analyze_output(traj.output, {"tail_fraction": 0.5})
    _write_json(os.path.join(out, "analysis.json"), analysis)
    _finish_run(out, "simulate-lle", run_doc, cfg.noise_seed, status)
    _emit({"out": out, "status": status, **{k: v for k, v in analysis.items() if k != "regime"}})
    return 0 if status == "ok" else 4


def _write_trajectory(out, fmt, times, snaps, meta):
    if fmt == "json":
        write_trajectory_npz(os.path.join(out, "trajectory.npz"), times, snaps, meta)
    else:
        write_trajectory_csv(os.path.join(out, "trajectory.csv"), times, snaps, meta)


def cmd_simulate_mbe(args):
    doc = _need_config(args)
    cfg, init = build_mbe(doc)
    if args.seed is not None:
        cfg = replace(cfg, noise_seed=args.seed)
    run_doc = dict(doc, noise_seed=cfg.noise_seed)
    out = _out_dir(args, "mbe", run_doc)
    _write_json(os.path.join(out, "config.json"), run_doc)
    state = mbe_initial_state(cfg, init, cfg.noise_seed)
    channels = ["A", "B"][: cfg.mode_count]
    meta = {"kind": "mbe", "channels": channels, "z_spacing": 2 * math.pi * cfg.radius / cfg.grid_points,
            "time_unit": "model", "dt": cfg.step_size()}
    status = "ok"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        try:
            traj = run_mbe(cfg, state)
        except BlowUpError as exc:
            traj = exc.partial
            status = "failed"
            _write_json(os.path.join(out, "error.json"),
                        {"status": "failed", "error": str(exc), "step": exc.step})
    _write_trajectory(out, args.format, traj.snapshot_times, traj.snapshots, meta)
    write_series_csv(os.path.join(out, "series.csv"), traj.outputs, {"kind": "mbe"})
    analysis = {"completed": traj.completed, "d_bound_violations": traj.d_bound_violations,
                "warnings": [str(w.message) for w in caught], "channels": {}}
    if traj.completed:
        opts = preset(doc["preset"])["analysis"] if "preset" in doc else {"tail_fraction": 0.5}
        for ch, series in zip(channels, traj.outputs):
            analysis["channels"][ch] = analyze_output(series, opts)
    if cfg.mode_count == 1 and cfg.spin_packets == 1 and cfg.gamma[0] > 0 and cfg.gamma_a > 0:
        fp = mbe_cw_fixed_point(cfg)
        analysis["fixed_point"] = {"intensity": fp.intensity, "D": fp.D, "lasing": fp.lasing,
                                   "pulled_frequency": fp.pulled_frequency, "residual": fp.residual}
    _write_json(os.path.join(out, "analysis.json"), analysis)
    _finish_run(out, "simulate-mbe", run_doc, cfg.noise_seed, status)
    labels = {ch: rep["label"] for ch, rep in analysis["channels"].items()}
    _emit({"out": out, "status": status, "labels": labels})
    return 0 if status == "ok" else 4


def cmd_sweep(args):
    doc = _need_config(args)
    out = args.out or f"sweep-{config_hash(doc)[:8]}"
    plan = SweepPlan.from_dict(doc, output_dir=out)
    if args.threads:
        plan.workers = args.threads
    if args.seed is not None:
        plan.seed = args.seed
    result = run_sweep(plan)
    failed = sum(p["status"] != "ok" for p in result.points)
    _emit({"out": out, "points": len(result.points), "failed": failed,
           "labels": [p.get("label") for p in result.points]})
    return 0


def analyze_series(series, opts):
    """Full per-channel analysis document used by ``analyze``."""
    from .analysis import classify_regime
    from .config import build_thresholds

    th = build_thresholds(opts.get("thresholds"))
    rep = classify_regime(series, th)
    doc = {"channel": series.channel, "regime": rep.to_dict()}
    if len(series) >= 64:
        spec = comb_spectrum(series, opts.get("window", "rectangular"), opts.get("k", 10.0),
                             opts.get("dynamic_range_db", 120.0))
        doc["spectrum"] = spec.to_dict()
    pulses = detect_pulses(series, th.threshold_frac, th.min_gap)
    doc["pulses"] = [{"start": p.start, "stop": p.stop, "peak": p.peak, "center": p.center} for p in pulses]
    stats = intersoliton_periods(pulses)
    doc["periods"] = {"count": stats.count,
                      "mean": stats.mean if stats.count else None,
                      "cv": stats.cv if stats.count else None}
    fits = []
    for p in pulses[: opts.get("fit_pulses", 5)]:
        try:
            fits.append(fit_sech(series, p).to_dict())
        except (FitFailure, ValueError) as exc:
            fits.append({"error": str(exc), "window": [p.start, p.stop]})
    doc["fits"] = fits
    return doc


def cmd_analyze(args):
    opts = _need_config(args) if args.config else {}
    validate(opts, "analysis")
    path = args.data
    if not os.path.exists(path):
        raise ConfigError(f"data file not found: {path}", path="data")
    with open(path) as fh:
        first = fh.readline()
    if path.endswith(".npz") or first.startswith("# masersoliton trajectory"):
        series = series_from_trajectory(path)
    else:
        series = read_series_csv(path)
    result = {"source": os.path.basename(path),
              "channels": [analyze_series(s, opts) for s in series]}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, "config.json"), opts)
        _write_json(os.path.join(args.out, "analysis.json"), result)
        if args.format == "csv":
            for i, s in enumerate(series):
                if len(s) >= 64:
                    spec = comb_spectrum(s, opts.get("window", "rectangular"))
                    np.savetxt(os.path.join(args.out, f"spectrum_{s.channel or i}.csv"),
                               np.column_stack((spec.freqs, spec.power, spec.power_db)),
                               fmt="%.17g", delimiter=",", header="frequency,power,power_db",
                               comments="")
        _finish_run(args.out, "analyze", opts, None)
    _emit(result)
    return 0


def cmd_occupation(args):
    n = thermal_occupation(args.nu, args.temperature)
    print(repr(n))
    return 0


COMMANDS = {
    "normalize": cmd_normalize,
    "simulate-lle": cmd_simulate_lle,
    "simulate-mbe": cmd_simulate_mbe,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
    "occupation": cmd_occupation,
}


def main(argv=None):
    parser = build_parser()
    args = _resolve(parser.parse_args(argv))
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.check:
        if not args.out:
            print("error: --check needs --out DIR", file=sys.stderr)
            return 2
        problems = check_run_dir(args.out)
        for p in problems:
            print(f"check: {p}", file=sys.stderr)
        if not problems:
            print(f"check: {args.out} ok")
        return 1 if problems else 0
    try:
        return COMMANDS[args.command](args)
    except MaserError as exc:
        where = f" (at {exc.path})" if getattr(exc, "path", None) else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
