"""
Parameter sweeps over the MBE or LLE solver with per-point regime analysis.

Each grid point runs independently (fresh noise seed) unless the plan asks
for ``continuation``, in which case points run in flat order and each starts
from the previous point's final state, as an adiabatic experimental sweep
would. A point that fails is recorded with its error string; it never aborts
the sweep.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .analysis import classify_regime, comb_spectrum
from .config import (build_lle, build_mbe, build_thresholds, canonical_json, config_hash,
                     lle_initial_field, mbe_initial_state, validate, SCHEMAS)
from .errors import ConfigError, SetupError
from .lle import run_lle
from .mbe import run_mbe


@dataclass
class SweepPlan:
    solver: str
    base_config: dict
    axes: list  # [(path, values)]
    seed: int = 0
    seed_policy: str = "index"
    mode: str = "fresh"
    analysis: dict = field(default_factory=dict)
    workers: int = 1
    output_dir: str | None = None
    write_series: bool = False
    max_series_bytes: int = 20_000_000
    inject_failure: tuple = ()

    def __post_init__(self):
        self.axes = [(str(p), [float(v) for v in vals]) for p, vals in self.axes]
        self.validate()

    @classmethod
    def from_dict(cls, doc, output_dir=None):
        validate(doc, "sweep")
        doc = copy.deepcopy(doc)
        axes = [(a["path"], a["values"]) for a in doc.pop("axes")]
        inject = tuple(doc.pop("inject_failure", ()))
        return cls(axes=axes, output_dir=output_dir, inject_failure=inject, **doc)

    def to_dict(self):
        return {
            "solver": self.solver,
            "base_config": self.base_config,
            "axes": [{"path": p, "values": v} for p, v in self.axes],
            "seed": self.seed,
            "seed_policy": self.seed_policy,
            "mode": self.mode,
            "analysis": self.analysis,
            "workers": self.workers,
            "write_series": self.write_series,
            "max_series_bytes": self.max_series_bytes,
            "inject_failure": list(self.inject_failure),
        }

    def result_key(self):
        """The plan minus settings that cannot change the results."""
        d = self.to_dict()
        for key in ("workers", "write_series", "max_series_bytes"):
            d.pop(key)
        return d

    def validate(self):
        if self.solver not in ("mbe", "lle"):
            raise ConfigError(f"solver must be 'mbe' or 'lle', got {self.solver!r}", path="solver")
        if not self.axes:
            raise ConfigError("a sweep needs at least one axis", path="axes")
        schema = SCHEMAS[self.solver]["properties"]
        for i, (path, values) in enumerate(self.axes):
            if not values or not all(math.isfinite(v) for v in values):
                raise ConfigError(f"axis {path!r} needs finite, non-empty values", path=f"axes.{i}.values")
            head, *rest = path.split(".")
            if head not in schema:
                raise ConfigError(f"axis path {path!r} does not resolve", path=f"axes.{i}.path")
            if head == "pump":
                if len(rest) != 1 or rest[0] not in schema["pump"]["properties"]:
                    raise ConfigError(f"axis path {path!r} does not resolve", path=f"axes.{i}.path")
            elif rest and not (len(rest) == 1 and rest[0].isdigit()):
                raise ConfigError(f"axis path {path!r} does not resolve", path=f"axes.{i}.path")
        validate(self.analysis, "analysis")

    @property
    def shape(self):
        return tuple(len(v) for _, v in self.axes)

    def points(self):
        """(flat index, multi-index, {path: value}) in C order."""
        for flat, multi in enumerate(itertools.product(*(range(len(v)) for _, v in self.axes))):
            yield flat, multi, {path: vals[i] for (path, vals), i in zip(self.axes, multi)}

    def point_seed(self, flat, values):
        if self.seed_policy == "shared":
            return self.seed
        if self.seed_policy == "abs-value":
            key = canonical_json({p: abs(v) for p, v in sorted(values.items())})
            return (self.seed + int(hashlib.sha256(key.encode()).hexdigest()[:8], 16)) % (2 ** 31)
        return self.seed + flat


def apply_overrides(base, values):
    doc = copy.deepcopy(base)
    for path, value in values.items():
        head, *rest = path.split(".")
        if not rest:
            doc[head] = value
        elif head == "pump":
            doc.setdefault("pump", {})[rest[0]] = value
        else:
            idx = int(rest[0])
            cur = doc.get(head)
            cur = [cur] if cur is None or np.isscalar(cur) else list(cur)
            while len(cur) <= idx:
                cur.append(cur[-1] if cur else 0.0)
            cur[idx] = value
            doc[head] = cur
    return doc


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def analyze_output(series, analysis):
    """Regime report plus comb summary for one output channel."""
    tail = series.tail(analysis.get("tail_fraction", 0.5))
    thresholds = build_thresholds(analysis.get("thresholds"))
    rep = classify_regime(tail, thresholds)
    out = {k: _clean(v) for k, v in rep.to_dict().items()}
    if len(tail) >= 64:
        spec = comb_spectrum(tail, analysis.get("window", "hann"), analysis.get("k", 10.0),
                             analysis.get("dynamic_range_db", 120.0))
        out["line_spacing"] = _clean(spec.line_spacing)
        out["n_lines"] = len(spec.lines)
    else:
        out["line_spacing"] = None
        out["n_lines"] = 0
    return out


def run_point(solver, config_doc, seed, analysis, init_state=None):
    """Run one configuration and analyse it. Returns ``(result dict, final state, trajectory)``."""
    if solver == "mbe":
        cfg, init = build_mbe(config_doc)
        cfg = _replace(cfg, noise_seed=seed)
        state = init_state if init_state is not None else mbe_initial_state(cfg, init, seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            traj = run_mbe(cfg, state)
        channel = analysis.get("channel", 0)
        series = traj.outputs[min(channel, len(traj.outputs) - 1)]
    else:
        cfg, init = build_lle(config_doc)
        cfg = _replace(cfg, noise_seed=seed)
        state = init_state if init_state is not None else lle_initial_field(cfg, init, seed)
        traj = run_lle(cfg, state)
        series = traj.output
    return analyze_output(series, analysis), traj.final, traj


def _replace(cfg, **kw):
    return replace(cfg, **kw)


def _worker(args):
    solver, base, values, flat, seed, analysis, inject = args
    record = {"index": flat, "params": values, "seed": seed}
    try:
        if inject:
            raise RuntimeError("injected failure")
        doc = apply_overrides(base, values)
        res, _, _ = run_point(solver, doc, seed, analysis)
        record.update(status="ok", error=None, **res)
    except Exception as exc:  # record-and-continue
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return record


@dataclass
class SweepResult:
    axes: list
    shape: tuple
    points: list  # flat C order
    provenance: dict

    def grid(self, key):
        arr = np.empty(len(self.points), dtype=object)
        for i, p in enumerate(self.points):
            arr[i] = p.get(key)
        return arr.reshape(self.shape)

    @property
    def labels(self):
        return self.grid("label")

    def to_dict(self):
        return {
            "axes": [{"path": p, "values": v} for p, v in self.axes],
            "shape": list(self.shape),
            "points": self.points,
            "provenance": self.provenance,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=False)


def _check_output_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("ok")
        os.remove(probe)
    except OSError as exc:
        raise SetupError(f"output directory {path!r} is not writable: {exc}")


def run_sweep(plan: SweepPlan) -> SweepResult:
    if plan.output_dir is not None:
        _check_output_dir(plan.output_dir)
    points = list(plan.points())
    inject = set(plan.inject_failure)
    provenance = {
        "config_hash": config_hash(plan.result_key()),
        "seed": plan.seed,
        "seed_policy": plan.seed_policy,
        "code_version": __version__,
    }
    if plan.mode == "continuation":
        records = _run_continuation(plan, points, inject)
    else:
        jobs = [(plan.solver, plan.base_config, values, flat, plan.point_seed(flat, values),
                 plan.analysis, flat in inject) for flat, _, values in points]
        if plan.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=plan.workers) as pool:
                records = list(pool.map(_worker, jobs, chunksize=1))
        else:
            records = [_worker(j) for j in jobs]
    records.sort(key=lambda r: r["index"])
    for r, (_, multi, _) in zip(records, points):
        r["grid_index"] = list(multi)
    result = SweepResult(plan.axes, plan.shape, records, provenance)
    if plan.output_dir is not None:
        _write_outputs(plan, result)
    return result


def _run_continuation(plan, points, inject):
    records = []
    state = None
    for flat, _, values in points:
        seed = plan.point_seed(flat, values)
        record = {"index": flat, "params": values, "seed": seed}
        try:
            if flat in inject:
                raise RuntimeError("injected failure")
            doc = apply_overrides(plan.base_config, values)
            res, final, _ = run_point(plan.solver, doc, seed, plan.analysis, init_state=state)
            state = final
            record.update(status="ok", error=None, **res)
        except Exception as exc:
            record.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            state = None
        records.append(record)
    return records


def _write_outputs(plan, result):
    from .formats import write_series_csv

    out = plan.output_dir
    with open(os.path.join(out, "sweep_summary.json"), "w") as fh:
        fh.write(result.to_json())
    with open(os.path.join(out, "plan.json"), "w") as fh:
        json.dump(plan.to_dict(), fh, indent=1, sort_keys=True)
    prov = dict(result.provenance, created=time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    if plan.write_series:
        budget = plan.max_series_bytes
        series_dir = os.path.join(out, "series")
        os.makedirs(series_dir, exist_ok=True)
        written = 0
        for rec, (flat, _, values) in zip(result.points, plan.points()):
            if rec["status"] != "ok":
                continue
            doc = apply_overrides(plan.base_config, values)
            _, _, traj = run_point(plan.solver, doc, rec["seed"], plan.analysis)
            series = traj.outputs if hasattr(traj, "outputs") else [traj.output]
            est = 60 * len(series[0]) * len(series)
            if written + est > budget:
                prov["series_truncated_at"] = flat
                break
            path = os.path.join(series_dir, f"point_{flat:05d}.csv")
            write_series_csv(path, series)
            written += os.path.getsize(path)
    with open(os.path.join(out, "provenance.json"), "w") as fh:
        json.dump(prov, fh, indent=1, sort_keys=True)


# ---- boundaries ---------------------------------------------------------------

def scan_transitions(values, labels, counts=None):
    """Adjacent-point changes of label or pulse count along one axis."""
    counts = counts if counts is not None else [None] * len(labels)
    events = []
    for i in range(len(labels) - 1):
        la, lb = labels[i], labels[i + 1]
        ca, cb = counts[i], counts[i + 1]
        if la == lb and ca == cb:
            continue
        kind = "label" if la != lb else ("count-decrement" if cb < ca else "count-increment")
        events.append({
            "index": i,
            "between": [values[i], values[i + 1]],
            "position": 0.5 * (values[i] + values[i + 1]),
            "kind": kind,
            "label_before": la, "label_after": lb,
            "count_before": ca, "count_after": cb,
        })
    return events


def boundary_scan(result: SweepResult, axis=0, fixed=None):
    """Regime transitions along ``axis`` with the other axes held at ``fixed``
    (a {axis: index} mapping, default index 0)."""
    fixed = dict(fixed or {})
    sl = tuple(slice(None) if a == axis else fixed.get(a, 0) for a in range(len(result.shape)))
    labels = list(result.grid("label")[sl])
    counts = list(result.grid("pulse_count")[sl])
    return scan_transitions(list(result.axes[axis][1]), labels, counts)
