"""
Trajectory and time-series file formats. docs/FORMATS.md is the reference.

Trajectory CSV::

    # masersoliton trajectory v1
    # {"channels": [...], "grid_points": N, ...}     (one-line JSON metadata)
    t,re_<ch>_0,im_<ch>_0,...,re_<ch>_<N-1>,im_<ch>_<N-1>[, next channel...]
    <rows, every value printed with %.17g>

Series CSV::

    # masersoliton series v1
    # {"channels": [...], "dt": ...}
    t,re_<ch>,im_<ch>[,...]

A plain three-column ``t,re,im`` file (optional header row, ``#`` comments)
is also accepted on input.
"""

from __future__ import annotations

import io
import json

import numpy as np

from .analysis import TimeSeries
from .errors import ConfigError

TRAJECTORY_MAGIC = "# masersoliton trajectory v1"
SERIES_MAGIC = "# masersoliton series v1"
FMT = "%.17g"


def _meta_line(meta):
    return "# " + json.dumps(meta, sort_keys=True, separators=(", ", ": "))


def write_trajectory_csv(path, times, fields, meta):
    """``fields`` has shape (snapshots, channels, grid)."""
    fields = np.asarray(fields, dtype=complex)
    if fields.ndim == 2:
        fields = fields[:, None, :]
    ns, nc, n = fields.shape
    channels = list(meta.get("channels", [f"c{i}" for i in range(nc)]))
    meta = dict(meta, channels=channels, grid_points=n)
    cols = ["t"]
    for ch in channels:
        for j in range(n):
            cols += [f"re_{ch}_{j}", f"im_{ch}_{j}"]
    data = np.empty((ns, 1 + 2 * nc * n))
    data[:, 0] = times
    inter = np.empty((ns, nc, n, 2))
    inter[..., 0] = fields.real
    inter[..., 1] = fields.imag
    data[:, 1:] = inter.reshape(ns, -1)
    with open(path, "w", newline="\n") as fh:
        fh.write(TRAJECTORY_MAGIC + "\n")
        fh.write(_meta_line(meta) + "\n")
        fh.write(",".join(cols) + "\n")
        np.savetxt(fh, data, fmt=FMT, delimiter=",")


def write_trajectory_npz(path, times, fields, meta):
    fields = np.asarray(fields, dtype=complex)
    if fields.ndim == 2:
        fields = fields[:, None, :]
    np.savez(path, t=np.asarray(times, dtype=float), fields=fields,
             meta=np.array(json.dumps(meta, sort_keys=True)))


def read_trajectory(path):
    """Returns ``(times, fields, meta)``; fields shaped (snapshots, channels, grid)."""
    path = str(path)
    if path.endswith(".npz"):
        with np.load(path) as z:
            return z["t"], z["fields"], json.loads(str(z["meta"]))
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != TRAJECTORY_MAGIC:
            raise ConfigError(f"{path} is not a trajectory file", path=path)
        meta = json.loads(fh.readline()[2:])
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    n = meta["grid_points"]
    nc = len(meta["channels"])
    vals = data[:, 1:].reshape(data.shape[0], nc, n, 2)
    return data[:, 0], vals[..., 0] + 1j * vals[..., 1], meta


def write_series_csv(path, series, meta=None):
    """Write one or more equally sampled ``TimeSeries`` side by side."""
    if isinstance(series, TimeSeries):
        series = [series]
    n = min(len(s) for s in series)
    dt = series[0].dt
    channels = [s.channel or f"c{i}" for i, s in enumerate(series)]
    meta = dict(meta or {}, channels=channels, dt=dt)
    cols = ["t"]
    data = [dt * np.arange(n)]
    for ch, s in zip(channels, series):
        z = np.asarray(s.samples[:n], dtype=complex)
        cols += [f"re_{ch}", f"im_{ch}"]
        data += [z.real, z.imag]
    with open(path, "w", newline="\n") as fh:
        fh.write(SERIES_MAGIC + "\n")
        fh.write(_meta_line(meta) + "\n")
        fh.write(",".join(cols) + "\n")
        np.savetxt(fh, np.column_stack(data), fmt=FMT, delimiter=",")


def read_series_csv(path):
    """Read a series file (or plain t,re,im CSV) into a list of ``TimeSeries``."""
    with open(path) as fh:
        lines = fh.readlines()
    meta = {}
    body = []
    header = None
    for line in lines:
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            try:
                meta = json.loads(s[1:].strip())
            except json.JSONDecodeError:
                pass
            continue
        if header is None and not _is_numeric_row(s):
            header = s.split(",")
            continue
        body.append(s)
    if not body:
        raise ConfigError(f"{path} contains no data rows", path=str(path))
    data = np.loadtxt(io.StringIO("\n".join(body)), delimiter=",", ndmin=2)
    if data.shape[1] < 3 or (data.shape[1] - 1) % 2:
        raise ConfigError(f"{path}: expected columns t,re,im[,re,im...]", path=str(path))
    t = data[:, 0]
    dt = meta.get("dt")
    if dt is None:
        steps = np.diff(t)
        dt = float(np.mean(steps))
        if not np.allclose(steps, dt, rtol=1e-6, atol=0):
            raise ConfigError(f"{path}: time column is not uniformly sampled", path=str(path))
    nch = (data.shape[1] - 1) // 2
    names = meta.get("channels") or [None] * nch
    return [TimeSeries(data[:, 1 + 2 * i] + 1j * data[:, 2 + 2 * i], dt, names[i])
            for i in range(nch)]


def _is_numeric_row(s):
    try:
        [float(x) for x in s.split(",")]
        return True
    except ValueError:
        return False


def series_from_trajectory(path):
    """Spatial-mean series per channel from a trajectory file's snapshots."""
    t, fields, meta = read_trajectory(path)
    dt = float(np.mean(np.diff(t))) if t.size > 1 else 1.0
    return [TimeSeries(fields[:, c, :].mean(axis=-1), dt, name)
            for c, name in enumerate(meta.get("channels", []))]
