"""
Measurement pipeline for maser output records: pulse detection, sech-envelope
fitting, comb spectra, summary statistics and regime classification.

Regime labels:

    "III"            continuous wave (small envelope fluctuation)
    "II"             dense soliton train
    "I"              sparse soliton train
    "sub-threshold"  mean envelope power below the absolute floor

The numeric boundaries between labels are an operational choice and live in
``RegimeThresholds``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import hilbert
from scipy.signal.windows import hann

from .errors import DomainError, FitFailure

SECH_HALF_MAX = math.acosh(2.0)  # sech(x) = 1/2 at x = arccosh 2 = 1.3170

LABEL_NAMES = {
    "I": "sparse soliton",
    "II": "dense soliton",
    "III": "continuous wave",
    "sub-threshold": "below masing threshold",
}


@dataclass
class TimeSeries:
    samples: np.ndarray
    dt: float
    channel: str | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt!r}")
        if self.samples.ndim != 1 or self.samples.size < 16:
            raise DomainError("a time series needs at least 16 samples")

    def __len__(self):
        return self.samples.size

    @property
    def t(self):
        return self.dt * np.arange(self.samples.size)

    @property
    def is_complex(self):
        return np.iscomplexobj(self.samples)

    def envelope(self):
        if self.is_complex:
            return np.abs(self.samples)
        return np.abs(hilbert(self.samples))

    def tail(self, fraction):
        """The last ``fraction`` of the record (at least 16 samples)."""
        n = max(16, int(round(self.samples.size * fraction)))
        return TimeSeries(self.samples[-n:], self.dt, self.channel)


# ---- pulses -------------------------------------------------------------------

@dataclass(frozen=True)
class PulseWindow:
    start: int
    stop: int  # exclusive
    peak: int
    center: float  # peak time

    def __len__(self):
        return self.stop - self.start


def _runs(mask):
    """(start, stop) index pairs of contiguous True runs."""
    d = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def detect_pulses(ts: TimeSeries, threshold_frac=0.5, min_gap=3):
    """Find pulse windows in the envelope of ``ts``.

    Samples above ``threshold_frac * max(envelope)`` form runs; runs separated
    by fewer than ``min_gap`` samples are merged, and each run is widened
    outward to the nearest local minima. A run spanning the whole record is
    not a pulse, so flat records give no windows.
    """
    env = ts.envelope()
    top = float(env.max()) if env.size else 0.0
    if not top > 0 or float(env.max() - env.min()) <= 1e-12 * top:
        return []
    above = env > threshold_frac * top
    runs = _runs(above)
    merged = []
    for a, b in runs:
        if merged and a - merged[-1][1] < min_gap:
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    if len(merged) == 1 and merged[0] == (0, env.size):
        return []

    windows = []
    n = env.size
    for a, b in merged:
        peak = a + int(np.argmax(env[a:b]))
        lo = a
        while lo > 0 and env[lo - 1] < env[lo]:
            lo -= 1
        hi = b - 1
        while hi < n - 1 and env[hi + 1] < env[hi]:
            hi += 1
        start, stop = lo, hi + 1
        if windows and start < windows[-1].stop:
            start = windows[-1].stop
        windows.append(PulseWindow(int(start), int(stop), int(peak), peak * ts.dt))
    return windows


@dataclass
class PulseFit:
    amplitude: float
    center: float
    width: float
    offset: float
    rms_residual: float
    iterations: int = 0
    cost_history: list = field(default_factory=list, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("cost_history")
        return d


def sech(x):
    """Overflow-free 1/cosh."""
    e = np.exp(-np.abs(x))
    return 2 * e / (1 + e * e)


def sech_model(t, amplitude, center, width, offset):
    return amplitude * sech((t - center) / width) + offset


def _sech_jacobian(t, p):
    a, t0, tau, _ = p
    u = (t - t0) / tau
    s = sech(u)
    st = a * s * np.tanh(u) / tau
    return np.column_stack((s, st, st * u, np.ones_like(t)))


def _window_bounds(window, n):
    if isinstance(window, PulseWindow):
        return window.start, window.stop
    if window is None:
        return 0, n
    a, b = window[:2]
    return int(a), int(b)


def initial_sech_guess(t, y):
    ne = max(2, y.size // 10)
    offset = float(np.median(np.concatenate((y[:ne], y[-ne:]))))
    i = int(np.argmax(y))
    amp = float(y[i]) - offset
    if not (np.isfinite(amp) and amp > 0):
        raise FitFailure("window has no peak above its edge baseline",
                         initial_guess=(amp, float(t[i]), float("nan"), offset))
    half = offset + amp / 2
    sides = []
    j = i
    while j > 0 and y[j] > half:
        j -= 1
    if y[j] <= half:
        sides.append(t[i] - (t[j] + (half - y[j]) / (y[j + 1] - y[j]) * (t[j + 1] - t[j])))
    j = i
    while j < y.size - 1 and y[j] > half:
        j += 1
    if y[j] <= half:
        sides.append((t[j - 1] + (y[j - 1] - half) / (y[j - 1] - y[j]) * (t[j] - t[j - 1])) - t[i])
    hwhm = float(np.mean(sides)) if sides else 0.25 * float(t[-1] - t[0])
    if not hwhm > 0:
        hwhm = float(t[1] - t[0])
    return np.array([amp, float(t[i]), hwhm / SECH_HALF_MAX, offset])


def fit_sech(ts: TimeSeries, window=None, max_iter=200) -> PulseFit:
    """Levenberg-Marquardt fit of A sech((t - t0)/tau) + c to a pulse envelope."""
    a, b = _window_bounds(window, len(ts))
    if b - a < 8:
        raise DomainError("fit window needs at least 8 samples")
    t = ts.t[a:b]
    y = ts.envelope()[a:b].astype(float)
    p = initial_sech_guess(t, y)
    guess = tuple(p)

    def cost_of(q):
        r = sech_model(t, *q) - y
        return float(r @ r), r

    cost, r = cost_of(p)
    history = [cost]
    lam = None
    scale = float(y @ y) or 1.0
    it = 0
    for it in range(1, max_iter + 1):
        jac = _sech_jacobian(t, p)
        h = jac.T @ jac
        g = jac.T @ r
        diag = np.diag(h).copy()
        if lam is None:
            lam = 1e-3 * float(diag.max()) if diag.max() > 0 else 1e-3
        accepted = False
        while lam <= 1e16 * max(1.0, float(diag.max())):
            try:
                delta = np.linalg.solve(h + lam * np.diag(np.maximum(diag, 1e-300)), -g)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None and np.all(np.isfinite(delta)):
                trial = p + delta
                if trial[2] > 0:
                    new_cost, new_r = cost_of(trial)
                    if new_cost <= cost:
                        accepted = True
                        break
            lam *= 10.0
        if not accepted:
            if it == 1 and not np.all(diag > 0):
                raise FitFailure("singular normal equations", initial_guess=guess)
            break
        rel = (cost - new_cost) / max(cost, 1e-300)
        step_small = np.linalg.norm(delta) <= 1e-13 * (np.linalg.norm(p) + 1e-300)
        p, cost, r = trial, new_cost, new_r
        history.append(cost)
        lam = max(lam / 10.0, 1e-300)
        if cost <= 1e-30 * scale or rel < 1e-15 or step_small:
            break
    if not np.all(np.isfinite(p)) or not p[2] > 0:
        raise FitFailure("fit diverged", initial_guess=guess)
    return PulseFit(
        amplitude=float(p[0]), center=float(p[1]), width=float(p[2]),
        offset=float(p[3]), rms_residual=math.sqrt(cost / y.size),
        iterations=it, cost_history=history,
    )


# ---- spectra ------------------------------------------------------------------

@dataclass
class CombSpectrum:
    freqs: np.ndarray
    power: np.ndarray
    lines: list  # (frequency, power), sorted by frequency
    line_spacing: float
    parseval_residual: float
    window: str = "rectangular"
    floor: float = 0.0

    @property
    def power_db(self):
        return 10 * np.log10(np.maximum(self.power, 1e-300))

    @property
    def p_peak(self):
        """Power of the dominant spectral line (largest bin)."""
        return float(self.power.max())

    @property
    def p_peak_db(self):
        return 10 * math.log10(max(self.p_peak, 1e-300))

    def to_dict(self, include_bins=False):
        d = {
            "window": self.window,
            "lines": [{"frequency": f, "power": p, "power_db": 10 * math.log10(max(p, 1e-300))}
                      for f, p in self.lines],
            "line_spacing": _nan_to_none(self.line_spacing),
            "p_peak": self.p_peak,
            "p_peak_db": self.p_peak_db,
            "floor": self.floor,
            "parseval_residual": self.parseval_residual,
        }
        if include_bins:
            d["freqs"] = self.freqs.tolist()
            d["power"] = self.power.tolist()
        return d


def _nan_to_none(x):
    return None if x is None or not np.isfinite(x) else float(x)


def comb_spectrum(ts: TimeSeries, window_fn="rectangular", k=10.0, dynamic_range_db=120.0):
    """Windowed periodogram with comb-line picking.

    Power is |DFT|^2 / N, so the bins sum to the energy of the windowed record.
    Complex records give a two-sided spectrum (fftshift order); real records a
    one-sided one. Lines are local maxima above ``median + k * MAD`` of the
    bins and within ``dynamic_range_db`` of the strongest bin.
    """
    x = ts.samples
    n = x.size
    if n < 64:
        raise DomainError("comb_spectrum needs at least 64 samples")
    if window_fn in ("rectangular", "rect", None):
        w = np.ones(n)
        window_fn = "rectangular"
    elif window_fn == "hann":
        w = hann(n, sym=False)
    else:
        raise DomainError(f"unknown window {window_fn!r}")
    xw = x * w
    if np.iscomplexobj(x):
        X = np.fft.fftshift(np.fft.fft(xw))
        freqs = np.fft.fftshift(np.fft.fftfreq(n, ts.dt))
        power = (X.real ** 2 + X.imag ** 2) / n
    else:
        X = np.fft.rfft(xw)
        freqs = np.fft.rfftfreq(n, ts.dt)
        power = (X.real ** 2 + X.imag ** 2) / n
        if n % 2 == 0:
            power[1:-1] *= 2
        else:
            power[1:] *= 2
    energy = float(np.sum(np.abs(xw) ** 2))
    residual = abs(float(power.sum()) - energy) / energy if energy > 0 else 0.0

    med = float(np.median(power))
    mad = float(np.median(np.abs(power - med)))
    top = float(power.max())
    floor = max(med + k * mad, top * 10 ** (-dynamic_range_db / 10))
    left = np.concatenate(([-np.inf], power[:-1]))
    right = np.concatenate((power[1:], [-np.inf]))
    idx = np.flatnonzero((power > left) & (power >= right) & (power > floor))
    lines = [(float(freqs[i]), float(power[i])) for i in idx]
    spacing = float(np.median(np.diff([f for f, _ in lines]))) if len(lines) > 1 else float("nan")
    return CombSpectrum(freqs, power, lines, spacing, residual, window_fn, floor)


# ---- statistics and regimes -------------------------------------------------------

@dataclass(frozen=True)
class PeriodStats:
    count: int
    mean: float
    cv: float
    periods: tuple = ()


def intersoliton_periods(pulses) -> PeriodStats:
    """Statistics of consecutive pulse-centre differences.

    ``pulses`` may be ``PulseWindow`` objects or bare centre times. CV is the
    population standard deviation over the mean.
    """
    centers = [p.center if isinstance(p, PulseWindow) else float(p) for p in pulses]
    if len(centers) < 2:
        return PeriodStats(0, float("nan"), float("nan"))
    d = np.diff(np.asarray(centers, dtype=float))
    mean = float(d.mean())
    return PeriodStats(d.size, mean, float(d.std()) / mean if mean else float("nan"), tuple(d.tolist()))


@dataclass(frozen=True)
class RegimeThresholds:
    floor_power: float = 1e-6
    cw_ratio: float = 0.05
    duty_split: float = 0.2
    dense_count: int = 20
    threshold_frac: float = 0.5
    min_gap: int = 3


@dataclass
class RegimeReport:
    label: str
    mean: float
    std: float
    mean_power: float
    pulse_count: int
    duty_cycle: float
    period_mean: float
    period_cv: float
    p_peak: float
    p_peak_db: float
    channel: str | None = None

    @property
    def name(self):
        return LABEL_NAMES[self.label]

    def to_dict(self):
        d = asdict(self)
        for key in ("period_mean", "period_cv", "p_peak_db"):
            d[key] = _nan_to_none(d[key])
        d["name"] = self.name
        return d


def classify_regime(ts: TimeSeries, thresholds: RegimeThresholds | None = None) -> RegimeReport:
    """Label a record I / II / III / sub-threshold from envelope statistics.

    Rule, applied in order: sub-threshold if mean |x|^2 < floor_power;
    III if std/mean of the envelope < cw_ratio; II if the fraction of samples
    above ``threshold_frac * max`` exceeds duty_split or more than
    dense_count pulses are found; otherwise I.
    """
    th = thresholds or RegimeThresholds()
    env = ts.envelope()
    mean = float(env.mean())
    std = float(env.std())
    power = float(np.mean(env ** 2))
    top = float(env.max())
    pulses = detect_pulses(ts, th.threshold_frac, th.min_gap)
    duty = float(np.mean(env > th.threshold_frac * top)) if top > 0 else 0.0
    stats = intersoliton_periods(pulses)
    peak = float(np.max(np.abs(np.fft.fft(ts.samples)) ** 2) / len(ts))

    if power < th.floor_power:
        label = "sub-threshold"
    elif std < th.cw_ratio * mean:
        label = "III"
    elif duty > th.duty_split or len(pulses) > th.dense_count:
        label = "II"
    else:
        label = "I"
    return RegimeReport(
        label=label, mean=mean, std=std, mean_power=power,
        pulse_count=len(pulses), duty_cycle=duty,
        period_mean=stats.mean, period_cv=stats.cv,
        p_peak=peak, p_peak_db=10 * math.log10(peak) if peak > 0 else float("nan"),
        channel=ts.channel,
    )
