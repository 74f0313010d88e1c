"""
Split-step Fourier integrator for the Lugiato-Lefever equation on a ring:

    dF/dt = -F - i theta0 F + i eta (beta/2) F_phiphi + i eta |F|^2 F  [+ S]

phi is the angle in [0, 2 pi), so Fourier modes carry integer wavenumbers.
The drive S is an optional extension (off by default); the equation reduced
from the maser Maxwell-Bloch system has none.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import TimeSeries, sech
from .errors import BlowUpError, DomainError

BLOWUP_LIMIT = 1.0e6


@dataclass(frozen=True)
class LleConfig:
    theta0: float
    eta: int
    beta: float
    grid_points: int = 256
    dt_bar: float = 1e-3
    t_bar_end: float = 1.0
    drive_amplitude: complex = 0.0
    loss_enabled: bool = True
    nonlinear_enabled: bool = True
    dealias: bool = True
    noise_seed: int = 0
    sample_stride: int = 1
    snapshot_stride: int = 0

    def __post_init__(self):
        n = self.grid_points
        if n < 16 or n & (n - 1):
            raise DomainError(f"grid_points must be a power of two >= 16, got {n}")
        if not self.dt_bar > 0:
            raise DomainError(f"dt_bar must be positive, got {self.dt_bar}")
        if self.t_bar_end < 0:
            raise DomainError("t_bar_end must be non-negative")
        if self.eta not in (1, -1):
            raise DomainError(f"eta must be +1 or -1, got {self.eta}")
        if self.sample_stride < 1 or self.snapshot_stride < 0:
            raise DomainError("strides must be positive (snapshot stride 0 disables)")
        object.__setattr__(self, "drive_amplitude", complex(self.drive_amplitude))

    @property
    def steps(self):
        return int(round(self.t_bar_end / self.dt_bar))

    @classmethod
    def from_normalized(cls, norm, **kwargs):
        return cls(theta0=norm.theta0, eta=norm.eta, beta=norm.beta, **kwargs)


@dataclass
class RingField:
    samples: np.ndarray
    t_bar: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if not np.all(np.isfinite(self.samples)):
            raise BlowUpError("ring field contains non-finite values", step=-1)

    @property
    def grid_points(self):
        return self.samples.size

    def norm_sq(self):
        """Squared L2 norm, (2 pi / N) sum |F|^2."""
        return 2 * math.pi * float(np.vdot(self.samples, self.samples).real) / self.samples.size


def ring_grid(n):
    return 2 * math.pi * np.arange(n) / n


def wavenumbers(n):
    return np.fft.fftfreq(n, d=1.0 / n)


# ---- initial conditions ----------------------------------------------------

def zero_field(n):
    return RingField(np.zeros(n, dtype=complex))


def cw_noise_field(n, cw=0.0, noise=1e-3, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return RingField(cw + noise * z / math.sqrt(2))


def sech_field(n, amplitude, center=math.pi, width=None, beta=1.0):
    """amplitude * sech((phi - center) / width); default width is the NLS
    soliton width sqrt(beta) / amplitude."""
    if width is None:
        width = math.sqrt(beta) / amplitude
    phi = ring_grid(n)
    # wrap to the nearest image so the pulse is centred on the ring
    x = (phi - center + math.pi) % (2 * math.pi) - math.pi
    return RingField(amplitude * sech(x / width))


# ---- stepping ----------------------------------------------------------------

class _Stepper:
    def __init__(self, cfg: LleConfig, n: int):
        self.cfg = cfg
        self.n = n
        k = wavenumbers(n)
        lin = -1j * cfg.theta0 - 1j * cfg.eta * cfg.beta * k * k / 2
        if cfg.loss_enabled:
            lin = lin - 1.0
        self.prop = np.exp(lin * cfg.dt_bar)
        self.drive_hat = None
        if cfg.drive_amplitude != 0:
            # exact response to a constant source: (e^{L dt} - 1) / L
            l0 = lin[0]
            gain = (self.prop[0] - 1) / l0 if l0 != 0 else cfg.dt_bar
            self.drive_hat = gain * cfg.drive_amplitude * n
        self.half = 0.5 * cfg.dt_bar * cfg.eta

    def _kerr(self, f):
        return f * np.exp(1j * self.half * (f.real ** 2 + f.imag ** 2))

    def nonlinear_half(self, f):
        if not self.cfg.nonlinear_enabled:
            return f
        if not self.cfg.dealias:
            return self._kerr(f)
        # evaluate the pointwise rotation on a 2x padded grid and truncate
        n = self.n
        h = np.fft.fft(f)
        padded = np.zeros(2 * n, dtype=complex)
        padded[: n // 2] = h[: n // 2]
        padded[-(n // 2):] = h[-(n // 2):]
        fine = np.fft.ifft(padded) * 2
        hp = np.fft.fft(self._kerr(fine)) / 2
        out = np.empty(n, dtype=complex)
        out[: n // 2] = hp[: n // 2]
        out[-(n // 2):] = hp[-(n // 2):]
        return np.fft.ifft(out)

    def linear(self, f):
        h = np.fft.fft(f) * self.prop
        if self.drive_hat is not None:
            h[0] += self.drive_hat
        return np.fft.ifft(h)

    def step(self, f):
        f = self.nonlinear_half(f)
        f = self.linear(f)
        return self.nonlinear_half(f)


def _check(f, step):
    m = np.max(np.abs(f))
    if not np.isfinite(m) or m > BLOWUP_LIMIT:
        raise BlowUpError(f"LLE blow-up at step {step}: max|F| = {m:.3g}", step=step, max_abs=m)


def lle_step(state: RingField, cfg: LleConfig) -> RingField:
    """Advance one Strang step: half Kerr rotation, exact linear step, half Kerr."""
    if state.grid_points != cfg.grid_points:
        raise DomainError("state length does not match cfg.grid_points")
    f = _Stepper(cfg, cfg.grid_points).step(state.samples)
    _check(f, 0)
    return RingField(f, state.t_bar + cfg.dt_bar)


@dataclass
class LleTrajectory:
    final: RingField
    output: TimeSeries
    snapshot_times: np.ndarray
    snapshots: np.ndarray
    norm_sq: np.ndarray = field(repr=False)
    completed: bool = True
    error: str | None = None


def run_lle(cfg: LleConfig, init: RingField) -> LleTrajectory:
    """Integrate to ``cfg.t_bar_end``.

    The recorded output is the spatial mean of the field, sampled every
    ``sample_stride`` steps. Snapshots of the full field are kept every
    ``snapshot_stride`` steps (0: first and last only).
    """
    if init.grid_points != cfg.grid_points:
        raise DomainError("init length does not match cfg.grid_points")
    stepper = _Stepper(cfg, cfg.grid_points)
    nsteps = cfg.steps
    f = init.samples.copy()
    t0 = init.t_bar
    out = [f.mean()]
    norms = [_norm_sq(f)]
    snap_t, snaps = [t0], [f.copy()]
    step = 0
    try:
        for step in range(1, nsteps + 1):
            f = stepper.step(f)
            _check(f, step)
            if step % cfg.sample_stride == 0:
                out.append(f.mean())
                norms.append(_norm_sq(f))
            if cfg.snapshot_stride and step % cfg.snapshot_stride == 0 and step != nsteps:
                snap_t.append(t0 + step * cfg.dt_bar)
                snaps.append(f.copy())
    except BlowUpError as exc:
        exc.partial = _assemble(cfg, snap_t, snaps, out, norms, snaps[-1], t0, step - 1,
                                completed=False, error=str(exc))
        raise
    snap_t.append(t0 + nsteps * cfg.dt_bar)
    snaps.append(f.copy())
    return _assemble(cfg, snap_t, snaps, out, norms, f, t0, nsteps)


def _norm_sq(f):
    return 2 * math.pi * float(np.vdot(f, f).real) / f.size


def _assemble(cfg, snap_t, snaps, out, norms, f, t0, steps_done, completed=True, error=None):
    samples = np.asarray(out)
    if samples.size < 16:
        samples = np.pad(samples, (0, 16 - samples.size), mode="edge")
    ts = TimeSeries(samples, cfg.dt_bar * cfg.sample_stride, channel="lle")
    return LleTrajectory(
        final=RingField(f, t0 + steps_done * cfg.dt_bar),
        output=ts,
        snapshot_times=np.asarray(snap_t),
        snapshots=np.asarray(snaps),
        norm_sq=np.asarray(norms),
        completed=completed,
        error=error,
    )


# ---- homogeneous states -----------------------------------------------------

def lle_cw_states(cfg: LleConfig):
    """Spatially uniform fixed points, as complex amplitudes sorted by |F|.

    For drive S the intensity I = |F|^2 solves
    I ((l)^2 + (theta0 - eta I)^2) = |S|^2 with l = 1 (loss on) or 0,
    and F = S / (l + i theta0 - i eta I).
    """
    s = cfg.drive_amplitude
    loss = 1.0 if cfg.loss_enabled else 0.0
    eta, th = cfg.eta, cfg.theta0
    nl = 1.0 if cfg.nonlinear_enabled else 0.0
    if s == 0:
        states = [0j]
        if loss == 0 and nl and eta * th > 0:
            # lossless, undriven: a circle of states with eta I = theta0
            states.append(complex(math.sqrt(eta * th)))
        return states
    s2 = abs(s) ** 2
    if not nl:
        return [s / (loss + 1j * th)] if (loss or th) else []
    # I^3 - 2 eta th I^2 + (l^2 + th^2) I - |S|^2 = 0
    coeffs = [1.0, -2 * eta * th, loss * loss + th * th, -s2]
    roots = np.roots(coeffs)
    intens = sorted(r.real for r in roots if abs(r.imag) <= 1e-9 * max(1.0, abs(r)) and r.real > 0)
    states = []
    for i0 in intens:
        i_ = _polish_intensity(coeffs, i0)
        F = s / (loss + 1j * th - 1j * eta * i_)
        # one fixed-point polish on F itself
        F = s / (loss + 1j * th - 1j * eta * abs(F) ** 2)
        if not any(abs(F - G) < 1e-9 * max(1.0, abs(F)) for G in states):
            states.append(F)
    return states


def _polish_intensity(coeffs, x):
    p = np.poly1d(coeffs)
    dp = p.deriv()
    for _ in range(50):
        d = dp(x)
        if d == 0:
            break
        step = p(x) / d
        x -= step
        if abs(step) <= 1e-16 * max(1.0, abs(x)):
            break
    return x


def lle_rhs(f, cfg: LleConfig):
    """Pointwise right-hand side with a spectral second derivative."""
    k = wavenumbers(f.size)
    fxx = np.fft.ifft(-(k * k) * np.fft.fft(f))
    r = -1j * cfg.theta0 * f + 1j * cfg.eta * cfg.beta / 2 * fxx
    if cfg.loss_enabled:
        r = r - f
    if cfg.nonlinear_enabled:
        r = r + 1j * cfg.eta * np.abs(f) ** 2 * f
    return r + cfg.drive_amplitude


def with_overrides(cfg: LleConfig, **kwargs) -> LleConfig:
    return replace(cfg, **kwargs)
