"""
Dual-mode Maxwell-Bloch integrator on a ring.

Works in the normalized variables (atom rotating frame, scaled F, J, D):

    dF_m/dt + c dF_m/dz = -(gamma_m/2) [(1 + i theta_m) F_m + 2 C_m <J>_m]
    dJ_p/dt             = -(gamma_a/2) [(1 + i Delta_p) J_p - sum_m F_m D_p]
    dD_p/dt             = -gamma_I [D_p - D0/chi + 1/2 sum_m (F_m* J_p + J_p* F_m)]

``p`` runs over spin packets (a discrete Lorentzian quadrature of an
inhomogeneous line; one packet reproduces the homogeneous equations) and
``<J>_m`` is the weighted packet sum seen by mode m. The two modes do not
couple directly; they interact only through the shared J and D.

The lab-frame equations carry the carrier frequencies explicitly; moving to a
frame rotating at omega_0 and substituting J -> iJ turns them into the form
above with theta = 2(omega_0 - omega_m)/gamma_m, Delta = 2(omega_0 - omega_a)/gamma_a.

Time stepping is a Lawson (integrating-factor) RK4: advection is applied
exactly in Fourier space along the ring, the local terms by classical RK4.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .analysis import TimeSeries
from .errors import BlowUpError, DomainError
from .params import PhysicalParams, derive_scalings, mode_cooperativities, normalized_rhs

BLOWUP_LIMIT = 1.0e6


@dataclass(frozen=True)
class MbeConfig:
    theta: tuple = (0.0,)
    gamma: tuple = (1.0,)
    C: tuple = (1.0,)
    delta: float = 0.0
    gamma_a: float = 1.0
    gamma_i: float = 1.0
    d0_over_chi: float = -1.0
    grid_points: int = 1
    c_eff: float = 0.0
    radius: float = 1.0 / (2 * math.pi)
    dt: float | None = None
    t_end: float = 100.0
    spin_packets: int = 1
    packet_spread: float = 0.0
    packet_sharing: str = "shared"
    noise_amplitude: float = 1e-3
    noise_seed: int = 0
    sample_stride: int = 1
    snapshot_stride: int = 0
    readout: str = "mean"

    def __post_init__(self):
        for name in ("theta", "gamma", "C"):
            value = getattr(self, name)
            if np.isscalar(value):
                value = (value,)
            object.__setattr__(self, name, tuple(float(v) for v in value))
        m = len(self.theta)
        if m not in (1, 2) or len(self.gamma) != m or len(self.C) != m:
            raise DomainError("theta, gamma and C need one entry per mode (1 or 2 modes)")
        if min(self.gamma) < 0 or self.gamma_a < 0 or self.gamma_i < 0 or min(self.C) < 0:
            raise DomainError("rates and cooperativities must be non-negative")
        n = self.grid_points
        if n < 1 or n & (n - 1):
            raise DomainError(f"grid_points must be a power of two, got {n}")
        if self.spin_packets < 1:
            raise DomainError("spin_packets must be >= 1")
        if self.packet_sharing not in ("shared", "disjoint"):
            raise DomainError(f"packet_sharing must be 'shared' or 'disjoint'")
        if self.packet_sharing == "disjoint" and self.spin_packets < m:
            raise DomainError("disjoint packet sharing needs at least one packet per mode")
        if self.dt is not None and not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0 or self.radius <= 0 or self.c_eff < 0:
            raise DomainError("t_end, radius and c_eff must be non-negative (radius positive)")
        if self.readout not in ("mean", "probe"):
            raise DomainError(f"readout must be 'mean' or 'probe'")
        if self.sample_stride < 1 or self.snapshot_stride < 0:
            raise DomainError("strides must be positive (snapshot stride 0 disables)")

    @property
    def mode_count(self):
        return len(self.theta)

    def packet_detunings(self):
        """Lorentzian-quantile nodes around delta, equal weights."""
        M = self.spin_packets
        q = (np.arange(M) + 0.5) / M
        offsets = self.packet_spread * np.tan(np.pi * (q - 0.5))
        return self.delta + offsets, np.full(M, 1.0 / M)

    def coupling(self):
        """Indicator matrix (modes x packets) of which packets each mode sees."""
        m, M = self.mode_count, self.spin_packets
        if self.packet_sharing == "shared" or m == 1:
            return np.ones((m, M))
        # contiguous blocks: lowest theta gets the lowest-detuning packets
        order = np.argsort(self.theta, kind="stable")
        blocks = np.array_split(np.arange(M), m)
        a = np.zeros((m, M))
        for mode, idx in zip(order, blocks):
            a[mode, idx] = 1.0
        return a

    def stiffness(self):
        deltas, _ = self.packet_detunings()
        rates = [g / 2 * abs(1 + 1j * th) for g, th in zip(self.gamma, self.theta)]
        rates.append(self.gamma_a / 2 * float(np.max(np.abs(1 + 1j * deltas))))
        rates.append(self.gamma_i)
        return max(rates)

    def step_size(self):
        if self.dt is not None:
            return self.dt
        candidates = []
        g = self.stiffness()
        if g > 0:
            candidates.append(0.1 / g)
        if self.c_eff > 0 and self.grid_points > 1:
            dz = 2 * math.pi * self.radius / self.grid_points
            candidates.append(0.1 * dz / self.c_eff)
        if not candidates:
            return self.t_end / 1000 if self.t_end > 0 else 1.0
        dt = min(candidates)
        # land exactly on t_end
        return self.t_end / max(1, math.ceil(self.t_end / dt)) if self.t_end > 0 else dt

    @property
    def steps(self):
        return int(round(self.t_end / self.step_size()))

    @property
    def round_trip_time(self):
        return 2 * math.pi * self.radius / self.c_eff if self.c_eff > 0 else math.inf

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for name in ("theta", "gamma", "C"):
            d[name] = list(d[name])
        return d

    @classmethod
    def from_physical(cls, phys: PhysicalParams, C: float, mode_indices=(1, 2), **kwargs):
        """Build a normalized config from SI parameters in the frame ``phys.frame``.

        The pump parameter enters as D0/chi with chi taken from mode 1's
        scaling; other modes get cooperativities that share that scaling.
        Time stays in seconds, so rates remain in rad/s.
        """
        idx = [i - 1 for i in mode_indices]
        w0 = phys.frame
        g_m = [phys.g_m[i] for i in idx]
        gamma_m = [phys.gamma_m[i] for i in idx]
        sc = derive_scalings(g_m[0], gamma_m[0], phys.gamma_a, phys.gamma_I, C)
        return cls(
            theta=tuple(2 * (w0 - phys.omega_m[i]) / phys.gamma_m[i] for i in idx),
            gamma=tuple(gamma_m),
            C=mode_cooperativities(g_m, gamma_m, C),
            delta=2 * (w0 - phys.omega_a) / phys.gamma_a,
            gamma_a=phys.gamma_a,
            gamma_i=phys.gamma_I,
            d0_over_chi=phys.D0 / sc.chi,
            c_eff=phys.c_eff,
            radius=phys.radius,
            **kwargs,
        )


@dataclass
class MbeState:
    F: np.ndarray  # (modes, grid) complex
    J: np.ndarray  # (packets, grid) complex
    D: np.ndarray  # (packets, grid) real
    t: float = 0.0

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=complex))
        self.J = np.atleast_2d(np.asarray(self.J, dtype=complex))
        self.D = np.atleast_2d(np.asarray(self.D, dtype=float))

    def copy(self):
        return MbeState(self.F.copy(), self.J.copy(), self.D.copy(), self.t)

    def check_shapes(self, cfg: MbeConfig):
        n = cfg.grid_points
        if self.F.shape != (cfg.mode_count, n):
            raise DomainError(f"F has shape {self.F.shape}, expected {(cfg.mode_count, n)}")
        if self.J.shape != (cfg.spin_packets, n) or self.D.shape != (cfg.spin_packets, n):
            raise DomainError("J/D shapes do not match (spin_packets, grid_points)")


def trivial_state(cfg: MbeConfig) -> MbeState:
    n = cfg.grid_points
    return MbeState(
        np.zeros((cfg.mode_count, n), complex),
        np.zeros((cfg.spin_packets, n), complex),
        np.full((cfg.spin_packets, n), cfg.d0_over_chi),
    )


def noise_state(cfg: MbeConfig, seed=None, amplitude=None) -> MbeState:
    """Trivial equilibrium plus complex Gaussian noise on the fields."""
    rng = np.random.default_rng(cfg.noise_seed if seed is None else seed)
    amp = cfg.noise_amplitude if amplitude is None else amplitude
    s = trivial_state(cfg)
    shape = s.F.shape
    s.F = amp * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
    return s


class _Stepper:
    def __init__(self, cfg: MbeConfig):
        self.cfg = cfg
        self.h = cfg.step_size()
        self.gam = np.asarray(cfg.gamma)[:, None]
        self.lin_f = (-np.asarray(cfg.gamma) / 2 * (1 + 1j * np.asarray(cfg.theta)))[:, None]
        self.cfac = (np.asarray(cfg.gamma) * np.asarray(cfg.C))[:, None]
        deltas, weights = cfg.packet_detunings()
        self.lin_j = (-cfg.gamma_a / 2 * (1 + 1j * deltas))[:, None]
        A = cfg.coupling()
        self.A = A
        self.K = A * weights[None, :]  # modes x packets
        self.ga2 = cfg.gamma_a / 2
        self.gi = cfg.gamma_i
        self.d0 = cfg.d0_over_chi
        n = cfg.grid_points
        self.advect = cfg.c_eff > 0 and n > 1
        if self.advect:
            k = np.fft.fftfreq(n, d=1.0 / n)
            self.e_half = np.exp(-1j * cfg.c_eff * k * (self.h / 2) / cfg.radius)
            self.e_full = self.e_half * self.e_half

    def rhs(self, F, J, D):
        dF = self.lin_f * F - self.cfac * (self.K @ J)
        drive = self.A.T @ F  # sum of coupled fields, per packet
        dJ = self.lin_j * J + self.ga2 * drive * D
        dD = -self.gi * (D - self.d0 + np.real(np.conj(drive) * J))
        return dF, dJ, dD

    def _E(self, F, which):
        if not self.advect:
            return F
        mult = self.e_half if which == "half" else self.e_full
        return np.fft.ifft(np.fft.fft(F, axis=-1) * mult, axis=-1)

    def step(self, F, J, D):
        h = self.h
        E = self._E
        k1 = self.rhs(F, J, D)
        a = (E(F + h / 2 * k1[0], "half"), J + h / 2 * k1[1], D + h / 2 * k1[2])
        k2 = self.rhs(*a)
        Fh = E(F, "half")
        b = (Fh + h / 2 * k2[0], J + h / 2 * k2[1], D + h / 2 * k2[2])
        k3 = self.rhs(*b)
        c = (E(F, "full") + h * E(k3[0], "half"), J + h * k3[1], D + h * k3[2])
        k4 = self.rhs(*c)
        Fn = E(F + h / 6 * k1[0], "full") + h / 6 * (2 * E(k2[0] + k3[0], "half") + k4[0])
        Jn = J + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        Dn = D + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        return Fn, Jn, Dn


def _check(F, J, step):
    m = float(np.max(np.abs(F)))
    if not np.isfinite(m) or not np.all(np.isfinite(J)):
        raise BlowUpError(f"MBE produced non-finite values at step {step}", step=step, max_abs=m)
    if m > BLOWUP_LIMIT:
        raise BlowUpError(f"MBE blow-up at step {step}: max|F| = {m:.3g}", step=step, max_abs=m)


def mbe_step(state: MbeState, cfg: MbeConfig) -> MbeState:
    state.check_shapes(cfg)
    st = _Stepper(cfg)
    F, J, D = st.step(state.F, state.J, state.D)
    _check(F, J, 0)
    return MbeState(F, J, D, state.t + st.h)


@dataclass
class FixedPoint:
    intensity: float
    D: float
    lasing: bool
    pulled_frequency: float  # F(t) ~ exp(-i nu t)
    effective_delta: float
    j_over_f: complex
    residual: float

    def state(self, cfg: MbeConfig, phase=0.0) -> MbeState:
        n = cfg.grid_points
        amp = math.sqrt(max(self.intensity, 0.0)) * np.exp(1j * phase)
        return MbeState(
            np.full((1, n), amp, complex),
            np.full((1, n), amp * self.j_over_f, complex),
            np.full((1, n), self.D),
        )


def mbe_cw_fixed_point(cfg: MbeConfig) -> FixedPoint:
    """Closed-form homogeneous single-mode steady state.

    In a frame rotating with the lasing frequency the stationary equations
    force theta' = -Delta'. If the configured theta != -Delta, the state
    oscillates at the pulled frequency nu = (theta + Delta) gamma gamma_a /
    (2 (gamma + gamma_a)); it is reported rather than treated as an error.
    Then D = -(1 + Delta'^2)/(2C) and |F|^2 = (1 + Delta'^2)((D0/chi)/D - 1).
    """
    if cfg.mode_count != 1 or cfg.spin_packets != 1:
        raise DomainError("closed-form fixed point needs one mode and one spin packet")
    gamma, C, theta = cfg.gamma[0], cfg.C[0], cfg.theta[0]
    ga, delta, d0 = cfg.gamma_a, cfg.delta, cfg.d0_over_chi
    if gamma <= 0 or ga <= 0:
        raise DomainError("fixed point needs positive gamma and gamma_a")
    nu = (theta + delta) * gamma * ga / (2 * (gamma + ga))
    d_eff = delta - 2 * nu / ga
    lasing = False
    intensity, D, jf = 0.0, d0, 0j
    if C > 0:
        D_las = -(1 + d_eff * d_eff) / (2 * C)
        I = (1 + d_eff * d_eff) * (d0 / D_las - 1)
        if I > 0:
            lasing, intensity, D = True, I, D_las
            jf = D / (1 + 1j * d_eff)
    if not lasing:
        nu = 0.0
    F = complex(math.sqrt(intensity))
    J = F * jf
    dF, dJ, dD = normalized_rhs(F, J, D, theta=theta, delta=delta, C=C, gamma=gamma,
                                gamma_a=ga, gamma_I=cfg.gamma_i, d0_over_chi=d0)
    res = max(abs(dF + 1j * nu * F), abs(dJ + 1j * nu * J), abs(dD))
    return FixedPoint(intensity, D, lasing, nu, d_eff, jf, float(res))


def lasing_threshold(cfg: MbeConfig) -> float:
    """Value of D0/chi at which the single-mode homogeneous intensity vanishes."""
    gamma, ga = cfg.gamma[0], cfg.gamma_a
    nu = (cfg.theta[0] + cfg.delta) * gamma * ga / (2 * (gamma + ga))
    d_eff = cfg.delta - 2 * nu / ga
    return -(1 + d_eff * d_eff) / (2 * cfg.C[0])


@dataclass
class MbeTrajectory:
    final: MbeState
    outputs: list  # one TimeSeries per mode
    snapshot_times: np.ndarray
    snapshots: np.ndarray  # (n_snap, modes, grid) field snapshots
    d_bound_violations: int = 0
    completed: bool = True
    error: str | None = None
    diagnostics: dict = field(default_factory=dict)


def _readout(F, mode):
    return F.mean(axis=-1) if mode == "mean" else F[:, 0]


def run_mbe(cfg: MbeConfig, init: MbeState | None = None) -> MbeTrajectory:
    """Integrate to ``cfg.t_end``; default start is noise on the trivial state.

    Each mode's readout (spatial mean, or the field at z = 0 for
    ``readout="probe"``) is recorded every ``sample_stride`` steps as its own
    channel.
    """
    if init is None:
        init = noise_state(cfg)
    init.check_shapes(cfg)
    st = _Stepper(cfg)
    h = st.h
    nsteps = cfg.steps
    F, J, D = init.F.copy(), init.J.copy(), init.D.copy()
    t0 = init.t
    d_bound = max(abs(cfg.d0_over_chi), float(np.max(np.abs(D)))) * 1.05 + 1e-9
    violations = 0
    first_violation = None
    out = [_readout(F, cfg.readout)]
    snap_t, snaps = [t0], [F.copy()]
    step = 0
    last = (F, J, D)
    try:
        for step in range(1, nsteps + 1):
            F, J, D = st.step(F, J, D)
            _check(F, J, step)
            last = (F, J, D)
            if np.max(np.abs(D)) > d_bound:
                violations += 1
                if first_violation is None:
                    first_violation = step
            if step % cfg.sample_stride == 0:
                out.append(_readout(F, cfg.readout))
            if cfg.snapshot_stride and step % cfg.snapshot_stride == 0 and step != nsteps:
                snap_t.append(t0 + step * h)
                snaps.append(F.copy())
    except BlowUpError as exc:
        Fl, Jl, Dl = last
        exc.partial = _assemble(cfg, h, out, snap_t, snaps, MbeState(Fl, Jl, Dl, t0 + (step - 1) * h),
                                violations, completed=False, error=str(exc))
        raise
    if violations:
        warnings.warn(
            f"|D| exceeded {d_bound:.4g} on {violations} steps (first at step {first_violation})",
            RuntimeWarning, stacklevel=2)
    snap_t.append(t0 + nsteps * h)
    snaps.append(F.copy())
    return _assemble(cfg, h, out, snap_t, snaps, MbeState(F, J, D, t0 + nsteps * h), violations)


def _assemble(cfg, h, out, snap_t, snaps, final, violations, completed=True, error=None):
    arr = np.asarray(out)  # (samples, modes)
    if arr.shape[0] < 16:
        arr = np.pad(arr, ((0, 16 - arr.shape[0]), (0, 0)), mode="edge")
    names = ["A", "B"]
    outputs = [TimeSeries(arr[:, m], h * cfg.sample_stride, channel=names[m])
               for m in range(cfg.mode_count)]
    return MbeTrajectory(final, outputs, np.asarray(snap_t), np.asarray(snaps),
                         violations, completed, error, {"dt": h, "steps": len(out) - 1})


def with_overrides(cfg: MbeConfig, **kwargs) -> MbeConfig:
    return replace(cfg, **kwargs)
