"""
Maser parameters and the rescaling chain to dimensionless form.

Physical parameters are SI with angular frequencies and rates in rad/s.
The chain is:

    Maxwell-Bloch (lab)  --J -> iJ, frame w0-->  rotating-frame system
    rotating frame       --D -> chi D, J -> xi J, F -> zeta F-->  normalized system
    normalized system    --D0 = chi-->  Lugiato-Lefever equation

The scaling family has one free constant, the cooperativity C; zeta, xi and
chi follow from three matching conditions (see ``derive_scalings``).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from types import MappingProxyType

import numpy as np
from scipy import constants
from scipy.special import expit

from .errors import ConfigError, DomainError, SingularDetuningError

TWO_PI = 2.0 * math.pi

MODE_TABLE_VERSION = "1"

# Target whispering gallery modes, Hz. f_A appears once elsewhere as
# 12.03813 GHz; the tabulated value is used.
PUMP_MODES_HZ = MappingProxyType({1: 31.33771e9, 2: 31.33974e9})
READOUT_MODES_HZ = MappingProxyType({"A": 12.03812e9, "B": 12.02979e9})


@dataclass(frozen=True)
class ModeTable:
    pump: MappingProxyType = PUMP_MODES_HZ
    readout: MappingProxyType = READOUT_MODES_HZ
    version: str = MODE_TABLE_VERSION

    @property
    def f_A(self):
        return self.readout["A"]

    @property
    def f_B(self):
        return self.readout["B"]

    def to_dict(self):
        return {
            "version": self.version,
            "pump_hz": {str(k): v for k, v in self.pump.items()},
            "readout_hz": dict(self.readout),
        }


MODE_TABLE = ModeTable()


def _require_positive(**kwargs):
    for name, value in kwargs.items():
        if not (np.isfinite(value) and value > 0):
            raise DomainError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional maser parameters (SI, angular units).

    ``omega_0`` is the rotating-frame reference; ``None`` means the atom
    frame (omega_0 = omega_a).
    """

    omega_a: float
    omega_m: tuple
    g_m: tuple
    gamma_m: tuple
    gamma_E: float
    gamma_D: float
    gamma_P: float
    c_eff: float
    radius: float
    omega_0: float | None = None

    def __post_init__(self):
        for name in ("omega_m", "g_m", "gamma_m"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 2:
                raise DomainError(f"{name} must have 2 entries, got {len(value)}")
            object.__setattr__(self, name, value)
        _require_positive(
            omega_a=self.omega_a, gamma_E=self.gamma_E, gamma_D=self.gamma_D,
            gamma_P=self.gamma_P, c_eff=self.c_eff, radius=self.radius,
        )
        for name in ("omega_m", "g_m", "gamma_m"):
            for i, v in enumerate(getattr(self, name)):
                _require_positive(**{f"{name}[{i}]": v})
        if self.omega_0 is not None and not np.isfinite(self.omega_0):
            raise DomainError("omega_0 must be finite")

    @property
    def gamma_I(self):
        return self.gamma_P + self.gamma_D

    @property
    def gamma_a(self):
        return self.gamma_P + self.gamma_D + self.gamma_E

    @property
    def D0(self):
        return (self.gamma_P - self.gamma_D) / (self.gamma_P + self.gamma_D)

    @property
    def frame(self):
        return self.omega_a if self.omega_0 is None else self.omega_0

    def with_frame(self, omega_0):
        return PhysicalParams(**{**self._field_dict(), "omega_0": omega_0})

    def _field_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_dict(self):
        d = self._field_dict()
        for name in ("omega_m", "g_m", "gamma_m"):
            d[name] = list(d[name])
        d["mode_table"] = MODE_TABLE.to_dict()
        return d

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data.pop("mode_table", None)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown key(s) {unknown}", path=unknown[0])
        missing = sorted(known - set(data) - {"omega_0"})
        if missing:
            raise ConfigError(f"missing required key {missing[0]!r}", path=missing[0])
        return cls(**data)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def default_physical_params():
    """Illustrative parameter set, not fitted to any measurement.

    Chosen so that the signal modes are far narrower than the spin line
    (gamma_m << gamma_a) and the collective coupling puts the maser roughly
    four times above threshold.
    """
    omega_m = tuple(TWO_PI * READOUT_MODES_HZ[k] for k in ("A", "B"))
    q_loaded = 1.0e8
    gamma_m = tuple(w / q_loaded for w in omega_m)
    gamma_E = TWO_PI * 10.0e6
    gamma_D = TWO_PI * 5.0
    gamma_P = TWO_PI * 10.0
    gamma_a = gamma_E + gamma_D + gamma_P
    d0 = (gamma_P - gamma_D) / (gamma_P + gamma_D)
    # 4 g^2 D0 / (gamma gamma_a) = 4 for mode A
    g = math.sqrt(gamma_m[0] * gamma_a / d0)
    return PhysicalParams(
        omega_a=TWO_PI * 12.0340e9,
        omega_m=omega_m,
        g_m=(g, g),
        gamma_m=gamma_m,
        gamma_E=gamma_E,
        gamma_D=gamma_D,
        gamma_P=gamma_P,
        c_eff=constants.c / 3.07,
        radius=0.025,
    )


@dataclass(frozen=True)
class ScalingConstants:
    zeta: float
    xi: float
    chi: float
    C: float

    def residuals(self, g, gamma, gamma_a, gamma_I):
        """Relative residuals of the three matching conditions."""
        r1 = 2 * g * self.xi / (gamma * self.zeta)
        r2 = 2 * g * self.chi * self.zeta / (gamma_a * self.xi)
        r3 = 2 * g * self.xi * self.zeta / (gamma_I * self.chi)
        return (
            abs(r1 + 2 * self.C) / (2 * self.C),
            abs(r2 - 1.0),
            abs(r3 - 0.5) / 0.5,
        )


def derive_scalings(g, gamma, gamma_a, gamma_I, C):
    """Field, polarization and inversion scale factors for cooperativity C.

    They satisfy 2g xi/(gamma zeta) = -2C, 2g chi zeta/(gamma_a xi) = 1 and
    2g xi zeta/(gamma_I chi) = 1/2.
    """
    _require_positive(g=g, gamma=gamma, gamma_a=gamma_a, gamma_I=gamma_I, C=C)
    root = math.sqrt(gamma_I * gamma_a / 2.0)
    zeta = -root / (2.0 * g)
    xi = C * gamma / (2.0 * g * g) * root
    chi = -C * gamma * gamma_a / (2.0 * g * g)
    return ScalingConstants(zeta=zeta, xi=xi, chi=chi, C=C)


def mode_cooperativities(g_m, gamma_m, C):
    """Per-mode cooperativities sharing one polarization/inversion scaling.

    The J and D scalings can be common to all modes only if each mode gets its
    own field scale; the resulting cooperativity is C_m = C g_m^2 gamma_1 /
    (g_1^2 gamma_m), with mode 1 as the reference.
    """
    g1, y1 = g_m[0], gamma_m[0]
    return tuple(C * (g * g / y) / (g1 * g1 / y1) for g, y in zip(g_m, gamma_m))


@dataclass(frozen=True)
class NormalizedParams:
    theta: float
    delta: float
    C: float
    d0_over_chi: float
    eta: int
    theta0: float
    beta: float
    scalings: ScalingConstants | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.delta == 0:
            raise SingularDetuningError("delta = 0: LLE reduction undefined")
        if self.eta not in (1, -1):
            raise DomainError(f"eta must be +1 or -1, got {self.eta}")

    def to_dict(self):
        d = asdict(self)
        d.pop("scalings")
        return d


def to_normalized(phys: PhysicalParams, mode_index: int, C: float) -> NormalizedParams:
    if mode_index not in (1, 2):
        raise DomainError(f"mode_index must be 1 or 2, got {mode_index}")
    _require_positive(C=C)
    m = mode_index - 1
    w0 = phys.frame
    detuning = w0 - phys.omega_m[m]
    detuning_a = w0 - phys.omega_a
    if detuning_a == 0:
        raise SingularDetuningError(
            "reference frame coincides with the spin transition (omega_0 == omega_a)")
    gamma = phys.gamma_m[m]
    gamma_a = phys.gamma_a
    theta = 2.0 * detuning / gamma
    delta = 2.0 * detuning_a / gamma_a
    eta = -1 if delta > 0 else 1
    theta0 = theta - 2.0 * C / delta
    beta = dispersion_coefficient(C, gamma_a, phys.c_eff, detuning_a, phys.radius)
    g = phys.g_m[m]
    sc = derive_scalings(g, gamma, gamma_a, phys.gamma_I, C)
    return NormalizedParams(
        theta=theta, delta=delta, C=C, d0_over_chi=phys.D0 / sc.chi,
        eta=eta, theta0=theta0, beta=beta, scalings=sc,
    )


def dispersion_coefficient(C, gamma_a, c_eff, detuning_a, radius):
    """beta = 2 C gamma_a c^2 / (|Omega_a|^3 R^2)."""
    if radius <= 0:
        raise DomainError(f"radius must be positive, got {radius!r}")
    if detuning_a == 0:
        raise SingularDetuningError("zero atomic detuning")
    return 2.0 * C * gamma_a * c_eff ** 2 / (abs(detuning_a) ** 3 * radius ** 2)


def lle_field_scale(C, delta):
    """Factor mapping the normalized field F onto the LLE field."""
    return math.sqrt(2.0 * C / abs(delta) ** 3)


def lle_time(t, gamma):
    return 0.5 * gamma * t


# Local (spatially homogeneous) right-hand sides of the single-mode systems.
# They exist to check the rescaling algebra numerically.

def lab_frame_rhs(F, J, D, *, omega, omega_a, g, gamma, gamma_a, gamma_I, D0):
    """Maxwell-Bloch right-hand side in the lab frame, before J -> iJ."""
    dF = (1j * omega - gamma / 2) * F - 1j * g * J
    dJ = (1j * omega_a - gamma_a / 2) * J + 1j * g * F * D
    dD = -gamma_I * (D - D0) + 2j * g * (np.conj(F) * J - np.conj(J) * F)
    return dF, dJ, np.real(dD)


def rotating_frame_rhs(F, J, D, *, detuning, detuning_a, g, gamma, gamma_a, gamma_I, D0):
    """Right-hand side after the frame change and J -> iJ (unscaled)."""
    dF = -gamma / 2 * ((1 + 2j * detuning / gamma) * F - 2 * g / gamma * J)
    dJ = -gamma_a / 2 * ((1 + 2j * detuning_a / gamma_a) * J - 2 * g / gamma_a * F * D)
    dD = -gamma_I * (D - D0 + 2 * g / gamma_I * np.real(np.conj(F) * J + np.conj(J) * F))
    return dF, dJ, dD


def normalized_rhs(F, J, D, *, theta, delta, C, gamma, gamma_a, gamma_I, d0_over_chi):
    dF = -gamma / 2 * ((1 + 1j * theta) * F + 2 * C * J)
    dJ = -gamma_a / 2 * ((1 + 1j * delta) * J - F * D)
    dD = -gamma_I * (D - d0_over_chi + 0.5 * np.real(np.conj(F) * J + np.conj(J) * F))
    return dF, dJ, dD


def thermal_occupation(nu, T):
    """Excited-state occupation 1 / (exp(h nu / k_B T) + 1)."""
    _require_positive(nu=nu, T=T)
    x = constants.h * nu / (constants.k * T)
    return float(expit(-x))


def pump_delivery(p_pump, delta_fp, fwhm):
    """Power reaching the pump transition through a Lorentzian pump mode."""
    if not fwhm > 0:
        raise DomainError(f"fwhm must be positive, got {fwhm!r}")
    if p_pump < 0:
        raise DomainError(f"pump power must be non-negative, got {p_pump!r}")
    x = 2.0 * delta_fp / fwhm
    return p_pump / (1.0 + x * x)


def pump_to_d0(delivered, sat_power, d0_max):
    """Saturating map from delivered pump power to the pump parameter D0."""
    if not sat_power > 0:
        raise DomainError(f"sat_power must be positive, got {sat_power!r}")
    if delivered < 0:
        raise DomainError(f"delivered power must be non-negative, got {delivered!r}")
    if not abs(d0_max) < 1:
        raise DomainError(f"|d0_max| must be < 1, got {d0_max!r}")
    if math.isinf(delivered):
        return d0_max
    return d0_max * delivered / (delivered + sat_power)
