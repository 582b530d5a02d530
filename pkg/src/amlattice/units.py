"""Physical constants, parameter records and the lattice unit system.

Internally every quantity is dimensionless with hbar = 1:

* energies in units of the recoil energy ``E_R = h^2 / (2 m lambda_L^2)``
* lengths in units of ``1 / k_L`` (one lattice period is ``pi``)
* times in units of ``1 / omega_R`` with ``omega_R = E_R / hbar``

In these units the kinetic operator is ``-d^2/dz^2`` and the lattice
potential is ``-(U0 / 2) cos(2 z)``.  The gravitational tilt raises the
energy by ``omega_B / omega_R`` per lattice site.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from scipy import constants as const

HBAR = const.hbar
PLANCK = const.h
ATOMIC_MASS = const.atomic_mass

SR88_MASS_U = 87.9056
DEFAULT_WAVELENGTH = 532e-9
DEFAULT_GRAVITY = 9.805
#: Bloch frequency quoted for the Sr-88 / 532 nm experiment, used by match_reference().
REFERENCE_BLOCH_FREQUENCY = 2 * math.pi * 574.3
#: Recoil frequency quoted for the same experiment (rounded).
REFERENCE_RECOIL_FREQUENCY = 2 * math.pi * 8000.0

MAX_DEPTH = 50.0

UNIT_TAGS = ("length", "time", "energy", "velocity", "frequency")


class ValidationError(ValueError):
    """Raised when a parameter record is out of its documented range."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class PhysicalParams:
    """Atomic species, lattice laser and gravity.

    ``lattice_depth`` is U0 in multiples of the recoil energy.
    """

    atomic_mass: float = SR88_MASS_U * ATOMIC_MASS
    lattice_wavelength: float = DEFAULT_WAVELENGTH
    gravity: float = DEFAULT_GRAVITY
    lattice_depth: float = 10.0

    def __post_init__(self):
        if not self.atomic_mass > 0:
            raise ValidationError("atomic_mass", "must be strictly positive")
        if not self.lattice_wavelength > 0:
            raise ValidationError("lattice_wavelength", "must be strictly positive")
        if not self.gravity >= 0:
            raise ValidationError("gravity", "must be non-negative")
        if not 0.0 <= self.lattice_depth <= MAX_DEPTH:
            raise ValidationError(
                "lattice_depth", f"must lie in [0, {MAX_DEPTH}] recoil energies"
            )

    @classmethod
    def from_mass_u(cls, mass_u: float, **kw) -> "PhysicalParams":
        if not mass_u > 0:
            raise ValidationError("mass_u", "must be strictly positive")
        return cls(atomic_mass=mass_u * ATOMIC_MASS, **kw)

    @property
    def mass_u(self) -> float:
        return self.atomic_mass / ATOMIC_MASS


@dataclass(frozen=True)
class DerivedScales:
    recoil_energy: float  # J
    recoil_frequency: float  # rad/s, E_R / hbar
    lattice_period: float  # m
    wave_vector: float  # 1/m
    bloch_frequency: float  # rad/s
    bloch_period: float  # s, inf when untilted
    dimensionless_force: float  # omega_B / omega_R
    tiltable: bool = True


def derive_scales(p: PhysicalParams) -> DerivedScales:
    """Compute recoil, lattice and Bloch scales for ``p``.

    With ``g = 0`` the result is flagged ``tiltable=False`` and the Bloch
    period is infinite.
    """
    m, lam = p.atomic_mass, p.lattice_wavelength
    d = lam / 2
    k_l = 2 * math.pi / lam
    e_r = PLANCK**2 / (2 * m * lam**2)
    w_r = e_r / HBAR
    w_b = m * p.gravity * d / HBAR
    tau_b = 2 * math.pi / w_b if w_b > 0 else math.inf
    return DerivedScales(
        recoil_energy=e_r,
        recoil_frequency=w_r,
        lattice_period=d,
        wave_vector=k_l,
        bloch_frequency=w_b,
        bloch_period=tau_b,
        dimensionless_force=w_b / w_r,
        tiltable=w_b > 0,
    )


def match_reference(p: PhysicalParams) -> PhysicalParams:
    """Return ``p`` with gravity back-computed from omega_B = 2 pi x 574.3 /s."""
    d = p.lattice_wavelength / 2
    g = HBAR * REFERENCE_BLOCH_FREQUENCY / (p.atomic_mass * d)
    return replace(p, gravity=g)


def _unit_factor(s: DerivedScales, unit: str) -> float:
    # SI value times factor gives the dimensionless value
    if unit == "length":
        return s.wave_vector
    if unit == "time":
        return s.recoil_frequency
    if unit == "energy":
        return 1.0 / s.recoil_energy
    if unit == "velocity":
        return s.wave_vector / s.recoil_frequency
    if unit == "frequency":
        return 1.0 / s.recoil_frequency
    raise ValueError(f"unknown unit tag {unit!r}; expected one of {UNIT_TAGS}")


def to_dimensionless(p: PhysicalParams | DerivedScales, value, unit: str):
    """Convert an SI ``value`` (m, s, J, m/s or rad/s) to lattice units."""
    s = p if isinstance(p, DerivedScales) else derive_scales(p)
    return value * _unit_factor(s, unit)


def from_dimensionless(p: PhysicalParams | DerivedScales, value, unit: str):
    s = p if isinstance(p, DerivedScales) else derive_scales(p)
    return value / _unit_factor(s, unit)


@dataclass(frozen=True)
class ModulationParams:
    """Amplitude modulation f(t) = sin(omega_M (t - t0) - phase).

    ``omega_ratio`` is omega_M / omega_B; ``None`` selects the resonant
    value equal to ``harmonic``.  ``alpha = 0`` is accepted and means an
    unmodulated lattice.
    """

    harmonic: int = 1
    alpha: float = 0.2
    phase: float = 0.0  # rad
    t0: float = 0.0  # s
    omega_ratio: float | None = None

    def __post_init__(self):
        if int(self.harmonic) != self.harmonic or self.harmonic < 1:
            raise ValidationError("harmonic", "must be a positive integer")
        if not 0.0 <= self.alpha < 1.0:
            raise ValidationError("alpha", "must lie in [0, 1)")
        if self.omega_ratio is not None and not self.omega_ratio > 0:
            raise ValidationError("omega_ratio", "must be positive")

    @property
    def resonant(self) -> bool:
        return self.omega_ratio is None or self.omega_ratio == self.harmonic

    @property
    def ratio(self) -> float:
        return float(self.harmonic if self.omega_ratio is None else self.omega_ratio)

    def modulation_frequency(self, scales: DerivedScales) -> float:
        """omega_M in rad/s."""
        return self.ratio * scales.bloch_frequency


@dataclass(frozen=True)
class LatticeConfig:
    """Everything needed to build the Hamiltonian of one experiment."""

    physical: PhysicalParams = field(default_factory=PhysicalParams)
    modulation: ModulationParams = field(default_factory=ModulationParams)
    band: int = 1

    def __post_init__(self):
        if self.band not in (1, 2):
            raise ValidationError("band", "only bands 1 and 2 are supported")

    @property
    def scales(self) -> DerivedScales:
        return derive_scales(self.physical)

    @property
    def depth(self) -> float:
        """U0 in recoil energies."""
        return self.physical.lattice_depth

    @property
    def force(self) -> float:
        """Wannier-Stark ladder spacing hbar omega_B in recoil energies."""
        return self.scales.dimensionless_force

    @property
    def tilt_slope(self) -> float:
        """Gradient of the tilt potential per unit z (lattice units)."""
        return self.force / math.pi

    @property
    def bloch_period(self) -> float:
        """tau_B in units of 1/omega_R."""
        f = self.force
        return 2 * math.pi / f if f > 0 else math.inf

    def with_depth(self, depth: float) -> "LatticeConfig":
        return replace(self, physical=replace(self.physical, lattice_depth=depth))

    def with_modulation(self, **kw) -> "LatticeConfig":
        return replace(self, modulation=replace(self.modulation, **kw))

    def seconds(self, t: float) -> float:
        return t / self.scales.recoil_frequency

    def in_bloch_periods(self, t: float) -> float:
        return t / self.bloch_period


def reference_config(depth: float, harmonic: int = 1, alpha: float = 0.2,
                 phase: float = 0.0, band: int = 1) -> LatticeConfig:
    """Sr-88 at 532 nm with the default gravity, for quick experiments."""
    return LatticeConfig(
        physical=PhysicalParams(lattice_depth=depth),
        modulation=ModulationParams(harmonic=harmonic, alpha=alpha, phase=phase),
        band=band,
    )
