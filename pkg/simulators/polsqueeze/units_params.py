"""
Physical constants, experimental parameters and unit conversion
Converts laboratory quantities (pJ, fs, m) into the dimensionless soliton units
used by the propagator: tau in units of t0, zeta in units of z0, and the
photon-flux field phi scaled by sqrt(nbar)
"""

import math
from dataclasses import dataclass

from scipy import constants as _const

from .errors import DomainError

# CODATA values, the single place the package takes them from
PLANCK = _const.h
SPEED_OF_LIGHT = _const.c
BOLTZMANN = _const.k
HBAR = _const.hbar


@dataclass(frozen=True)
class PhysicalParams:
    """Fibre, pulse and laser constants with the derived soliton scaling"""

    t0: float = 74e-15
    z0: float = 0.52
    nbar: float = 2e8
    lambda0: float = 1.51e-6
    temperature: float = 300.0
    fiber_length: float = 13.4
    loss_fraction: float = 0.24
    core_scale: float = 1.0

    def __post_init__(self):
        positive = {
            "t0": self.t0,
            "z0": self.z0,
            "nbar": self.nbar,
            "lambda0": self.lambda0,
            "fiber_length": self.fiber_length,
            "core_scale": self.core_scale,
        }
        for name, value in positive.items():
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")
        if not (math.isfinite(self.temperature) and self.temperature >= 0):
            raise DomainError(f"temperature must be >= 0 K, got {self.temperature!r}")
        if not 0.0 <= self.loss_fraction < 1.0:
            raise DomainError(f"loss_fraction must lie in [0, 1), got {self.loss_fraction!r}")
        k2 = self.k2
        if not (math.isfinite(k2) and k2 > 0):
            raise DomainError(f"|k''| = t0^2/z0 must be positive and finite, got {k2!r}")

    @property
    def k2(self) -> float:
        """|k''| in s^2/m"""
        return self.t0 ** 2 / self.z0

    @property
    def omega0(self) -> float:
        """Carrier angular frequency in rad/s"""
        return 2.0 * math.pi * SPEED_OF_LIGHT / self.lambda0

    @property
    def nbar_eff(self) -> float:
        """Soliton photon scale after the core-area correction"""
        return self.nbar * self.core_scale ** 2


@dataclass(frozen=True)
class PulseSpec:
    """Input pulse pair at the fibre entrance"""

    energy_total: float
    relative_phase: float = math.pi / 2

    def __post_init__(self):
        if not (math.isfinite(self.energy_total) and self.energy_total >= 0):
            raise DomainError(f"energy_total must be >= 0 J, got {self.energy_total!r}")

    @property
    def energy_pj(self) -> float:
        return self.energy_total * 1e12


def photon_number(energy_total: float, lambda0: float) -> float:
    """Total photon count N = E*lambda0/(h*c) of the pulse pair.

    Args:
        energy_total: Pulse-pair energy in J
        lambda0: Carrier wavelength in m

    Returns:
        Photon number, later split evenly between the two polarisations
    """
    if not math.isfinite(energy_total) or energy_total < 0:
        raise DomainError(f"energy must be >= 0 J, got {energy_total!r}")
    if not lambda0 > 0:
        raise DomainError(f"lambda0 must be positive, got {lambda0!r}")
    return energy_total * lambda0 / (PLANCK * SPEED_OF_LIGHT)


def energy_from_photons(photons: float, lambda0: float) -> float:
    """Inverse of photon_number"""
    if photons < 0:
        raise DomainError(f"photon number must be >= 0, got {photons!r}")
    return photons * PLANCK * SPEED_OF_LIGHT / lambda0


def soliton_amplitude(energy_total: float, params: PhysicalParams) -> float:
    """Dimensionless sech amplitude A for one polarisation.

    A*sech(tau) carries N_pol = photon_number/2 photons, i.e.
    nbar * integral |phi|^2 dtau = 2 * nbar * A^2 = N_pol. A = 1 is the
    fundamental soliton.
    """
    n_pol = photon_number(energy_total, params.lambda0) / 2.0
    return math.sqrt(n_pol / (2.0 * params.nbar_eff))


def soliton_energy(params: PhysicalParams) -> float:
    """Pulse-pair energy (J) at which each polarisation is a fundamental soliton"""
    return energy_from_photons(4.0 * params.nbar_eff, params.lambda0)


def dimensionless_length(params: PhysicalParams) -> float:
    """zeta_max = L / z0"""
    return params.fiber_length / params.z0

