"""
Simulation grid and spectral transforms
Uniform dimensionless time grid, its conjugate angular-frequency grid and the
unitary transform convention shared by the propagator and the noise synthesis
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft as sfft

from .errors import ContractError, DomainError

logger = logging.getLogger(__name__)

EDGE_BAND = 0.1
DEFAULT_ALIASING_THRESHOLD = 1e-6


@dataclass(frozen=True)
class SimGrid:
    """Periodic tau grid (units of t0) with omega in FFT order (units of 1/t0)"""

    n_points: int = 1024
    tau_window: float = 40.0
    tau: np.ndarray = field(init=False, repr=False, compare=False)
    omega: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n_points
        if n < 16 or n & (n - 1):
            raise DomainError(f"n_points must be a power of two >= 16, got {n!r}")
        if not self.tau_window > 0:
            raise DomainError(f"tau_window must be positive, got {self.tau_window!r}")
        d_tau = self.tau_window / n
        tau = (np.arange(n) - n // 2) * d_tau
        omega = 2.0 * np.pi * sfft.fftfreq(n, d=d_tau)
        tau.flags.writeable = False
        omega.flags.writeable = False
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "omega", omega)

    @property
    def d_tau(self) -> float:
        return self.tau_window / self.n_points

    @property
    def d_omega(self) -> float:
        return 2.0 * np.pi / self.tau_window

    @property
    def omega_max(self) -> float:
        """Magnitude of the Nyquist frequency"""
        return np.pi / self.d_tau

    @property
    def omega_centred(self) -> np.ndarray:
        return sfft.fftshift(self.omega)

    def check(self, field_values: np.ndarray) -> np.ndarray:
        values = np.asarray(field_values)
        if values.ndim == 0 or values.shape[-1] != self.n_points:
            raise ContractError(
                f"last axis must have {self.n_points} points, got shape {values.shape}"
            )
        return values


def forward_spectrum(field_values: np.ndarray, grid: SimGrid) -> np.ndarray:
    """Spectrum F(omega_k) = d_tau * sum_n f_n exp(+i omega_k tau_n), along the last axis.

    Index 0 is taken as tau = 0, so the centring of the window only adds a
    linear spectral phase. Parseval: sum |f|^2 d_tau = sum |F|^2 d_omega / 2pi.
    """
    values = grid.check(field_values)
    return sfft.ifft(values, axis=-1, norm="forward") * grid.d_tau


def inverse_spectrum(spectrum: np.ndarray, grid: SimGrid) -> np.ndarray:
    """Inverse of forward_spectrum"""
    values = grid.check(spectrum)
    return sfft.fft(values, axis=-1, norm="forward") / grid.d_tau


@dataclass(frozen=True)
class AliasingReport:
    """Outcome of an aliasing check"""

    ok: bool
    edge_fraction: float
    threshold: float

    @property
    def status(self) -> str:
        return "ok" if self.ok else "warning"


def aliasing_guard(field_values: np.ndarray, grid: SimGrid,
                   threshold: float = DEFAULT_ALIASING_THRESHOLD) -> AliasingReport:
    """Flag fields whose spectral power reaches the outer 10% of the omega grid"""
    power = np.abs(forward_spectrum(field_values, grid)) ** 2
    power = power.reshape(-1, grid.n_points).sum(axis=0)
    total = float(power.sum())
    if total == 0.0:
        return AliasingReport(True, 0.0, threshold)
    edge = np.abs(grid.omega) > (1.0 - EDGE_BAND) * grid.omega_max
    fraction = float(power[edge].sum() / total)
    report = AliasingReport(fraction <= threshold, fraction, threshold)
    if not report.ok:
        logger.debug("edge spectral fraction %.3e exceeds %.1e", fraction, threshold)
    return report


# Pulse metrics

def photon_flux_number(field_values: np.ndarray, grid: SimGrid, nbar: float = 1.0) -> np.ndarray:
    """nbar * integral |phi|^2 dtau along the last axis"""
    values = grid.check(field_values)
    return nbar * np.sum(np.abs(values) ** 2, axis=-1) * grid.d_tau


def spectral_centroid(field_values: np.ndarray, grid: SimGrid) -> float:
    """Power-weighted mean angular frequency; negative is red-shifted"""
    power = np.abs(forward_spectrum(field_values, grid)) ** 2
    return float(np.sum(grid.omega * power) / np.sum(power))


def rms_width(field_values: np.ndarray, grid: SimGrid) -> float:
    """RMS width of |phi|^2 about its centre of mass"""
    intensity = np.abs(grid.check(field_values)) ** 2
    weight = intensity.sum()
    centre = np.sum(grid.tau * intensity) / weight
    return float(np.sqrt(np.sum((grid.tau - centre) ** 2 * intensity) / weight))


def temporal_fwhm(field_values: np.ndarray, grid: SimGrid) -> Optional[float]:
    """Full width at half maximum of |phi|^2, linear interpolation at the crossings"""
    intensity = np.abs(grid.check(field_values)) ** 2
    peak = intensity.max()
    if peak == 0:
        return None
    above = np.nonzero(intensity >= 0.5 * peak)[0]
    first, last = above[0], above[-1]
    half = 0.5 * peak
    tau = grid.tau

    def crossing(i_out: int, i_in: int) -> float:
        if i_out < 0 or i_out >= grid.n_points:
            return tau[i_in]
        y0, y1 = intensity[i_out], intensity[i_in]
        return tau[i_out] + (half - y0) / (y1 - y0) * (tau[i_in] - tau[i_out])

    return float(crossing(last + 1, last) - crossing(first - 1, first))
