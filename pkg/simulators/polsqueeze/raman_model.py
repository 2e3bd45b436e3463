"""
Nonlinear response and Raman noise
Builds the instantaneous-plus-Raman response h, the gain profile alpha^R, the
thermal phonon occupations and the multiplicative Raman noise field Gamma
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sfft

from .errors import ValidationError
from .grid_spectral import SimGrid, forward_spectrum, inverse_spectrum
from .units_params import BOLTZMANN, HBAR, PhysicalParams

logger = logging.getLogger(__name__)

SILICA_RAMAN_FILE = Path(__file__).parent / "data" / "silica_raman.csv"
RAMAN_COLUMNS = ("center_thz", "width_thz", "strength")


@dataclass(frozen=True)
class Lorentzian:
    """Damped-oscillator Raman line; frequencies in units of 1/t0"""

    center_freq: float
    width: float
    strength: float

    def __post_init__(self):
        if not (math.isfinite(self.center_freq) and self.center_freq > 0):
            raise ValidationError(f"Lorentzian centre must be positive, got {self.center_freq!r}")
        if not (math.isfinite(self.width) and self.width > 0):
            raise ValidationError(
                f"Lorentzian width must be positive (a non-positive width is non-causal), "
                f"got {self.width!r}"
            )
        if not (math.isfinite(self.strength) and self.strength >= 0):
            raise ValidationError(f"Lorentzian strength must be >= 0, got {self.strength!r}")


@dataclass(frozen=True)
class RamanModel:
    """Electronic (delta) response plus a sum of Lorentzian Raman lines.

    Line strengths are relative; they are rescaled so the Raman part carries
    1 - instantaneous_fraction of the zero-frequency response, which keeps
    h~(0) = 1 and the A = 1 sech a stationary soliton.
    """

    lorentzians: Tuple[Lorentzian, ...] = ()
    instantaneous_fraction: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lorentzians", tuple(self.lorentzians))
        f_inst = self.instantaneous_fraction
        if not (math.isfinite(f_inst) and 0.0 < f_inst <= 1.0):
            raise ValidationError(f"instantaneous_fraction must lie in (0, 1], got {f_inst!r}")
        if not self.lorentzians and f_inst != 1.0:
            raise ValidationError("instantaneous_fraction < 1 requires at least one Raman line")
        if self.lorentzians and f_inst < 1.0 and self.total_strength == 0:
            raise ValidationError("Raman lines have zero total strength")

    @classmethod
    def pure_kerr(cls) -> "RamanModel":
        return cls((), 1.0)

    @classmethod
    def from_csv(cls, path: Union[str, Path], t0: float,
                 instantaneous_fraction: float = 0.82) -> "RamanModel":
        """Load `center_thz,width_thz,strength` rows and convert to 1/t0 units.

        width_thz is the Lorentzian FWHM; the amplitude damping rate is pi*FWHM.
        """
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"Raman parameter file not found: {path}")
        table = np.genfromtxt(path, delimiter=",", names=True, dtype=float, ndmin=1)
        missing = [name for name in RAMAN_COLUMNS if name not in (table.dtype.names or ())]
        if missing:
            raise ValidationError(f"{path.name}: missing columns {missing}")
        lines = tuple(
            Lorentzian(
                center_freq=2.0 * math.pi * row["center_thz"] * 1e12 * t0,
                width=math.pi * row["width_thz"] * 1e12 * t0,
                strength=float(row["strength"]),
            )
            for row in table
        )
        logger.info("[RAMAN] loaded %d lines from %s", len(lines), path.name)
        return cls(lines, instantaneous_fraction)

    @property
    def total_strength(self) -> float:
        return float(sum(line.strength for line in self.lorentzians))

    @property
    def raman_fraction(self) -> float:
        return 1.0 - self.instantaneous_fraction

    @property
    def is_pure_kerr(self) -> bool:
        return self.instantaneous_fraction == 1.0

    def weights(self) -> np.ndarray:
        """Zero-frequency weights F_j of the lines, summing to the Raman fraction"""
        if self.is_pure_kerr:
            return np.zeros(len(self.lorentzians))
        raw = np.array([line.strength for line in self.lorentzians], dtype=float)
        return raw / raw.sum() * self.raman_fraction


def _oscillator_kernel(tau: np.ndarray, omega0: float, gamma: float) -> np.ndarray:
    """Omega^2 e^{-gamma tau} s(tau) for tau >= 0, unit area"""
    nu2 = omega0 ** 2 - gamma ** 2
    if nu2 > 0:
        nu = math.sqrt(nu2)
        shape = np.sin(nu * tau) / nu
    elif nu2 < 0:
        kappa = math.sqrt(-nu2)
        # e^{-gamma tau} sinh(kappa tau) written without overflow
        return omega0 ** 2 * 0.5 * (np.exp((kappa - gamma) * tau) - np.exp(-(kappa + gamma) * tau)) / kappa
    else:
        shape = tau
    return omega0 ** 2 * np.exp(-gamma * tau) * shape


def raman_time_response(model: RamanModel, grid: SimGrid) -> np.ndarray:
    """Causal Raman response h_R sampled at lags n*d_tau in FFT index order.

    Negative lags (upper half of the array) are exactly zero. The discrete
    area is renormalised to the Raman fraction.
    """
    n = grid.n_points
    h_r = np.zeros(n)
    if model.is_pure_kerr:
        return h_r
    lags = np.arange(n // 2) * grid.d_tau
    for line, weight in zip(model.lorentzians, model.weights()):
        h_r[: n // 2] += weight * _oscillator_kernel(lags, line.center_freq, line.width)
    area = h_r.sum() * grid.d_tau
    if area <= 0:
        raise ValidationError("Raman response has non-positive area on this grid")
    return h_r * (model.raman_fraction / area)


def build_response(model: RamanModel, grid: SimGrid) -> np.ndarray:
    """Frequency response h~(omega) on the grid, FFT order.

    h~ = instantaneous_fraction + transform of the causal Raman part; real
    h(tau) gives h~(-omega) = conj(h~(omega)).
    """
    h_tilde = np.full(grid.n_points, model.instantaneous_fraction, dtype=complex)
    if not model.is_pure_kerr:
        h_tilde += forward_spectrum(raman_time_response(model, grid), grid)
    return h_tilde


def impulse_response(model: RamanModel, grid: SimGrid) -> np.ndarray:
    """h(tau) recovered from h~ by inverse transform (delta part lands on lag 0)"""
    return inverse_spectrum(build_response(model, grid), grid)


def analytic_response(model: RamanModel, omega: np.ndarray) -> np.ndarray:
    """Closed-form h~(omega) = f_inst + sum_j F_j W_j^2 / (W_j^2 - w^2 - 2i g_j w)"""
    omega = np.asarray(omega, dtype=float)
    response = np.full(omega.shape, model.instantaneous_fraction, dtype=complex)
    for line, weight in zip(model.lorentzians, model.weights()):
        w2 = line.center_freq ** 2
        response += weight * w2 / (w2 - omega ** 2 - 2j * line.width * omega)
    return response


def raman_gain_profile(model: RamanModel, omega: np.ndarray) -> np.ndarray:
    """alpha^R(|omega|) = 2 |Im h~(omega)|, even in omega"""
    return 2.0 * np.abs(analytic_response(model, omega).imag)


@dataclass(frozen=True)
class ThermalSpectrum:
    """Bose phonon occupation and Wigner weight on a frequency grid"""

    n_th: np.ndarray

    @property
    def weight(self) -> np.ndarray:
        return self.n_th + 0.5


def thermal_occupation(omega: np.ndarray, params: PhysicalParams) -> ThermalSpectrum:
    """n_th(|omega|) = 1/(exp(hbar|omega|/(t0 k_B T)) - 1); infinite at omega = 0 for T > 0"""
    omega = np.abs(np.asarray(omega, dtype=float))
    if params.temperature == 0:
        return ThermalSpectrum(np.zeros_like(omega))
    x = HBAR * omega / (params.t0 * BOLTZMANN * params.temperature)
    with np.errstate(divide="ignore", over="ignore"):
        n_th = 1.0 / np.expm1(x)
    return ThermalSpectrum(n_th)


def raman_gain(model: RamanModel, omega: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """Wigner Raman noise spectral density S = alpha^R (n_th + 1/2) / nbar"""
    omega = np.asarray(omega, dtype=float)
    alpha = raman_gain_profile(model, omega)
    weight = thermal_occupation(omega, params).weight
    psd = np.zeros_like(alpha)
    nonzero = omega != 0
    psd[nonzero] = alpha[nonzero] * weight[nonzero] / params.nbar_eff
    return psd


def colour_noise(white: np.ndarray, grid: SimGrid, psd: np.ndarray, d_zeta: float) -> np.ndarray:
    """Shape white N(0,1) samples (last axis over tau) into Gamma with spectrum psd"""
    amplitude = np.sqrt(np.asarray(psd)[: grid.n_points // 2 + 1] / (grid.d_tau * d_zeta))
    return sfft.irfft(sfft.rfft(white, axis=-1) * amplitude, n=grid.n_points, axis=-1)


def sample_raman_noise(rng: np.random.Generator, grid: SimGrid, psd: np.ndarray,
                       d_zeta: float, size: Sequence[int] = ()) -> np.ndarray:
    """Real Raman noise field for one zeta step.

    Delta-correlated in zeta (variance scales as 1/d_zeta), coloured in tau
    with <|F Gamma(omega)|^2> = psd(omega) * tau_window / d_zeta.
    """
    if not d_zeta > 0:
        raise ValidationError(f"d_zeta must be positive, got {d_zeta!r}")
    white = rng.standard_normal(tuple(size) + (grid.n_points,))
    return colour_noise(white, grid, psd, d_zeta)


@dataclass(frozen=True)
class RamanKernel:
    """Precomputed response and noise spectrum shared by all trajectories"""

    grid: SimGrid
    h_tilde: np.ndarray = field(repr=False)
    psd: np.ndarray = field(repr=False)
    pure_kerr: bool = True

    def potential(self, intensity: np.ndarray) -> np.ndarray:
        """Nonlinear phase potential integral h(tau - tau') I(tau') dtau'"""
        if self.pure_kerr:
            return intensity
        spectrum = forward_spectrum(intensity, self.grid) * self.h_tilde
        return inverse_spectrum(spectrum, self.grid).real

    @property
    def has_noise(self) -> bool:
        return bool(np.any(self.psd > 0))


def build_kernel(model: RamanModel, grid: SimGrid, params: PhysicalParams,
                 response: bool = True, noise: bool = True) -> RamanKernel:
    """Bundle h~ and S(omega) for the propagator, honouring the ablation toggles"""
    use_response = response and not model.is_pure_kerr
    h_tilde = build_response(model, grid) if use_response else np.ones(grid.n_points, dtype=complex)
    if noise and not model.is_pure_kerr:
        psd = raman_gain(model, grid.omega, params)
    else:
        psd = np.zeros(grid.n_points)
    h_tilde.flags.writeable = False
    psd.flags.writeable = False
    return RamanKernel(grid, h_tilde, psd, pure_kerr=not use_response)


def load_model(file: Optional[Union[str, Path]], params: PhysicalParams,
               instantaneous_fraction: float = 0.82, enabled: bool = True) -> RamanModel:
    """Model from a config entry; disabled or missing file gives pure Kerr"""
    if not enabled:
        return RamanModel.pure_kerr()
    path = SILICA_RAMAN_FILE if file in (None, "builtin:silica") else Path(file)
    return RamanModel.from_csv(path, params.t0, instantaneous_fraction)
