"""
Initial stochastic field
Coherent sech mean plus Wigner vacuum fluctuations for both polarisations
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, IntegrationError
from .grid_spectral import SimGrid


@dataclass
class FieldState:
    """Photon-flux fields phi_x, phi_y over the tau grid at position zeta.

    Arrays may carry leading batch axes (one row per trajectory); the last
    axis is always the tau grid.
    """

    phi_x: np.ndarray
    phi_y: np.ndarray
    zeta: float = 0.0

    def __post_init__(self):
        self.phi_x = np.asarray(self.phi_x, dtype=complex)
        self.phi_y = np.asarray(self.phi_y, dtype=complex)
        if self.phi_x.shape != self.phi_y.shape:
            raise DomainError(
                f"polarisation shapes differ: {self.phi_x.shape} vs {self.phi_y.shape}"
            )

    @property
    def n_points(self) -> int:
        return self.phi_x.shape[-1]

    @property
    def batch_shape(self):
        return self.phi_x.shape[:-1]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.phi_x).all() and np.isfinite(self.phi_y).all())

    def require_finite(self) -> None:
        if not self.is_finite():
            raise IntegrationError("non-finite field values", zeta=self.zeta)

    def copy(self) -> "FieldState":
        return FieldState(self.phi_x.copy(), self.phi_y.copy(), self.zeta)


def coherent_sech(amplitude: float, grid: SimGrid) -> np.ndarray:
    """Mean field A*sech(tau) centred in the window"""
    if not amplitude >= 0:
        raise DomainError(f"amplitude must be >= 0, got {amplitude!r}")
    return amplitude / np.cosh(grid.tau) + 0j


def vacuum_noise(rng: np.random.Generator, grid: SimGrid, nbar: float,
                 size=()) -> np.ndarray:
    """Complex Gaussian fluctuations with <|dphi|^2> = 1/(2 nbar d_tau) per grid point"""
    if not nbar > 0:
        raise DomainError(f"nbar must be positive, got {nbar!r}")
    sigma = np.sqrt(1.0 / (4.0 * nbar * grid.d_tau))
    shape = tuple(size) + (2, grid.n_points)
    draws = rng.standard_normal(shape + (2,))
    return sigma * (draws[..., 0] + 1j * draws[..., 1])


def add_vacuum_noise(mean_field: np.ndarray, rng: Optional[np.random.Generator],
                     grid: SimGrid, nbar: float) -> FieldState:
    """FieldState at zeta = 0 with independent vacuum noise in x and y.

    rng=None gives the noiseless (mean-field) state.
    """
    mean_field = grid.check(mean_field)
    if rng is None:
        return FieldState(mean_field.copy(), mean_field.copy(), 0.0)
    noise = vacuum_noise(rng, grid, nbar, size=mean_field.shape[:-1])
    return FieldState(mean_field + noise[..., 0, :], mean_field + noise[..., 1, :], 0.0)
