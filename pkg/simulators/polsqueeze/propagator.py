"""
Stochastic split-step propagator
Integrates the Raman-modified stochastic nonlinear Schroedinger equation

    d phi/d zeta = (i/2) d^2 phi/d tau^2 + i Gamma phi + i [h * |phi|^2] phi

for both polarisations with second-order Strang splitting. The two modes
evolve independently, each with its own Raman noise.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import AliasingWarning, ConfigError, IntegrationError, StepSizeError
from .grid_spectral import SimGrid, aliasing_guard, forward_spectrum, inverse_spectrum
from .pulse_init import FieldState
from .raman_model import RamanKernel, colour_noise

logger = logging.getLogger(__name__)

MAX_PHASE_PER_STEP = 0.1
MAX_D_ZETA = 0.01

RandomSource = Union[None, np.random.Generator, Sequence[np.random.Generator]]
Observer = Callable[[float, FieldState], None]


@dataclass(frozen=True)
class StepperConfig:
    """Step size, splitting scheme and physics toggles (for ablations)"""

    d_zeta: Optional[float] = None
    scheme: str = "strang"
    vacuum_noise: bool = True
    raman_noise: bool = True
    raman_response: bool = True
    nonlinearity: bool = True
    dispersion: bool = True
    snapshots: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.d_zeta is not None and not self.d_zeta > 0:
            raise ConfigError(f"d_zeta must be positive, got {self.d_zeta!r}")
        if self.scheme != "strang":
            raise ConfigError(f"unsupported splitting scheme {self.scheme!r}")
        object.__setattr__(self, "snapshots", tuple(sorted(float(z) for z in self.snapshots)))

    def deterministic(self) -> "StepperConfig":
        """Same physics with every noise source switched off"""
        return replace(self, vacuum_noise=False, raman_noise=False)


def default_step_size(amplitude: float) -> float:
    """1e-3 * max(1, 1/A^2), capped at 0.01"""
    if amplitude <= 0:
        return MAX_D_ZETA
    return min(MAX_D_ZETA, 1e-3 * max(1.0, 1.0 / amplitude ** 2))


def resolve_step(stepper: StepperConfig, state: FieldState) -> float:
    if stepper.d_zeta is not None:
        return stepper.d_zeta
    amplitude = float(np.max(np.abs(np.mean(state.phi_x.reshape(-1, state.n_points), axis=0))))
    return default_step_size(amplitude)


def peak_nonlinear_phase(state: FieldState, kernel: RamanKernel, d_zeta: float) -> float:
    fields = np.stack([state.phi_x, state.phi_y], axis=-2)
    return float(np.max(np.abs(kernel.potential(np.abs(fields) ** 2)))) * d_zeta


def check_step_size(state: FieldState, kernel: RamanKernel, d_zeta: float,
                    limit: float = MAX_PHASE_PER_STEP) -> float:
    """Nonlinear phase per step at the peak; raises if it exceeds the limit"""
    phase = peak_nonlinear_phase(state, kernel, d_zeta)
    if phase >= limit:
        raise StepSizeError(
            f"nonlinear phase per step {phase:.3g} rad exceeds {limit} rad; reduce d_zeta",
            zeta=state.zeta,
        )
    return phase


def _white_noise(rng: RandomSource, batch_shape: Tuple[int, ...], n_points: int) -> np.ndarray:
    """White N(0,1) draws shaped batch + (2, n_points); one stream per trajectory when given a list"""
    if isinstance(rng, np.random.Generator):
        return rng.standard_normal(batch_shape + (2, n_points))
    streams = list(rng)
    if len(batch_shape) != 1 or batch_shape[0] != len(streams):
        raise IntegrationError(
            f"{len(streams)} random streams for batch shape {batch_shape}"
        )
    return np.stack([stream.standard_normal((2, n_points)) for stream in streams])


def _half_dispersion(grid: SimGrid, d_zeta: float, enabled: bool) -> np.ndarray:
    if not enabled:
        return np.ones(grid.n_points, dtype=complex)
    return np.exp(-0.25j * grid.omega ** 2 * d_zeta)


def _nonlinear_phase(fields: np.ndarray, stepper: StepperConfig, kernel: RamanKernel,
                     grid: SimGrid, rng: RandomSource, d_zeta: float) -> Optional[np.ndarray]:
    """Phase increment of the nonlinear sub-step, None when nothing acts"""
    noisy = stepper.raman_noise and kernel.has_noise
    if not (stepper.nonlinearity or noisy):
        return None
    phase = np.zeros(fields.shape)
    if stepper.nonlinearity:
        phase += kernel.potential(np.abs(fields) ** 2) * d_zeta
    if noisy:
        if rng is None:
            raise IntegrationError("Raman noise enabled but no random source given")
        white = _white_noise(rng, fields.shape[:-2], grid.n_points)
        phase += colour_noise(white, grid, kernel.psd, d_zeta) * d_zeta
    return phase


def _warn_aliasing(fields: np.ndarray, grid: SimGrid, zeta: float) -> float:
    """Edge spectral fraction; logs and warns with AliasingWarning above the threshold"""
    report = aliasing_guard(fields, grid)
    if not report.ok:
        message = (f"spectral power fraction {report.edge_fraction:.2e} near the grid edge "
                   f"at zeta={zeta:.4g}; widen the window or add points")
        logger.warning(message)
        warnings.warn(message, AliasingWarning, stacklevel=3)
    return report.edge_fraction


def step(state: FieldState, stepper: StepperConfig, kernel: RamanKernel, grid: SimGrid,
         rng: RandomSource = None, d_zeta: Optional[float] = None) -> FieldState:
    """One symmetric split step: half dispersion, nonlinear phase with noise, half dispersion.

    The phase rotation leaves |phi| unchanged pointwise, so the intensity used
    for the convolution potential is the midpoint intensity as well.
    """
    d_zeta = d_zeta if d_zeta is not None else resolve_step(stepper, state)
    half = _half_dispersion(grid, d_zeta, stepper.dispersion)
    fields = np.stack([state.phi_x, state.phi_y], axis=-2)
    fields = inverse_spectrum(forward_spectrum(fields, grid) * half, grid)
    phase = _nonlinear_phase(fields, stepper, kernel, grid, rng, d_zeta)
    if phase is not None:
        fields = fields * np.exp(1j * phase)
    fields = inverse_spectrum(forward_spectrum(fields, grid) * half, grid)
    new_state = FieldState(fields[..., 0, :], fields[..., 1, :], state.zeta + d_zeta)
    new_state.require_finite()
    _warn_aliasing(fields, grid, new_state.zeta)
    return new_state


@dataclass
class Snapshot:
    """Batch-averaged |phi(tau)|^2 and |phi~(omega)|^2 (FFT order) for x and y"""

    zeta: float
    intensity: np.ndarray = field(repr=False)
    spectrum: np.ndarray = field(repr=False)


@dataclass
class PropagationResult:
    state: FieldState
    snapshots: List[Snapshot]
    diagnostics: Dict[str, float]


def take_snapshot(state: FieldState, grid: SimGrid) -> Snapshot:
    fields = np.stack([state.phi_x, state.phi_y], axis=-2).reshape(-1, 2, grid.n_points)
    intensity = np.mean(np.abs(fields) ** 2, axis=0)
    spectrum = np.mean(np.abs(forward_spectrum(fields, grid)) ** 2, axis=0)
    return Snapshot(state.zeta, intensity, spectrum)


def _segments(zeta_start: float, zeta_max: float, marks: Sequence[float]) -> List[float]:
    ends = sorted({z for z in marks if zeta_start < z < zeta_max} | {zeta_max})
    return ends


def propagate(state: FieldState, zeta_max: float, stepper: StepperConfig, kernel: RamanKernel,
              grid: SimGrid, rng: RandomSource = None,
              observers: Sequence[Observer] = ()) -> PropagationResult:
    """Integrate from state.zeta to zeta_max.

    The interval is split at the configured snapshot positions; each segment
    uses equal steps no larger than d_zeta. Adjacent half dispersion steps
    are fused, which is the same Strang sequence as repeated step() calls.
    Deterministic for a fixed random source.
    """
    diagnostics: Dict[str, float] = {"steps": 0, "max_edge_fraction": 0.0}
    if zeta_max <= state.zeta:
        return PropagationResult(state.copy(), [], diagnostics)

    d_zeta = resolve_step(stepper, state)
    diagnostics["d_zeta"] = d_zeta
    if stepper.nonlinearity:
        diagnostics["phase_per_step"] = check_step_size(state, kernel, d_zeta)

    fields = np.stack([state.phi_x, state.phi_y], axis=-2)
    zeta = state.zeta
    snapshots: List[Snapshot] = []
    snapshot_marks = {round(z, 12) for z in stepper.snapshots}

    for end in _segments(zeta, zeta_max, stepper.snapshots):
        n_steps = max(1, math.ceil((end - zeta) / d_zeta - 1e-9))
        d_seg = (end - zeta) / n_steps
        half = _half_dispersion(grid, d_seg, stepper.dispersion)
        full = half * half
        spectrum = forward_spectrum(fields, grid) * half
        for k in range(n_steps):
            fields = inverse_spectrum(spectrum, grid)
            phase = _nonlinear_phase(fields, stepper, kernel, grid, rng, d_seg)
            if phase is not None:
                fields *= np.exp(1j * phase)
            if not np.isfinite(fields).all():
                raise IntegrationError("non-finite field values", zeta=zeta + (k + 1) * d_seg)
            spectrum = forward_spectrum(fields, grid)
            spectrum *= full if k < n_steps - 1 else half
        fields = inverse_spectrum(spectrum, grid)
        zeta = end
        diagnostics["steps"] += n_steps

        current = FieldState(fields[..., 0, :], fields[..., 1, :], zeta)
        edge_fraction = _warn_aliasing(fields, grid, zeta)
        diagnostics["max_edge_fraction"] = max(diagnostics["max_edge_fraction"], edge_fraction)
        if round(zeta, 12) in snapshot_marks:
            snapshots.append(take_snapshot(current, grid))
        for observer in observers:
            observer(zeta, current)

    return PropagationResult(current, snapshots, diagnostics)
