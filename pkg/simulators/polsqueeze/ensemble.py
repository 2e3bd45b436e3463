"""
Trajectory ensembles
Runs batches of Wigner trajectories for one pulse energy on a thread pool and
reduces their Stokes parameters into EnsembleStats in batch order
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .grid_spectral import SimGrid
from .propagator import StepperConfig, default_step_size, propagate
from .pulse_init import FieldState, coherent_sech, vacuum_noise
from .raman_model import RamanKernel
from .stokes_observables import EnsembleStats, StokesSample, stokes_from_fields
from .units_params import PhysicalParams

logger = logging.getLogger(__name__)


def trajectory_stream(seed: int, energy_index: int, trajectory: int) -> np.random.Generator:
    """Counter-based stream owned by one trajectory of one sweep point"""
    sequence = np.random.SeedSequence(seed, spawn_key=(energy_index, trajectory))
    return np.random.Generator(np.random.Philox(sequence))


def trajectory_streams(seed: int, energy_index: int, start: int, count: int) -> List[np.random.Generator]:
    return [trajectory_stream(seed, energy_index, start + k) for k in range(count)]


def batch_layout(n_trajectories: int, batch_size: int) -> List[Tuple[int, int]]:
    """(first trajectory, size) per batch; fixed by the ensemble size alone"""
    return [(start, min(batch_size, n_trajectories - start))
            for start in range(0, n_trajectories, batch_size)]


@dataclass
class EnsembleResult:
    stats: EnsembleStats
    samples: StokesSample
    diagnostics: Dict[str, float] = field(default_factory=dict)


class EnsembleRunner:
    """Propagates trajectory ensembles for a fixed fibre, grid and stepper.

    Each trajectory draws its vacuum and Raman noise from its own stream, so
    the results do not depend on the number of threads.
    """

    def __init__(self, params: PhysicalParams, grid: SimGrid, kernel: RamanKernel,
                 stepper: StepperConfig, zeta_max: float, seed: int = 0,
                 batch_size: int = 50, threads: int = 1, relative_phase: float = np.pi / 2):
        if batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {batch_size!r}")
        if threads < 1:
            raise ConfigError(f"threads must be >= 1, got {threads!r}")
        self.params = params
        self.grid = grid
        self.kernel = kernel
        self.stepper = stepper
        self.zeta_max = zeta_max
        self.seed = seed
        self.batch_size = batch_size
        self.threads = threads
        self.relative_phase = relative_phase

    def initial_state(self, amplitude: float,
                      streams: Optional[List[np.random.Generator]], size: int) -> FieldState:
        mean = coherent_sech(amplitude, self.grid)
        fields = np.broadcast_to(mean, (size, 2, self.grid.n_points)).astype(complex)
        if streams is not None and self.stepper.vacuum_noise:
            fields = fields + np.stack(
                [vacuum_noise(rng, self.grid, self.params.nbar_eff) for rng in streams]
            )
        return FieldState(fields[:, 0, :], fields[:, 1, :], 0.0)

    def run_batch(self, amplitude: float, energy_index: int, start: int, size: int,
                  relative_phase: Optional[float] = None) -> Tuple[StokesSample, Dict[str, float]]:
        streams = trajectory_streams(self.seed, energy_index, start, size)
        state = self.initial_state(amplitude, streams, size)
        stepper = self.stepper
        if stepper.d_zeta is None:
            stepper = replace(stepper, d_zeta=default_step_size(amplitude))
        noisy = self.stepper.raman_noise and self.kernel.has_noise
        result = propagate(state, self.zeta_max, stepper, self.kernel, self.grid,
                           rng=streams if noisy else None)
        if relative_phase is None:
            relative_phase = self.relative_phase
        samples = stokes_from_fields(result.state, relative_phase, self.grid,
                                     self.params.nbar_eff)
        return samples, result.diagnostics

    def run(self, amplitude: float, n_trajectories: int, energy_index: int = 0,
            relative_phase: Optional[float] = None) -> EnsembleResult:
        """Propagate n_trajectories and reduce them; batches merge in index order.

        relative_phase overrides the runner default for the y polarisation.
        """
        if n_trajectories < 2:
            raise ConfigError(f"need at least 2 trajectories, got {n_trajectories}")
        layout = batch_layout(n_trajectories, self.batch_size)
        started = time.perf_counter()

        def work(batch):
            return self.run_batch(amplitude, energy_index, *batch, relative_phase=relative_phase)

        if self.threads == 1 or len(layout) == 1:
            outputs = [work(batch) for batch in layout]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                outputs = list(pool.map(work, layout))

        stats = EnsembleStats()
        for samples, _ in outputs:
            stats = stats.merge(EnsembleStats.from_samples(samples))
        samples = StokesSample.concatenate([s for s, _ in outputs])

        batch_diagnostics = [d for _, d in outputs]
        diagnostics = {
            "batches": len(layout),
            "steps": int(batch_diagnostics[0].get("steps", 0)),
            "d_zeta": float(batch_diagnostics[0].get("d_zeta", 0.0)),
            "max_edge_fraction": max(d.get("max_edge_fraction", 0.0) for d in batch_diagnostics),
            "seconds": time.perf_counter() - started,
        }
        if "phase_per_step" in batch_diagnostics[0]:
            diagnostics["phase_per_step"] = max(d["phase_per_step"] for d in batch_diagnostics)
        logger.info("[ENSEMBLE] %d trajectories in %d batches, %.1f s",
                    n_trajectories, len(layout), diagnostics["seconds"])
        return EnsembleResult(stats, samples, diagnostics)

    def run_deterministic(self, amplitude: float):
        """Single noiseless trajectory (mean-field propagation)"""
        state = self.initial_state(amplitude, None, 1)
        return propagate(state, self.zeta_max, self.stepper.deterministic(), self.kernel, self.grid)
