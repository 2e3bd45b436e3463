import math

import numpy as np
import pytest

from simulators.polsqueeze.ensemble import (
    EnsembleRunner,
    batch_layout,
    trajectory_stream,
    trajectory_streams,
)
from simulators.polsqueeze.errors import ConfigError
from simulators.polsqueeze.grid_spectral import SimGrid
from simulators.polsqueeze.propagator import StepperConfig
from simulators.polsqueeze.raman_model import RamanModel, build_kernel
from simulators.polsqueeze.stokes_observables import (
    dark_plane_variance,
    find_extremal_angles,
    normalisation_check,
)


def make_runner(params, grid, kernel, stepper, **kwargs):
    return EnsembleRunner(params, grid, kernel, stepper, zeta_max=kwargs.pop("zeta_max", 0.05), **kwargs)


def test_streams_are_reproducible_and_distinct():
    a = trajectory_stream(7, 2, 5).standard_normal(4)
    b = trajectory_stream(7, 2, 5).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, trajectory_stream(7, 2, 6).standard_normal(4))
    assert not np.array_equal(a, trajectory_stream(7, 3, 5).standard_normal(4))
    assert not np.array_equal(a, trajectory_stream(8, 2, 5).standard_normal(4))
    streams = trajectory_streams(7, 2, 4, 3)
    assert len(streams) == 3
    assert np.array_equal(streams[1].standard_normal(4), a)


def test_batch_layout():
    assert batch_layout(10, 4) == [(0, 4), (4, 4), (8, 2)]
    assert batch_layout(3, 50) == [(0, 3)]


def test_runner_validation(small_grid, fibre_params, kerr_kernel):
    with pytest.raises(ConfigError):
        make_runner(fibre_params, small_grid, kerr_kernel, StepperConfig(), batch_size=0)
    with pytest.raises(ConfigError):
        make_runner(fibre_params, small_grid, kerr_kernel, StepperConfig(), threads=0)
    runner = make_runner(fibre_params, small_grid, kerr_kernel, StepperConfig())
    with pytest.raises(ConfigError):
        runner.run(1.0, 1)


def test_results_do_not_depend_on_threads(small_grid, fibre_params, toy_raman):
    kernel = build_kernel(toy_raman, small_grid, fibre_params)
    stepper = StepperConfig(d_zeta=0.005)
    serial = make_runner(fibre_params, small_grid, kernel, stepper, seed=11, batch_size=5).run(1.0, 12)
    pooled = make_runner(fibre_params, small_grid, kernel, stepper, seed=11, batch_size=5,
                         threads=3).run(1.0, 12)
    assert np.array_equal(serial.samples.as_matrix(), pooled.samples.as_matrix())
    assert np.array_equal(serial.stats.mean, pooled.stats.mean)
    assert serial.diagnostics["batches"] == 3
    other = make_runner(fibre_params, small_grid, kernel, stepper, seed=12, batch_size=5).run(1.0, 12)
    assert not np.array_equal(serial.samples.as_matrix(), other.samples.as_matrix())


def test_trajectory_does_not_depend_on_batch_size(small_grid, fibre_params, toy_raman):
    kernel = build_kernel(toy_raman, small_grid, fibre_params)
    stepper = StepperConfig(d_zeta=0.005)
    small = make_runner(fibre_params, small_grid, kernel, stepper, seed=3, batch_size=2).run(1.0, 6)
    large = make_runner(fibre_params, small_grid, kernel, stepper, seed=3, batch_size=6).run(1.0, 6)
    assert np.allclose(small.samples.as_matrix(), large.samples.as_matrix(), rtol=1e-10)


def test_deterministic_run_is_noiseless(small_grid, fibre_params, kerr_kernel):
    runner = make_runner(fibre_params, small_grid, kerr_kernel, StepperConfig(), zeta_max=0.5)
    result = runner.run_deterministic(1.0)
    assert result.state.batch_shape == (1,)
    assert np.allclose(np.abs(result.state.phi_x[0]), 1 / np.cosh(small_grid.tau), atol=1e-6)


def test_shot_noise_calibration(fibre_params):
    """Coherent light without nonlinearity sits at the shot-noise level at every angle"""
    grid = SimGrid(64, 40.0)
    kernel = build_kernel(RamanModel.pure_kerr(), grid, fibre_params)
    stepper = StepperConfig(d_zeta=0.05, nonlinearity=False, raman_noise=False)
    runner = make_runner(fibre_params, grid, kernel, stepper, zeta_max=0.5, seed=5, batch_size=2500)
    result = runner.run(1.0, 10_000)
    for theta in np.linspace(0, np.pi, 8, endpoint=False):
        variance = dark_plane_variance(result.samples, theta)
        assert abs(variance.rho - 1.0) < 3 * variance.standard_error
    check = normalisation_check(result.stats, grid.n_points)
    assert abs(check["z_score"]) < 4
    assert check["mean_s3"] == pytest.approx(4 * fibre_params.nbar_eff, rel=1e-3)
    extremes = find_extremal_angles(result.stats)
    assert extremes.rho_s < 1.0 < extremes.rho_a
    assert extremes.rho_a - extremes.rho_s < 0.2
    assert not math.isnan(extremes.se_s)


def test_relative_phase_override(small_grid, fibre_params, kerr_kernel):
    runner = make_runner(fibre_params, small_grid, kerr_kernel, StepperConfig(d_zeta=0.01), seed=2)
    circular = runner.run(1.0, 4)
    linear = runner.run(1.0, 4, relative_phase=0.0)
    assert circular.stats.mean[3] > 0.99 * circular.stats.mean[0]
    assert linear.stats.mean[2] > 0.99 * linear.stats.mean[0]
    assert abs(linear.stats.mean[3]) < 1e-3 * linear.stats.mean[0]
