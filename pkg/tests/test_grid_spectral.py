import numpy as np
import pytest

from simulators.polsqueeze.errors import ContractError, DomainError
from simulators.polsqueeze.grid_spectral import (
    SimGrid,
    aliasing_guard,
    forward_spectrum,
    inverse_spectrum,
    photon_flux_number,
    rms_width,
    spectral_centroid,
    temporal_fwhm,
)


def test_grid_layout(default_grid):
    grid = default_grid
    assert grid.tau.shape == grid.omega.shape == (1024,)
    assert grid.d_tau == pytest.approx(40.0 / 1024)
    assert grid.tau[grid.n_points // 2] == 0.0
    assert grid.omega[0] == 0.0
    assert grid.omega_max == pytest.approx(np.pi / grid.d_tau)
    assert np.all(np.diff(grid.omega_centred) > 0)


def test_grid_arrays_are_read_only(small_grid):
    with pytest.raises(ValueError):
        small_grid.tau[0] = 1.0


@pytest.mark.parametrize("n_points, window", [(1000, 40.0), (8, 40.0), (256, 0.0)])
def test_invalid_grid(n_points, window):
    with pytest.raises(DomainError):
        SimGrid(n_points, window)


def test_wrong_length_is_contract_error(small_grid):
    with pytest.raises(ContractError):
        forward_spectrum(np.ones(100), small_grid)


def test_parseval(default_grid, rng):
    grid = default_grid
    f = rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points)
    spectrum = forward_spectrum(f, grid)
    lhs = np.sum(np.abs(f) ** 2) * grid.d_tau
    rhs = np.sum(np.abs(spectrum) ** 2) * grid.d_omega / (2 * np.pi)
    assert rhs == pytest.approx(lhs, rel=1e-12)


def test_gaussian_transform(default_grid):
    grid = default_grid
    spectrum = forward_spectrum(np.exp(-grid.tau ** 2 / 2), grid)
    expected = np.sqrt(2 * np.pi) * np.exp(-grid.omega ** 2 / 2)
    assert np.max(np.abs(np.abs(spectrum) - expected)) < 1e-10


def test_derivative_sign_convention(default_grid):
    grid = default_grid
    f = np.exp(-grid.tau ** 2 / 2)
    derivative = inverse_spectrum(-1j * grid.omega * forward_spectrum(f, grid), grid)
    assert np.max(np.abs(derivative - (-grid.tau * f))) < 1e-10


def test_inverse_round_trip_batched(small_grid, rng):
    f = rng.standard_normal((3, 2, small_grid.n_points)) + 0j
    assert np.allclose(inverse_spectrum(forward_spectrum(f, small_grid), small_grid), f, atol=1e-12)


def test_aliasing_guard_passes_smooth_pulse(default_grid):
    report = aliasing_guard(1 / np.cosh(default_grid.tau), default_grid)
    assert report.ok and report.status == "ok"


def test_aliasing_guard_flags_white_noise(small_grid, rng):
    report = aliasing_guard(rng.standard_normal(small_grid.n_points), small_grid)
    assert not report.ok
    assert report.status == "warning"
    assert report.edge_fraction == pytest.approx(0.1, abs=0.05)


def test_aliasing_guard_zero_field(small_grid):
    assert aliasing_guard(np.zeros(small_grid.n_points), small_grid).ok


def test_pulse_metrics(default_grid):
    grid = default_grid
    sech = 1 / np.cosh(grid.tau)
    assert photon_flux_number(sech, grid, nbar=3.0) == pytest.approx(6.0, rel=1e-10)
    assert temporal_fwhm(sech, grid) == pytest.approx(2 * np.arccosh(np.sqrt(2)), rel=1e-3)
    assert rms_width(sech, grid) == pytest.approx(np.pi / np.sqrt(12), rel=1e-6)
    assert abs(spectral_centroid(sech, grid)) < 1e-12
    assert temporal_fwhm(np.zeros(grid.n_points), grid) is None


def test_centroid_sign_follows_carrier_offset(default_grid):
    grid = default_grid
    red = np.exp(-grid.tau ** 2 / 2) * np.exp(1j * 2.0 * grid.tau)
    # phi ~ e^{-i omega tau} carries +omega under the +i transform convention
    assert spectral_centroid(red, grid) == pytest.approx(-2.0, abs=1e-8)


def test_transform_is_linear(default_grid, rng):
    grid = default_grid
    f, g = (rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points)
            for _ in range(2))
    a, b = 0.7 - 1.3j, 2.5
    combined = forward_spectrum(a * f + b * g, grid)
    separate = a * forward_spectrum(f, grid) + b * forward_spectrum(g, grid)
    assert np.max(np.abs(combined - separate)) < 1e-12


def test_sech_transform(default_grid):
    grid = default_grid
    spectrum = forward_spectrum(1 / np.cosh(grid.tau), grid)
    expected = np.pi / np.cosh(np.pi * grid.omega / 2)
    assert np.max(np.abs(np.abs(spectrum) - expected)) < 1e-7


def test_aliasing_guard_flags_nyquist_tone(small_grid):
    tone = np.cos(small_grid.omega_max * small_grid.tau)
    report = aliasing_guard(tone, small_grid)
    assert not report.ok
    assert report.edge_fraction == pytest.approx(1.0, rel=1e-9)
