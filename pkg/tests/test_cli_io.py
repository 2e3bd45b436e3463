import json
import math
from pathlib import Path

import numpy as np
import pytest

from simulators.polsqueeze.cli_io import (
    EXIT_CONFIG,
    EXIT_FIT,
    EXIT_OK,
    ExperimentRunner,
    main,
    read_measured_csv,
    read_sweep_csv,
    run_fit,
    write_csv,
)
from simulators.polsqueeze.config import config_from_dict, load_config
from simulators.polsqueeze.errors import DomainError, FitError
from simulators.polsqueeze.phase_noise_fit import PhaseNoiseModel, optimal_angle
from simulators.polsqueeze.stokes_observables import SWEEP_COLUMNS

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def tiny_config(out_dir, **ensemble):
    return config_from_dict({
        "fibre": {"label": "tiny", "length_m": 0.52},
        "grid": {"n_points": 64, "tau_window": 20.0},
        "stepper": {"d_zeta": 0.01},
        "pulse": {"energy_pj": [50.0, 100.0]},
        "ensemble": {"trajectories": 24, "batch_size": 8, "seed": 3, **ensemble},
        "output": {"dir": str(out_dir)},
    })


def write_sweep(path):
    energies = np.geomspace(2.0, 100.0, 10)
    rows = [{"energy_pj": e, "theta_K_rad": t, "phi_waveplate_deg": math.degrees(t / 4),
             "rho_s": s, "rho_a": a, "rho_s_db": 10 * math.log10(s), "rho_a_db": 10 * math.log10(a),
             "se_s": 0.0, "se_a": 0.0, "n_traj": 200}
            for e, t, s, a in zip(energies, np.linspace(0.2, 0.5, 10), np.geomspace(0.5, 0.1, 10),
                                  np.geomspace(2.0, 20.0, 10))]
    return write_csv(path, SWEEP_COLUMNS, rows)


def write_measured(path, sim, c_p):
    theta_k, rho_s, rho_a = sim.at(sim.energies)
    theta = optimal_angle(theta_k, rho_s, rho_a, PhaseNoiseModel(c_p).rho_p(sim.energies))[0]
    rows = [{"energy_pj": e * 1e12, "theta_deg": math.degrees(t)} for e, t in zip(sim.energies, theta)]
    return write_csv(path, ("energy_pj", "theta_deg"), rows)


def test_sweep_writes_reproducible_outputs(tmp_path):
    serial = ExperimentRunner(tiny_config(tmp_path / "a", threads=1)).run_sweep()
    pooled = ExperimentRunner(tiny_config(tmp_path / "b", threads=2)).run_sweep()
    assert serial["status"] == pooled["status"] == "success"
    for name in ("sweep_tiny.csv", "sweep_tiny_detected.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    header = (tmp_path / "a" / "sweep_tiny.csv").read_text().splitlines()[0]
    assert tuple(header.split(",")) == SWEEP_COLUMNS
    meta = json.loads((tmp_path / "a" / "sweep_tiny.meta.json").read_text())
    assert meta["seed"] == 3
    assert len(meta["config_hash"]) == 64
    assert meta["errors"] == []
    assert set(meta["versions"]) >= {"numpy", "scipy", "polsqueeze"}
    diagnostics = next(iter(meta["diagnostics"].values()))
    assert diagnostics["batches"] == 3
    assert abs(diagnostics["s3_s0_agreement"]["z_score"]) < 5

    sim = read_sweep_csv(tmp_path / "a" / "sweep_tiny.csv")
    assert sim.energy_range == pytest.approx((50e-12, 100e-12))
    detected = read_sweep_csv(tmp_path / "a" / "sweep_tiny_detected.csv")
    assert np.all(detected.rho_s >= sim.rho_s * 0.76)


def test_snapshots_dispersive_and_raman_regimes(tmp_path):
    config = load_config(CONFIG_DIR / "smoke.yaml", environment=False).with_overrides(
        output_dir=str(tmp_path))
    runner = ExperimentRunner(config)

    weak = runner.run_snapshots(4.8)["metrics"]
    assert len(weak) == 6
    assert weak[0]["zeta"] == 0.0
    assert weak[-1]["temporal_fwhm"] > 2 * weak[0]["temporal_fwhm"]
    assert weak[-1]["photon_number"] == pytest.approx(weak[0]["photon_number"], rel=1e-8)

    strong = runner.run_snapshots(53.5)["metrics"]
    assert abs(strong[0]["spectral_centroid"]) < 1e-10
    assert strong[-1]["spectral_centroid"] < -1e-3

    folder = tmp_path / "snapshots_smoke_53.5pj"
    assert (folder / "snapshots.meta.json").exists()
    assert len(list(folder.glob("zeta_*.csv"))) == 6
    assert len(list(folder.glob("spectrum_zeta_*.csv"))) == 6


def test_sweep_point_validates_the_pulse(tmp_path):
    runner = ExperimentRunner(tiny_config(tmp_path))
    with pytest.raises(DomainError):
        runner.sweep_point(runner.ensemble_runner(), -1e-12, 0)
    point, diagnostics = runner.sweep_point(runner.ensemble_runner(), 50e-12, 0)
    assert point.energy == 50e-12
    assert diagnostics["amplitude"] > 0


def test_snapshots_of_empty_pulse(tmp_path):
    runner = ExperimentRunner(tiny_config(tmp_path))
    metrics = runner.run_snapshots(0.0)["metrics"]
    assert all(m["peak_intensity"] == 0.0 for m in metrics)
    assert metrics[-1]["temporal_fwhm"] is None


def test_calibration_passes_for_linear_propagation(tmp_path):
    config = tiny_config(tmp_path).with_overrides(trajectories=400)
    report = ExperimentRunner(config).run_calibrate()
    assert report["energy_pj"] == 100.0
    assert len(report["angles"]) == 8
    assert report["passed"]
    assert (tmp_path / "calibration_tiny.json").exists()


def test_fit_from_csv_files(tmp_path):
    sweep = write_sweep(tmp_path / "sweep_13m.csv")
    sim = read_sweep_csv(sweep)
    measured = write_measured(tmp_path / "measured_13m.csv", sim, 5e10)
    energies, theta = read_measured_csv(measured)
    assert energies == pytest.approx(sim.energies)

    long_sweep = write_sweep(tmp_path / "sweep_30m.csv")
    long_measured = write_measured(tmp_path / "measured_30m.csv", sim, 9e10)
    result = run_fit({"13m": (sweep, measured), "30m": (long_sweep, long_measured)}, tmp_path / "fit")
    assert result["report"]["ordering"] == ["13m", "30m"]
    assert result["results"]["13m"].c_p == pytest.approx(5e10, rel=1e-3)
    assert (tmp_path / "fit" / "fit_report.json").exists()
    curve = (tmp_path / "fit" / "fit_curve_30m.csv").read_text().splitlines()
    assert curve[0].startswith("energy_pj,theta_K_deg,theta_N_deg")
    assert len(curve) > 100


def test_fit_input_errors(tmp_path):
    with pytest.raises(FitError):
        read_sweep_csv(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("energy_pj,rho_s\n1.0,0.5\n")
    with pytest.raises(FitError):
        read_sweep_csv(bad)
    with pytest.raises(FitError):
        run_fit({}, tmp_path)


def test_main_sweep(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(tiny_config(tmp_path / "out").to_dict()))
    code = main(["sweep", "--config", str(path), "--trajectories", "12", "--seed", "9",
                 "--log-level", "WARNING"])
    assert code == EXIT_OK
    meta = json.loads((tmp_path / "out" / "sweep_tiny.meta.json").read_text())
    assert meta["seed"] == 9
    assert meta["config"]["ensemble"]["trajectories"] == 12


def test_main_exit_codes(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "absent.yaml")]) == EXIT_CONFIG
    broken = tmp_path / "broken.yaml"
    broken.write_text("grid:\n  n_points: 1000\n")
    assert main(["calibrate", "--config", str(broken)]) == EXIT_CONFIG
    mistyped = tmp_path / "mistyped.yaml"
    mistyped.write_text("fibre:\n  nbar: two hundred million\n")
    assert main(["snapshots", "--config", str(mistyped), "--energy", "4.8"]) == EXIT_CONFIG

    sweep = write_sweep(tmp_path / "sweep.csv")
    outside = tmp_path / "measured.csv"
    outside.write_text("energy_pj,theta_deg\n10.0,15.0\n500.0,10.0\n")
    assert main(["fit", "--pair", "f", str(sweep), str(outside), "--out", str(tmp_path),
                 "--config", str(tmp_path / "absent.yaml")]) == EXIT_FIT


def test_smoke_sweep_squeezes(tmp_path):
    """Short fibre, three energies: squeezing at every point, angle rising with energy"""
    config = load_config(CONFIG_DIR / "smoke.yaml", environment=False).with_overrides(
        output_dir=str(tmp_path))
    result = ExperimentRunner(config).run_sweep()
    assert result["errors"] == []
    for point in result["points"]:
        assert point.rho_s < 1.0 < point.rho_a
    assert result["points"][-1].rho_a > result["points"][0].rho_a
    angles = np.unwrap([p.theta_k for p in result["points"]], period=np.pi)
    assert np.all(np.diff(angles) > 0)
    assert (tmp_path / "sweep_smoke.csv").exists()


def fibre_config(name, out_dir, **changes):
    data = load_config(CONFIG_DIR / name, environment=False).to_dict()
    for section, values in changes.items():
        data[section].update(values)
    data["output"]["dir"] = str(out_dir)
    return config_from_dict(data)


@pytest.mark.slow
def test_full_sweeps_order_the_squeezing_angle(tmp_path):
    short = ExperimentRunner(fibre_config("fibre_13m.yaml", tmp_path)).run_sweep()
    long = ExperimentRunner(fibre_config("fibre_30m.yaml", tmp_path)).run_sweep()
    assert short["errors"] == [] and long["errors"] == []
    short_angles = np.array([p.theta_k for p in short["points"]])
    long_angles = np.array([p.theta_k for p in long["points"]])
    assert np.all(np.diff(short_angles) > 0)
    assert np.all(long_angles >= short_angles)


@pytest.mark.slow
def test_raman_noise_degrades_squeezing_at_high_energy(tmp_path):
    top = {"energy_pj": [100.0]}
    raman = ExperimentRunner(fibre_config("fibre_30m.yaml", tmp_path / "raman", pulse=top)).run_sweep()
    kerr = ExperimentRunner(fibre_config("fibre_30m.yaml", tmp_path / "kerr", pulse=top,
                                         raman={"enabled": False})).run_sweep()
    assert raman["points"][0].rho_s > kerr["points"][0].rho_s
