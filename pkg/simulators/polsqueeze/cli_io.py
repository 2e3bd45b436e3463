"""
Experiment orchestration and command line
Energy sweeps, propagation snapshots, shot-noise calibration and phase-noise
fits, each writing plot-ready CSV plus JSON provenance
"""

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import replace
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy

from . import __version__
from .config import ENV_LOG_LEVEL, ENV_OUTPUT_DIR, ExperimentConfig, load_config
from .ensemble import EnsembleRunner
from .errors import (
    AnalysisError,
    ConfigError,
    DomainError,
    FitError,
    IntegrationError,
    PolSqueezeError,
    ValidationError,
)
from .grid_spectral import photon_flux_number, rms_width, temporal_fwhm
from .phase_noise_fit import (
    FitResult,
    KerrSimData,
    PhaseNoiseModel,
    fibre_ordering,
    fit_phase_coefficient,
    noisy_variances,
    optimal_angle,
)
from .propagator import Snapshot, take_snapshot
from .raman_model import build_kernel, load_model
from .stokes_observables import (
    SWEEP_COLUMNS,
    SqueezingCurvePoint,
    apply_detection_loss,
    dark_plane_variance,
    find_extremal_angles,
    normalisation_check,
    ordering_correction_ratio,
    to_db,
)
from .units_params import PulseSpec, dimensionless_length, soliton_amplitude

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_FIT = 4

CALIBRATION_ANGLES = 8
FIT_CURVE_POINTS = 101
FIT_CURVE_COLUMNS = ("energy_pj", "theta_K_deg", "theta_N_deg", "rho_s_noisy", "rho_a_noisy",
                     "rho_s_noisy_detected_db", "rho_a_noisy_detected_db")


def _format(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[Mapping[str, Any]]) -> Path:
    """Write rows with full float precision so identical runs give identical bytes"""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row[c]) for c in columns])
    return path


def write_json(path: Path, payload: Mapping[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, default=_json_default)
        f.write("\n")
    return path


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def read_sweep_csv(path) -> KerrSimData:
    """Kerr data from a sweep CSV (energy in pJ, angle in rad)"""
    path = Path(path)
    if not path.exists():
        raise FitError(f"sweep file not found: {path}")
    table = np.genfromtxt(path, delimiter=",", names=True, dtype=float, ndmin=1)
    names = table.dtype.names or ()
    for column in ("energy_pj", "theta_K_rad", "rho_s", "rho_a"):
        if column not in names:
            raise FitError(f"{path.name}: missing column {column}")
    if table.size == 0:
        raise FitError(f"{path.name}: no sweep points")
    try:
        return KerrSimData(table["energy_pj"] * 1e-12, table["theta_K_rad"],
                           table["rho_s"], table["rho_a"])
    except AnalysisError as e:
        raise FitError(f"{path.name}: {e}") from e


def read_measured_csv(path) -> Tuple[np.ndarray, np.ndarray]:
    """Measured squeezing angles: columns energy_pj, theta_deg; returns (J, rad)"""
    path = Path(path)
    if not path.exists():
        raise FitError(f"measured-angle file not found: {path}")
    table = np.genfromtxt(path, delimiter=",", names=True, dtype=float, ndmin=1)
    names = table.dtype.names or ()
    if "energy_pj" not in names or "theta_deg" not in names:
        raise FitError(f"{path.name}: expected columns energy_pj,theta_deg")
    return table["energy_pj"] * 1e-12, np.radians(table["theta_deg"])


def run_metadata(config: ExperimentConfig) -> Dict[str, Any]:
    return {
        "timestamp": datetime.now().isoformat(),
        "config_hash": config.config_hash(),
        "seed": config.ensemble.seed,
        "versions": {
            "polsqueeze": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "config": config.to_dict(),
    }


class ExperimentRunner:
    """Builds the fibre model once and runs sweeps, snapshots and calibrations on it"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.params = config.fibre.physical_params()
        self.grid = config.grid.sim_grid()
        self.stepper = config.stepper.stepper()
        self.zeta_max = dimensionless_length(self.params)
        self.model = load_model(config.raman.path, self.params,
                                config.raman.instantaneous_fraction, config.raman.enabled)
        self.kernel = build_kernel(self.model, self.grid, self.params,
                                   response=self.stepper.raman_response,
                                   noise=self.stepper.raman_noise)
        self.out_dir = Path(config.output_dir)

    def ensemble_runner(self, stepper=None) -> EnsembleRunner:
        ensemble = self.config.ensemble
        stepper = stepper or self.stepper
        kernel = self.kernel
        if stepper is not self.stepper:
            kernel = build_kernel(self.model, self.grid, self.params,
                                  response=stepper.raman_response, noise=stepper.raman_noise)
        return EnsembleRunner(self.params, self.grid, kernel, stepper, self.zeta_max,
                              seed=ensemble.seed, batch_size=ensemble.batch_size,
                              threads=ensemble.threads,
                              relative_phase=self.config.pulse.relative_phase)

    def sweep_point(self, runner: EnsembleRunner, energy: float,
                    energy_index: int) -> Tuple[SqueezingCurvePoint, Dict[str, Any]]:
        pulse = PulseSpec(energy, self.config.pulse.relative_phase)
        amplitude = soliton_amplitude(pulse.energy_total, self.params)
        result = runner.run(amplitude, self.config.ensemble.trajectories, energy_index,
                            relative_phase=pulse.relative_phase)
        extremal = find_extremal_angles(result.stats)
        point = SqueezingCurvePoint.from_extremal(pulse.energy_total, extremal)
        offset = self.grid.n_points if runner.stepper.vacuum_noise else 0.0
        check = normalisation_check(result.stats, offset)
        diagnostics = dict(result.diagnostics)
        diagnostics.update({
            "amplitude": amplitude,
            "degenerate": extremal.degenerate,
            "s3_s0_agreement": check,
            "ordering_correction": ordering_correction_ratio(self.grid.n_points, check["mean_s0"]),
        })
        return point, diagnostics

    def run_sweep(self) -> Dict[str, Any]:
        """Squeezing curve over the configured energies.

        A failing energy point is logged and recorded in the metadata; the
        remaining points still run.
        """
        config = self.config
        label = config.fibre.label
        runner = self.ensemble_runner()
        metadata = run_metadata(config)
        points: List[SqueezingCurvePoint] = []
        errors, diagnostics, timings = [], {}, {}

        for index, energy in enumerate(config.energies_j):
            energy_pj = energy * 1e12
            key = repr(energy_pj)
            started = time.perf_counter()
            logger.info("[SWEEP] %s: energy %.4g pJ (%d/%d)", label, energy_pj, index + 1,
                        len(config.energies_j))
            try:
                point, point_diagnostics = self.sweep_point(runner, energy, index)
            except PolSqueezeError as e:
                logger.error("[SWEEP] %s: energy %.4g pJ failed: %s", label, energy_pj, e)
                errors.append({"energy_pj": energy_pj, "error_type": type(e).__name__,
                               "message": str(e)})
                continue
            finally:
                timings[key] = time.perf_counter() - started
            points.append(point)
            diagnostics[key] = point_diagnostics
            logger.info("[OK] %.4g pJ: theta_K=%.4f rad, squeezing %.2f dB, antisqueezing %.2f dB",
                        energy_pj, point.theta_k, float(to_db(point.rho_s)), float(to_db(point.rho_a)))

        loss = self.params.loss_fraction
        raw_path = write_csv(self.out_dir / f"sweep_{label}.csv", SWEEP_COLUMNS,
                             [p.csv_row() for p in points])
        detected_path = write_csv(self.out_dir / f"sweep_{label}_detected.csv", SWEEP_COLUMNS,
                                  [p.detected(loss).csv_row() for p in points])
        metadata.update({"timings_s": timings, "diagnostics": diagnostics, "errors": errors,
                         "outputs": [raw_path.name, detected_path.name]})
        meta_path = write_json(self.out_dir / f"sweep_{label}.meta.json", metadata)
        return {
            "status": "success" if points else "error",
            "points": points,
            "errors": errors,
            "files": [str(raw_path), str(detected_path), str(meta_path)],
        }

    def run_snapshots(self, energy_pj: Optional[float] = None) -> Dict[str, Any]:
        """Noiseless propagation with intensity and spectrum snapshots"""
        energy_pj = self.config.pulse.energy_pj[0] if energy_pj is None else energy_pj
        energy = energy_pj * 1e-12
        marks = self.stepper.snapshots or tuple(np.linspace(0.0, self.zeta_max, 6))
        stepper = replace(self.stepper.deterministic(),
                          snapshots=tuple(z for z in marks if z > 0))
        runner = self.ensemble_runner(stepper)
        amplitude = soliton_amplitude(energy, self.params)
        initial = runner.initial_state(amplitude, None, 1)
        logger.info("[SWEEP] snapshots for %s at %.4g pJ (A=%.4f, zeta_max=%.4g)",
                    self.config.fibre.label, energy_pj, amplitude, self.zeta_max)
        result = runner.run_deterministic(amplitude)

        snapshots: List[Snapshot] = list(result.snapshots)
        if any(z <= 0 for z in marks):
            snapshots.insert(0, take_snapshot(initial, self.grid))
        folder = self.out_dir / f"snapshots_{self.config.fibre.label}_{energy_pj:g}pj"
        omega = self.grid.omega_centred
        metrics, files = [], []
        for snap in snapshots:
            tag = f"{snap.zeta:.6g}"
            intensity = snap.intensity[0]
            power = np.fft.fftshift(snap.spectrum[0])
            files.append(write_csv(folder / f"zeta_{tag}.csv", ("tau", "intensity"),
                                   [{"tau": t, "intensity": i} for t, i in zip(self.grid.tau, intensity)]))
            files.append(write_csv(folder / f"spectrum_zeta_{tag}.csv", ("omega", "spectral_power"),
                                   [{"omega": w, "spectral_power": p} for w, p in zip(omega, power)]))
            field_x = np.sqrt(intensity)
            metrics.append({
                "zeta": snap.zeta,
                "peak_intensity": float(intensity.max()),
                "temporal_fwhm": temporal_fwhm(field_x, self.grid),
                "rms_width": rms_width(field_x, self.grid) if intensity.any() else 0.0,
                "spectral_centroid": float(np.sum(omega * power) / power.sum()) if power.any() else 0.0,
                "photon_number": float(photon_flux_number(field_x, self.grid, self.params.nbar_eff)),
            })
        metadata = run_metadata(self.config)
        metadata.update({"energy_pj": energy_pj, "amplitude": amplitude,
                         "diagnostics": result.diagnostics, "metrics": metrics})
        files.append(write_json(folder / "snapshots.meta.json", metadata))
        return {"status": "success", "metrics": metrics, "files": [str(f) for f in files]}

    def run_calibrate(self, energy_pj: Optional[float] = None) -> Dict[str, Any]:
        """Shot-noise check: linear propagation with vacuum noise only"""
        energy_pj = self.config.pulse.energy_pj[-1] if energy_pj is None else energy_pj
        stepper = replace(self.stepper, nonlinearity=False, raman_noise=False, vacuum_noise=True)
        runner = self.ensemble_runner(stepper)
        amplitude = soliton_amplitude(energy_pj * 1e-12, self.params)
        result = runner.run(amplitude, self.config.ensemble.trajectories, energy_index=0)

        angles = np.arange(CALIBRATION_ANGLES) * np.pi / CALIBRATION_ANGLES
        rows = []
        for theta in angles:
            variance = dark_plane_variance(result.samples, float(theta))
            deviation = (variance.rho - 1.0) / variance.standard_error
            rows.append({"theta_rad": float(theta), "rho": variance.rho,
                         "standard_error": variance.standard_error, "z_score": deviation})
        check = normalisation_check(result.stats, self.grid.n_points)
        passed = all(abs(r["z_score"]) <= 4.0 for r in rows) and abs(check["z_score"]) <= 3.0
        report = {
            "timestamp": datetime.now().isoformat(),
            "energy_pj": energy_pj,
            "trajectories": self.config.ensemble.trajectories,
            "angles": rows,
            "s3_s0_agreement": check,
            "passed": passed,
        }
        path = write_json(self.out_dir / f"calibration_{self.config.fibre.label}.json", report)
        level = logging.INFO if passed else logging.WARNING
        logger.log(level, "[%s] shot-noise calibration for %s", "OK" if passed else "CHECK",
                   self.config.fibre.label)
        report.update({"status": "success", "files": [str(path)]})
        return report


def fit_curve_rows(sim: KerrSimData, model: PhaseNoiseModel,
                   loss_fraction: float) -> List[Dict[str, float]]:
    """theta_K and theta_N with the noisy extremal variances across the simulated range"""
    lo, hi = sim.energy_range
    energies = np.unique(np.concatenate([np.linspace(lo, hi, FIT_CURVE_POINTS), sim.energies]))
    theta_k, rho_s, rho_a = sim.at(energies)
    theta_n, _ = optimal_angle(theta_k, rho_s, rho_a, model.rho_p(energies))
    low, high = noisy_variances(energies, sim, model)
    rows = []
    for e, tk, tn, v_min, v_max in zip(energies, theta_k, theta_n, low, high):
        rows.append({
            "energy_pj": e * 1e12,
            "theta_K_deg": math.degrees(tk),
            "theta_N_deg": math.degrees(tn),
            "rho_s_noisy": v_min,
            "rho_a_noisy": v_max,
            "rho_s_noisy_detected_db": float(to_db(apply_detection_loss(v_min, loss_fraction))),
            "rho_a_noisy_detected_db": float(to_db(apply_detection_loss(v_max, loss_fraction))),
        })
    return rows


def run_fit(pairs: Mapping[str, Tuple[str, str]], out_dir, fit_offset: bool = False,
            loss_fraction: float = 0.24) -> Dict[str, Any]:
    """Fit c_p per fibre; pairs maps a label to (sweep CSV, measured CSV)"""
    if not pairs:
        raise FitError("no (sweep, measured) pairs given")
    out_dir = Path(out_dir)
    results: Dict[str, FitResult] = {}
    files = []
    for label, (sweep_csv, measured_csv) in pairs.items():
        sim = read_sweep_csv(sweep_csv)
        energies, theta_exp = read_measured_csv(measured_csv)
        try:
            result = fit_phase_coefficient(energies, theta_exp, sim, fit_offset=fit_offset)
        except FitError as e:
            e.diagnostics.setdefault("fibre", label)
            raise
        results[label] = result
        files.append(write_csv(out_dir / f"fit_curve_{label}.csv", FIT_CURVE_COLUMNS,
                               fit_curve_rows(sim, result.model, loss_fraction)))
    ordering = fibre_ordering(results)
    report = {"fibres": {label: r.report() for label, r in results.items()}, "ordering": ordering}
    files.append(write_json(out_dir / "fit_report.json", report))
    logger.info("[FIT] phase-noise ordering (smallest c_p first): %s", ", ".join(ordering))
    return {"status": "success", "report": report, "results": results,
            "files": [str(f) for f in files]}


def run_sweep(config: ExperimentConfig) -> Dict[str, Any]:
    return ExperimentRunner(config).run_sweep()


def run_snapshots(config: ExperimentConfig, energy_pj: Optional[float] = None) -> Dict[str, Any]:
    return ExperimentRunner(config).run_snapshots(energy_pj)


def run_calibrate(config: ExperimentConfig, energy_pj: Optional[float] = None) -> Dict[str, Any]:
    return ExperimentRunner(config).run_calibrate(energy_pj)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polsqueeze",
        description="Stochastic simulation of polarisation squeezing in optical fibre",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="configs/fibre_13m.yaml", help="YAML or JSON run file")
    common.add_argument("--seed", type=int, help="master random seed")
    common.add_argument("--trajectories", type=int, help="trajectories per energy")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="squeezing curve over the configured energies")
    snap = sub.add_parser("snapshots", parents=[common], help="noiseless propagation snapshots")
    snap.add_argument("--energy", type=float, help="pulse energy in pJ")
    calib = sub.add_parser("calibrate", parents=[common], help="shot-noise calibration run")
    calib.add_argument("--energy", type=float, help="pulse energy in pJ")
    fit = sub.add_parser("fit", parents=[common], help="fit excess phase noise to measured angles")
    fit.add_argument("--pair", nargs=3, action="append", required=True,
                     metavar=("LABEL", "SWEEP_CSV", "MEASURED_CSV"),
                     help="fibre label with its sweep and measured-angle files (repeatable)")
    fit.add_argument("--fit-offset", action="store_true", help="also fit a constant phase-noise term")
    fit.add_argument("--loss", type=float, help="detection loss for the fit curves")
    return parser


def configure_logging(level: Optional[str]) -> None:
    level = (level or os.getenv(ENV_LOG_LEVEL) or "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    return config.with_overrides(seed=args.seed, trajectories=args.trajectories,
                                 threads=args.threads, output_dir=args.out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.command == "fit":
            pairs = {label: (sweep_csv, measured_csv) for label, sweep_csv, measured_csv in args.pair}
            loss = args.loss
            if loss is None:
                loss = load_config(args.config).fibre.loss_fraction if Path(args.config).exists() else 0.24
            out_dir = args.out or os.getenv(ENV_OUTPUT_DIR) or "results"
            result = run_fit(pairs, out_dir, fit_offset=args.fit_offset, loss_fraction=loss)
        else:
            config = _load(args)
            if args.command == "sweep":
                result = run_sweep(config)
            elif args.command == "snapshots":
                result = run_snapshots(config, args.energy)
            else:
                result = run_calibrate(config, args.energy)
    except (ConfigError, DomainError, ValidationError) as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG
    except FitError as e:
        logger.error("Fit failed: %s %s", e, json.dumps(e.diagnostics, default=_json_default))
        return EXIT_FIT
    except (IntegrationError, AnalysisError, PolSqueezeError) as e:
        logger.error("Numerical failure: %s", e)
        return EXIT_NUMERICAL

    for path in result.get("files", []):
        logger.info("Wrote %s", path)
    if result.get("status") != "success":
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
