"""
Excess phase noise model and fit
Adds a depolarising phase-noise term rho_p(E) = c_p*E (+ c_0) to the simulated
Kerr ellipse, finds the angle that minimises the combined variance, and fits
c_p per fibre to measured squeezing angles
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .errors import AnalysisError, ExtrapolationError, FitError
from .stokes_observables import SqueezingCurvePoint

logger = logging.getLogger(__name__)

MAX_PHASE_NOISE = 1e3
GRID_CANDIDATES = 200
MAX_ITERATIONS = 500


def wrap_angle(angle):
    """Map angle differences into [-pi/2, pi/2); angles here are defined modulo pi"""
    return np.mod(np.asarray(angle, dtype=float) + 0.5 * np.pi, np.pi) - 0.5 * np.pi


@dataclass(frozen=True)
class KerrSimData:
    """Simulated Kerr angles and variances per energy (J).

    theta_k is stored unwrapped with period pi so that it interpolates
    smoothly across the 0/pi seam; variances interpolate in log space.
    """

    energies: np.ndarray
    theta_k: np.ndarray
    rho_s: np.ndarray
    rho_a: np.ndarray

    def __post_init__(self):
        arrays = [np.array(v, dtype=float, ndmin=1) for v in
                  (self.energies, self.theta_k, self.rho_s, self.rho_a)]
        energies, theta_k, rho_s, rho_a = arrays
        if len({a.shape for a in arrays}) != 1 or energies.ndim != 1:
            raise AnalysisError("Kerr data arrays must be 1-D and of equal length")
        if energies.size == 0:
            raise AnalysisError("Kerr data is empty")
        if not np.all(np.isfinite(np.concatenate(arrays))):
            raise AnalysisError("Kerr data contains non-finite values")
        if np.any(np.diff(energies) <= 0):
            raise AnalysisError("energies must be strictly increasing")
        if np.any(rho_s <= 0) or np.any(rho_s > rho_a):
            raise AnalysisError("require 0 < rho_s <= rho_a at every energy")
        theta_k = np.unwrap(theta_k, period=np.pi)
        for name, value in zip(("energies", "theta_k", "rho_s", "rho_a"),
                               (energies, theta_k, rho_s, rho_a)):
            value.flags.writeable = False
            object.__setattr__(self, name, value)

    @classmethod
    def from_points(cls, points: Sequence[SqueezingCurvePoint]) -> "KerrSimData":
        ordered = sorted(points, key=lambda p: p.energy)
        return cls(
            [p.energy for p in ordered],
            [p.theta_k for p in ordered],
            [p.rho_s for p in ordered],
            [p.rho_a for p in ordered],
        )

    @property
    def energy_range(self) -> Tuple[float, float]:
        return float(self.energies[0]), float(self.energies[-1])

    def contains(self, energy) -> np.ndarray:
        lo, hi = self.energy_range
        tol = 1e-9 * max(abs(lo), abs(hi))
        energy = np.asarray(energy, dtype=float)
        return (energy >= lo - tol) & (energy <= hi + tol)

    def at(self, energy):
        """Interpolated (theta_K mod pi, rho_s, rho_a) at energy; raises outside the range"""
        energy = np.asarray(energy, dtype=float)
        inside = self.contains(energy)
        if not np.all(inside):
            bad = np.atleast_1d(energy)[~np.atleast_1d(inside)]
            lo, hi = self.energy_range
            raise ExtrapolationError(
                f"energy {bad[0]:.4g} J outside simulated range [{lo:.4g}, {hi:.4g}] J"
            )
        energy = np.clip(energy, *self.energy_range)
        theta = np.mod(np.interp(energy, self.energies, self.theta_k), np.pi)
        rho_s = np.exp(np.interp(energy, self.energies, np.log(self.rho_s)))
        rho_a = np.exp(np.interp(energy, self.energies, np.log(self.rho_a)))
        return theta, rho_s, rho_a


@dataclass(frozen=True)
class PhaseNoiseModel:
    """rho_p(E) = c_p * E + c_0 in shot-noise units; c_p in 1/J"""

    c_p: float = 0.0
    c_0: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.c_p) and self.c_p >= 0):
            raise FitError(f"c_p must be finite and >= 0, got {self.c_p!r}")
        if not (math.isfinite(self.c_0) and self.c_0 >= 0):
            raise FitError(f"c_0 must be finite and >= 0, got {self.c_0!r}")

    def rho_p(self, energy):
        return self.c_p * np.asarray(energy, dtype=float) + self.c_0


def variance_terms(theta, theta_k, rho_s, rho_a, rho_p):
    """rho_p sin^2(theta) + rho_s cos^2(theta - theta_K) + rho_a sin^2(theta - theta_K)"""
    delta = np.asarray(theta) - theta_k
    return rho_p * np.sin(theta) ** 2 + rho_s * np.cos(delta) ** 2 + rho_a * np.sin(delta) ** 2


def total_variance(theta, energy, sim: KerrSimData, model: PhaseNoiseModel):
    """Relative variance at measurement angle theta including phase noise"""
    theta_k, rho_s, rho_a = sim.at(energy)
    return variance_terms(theta, theta_k, rho_s, rho_a, model.rho_p(energy))


def _harmonics(theta_k, rho_s, rho_a, rho_p):
    """rho(theta) = C + (a cos 2theta + b sin 2theta)/2"""
    a = -rho_p + (rho_s - rho_a) * np.cos(2.0 * theta_k)
    b = (rho_s - rho_a) * np.sin(2.0 * theta_k)
    centre = 0.5 * (rho_p + rho_s + rho_a)
    return centre, a, b


def optimal_angle(theta_k, rho_s, rho_a, rho_p):
    """Closed-form minimiser in [0, pi) and a mask of degenerate (a = b = 0) cases"""
    centre, a, b = _harmonics(theta_k, rho_s, rho_a, rho_p)
    degenerate = np.hypot(a, b) <= 1e-12 * np.maximum(centre, np.finfo(float).tiny)
    theta = np.mod(0.5 * np.arctan2(-b, -a), np.pi)
    theta = np.where(degenerate, np.mod(theta_k, np.pi), theta)
    return theta, degenerate


@dataclass(frozen=True)
class MinimizingAngle:
    theta: float
    degenerate: bool = False


def minimizing_angle(energy: float, sim: KerrSimData, model: PhaseNoiseModel) -> MinimizingAngle:
    """theta_N(E); falls back to theta_K with a flag when the variance is isotropic"""
    theta_k, rho_s, rho_a = sim.at(energy)
    theta, degenerate = optimal_angle(theta_k, rho_s, rho_a, model.rho_p(energy))
    return MinimizingAngle(float(theta), bool(degenerate))


def noisy_variances(energy, sim: KerrSimData, model: PhaseNoiseModel):
    """(min, max) over theta of the phase-noise-augmented variance"""
    theta_k, rho_s, rho_a = sim.at(energy)
    centre, a, b = _harmonics(theta_k, rho_s, rho_a, model.rho_p(energy))
    half_amplitude = 0.5 * np.hypot(a, b)
    return centre - half_amplitude, centre + half_amplitude


@dataclass
class FitResult:
    """Fitted phase-noise coefficients for one fibre"""

    model: PhaseNoiseModel
    energies: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    rms_residual: float = 0.0
    diagnostics: Dict[str, object] = field(default_factory=dict, repr=False)

    @property
    def c_p(self) -> float:
        return self.model.c_p

    @property
    def c_0(self) -> float:
        return self.model.c_0

    def report(self) -> Dict[str, object]:
        return {
            "c_p": self.c_p,
            "c_0": self.c_0,
            "rms_residual_deg": math.degrees(self.rms_residual),
            "per_point_residuals": [
                {"energy_pj": float(e) * 1e12, "residual_deg": math.degrees(float(r))}
                for e, r in zip(self.energies, self.residuals)
            ],
        }


def angle_residuals(model: PhaseNoiseModel, energies: np.ndarray, theta_exp: np.ndarray,
                    sim: KerrSimData) -> np.ndarray:
    theta_k, rho_s, rho_a = sim.at(energies)
    theta_n, _ = optimal_angle(theta_k, rho_s, rho_a, model.rho_p(energies))
    return wrap_angle(theta_n - theta_exp)


def _validate_measurements(energies, theta_exp, sim: KerrSimData, min_points: int):
    energies = np.asarray(energies, dtype=float).ravel()
    theta_exp = np.asarray(theta_exp, dtype=float).ravel()
    diagnostics = {"n_points": int(energies.size), "sim_range_j": list(sim.energy_range)}
    if energies.shape != theta_exp.shape:
        raise FitError("energy and angle arrays differ in length", diagnostics)
    if energies.size < min_points:
        raise FitError(f"need at least {min_points} measured points, got {energies.size}",
                       diagnostics)
    if not (np.all(np.isfinite(energies)) and np.all(np.isfinite(theta_exp))):
        raise FitError("measured data contains non-finite values", diagnostics)
    outside = ~sim.contains(energies)
    if np.any(outside):
        diagnostics["outside_pj"] = (energies[outside] * 1e12).tolist()
        raise FitError("measured energies outside the simulated range", diagnostics)
    if np.any(energies <= 0):
        raise FitError("measured energies must be positive", diagnostics)
    return energies, theta_exp, diagnostics


def fit_phase_coefficient(energies, theta_exp, sim: KerrSimData, fit_offset: bool = False,
                          max_iterations: int = MAX_ITERATIONS) -> FitResult:
    """Least-squares fit of theta_N(E; c_p) to measured angles.

    The objective is scanned on {0} plus a geometric grid up to c_max, where
    rho_p(E_max) = 1e3, and refined by bounded Brent minimisation in the
    bracket around the best candidate. With fit_offset, (c_p, c_0) are then
    refined jointly under non-negativity bounds.
    """
    energies, theta_exp, diagnostics = _validate_measurements(
        energies, theta_exp, sim, 3 if fit_offset else 2
    )
    c_max = MAX_PHASE_NOISE / float(energies.max())

    def objective(c_p: float) -> float:
        res = angle_residuals(PhaseNoiseModel(max(c_p, 0.0)), energies, theta_exp, sim)
        return float(np.sum(res ** 2))

    candidates = np.concatenate([[0.0], np.geomspace(c_max * 1e-9, c_max, GRID_CANDIDATES)])
    values = np.array([objective(c) for c in candidates])
    best = int(np.argmin(values))
    lo = candidates[max(best - 1, 0)]
    hi = candidates[min(best + 1, candidates.size - 1)]
    diagnostics.update({"c_max": c_max, "bracket": [float(lo), float(hi)],
                        "grid_best": float(candidates[best])})

    c_p, value = float(candidates[best]), float(values[best])
    if hi > lo:
        result = minimize_scalar(
            objective, bounds=(lo, hi), method="bounded",
            options={"xatol": max(hi * 1e-12, 1e-300), "maxiter": max_iterations},
        )
        diagnostics["iterations"] = int(result.nfev)
        if not result.success:
            diagnostics["message"] = str(result.message)
            raise FitError(f"phase-noise fit did not converge after {result.nfev} evaluations",
                           diagnostics)
        if result.fun < value:
            c_p, value = float(result.x), float(result.fun)

    model = PhaseNoiseModel(c_p)
    if fit_offset:
        c0_max = MAX_PHASE_NOISE

        def residual_vector(x):
            return angle_residuals(PhaseNoiseModel(max(x[0], 0.0), max(x[1], 0.0)),
                                   energies, theta_exp, sim)

        joint = least_squares(
            residual_vector, x0=[c_p, 0.0], bounds=([0.0, 0.0], [c_max, c0_max]),
            x_scale=[max(c_p, c_max * 1e-6), 1.0], max_nfev=max_iterations,
        )
        diagnostics["offset_status"] = int(joint.status)
        if joint.status <= 0:
            diagnostics["message"] = str(joint.message)
            raise FitError("joint (c_p, c_0) fit did not converge", diagnostics)
        if 2.0 * joint.cost <= value:
            model = PhaseNoiseModel(float(joint.x[0]), float(joint.x[1]))

    residuals = angle_residuals(model, energies, theta_exp, sim)
    rms = float(np.sqrt(np.mean(residuals ** 2)))
    logger.info("[FIT] c_p=%.6g /J c_0=%.4g rms=%.4f deg over %d points",
                model.c_p, model.c_0, math.degrees(rms), energies.size)
    return FitResult(model, energies, residuals, rms, diagnostics)


def fibre_ordering(results: Mapping[str, FitResult]) -> List[str]:
    """Fibre labels by increasing phase-noise coefficient"""
    return sorted(results, key=lambda label: (results[label].c_p, label))
