"""
Stokes observables and squeezing statistics
Stokes parameters of field pairs, dark-plane variances relative to the shot
noise |<S3>|, exact extremal angles of the S1-S2 noise ellipse, and the
beam-splitter model of detection loss
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Union

import numpy as np

from .errors import AnalysisError, DomainError
from .grid_spectral import SimGrid
from .pulse_init import FieldState

logger = logging.getLogger(__name__)

ORDERING_CORRECTION_LIMIT = 1e-3
DEGENERACY_SIGMAS = 3.0


@dataclass
class StokesSample:
    """Stokes parameters in photon numbers; scalars for one trajectory or arrays for many"""

    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray

    def __post_init__(self):
        self.s0, self.s1, self.s2, self.s3 = (
            np.asarray(v, dtype=float) for v in (self.s0, self.s1, self.s2, self.s3)
        )

    def as_matrix(self) -> np.ndarray:
        """(n, 4) array with columns S0..S3"""
        return np.stack([np.ravel(v) for v in (self.s0, self.s1, self.s2, self.s3)], axis=-1)

    def __len__(self) -> int:
        return int(np.size(self.s0))

    @classmethod
    def concatenate(cls, samples: List["StokesSample"]) -> "StokesSample":
        stacked = np.concatenate([s.as_matrix() for s in samples], axis=0)
        return cls(*stacked.T)


def stokes_from_fields(state: FieldState, relative_phase: float, grid: SimGrid,
                       nbar: float) -> StokesSample:
    """Stokes parameters after imposing the x-y relative phase on phi_y.

    N_ss' = nbar * sum phi_s^* phi_s' d_tau; S0 = Nxx + Nyy, S1 = Nxx - Nyy,
    S2 = Nxy + Nyx, S3 = i Nyx - i Nxy.
    """
    phi_x = grid.check(state.phi_x)
    phi_y = grid.check(state.phi_y) * np.exp(1j * relative_phase)
    scale = nbar * grid.d_tau
    n_xx = scale * np.sum(np.abs(phi_x) ** 2, axis=-1)
    n_yy = scale * np.sum(np.abs(phi_y) ** 2, axis=-1)
    n_xy = scale * np.sum(np.conj(phi_x) * phi_y, axis=-1)
    return StokesSample(n_xx + n_yy, n_xx - n_yy, 2.0 * n_xy.real, 2.0 * n_xy.imag)


def _wrap_half_turn(angle):
    """Map an angle difference into [-pi/2, pi/2)"""
    return np.mod(np.asarray(angle) + 0.5 * np.pi, np.pi) - 0.5 * np.pi


def _check_shot_noise(mean_s3: float, mean_s0: float) -> float:
    level = abs(mean_s3)
    if not np.isfinite(level) or level == 0 or level <= 1e-9 * abs(mean_s0):
        raise AnalysisError(f"degenerate ensemble: <S3> = {mean_s3:.3e}, <S0> = {mean_s0:.3e}")
    return level


@dataclass(frozen=True)
class DarkPlaneVariance:
    theta: float
    rho: float
    standard_error: float

    @property
    def squeezed(self) -> bool:
        return self.rho < 1.0


def dark_plane_variance(samples: StokesSample, theta: float) -> DarkPlaneVariance:
    """rho(theta) = Var(cos t S1 + sin t S2) / |<S3>| with a delete-one jackknife error"""
    n = len(samples)
    if n < 2:
        raise AnalysisError(f"need at least 2 samples, got {n}")
    s_theta = np.cos(theta) * np.ravel(samples.s1) + np.sin(theta) * np.ravel(samples.s2)
    s3 = np.ravel(samples.s3)
    level = _check_shot_noise(float(s3.mean()), float(np.mean(samples.s0)))
    rho = float(np.var(s_theta, ddof=1) / level)
    if n < 3:
        return DarkPlaneVariance(theta, rho, math.nan)

    centred = s_theta - s_theta.mean()
    total, total_sq = centred.sum(), np.sum(centred ** 2)
    rest = total - centred
    var_loo = (total_sq - centred ** 2 - rest ** 2 / (n - 1)) / (n - 2)
    mean_s3_loo = (s3.sum() - s3) / (n - 1)
    rho_loo = var_loo / np.abs(mean_s3_loo)
    se = math.sqrt((n - 1) / n * np.sum((rho_loo - rho_loo.mean()) ** 2))
    return DarkPlaneVariance(theta, rho, se)


class EnsembleStats:
    """Mergeable first and second moments of (S0, S1, S2, S3).

    Samples are held as groups, each reduced to (count, mean, co-moment);
    groups are delete-one jackknife units. Reductions run in group order with
    pairwise (Chan) updates, so merging in a fixed order is deterministic.
    """

    def __init__(self, counts=None, means=None, comoments=None):
        self.counts = np.zeros(0) if counts is None else np.asarray(counts, dtype=float)
        self.means = np.zeros((0, 4)) if means is None else np.asarray(means, dtype=float)
        self.comoments = (np.zeros((0, 4, 4)) if comoments is None
                          else np.asarray(comoments, dtype=float))

    @classmethod
    def from_samples(cls, samples: StokesSample, group_size: int = 1) -> "EnsembleStats":
        stats = cls()
        stats.add(samples, group_size)
        return stats

    @classmethod
    def from_moments(cls, count: int, mean, covariance) -> "EnsembleStats":
        """Single-group ensemble with a prescribed mean and sample covariance"""
        comoment = np.asarray(covariance, dtype=float) * (count - 1)
        return cls([count], [mean], [comoment])

    def add(self, samples: StokesSample, group_size: int = 1) -> None:
        data = samples.as_matrix()
        n = data.shape[0]
        if n == 0:
            return
        if group_size == 1:
            counts, means, comoments = np.ones(n), data, np.zeros((n, 4, 4))
        else:
            counts, means, comoments = [], [], []
            for start in range(0, n, group_size):
                block = data[start:start + group_size]
                mean = block.mean(axis=0)
                centred = block - mean
                counts.append(block.shape[0])
                means.append(mean)
                comoments.append(centred.T @ centred)
        self.counts = np.concatenate([self.counts, counts])
        self.means = np.concatenate([self.means, means])
        self.comoments = np.concatenate([self.comoments, comoments])

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        return EnsembleStats(
            np.concatenate([self.counts, other.counts]),
            np.concatenate([self.means, other.means]),
            np.concatenate([self.comoments, other.comoments]),
        )

    @property
    def n_groups(self) -> int:
        return int(self.counts.size)

    @property
    def count(self) -> int:
        return int(self.counts.sum())

    def total(self):
        """(count, mean, co-moment) of all groups"""
        if self.n_groups == 0:
            raise AnalysisError("empty ensemble")
        n, mean, m2 = self.counts[0], self.means[0].copy(), self.comoments[0].copy()
        for n_b, mean_b, m2_b in zip(self.counts[1:], self.means[1:], self.comoments[1:]):
            n_new = n + n_b
            delta = mean_b - mean
            mean = mean + delta * (n_b / n_new)
            m2 = m2 + m2_b + np.outer(delta, delta) * (n * n_b / n_new)
            n = n_new
        return n, mean, m2

    @property
    def mean(self) -> np.ndarray:
        return self.total()[1]

    def covariance(self) -> np.ndarray:
        n, _, m2 = self.total()
        if n < 2:
            raise AnalysisError(f"need at least 2 samples, got {int(n)}")
        return m2 / (n - 1)

    def leave_one_out(self):
        """Counts, means and covariances with each group removed in turn"""
        n, mean, m2 = self.total()
        n_b = self.counts
        n_r = n - n_b
        mean_r = (n * mean - n_b[:, None] * self.means) / n_r[:, None]
        delta = self.means - mean_r
        weight = n_b * n_r / n
        m2_r = m2 - self.comoments - weight[:, None, None] * delta[:, :, None] * delta[:, None, :]
        return n_r, mean_r, m2_r / (n_r - 1)[:, None, None]

    def dark_plane_rho(self, theta: float) -> float:
        """Quadratic-form evaluation (cos, sin) C (cos, sin)^T / |<S3>|"""
        cov = self.covariance()
        mean = self.mean
        level = _check_shot_noise(mean[3], mean[0])
        v = np.array([math.cos(theta), math.sin(theta)])
        return float(v @ cov[1:3, 1:3] @ v / level)


def _ellipse(cov2: np.ndarray, level: np.ndarray):
    """Minimum-variance angle and min/max relative variances; vectorised over leading axes"""
    a, b, c = cov2[..., 0, 0], cov2[..., 1, 1], cov2[..., 0, 1]
    centre = 0.5 * (a + b)
    radius = np.sqrt((0.5 * (a - b)) ** 2 + c ** 2)
    theta_max = 0.5 * np.arctan2(2.0 * c, a - b)
    theta_min = np.mod(theta_max + 0.5 * np.pi, np.pi)
    return theta_min, (centre - radius) / level, (centre + radius) / level


@dataclass(frozen=True)
class ExtremalAngles:
    """Squeezing angle and extremal relative variances of the dark-plane ellipse"""

    theta_k: float
    rho_s: float
    rho_a: float
    se_theta: float
    se_s: float
    se_a: float
    n_trajectories: int
    degenerate: bool = False

    @property
    def phi_waveplate(self) -> float:
        """Half-wave-plate angle Phi = theta/4 (rad)"""
        return self.theta_k / 4.0


def find_extremal_angles(ensemble: Union[EnsembleStats, StokesSample]) -> ExtremalAngles:
    """Exact eigen-decomposition of the (S1, S2) covariance.

    theta_K = (1/2) atan2(2 Cov, Var1 - Var2) + pi/2 (the minimum branch) in
    [0, pi); rho_s, rho_a are the eigenvalues over |<S3>|. Errors come from a
    delete-one-group jackknife.
    """
    if isinstance(ensemble, StokesSample):
        ensemble = EnsembleStats.from_samples(ensemble)
    n = ensemble.count
    if n < 2:
        raise AnalysisError(f"need at least 2 samples, got {n}")
    mean = ensemble.mean
    level = _check_shot_noise(mean[3], mean[0])
    theta_k, rho_s, rho_a = _ellipse(ensemble.covariance()[1:3, 1:3], level)
    theta_k, rho_s, rho_a = float(theta_k), float(rho_s), float(rho_a)

    groups = ensemble.n_groups
    if groups < 3:
        se_theta = se_s = se_a = se_gap = math.nan
    else:
        _, means_r, covs_r = ensemble.leave_one_out()
        theta_r, rho_s_r, rho_a_r = _ellipse(covs_r[:, 1:3, 1:3], np.abs(means_r[:, 3]))
        factor = (groups - 1) / groups

        def jackknife(values):
            return math.sqrt(factor * np.sum((values - values.mean()) ** 2))

        se_theta = jackknife(_wrap_half_turn(theta_r - theta_k))
        se_s, se_a = jackknife(rho_s_r), jackknife(rho_a_r)
        se_gap = jackknife(rho_a_r - rho_s_r)
    degenerate = bool(np.isfinite(se_gap) and (rho_a - rho_s) < DEGENERACY_SIGMAS * se_gap)
    if degenerate:
        logger.debug("dark-plane ellipse is degenerate: gap %.3g, se %.3g", rho_a - rho_s, se_gap)
    return ExtremalAngles(theta_k, rho_s, rho_a, se_theta, se_s, se_a, n, degenerate)


def apply_detection_loss(rho, loss_fraction: float):
    """Beam-splitter loss: rho_detected = (1 - loss) rho + loss"""
    if not 0.0 <= loss_fraction < 1.0:
        raise DomainError(f"loss fraction must lie in [0, 1), got {loss_fraction!r}")
    values = np.asarray(rho, dtype=float)
    if np.any(values < 0):
        raise DomainError("relative variance must be >= 0")
    detected = (1.0 - loss_fraction) * values + loss_fraction
    return float(detected) if detected.ndim == 0 else detected


def to_db(rho):
    """10 log10(rho); negative values mean squeezing"""
    return 10.0 * np.log10(rho)


def ordering_correction_ratio(n_points: int, mean_s0: float) -> float:
    """Bound n_points / (4 <S0>) on the neglected symmetric-ordering correction"""
    ratio = n_points / (4.0 * abs(mean_s0)) if mean_s0 else math.inf
    if ratio >= ORDERING_CORRECTION_LIMIT:
        logger.warning("symmetric-ordering correction bound %.2e exceeds %.0e",
                       ratio, ORDERING_CORRECTION_LIMIT)
    return ratio


def normalisation_check(ensemble: EnsembleStats, vacuum_offset: float = 0.0) -> Dict[str, float]:
    """Agreement of <S3> with <S0> in units of the standard error of their difference.

    Symmetrically ordered S0 carries half a photon per mode of vacuum; pass
    vacuum_offset = n_points when the initial state included vacuum noise.
    """
    mean = ensemble.mean
    cov = ensemble.covariance()
    var_diff = (cov[3, 3] + cov[0, 0] - 2.0 * cov[0, 3]) / ensemble.count
    diff = mean[3] - (mean[0] - vacuum_offset)
    z = diff / math.sqrt(var_diff) if var_diff > 0 else (0.0 if diff == 0 else math.inf)
    return {"mean_s0": float(mean[0]), "mean_s3": float(mean[3]), "z_score": float(z)}


@dataclass(frozen=True)
class SqueezingCurvePoint:
    """One energy of a squeezing curve"""

    energy: float
    theta_k: float
    rho_s: float
    rho_a: float
    se_theta: float
    se_s: float
    se_a: float
    n_trajectories: int
    degenerate: bool = False

    @classmethod
    def from_extremal(cls, energy: float, extremal: ExtremalAngles) -> "SqueezingCurvePoint":
        return cls(energy, extremal.theta_k, extremal.rho_s, extremal.rho_a,
                   extremal.se_theta, extremal.se_s, extremal.se_a,
                   extremal.n_trajectories, extremal.degenerate)

    def detected(self, loss_fraction: float) -> "SqueezingCurvePoint":
        gain = 1.0 - loss_fraction
        return replace(
            self,
            rho_s=apply_detection_loss(self.rho_s, loss_fraction),
            rho_a=apply_detection_loss(self.rho_a, loss_fraction),
            se_s=self.se_s * gain,
            se_a=self.se_a * gain,
        )

    def csv_row(self) -> Dict[str, object]:
        return {
            "energy_pj": self.energy * 1e12,
            "theta_K_rad": self.theta_k,
            "phi_waveplate_deg": math.degrees(self.theta_k / 4.0),
            "rho_s": self.rho_s,
            "rho_a": self.rho_a,
            "rho_s_db": float(to_db(self.rho_s)),
            "rho_a_db": float(to_db(self.rho_a)),
            "se_s": self.se_s,
            "se_a": self.se_a,
            "n_traj": self.n_trajectories,
        }


SWEEP_COLUMNS = ("energy_pj", "theta_K_rad", "phi_waveplate_deg", "rho_s", "rho_a",
                 "rho_s_db", "rho_a_db", "se_s", "se_a", "n_traj")
