"""
Experiment configuration
Loads YAML (or JSON) run files into an ExperimentConfig tree, applies
environment overrides and validates everything up front
"""

import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union, get_args, get_origin, get_type_hints

import yaml
from dotenv import load_dotenv

from .errors import ConfigError, PolSqueezeError
from .grid_spectral import SimGrid
from .propagator import StepperConfig
from .raman_model import SILICA_RAMAN_FILE
from .units_params import PhysicalParams

logger = logging.getLogger(__name__)

BUILTIN_SILICA = "builtin:silica"
ENV_OUTPUT_DIR = "POLSQUEEZE_OUTPUT_DIR"
ENV_THREADS = "POLSQUEEZE_THREADS"
ENV_LOG_LEVEL = "POLSQUEEZE_LOG_LEVEL"


@dataclass(frozen=True)
class FibreConfig:
    label: str = "fibre"
    length_m: float = 13.4
    t0_fs: float = 74.0
    z0_m: float = 0.52
    nbar: float = 2e8
    lambda0_um: float = 1.51
    temperature_k: float = 300.0
    loss_fraction: float = 0.24
    core_scale: float = 1.0

    def physical_params(self) -> PhysicalParams:
        return PhysicalParams(
            t0=self.t0_fs * 1e-15,
            z0=self.z0_m,
            nbar=self.nbar,
            lambda0=self.lambda0_um * 1e-6,
            temperature=self.temperature_k,
            fiber_length=self.length_m,
            loss_fraction=self.loss_fraction,
            core_scale=self.core_scale,
        )


@dataclass(frozen=True)
class GridConfig:
    n_points: int = 1024
    tau_window: float = 40.0

    def sim_grid(self) -> SimGrid:
        return SimGrid(self.n_points, self.tau_window)


@dataclass(frozen=True)
class StepperSettings:
    d_zeta: Optional[float] = None
    snapshots: Tuple[float, ...] = ()
    vacuum_noise: bool = True
    raman_noise: bool = True
    raman_response: bool = True
    nonlinearity: bool = True
    dispersion: bool = True

    def stepper(self) -> StepperConfig:
        return StepperConfig(
            d_zeta=self.d_zeta,
            vacuum_noise=self.vacuum_noise,
            raman_noise=self.raman_noise,
            raman_response=self.raman_response,
            nonlinearity=self.nonlinearity,
            dispersion=self.dispersion,
            snapshots=self.snapshots,
        )


@dataclass(frozen=True)
class RamanSettings:
    file: str = BUILTIN_SILICA
    instantaneous_fraction: float = 0.82
    enabled: bool = True

    @property
    def path(self) -> Path:
        return SILICA_RAMAN_FILE if self.file == BUILTIN_SILICA else Path(self.file)


@dataclass(frozen=True)
class PulseSettings:
    energy_pj: Tuple[float, ...] = (4.8,)
    relative_phase: float = math.pi / 2


@dataclass(frozen=True)
class EnsembleSettings:
    trajectories: int = 200
    batch_size: int = 50
    seed: int = 20240601
    threads: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    """One run file: fibre, grid, stepper, Raman model, sweep and ensemble"""

    fibre: FibreConfig = field(default_factory=FibreConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    stepper: StepperSettings = field(default_factory=StepperSettings)
    raman: RamanSettings = field(default_factory=RamanSettings)
    pulse: PulseSettings = field(default_factory=PulseSettings)
    ensemble: EnsembleSettings = field(default_factory=EnsembleSettings)
    output_dir: str = "results"

    @property
    def energies_j(self) -> Tuple[float, ...]:
        return tuple(e * 1e-12 for e in self.pulse.energy_pj)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["output"] = {"dir": data.pop("output_dir")}
        return data

    def config_hash(self) -> str:
        """sha256 of the canonical JSON dump"""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_overrides(self, seed: Optional[int] = None, trajectories: Optional[int] = None,
                       threads: Optional[int] = None,
                       output_dir: Optional[str] = None) -> "ExperimentConfig":
        ensemble = self.ensemble
        if seed is not None:
            ensemble = replace(ensemble, seed=seed)
        if trajectories is not None:
            ensemble = replace(ensemble, trajectories=trajectories)
        if threads is not None:
            ensemble = replace(ensemble, threads=threads)
        updated = replace(self, ensemble=ensemble,
                          output_dir=output_dir if output_dir is not None else self.output_dir)
        validate_config(updated)
        return updated


SECTIONS = {
    "fibre": FibreConfig,
    "grid": GridConfig,
    "stepper": StepperSettings,
    "raman": RamanSettings,
    "pulse": PulseSettings,
    "ensemble": EnsembleSettings,
}


def _coerce(section: str, key: str, hint: Any, value: Any) -> Any:
    """Convert one YAML value to the field's declared type"""
    if value is None:
        if type(None) in get_args(hint):
            return None
        raise ConfigError(f"'{section}.{key}' must not be empty")
    if get_origin(hint) is Union:
        hint = next(arg for arg in get_args(hint) if arg is not type(None))
    if get_origin(hint) is tuple:
        items = value if isinstance(value, (list, tuple)) else (value,)
        return tuple(_coerce(section, key, get_args(hint)[0], item) for item in items)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"'{section}.{key}' must be true or false, got {value!r}")
        return value
    if hint in (int, float):
        if isinstance(value, bool):
            raise ConfigError(f"'{section}.{key}' must be a number, got {value!r}")
        try:
            number = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"'{section}.{key}' must be a number, got {value!r}")
        if hint is int:
            if not number.is_integer():
                raise ConfigError(f"'{section}.{key}' must be an integer, got {value!r}")
            return int(number)
        return number
    if hint is str and not isinstance(value, str):
        raise ConfigError(f"'{section}.{key}' must be a string, got {value!r}")
    return value


def _build_section(name: str, cls, values: Any):
    if values is None:
        return cls()
    if not isinstance(values, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    known = set(cls.__dataclass_fields__)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {', '.join(unknown)}")
    hints = get_type_hints(cls)
    values = {key: _coerce(name, key, hints[key], value) for key, value in values.items()}
    try:
        return cls(**values)
    except (TypeError, ValueError, PolSqueezeError) as e:
        raise ConfigError(f"invalid '{name}' section: {e}") from e


def config_from_dict(data: Dict[str, Any], base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Build and validate a config from parsed YAML/JSON"""
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a mapping")
    unknown = sorted(set(data) - set(SECTIONS) - {"output"})
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(unknown)}")
    sections = {name: _build_section(name, cls, data.get(name)) for name, cls in SECTIONS.items()}
    raman = sections["raman"]
    if raman.file != BUILTIN_SILICA and base_dir is not None and not Path(raman.file).is_absolute():
        sections["raman"] = replace(raman, file=str((base_dir / raman.file).resolve()))
    output = data.get("output") or {}
    if not isinstance(output, dict):
        raise ConfigError("section 'output' must be a mapping")
    config = ExperimentConfig(output_dir=str(output.get("dir", "results")), **sections)
    validate_config(config)
    return config


def validate_config(config: ExperimentConfig) -> None:
    """Raise ConfigError for anything that would fail later in the run"""
    try:
        config.fibre.physical_params()
        config.grid.sim_grid()
        config.stepper.stepper()
    except (TypeError, ValueError, PolSqueezeError) as e:
        raise ConfigError(str(e)) from e
    if not config.fibre.label or any(c in config.fibre.label for c in "/\\"):
        raise ConfigError(f"fibre label must be a plain name, got {config.fibre.label!r}")
    if not config.pulse.energy_pj:
        raise ConfigError("pulse.energy_pj must list at least one energy")
    if any(not (math.isfinite(e) and e >= 0) for e in config.pulse.energy_pj):
        raise ConfigError("pulse energies must be finite and >= 0 pJ")
    if config.ensemble.trajectories < 2:
        raise ConfigError("ensemble.trajectories must be >= 2")
    if config.ensemble.batch_size < 1 or config.ensemble.threads < 1:
        raise ConfigError("ensemble.batch_size and ensemble.threads must be >= 1")
    if config.raman.enabled and not config.raman.path.exists():
        raise ConfigError(f"Raman parameter file not found: {config.raman.path}")


def apply_environment(config: ExperimentConfig) -> ExperimentConfig:
    """Apply POLSQUEEZE_* overrides from the process environment (and .env)"""
    load_dotenv()
    output_dir = os.getenv(ENV_OUTPUT_DIR)
    threads = os.getenv(ENV_THREADS)
    if threads is not None:
        try:
            threads = int(threads)
        except ValueError:
            raise ConfigError(f"{ENV_THREADS} must be an integer, got {threads!r}")
    if output_dir is None and threads is None:
        return config
    return config.with_overrides(threads=threads, output_dir=output_dir)


def load_config(path: Union[str, Path], environment: bool = True) -> ExperimentConfig:
    """Read a run file; relative Raman paths resolve against its directory"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    config = config_from_dict(data or {}, base_dir=path.parent)
    if environment:
        config = apply_environment(config)
    logger.info("Loaded config %s (fibre %s, %d energies)",
                path.name, config.fibre.label, len(config.pulse.energy_pj))
    return config
