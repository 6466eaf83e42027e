#!/usr/bin/env python3
"""
Configuration using pydantic-settings
Tool settings, scenario files and filter files are all loaded from TOML only
"""

import os
import tomllib
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, model_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)
from typing_extensions import Self

from .exceptions import ConfigurationError

PRESET_DIR = Path(__file__).parent / "presets"
FILTER_PRESET_SUFFIX = ".filter.toml"


class LoggingSettings(BaseModel):
    """Logging configuration"""

    level: str


class RunSettings(BaseModel):
    """Monte Carlo run defaults"""

    count: int = Field(ge=1)
    threads: int = Field(ge=0)  # 0 selects the available parallelism
    master_seed: int = Field(ge=0)


class OutputSettings(BaseModel):
    """Output location"""

    directory: str


class TrackerSettings(BaseSettings):
    """Central configuration for the command-line tool"""

    model_config = SettingsConfigDict(
        toml_file=["tbd-tracker.toml", "~/.config/tbd-tracker.toml"],
    )

    logging: LoggingSettings = LoggingSettings(level="INFO")
    runs: RunSettings = RunSettings(count=100, threads=0, master_seed=0)
    output: OutputSettings = OutputSettings(directory="results")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """Load settings from TOML file only - no environment variables"""
        _ = init_settings, env_settings, dotenv_settings, file_secret_settings
        return (TomlConfigSettingsSource(settings_cls),)

    @property
    def log_level(self) -> str:
        return self.logging.level

    @property
    def run_count(self) -> int:
        return self.runs.count

    @property
    def thread_count(self) -> int:
        return self.runs.threads or os.cpu_count() or 1

    @property
    def master_seed(self) -> int:
        return self.runs.master_seed

    @property
    def output_directory(self) -> Path:
        return Path(self.output.directory)


class TomlModel(BaseSettings):
    """Configuration document read from a single TOML file"""

    model_config = SettingsConfigDict(extra="forbid")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """Only explicit values count; the TOML file is read by from_toml"""
        _ = settings_cls, env_settings, dotenv_settings, file_secret_settings
        return (init_settings,)

    @classmethod
    def from_toml(cls, path: str | Path) -> Self:
        """Load and validate one TOML document"""
        toml_path = Path(path).expanduser()
        if not toml_path.is_file():
            raise ConfigurationError(f"Configuration file not found: {toml_path}")
        try:
            source = TomlConfigSettingsSource(cls, toml_file=toml_path)
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationError(f"Malformed TOML in {toml_path}: {e}") from e
        return cls(**source.toml_data)


# === Scenario configuration ===


class TrajectorySegment(BaseModel):
    """A stretch of motion governed by one turn rate"""

    duration: int = Field(ge=1)
    velocity: tuple[float, float] | None = None  # (vx, vy) applied at segment start
    turn_rate: float = 0.0  # rad per step


class TrajectorySettings(BaseModel):
    """Ground-truth trajectory description"""

    kind: Literal["segments", "waypoints"] = "segments"
    initial_state: tuple[float, float, float, float] = (10.5, 1.0, 10.5, 0.0)
    segments: list[TrajectorySegment] = Field(default_factory=list)
    waypoints: list[tuple[float, float]] = Field(default_factory=list)
    speed: float = Field(1.0, gt=0)
    process_noise: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _check_waypoints(self) -> Self:
        if self.kind == "waypoints" and len(self.waypoints) < 2:  # noqa: PLR2004
            raise ValueError("waypoint trajectories need at least two waypoints")
        return self


class BackgroundSettings(BaseModel):
    """Static scene behind the target"""

    kind: Literal["flat", "synthetic-clutter", "synthetic-texture", "image-file"] = (
        "flat"
    )
    level: float = 0.0
    max_intensity: float = Field(0.0, ge=0)
    blob_count: int = Field(12, ge=0)
    blob_radius: float = Field(3.0, gt=0)
    texture_scale: float = Field(6.0, gt=0)
    path: str | None = None
    seed: int = Field(7, ge=0)

    @model_validator(mode="after")
    def _check_path(self) -> Self:
        if self.kind == "image-file" and not self.path:
            raise ValueError("image-file backgrounds need a path")
        return self


class TargetSettings(BaseModel):
    """Target appearance"""

    kind: Literal["point", "extended"] = "point"
    kernel: list[list[float]] | None = None
    rotation_per_step: float = 0.0  # degrees


class ScenarioConfig(TomlModel):
    """Simulated scene, sensor geometry and target behaviour"""

    name: str = "custom"
    n: int = Field(128, ge=1)
    m: int = Field(128, ge=1)
    cell_dx: float = Field(1.0, gt=0)
    cell_dy: float = Field(1.0, gt=0)
    frame_count: int = Field(60, ge=0)
    birth_step: int = Field(10, ge=0)
    death_step: int = Field(50, ge=0)
    trajectory: TrajectorySettings = TrajectorySettings()
    target_mean_intensity: float = Field(5.0, gt=0)
    intensity_fluctuation_halfwidth: float = Field(0.0, ge=0)
    noise_sigma: float = Field(1.0, gt=0)
    background: BackgroundSettings = BackgroundSettings()
    target: TargetSettings = TargetSettings()
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_existence_window(self) -> Self:
        if not self.birth_step <= self.death_step <= self.frame_count:
            raise ValueError(
                "birth_step <= death_step <= frame_count must hold "
                f"(got {self.birth_step}, {self.death_step}, {self.frame_count})"
            )
        if self.intensity_fluctuation_halfwidth > self.target_mean_intensity:
            raise ValueError(
                "intensity_fluctuation_halfwidth must not exceed target_mean_intensity"
            )
        return self


# === Filter configuration ===


class ExistenceSettings(BaseModel):
    """Existence Markov chain parameters"""

    p_birth: float = Field(0.05, ge=0, le=1)
    p_death: float = Field(0.05, ge=0, le=1)
    mu1: float = Field(0.1, ge=0, le=1)


class ModeSettings(BaseModel):
    """One motion mode of the multiple-model set"""

    noise_intensity: float = Field(ge=0)
    turn_rate: float = 0.0


class SensorSettings(BaseModel):
    """Filter-side sensor overrides; unset values are derived from the scenario"""

    noise_sigma: float | None = Field(None, gt=0)
    target_intensity: float | None = Field(None, gt=0)
    kernel: list[list[float]] | None = None


class PreprocessSettings(BaseModel):
    """Frame preprocessing pipeline"""

    background_subtraction: bool = True
    background_frames: int = Field(10, ge=1)
    epsilon: float = Field(1e-2, gt=0)
    clamp: bool = True
    inverse_filter: Literal["auto", "on", "off"] = "auto"


class OracleSettings(BaseModel):
    """Grid oracle discretisation"""

    velocity_bins: list[float] = Field(default_factory=lambda: [-1.0, 0.0, 1.0])
    max_cells: int = Field(1_000_000, ge=1)


class FilterConfig(TomlModel):
    """Multiple-model Bernoulli track-before-detect particle filter settings"""

    n_continuing: int = Field(2000, ge=1)
    n_birth: int = Field(2000, ge=1)
    existence: ExistenceSettings = ExistenceSettings()
    modes: list[ModeSettings] = Field(
        default_factory=lambda: [
            ModeSettings(noise_intensity=0.01),
            ModeSettings(noise_intensity=0.3),
        ]
    )
    mode_tpm: list[list[float]] = Field(
        default_factory=lambda: [[0.95, 0.05], [0.1, 0.9]]
    )
    mode_initial: list[float] = Field(default_factory=lambda: [0.8, 0.2])
    sensor: SensorSettings = SensorSettings()
    step: float = Field(1.0, gt=0)
    detection_threshold: float = Field(0.6, gt=0, lt=1)
    birth_proposal_floor: float = 0.5
    birth_velocity_max: float = Field(2.0, ge=0)
    intensity_augmented: bool = False
    intensity_walk_sigma: float = Field(0.2, ge=0)
    birth_intensity_halfwidth: float = Field(2.0, gt=0)
    birth_intensity_max: float = Field(40.0, gt=0)
    preprocess: PreprocessSettings = PreprocessSettings()
    oracle: OracleSettings = OracleSettings()

    @model_validator(mode="after")
    def _check_mode_shapes(self) -> Self:
        mode_count = len(self.modes)
        if mode_count == 0:
            raise ValueError("at least one motion mode is required")
        if len(self.mode_tpm) != mode_count or any(
            len(row) != mode_count for row in self.mode_tpm
        ):
            raise ValueError(f"mode_tpm must be {mode_count}x{mode_count}")
        if len(self.mode_initial) != mode_count:
            raise ValueError(f"mode_initial must have {mode_count} entries")
        return self


class RunManifest(BaseModel):
    """Everything one command invocation needs"""

    scenario: str
    filter: str | None = None
    master_seed: int = Field(ge=0)
    run_count: int = Field(ge=1)
    output_dir: Path
    threads: int = Field(1, ge=1)
    dump_frames: bool = False
    auto_sigma: bool = False
    oracle_compare: bool = False
    diagnostics: bool = False


def resolve_scenario(name_or_path: str) -> tuple[ScenarioConfig, Path]:
    """Load a scenario from a file path or a shipped preset name"""
    candidate = Path(name_or_path).expanduser()
    if candidate.is_file():
        return ScenarioConfig.from_toml(candidate), candidate
    preset = PRESET_DIR / f"{name_or_path}.toml"
    if preset.is_file():
        return ScenarioConfig.from_toml(preset), preset
    raise ConfigurationError(
        f"Scenario '{name_or_path}' is neither a file nor a preset "
        f"({', '.join(list_presets())})"
    )


def resolve_filter(filter_path: str | None, scenario_source: Path) -> FilterConfig:
    """Load an explicit filter file, else the scenario's companion preset"""
    if filter_path is not None:
        return FilterConfig.from_toml(filter_path)
    companion = scenario_source.with_name(
        scenario_source.name.removesuffix(".toml") + FILTER_PRESET_SUFFIX
    )
    if companion.is_file():
        return FilterConfig.from_toml(companion)
    return FilterConfig()


def list_presets() -> list[str]:
    """Names of the shipped scenario presets"""
    return sorted(
        path.name.removesuffix(".toml")
        for path in PRESET_DIR.glob("*.toml")
        if not path.name.endswith(FILTER_PRESET_SUFFIX)
    )
