"""Tests for configuration system with TOML support"""

from pathlib import Path

import pytest
from pydantic import ValidationError

from src.tbd_tracker.exceptions import ConfigurationError
from src.tbd_tracker.settings import (
    FilterConfig,
    LoggingSettings,
    RunManifest,
    RunSettings,
    ScenarioConfig,
    TrackerSettings,
    list_presets,
    resolve_filter,
    resolve_scenario,
)

# Test constants to avoid magic values
DEFAULT_RUN_COUNT = 100
DEFAULT_THRESHOLD = 0.6
SCENARIO1_GRID = 128
SCENARIO1_FRAMES = 60
SCENARIO1_INTENSITY = 5.0
SCENARIO1_CLUTTER = 10.0
CUSTOM_FRAMES = 20
CUSTOM_PARTICLES = 300
SHIPPED_PRESETS = {
    "scenario1",
    "scenario2",
    "scenario2b",
    "scenario3",
    "scenario3b",
    "scenario4",
    "scenario4b",
    "oracle_small",
}


class TestTrackerSettings:
    """Test pydantic-based tool settings"""

    def test_default_configuration(self) -> None:
        """Test default configuration values"""
        config = TrackerSettings()

        assert config.log_level == "INFO"
        assert config.run_count == DEFAULT_RUN_COUNT
        assert config.master_seed == 0
        assert config.thread_count >= 1
        assert config.output_directory == Path("results")

    def test_nested_models_validate(self) -> None:
        """Individual settings models accept custom values"""
        logging_settings = LoggingSettings(level="DEBUG")
        run_settings = RunSettings(count=5, threads=2, master_seed=9)

        assert logging_settings.level == "DEBUG"
        assert run_settings.count == 5  # noqa: PLR2004
        assert run_settings.threads == 2  # noqa: PLR2004

    def test_invalid_run_count(self) -> None:
        with pytest.raises(ValidationError):
            RunSettings(count=0, threads=0, master_seed=0)


class TestScenarioConfig:
    """Test scenario TOML documents"""

    def test_from_toml(self, tmp_path: Path) -> None:
        path = tmp_path / "custom.toml"
        path.write_text(
            "\n".join(
                [
                    'name = "custom"',
                    "n = 16",
                    "m = 16",
                    f"frame_count = {CUSTOM_FRAMES}",
                    "birth_step = 2",
                    "death_step = 10",
                    "[background]",
                    'kind = "synthetic-clutter"',
                    "max_intensity = 3.0",
                ]
            )
        )
        scenario = ScenarioConfig.from_toml(path)
        assert scenario.frame_count == CUSTOM_FRAMES
        assert scenario.background.kind == "synthetic-clutter"
        assert scenario.target.kind == "point"

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(ConfigurationError, match="not found"):
            ScenarioConfig.from_toml(tmp_path / "absent.toml")

    def test_malformed_toml(self, tmp_path: Path) -> None:
        path = tmp_path / "broken.toml"
        path.write_text("n = = 3\n")
        with pytest.raises(ConfigurationError, match="Malformed"):
            ScenarioConfig.from_toml(path)

    def test_unknown_field_rejected(self, tmp_path: Path) -> None:
        path = tmp_path / "typo.toml"
        path.write_text("frame_cnt = 3\n")
        with pytest.raises(ValidationError, match="frame_cnt"):
            ScenarioConfig.from_toml(path)

    @pytest.mark.parametrize(
        "birth_step,death_step,frame_count",
        [(5, 3, 10), (0, 11, 10)],
    )
    def test_existence_window_validated(
        self, birth_step: int, death_step: int, frame_count: int
    ) -> None:
        with pytest.raises(ValidationError, match="birth_step"):
            ScenarioConfig(birth_step=birth_step, death_step=death_step, frame_count=frame_count)

    def test_empty_sequence_allowed(self) -> None:
        scenario = ScenarioConfig(frame_count=0, birth_step=0, death_step=0)
        assert scenario.frame_count == 0

    def test_nonpositive_noise_rejected(self) -> None:
        with pytest.raises(ValidationError, match="noise_sigma"):
            ScenarioConfig(noise_sigma=0.0)

    def test_image_background_needs_path(self) -> None:
        with pytest.raises(ValidationError, match="path"):
            ScenarioConfig(background={"kind": "image-file"})


class TestFilterConfig:
    """Test filter TOML documents"""

    def test_defaults(self) -> None:
        config = FilterConfig()
        assert config.detection_threshold == DEFAULT_THRESHOLD
        assert len(config.modes) == len(config.mode_tpm) == len(config.mode_initial)

    def test_mode_shape_mismatch(self) -> None:
        with pytest.raises(ValidationError, match="mode_tpm"):
            FilterConfig(modes=[{"noise_intensity": 0.1}], mode_tpm=[[0.5, 0.5], [0.5, 0.5]])

    def test_threshold_range(self) -> None:
        with pytest.raises(ValidationError, match="detection_threshold"):
            FilterConfig(detection_threshold=1.0)


class TestPresets:
    """Test shipped scenario presets"""

    def test_all_presets_listed(self) -> None:
        assert SHIPPED_PRESETS <= set(list_presets())

    @pytest.mark.parametrize("name", sorted(SHIPPED_PRESETS))
    def test_presets_load_with_companion_filter(self, name: str) -> None:
        scenario, source = resolve_scenario(name)
        config = resolve_filter(None, source)
        assert scenario.name == name
        assert config.n_continuing >= 1

    def test_scenario1_values(self) -> None:
        scenario, _ = resolve_scenario("scenario1")
        assert (scenario.n, scenario.m) == (SCENARIO1_GRID, SCENARIO1_GRID)
        assert scenario.frame_count == SCENARIO1_FRAMES
        assert scenario.target_mean_intensity == SCENARIO1_INTENSITY
        assert scenario.noise_sigma == 1.0
        assert scenario.background.max_intensity == SCENARIO1_CLUTTER

    @pytest.mark.parametrize("name", ["scenario2", "scenario2b", "scenario3", "scenario3b", "scenario4", "scenario4b"])
    def test_presets_share_manoeuvring_track(self, name: str) -> None:
        reference, _ = resolve_scenario("scenario1")
        scenario, _ = resolve_scenario(name)
        assert scenario.trajectory == reference.trajectory
        assert any(segment.turn_rate for segment in scenario.trajectory.segments)

    def test_scenario4b_fluctuates(self) -> None:
        scenario, source = resolve_scenario("scenario4b")
        assert scenario.intensity_fluctuation_halfwidth == 2.0  # noqa: PLR2004
        assert resolve_filter(None, source).intensity_augmented

    def test_unknown_preset(self) -> None:
        with pytest.raises(ConfigurationError, match="neither a file nor a preset"):
            resolve_scenario("no-such-scenario")

    def test_explicit_filter_file_wins(self, tmp_path: Path) -> None:
        path = tmp_path / "filter.toml"
        path.write_text(f"n_continuing = {CUSTOM_PARTICLES}\n")
        _, source = resolve_scenario("scenario1")
        assert resolve_filter(str(path), source).n_continuing == CUSTOM_PARTICLES


class TestRunManifest:
    def test_run_count_positive(self, tmp_path: Path) -> None:
        with pytest.raises(ValidationError, match="run_count"):
            RunManifest(scenario="scenario1", master_seed=0, run_count=0, output_dir=tmp_path)
