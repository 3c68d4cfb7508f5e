"""Configuration management for cnnpost using Pydantic Settings."""

import logging
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import Field, field_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

logger = logging.getLogger(__name__)

NumericMode = Literal["deterministic", "fast"]


class CnnpostSettings(BaseSettings):
    """Runtime settings loaded from constructor arguments, a TOML file and CNNPOST_* variables."""

    model_config = SettingsConfigDict(
        env_prefix="CNNPOST_",
        case_sensitive=False,
        extra="ignore",
    )

    log_level: str = Field(
        default="INFO", description="Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)"
    )

    # Numerics
    numeric_mode: NumericMode = Field(
        default="deterministic",
        description="'deterministic' runs float64 and reproducible; 'fast' runs float32",
    )
    threads: int = Field(
        default=1, ge=1, description="Worker threads for plane and frame parallelism"
    )

    # Files
    model_dir: Path = Field(
        default=Path("./models"), description="Directory holding per-QP model files"
    )
    report_dir: Path | None = Field(
        default=None, description="Default directory for JSON reports"
    )

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level is a valid Python logging level."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(
                f"Invalid log level '{v}'. Must be one of: {', '.join(valid_levels)}"
            )
        return v.upper()

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type["BaseSettings"],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """Load from an optional TOML file between init arguments and the environment.

        A custom file path can be passed as ``_toml_file``; otherwise ``cnnpost.toml``
        in the working directory is used when it exists.
        """
        init_data = init_settings() if callable(init_settings) else {}
        toml_path = init_data.get("_toml_file") or Path("cnnpost.toml")

        toml_source = None
        if Path(toml_path).exists():
            toml_source = TomlConfigSettingsSource(settings_cls, str(toml_path))

        sources: list[PydanticBaseSettingsSource] = [init_settings]
        if toml_source:
            sources.append(toml_source)
        sources.extend([env_settings, dotenv_settings, file_secret_settings])
        return tuple(sources)

    @property
    def dtype(self) -> type[np.floating]:
        return numeric_dtype(self)

    def to_dict(self) -> dict:
        """Convert configuration to dictionary (useful for logging)."""
        return self.model_dump(mode="json")


def numeric_dtype(settings: CnnpostSettings | None = None) -> type[np.floating]:
    """float64 in deterministic mode, float32 in fast mode."""
    settings = settings or CnnpostSettings()
    return np.float32 if settings.numeric_mode == "fast" else np.float64
