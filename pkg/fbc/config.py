"""Process-level settings read from the environment."""

import dataclasses

from wipac_dev_tools import from_environment_as_dataclass

from .model import ConfigError


@dataclasses.dataclass(frozen=True)
class EnvConfig:
    """Environment variables understood by fbc; none are required."""

    FBC_LOG_LEVEL: str = "INFO"
    FBC_PARALLELISM: int = 1
    FBC_LZMA_PRESET: int = 9

    def __post_init__(self) -> None:
        if self.FBC_PARALLELISM < 1:
            raise ConfigError(f"FBC_PARALLELISM must be >= 1 ({self.FBC_PARALLELISM})")
        if not 0 <= self.FBC_LZMA_PRESET <= 9:
            raise ConfigError(f"FBC_LZMA_PRESET must be in [0, 9] ({self.FBC_LZMA_PRESET})")


def get_env_config() -> EnvConfig:
    """Read `EnvConfig` from the current environment."""
    return from_environment_as_dataclass(EnvConfig)
