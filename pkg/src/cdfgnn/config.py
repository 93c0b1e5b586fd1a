"""Simulator settings grouped by concern, loaded from flags, environment and a key=value file."""

from __future__ import annotations

import logging
from contextvars import ContextVar
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, model_validator
from pydantic.fields import FieldInfo
from pydantic_settings import (
    BaseSettings,
    EnvSettingsSource,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)

from .domain.errors import UsageError
from .domain.services.partitioner import DEFAULT_EDGE_ORDER_SEED

logger = logging.getLogger(__name__)

_CONFIG_FILE: ContextVar[Path | None] = ContextVar("cdfgnn_config_file", default=None)


class CacheSettings(BaseModel):
    enabled: bool = Field(default=True, description="Enable the adaptive vertex cache")
    eps_init: float = Field(default=0.01, description="Initial threshold", ge=0)
    mu1: float = Field(default=0.001, description="Lower accuracy band", ge=0)
    mu2: float = Field(default=0.02, description="Upper accuracy band", ge=0)
    nu1: float = Field(default=0.3, description="Threshold ceiling", gt=0)
    nu2: float = Field(default=0.001, description="Threshold floor", ge=0)
    xi: float = Field(default=0.01, description="Maximum additive threshold step", gt=0)
    lambda1: float = Field(default=1.05, description="Loosening factor", gt=1)
    lambda2: float = Field(default=0.9, description="Tightening factor", gt=0, lt=1)
    eps_fixed: float | None = Field(
        default=None,
        description="Pin the threshold to this value (0 reproduces exact sync)",
        ge=0,
    )
    scatter_mode: Literal["delta", "full"] = Field(
        default="delta",
        description="Scatter aggregate deltas or full aggregates",
    )

    @model_validator(mode="after")
    def _floor_below_ceiling(self) -> CacheSettings:
        if self.nu2 > self.nu1:
            raise ValueError("cache.nu2 must not exceed cache.nu1")
        return self


class QuantSettings(BaseModel):
    enabled: bool = Field(default=False, description="Quantize vertex payloads")
    bits: int = Field(default=8, description="Code width", ge=1, le=16)
    bits_forward: int | None = Field(default=None, description="Forward width", ge=1, le=16)
    bits_backward: int | None = Field(default=None, description="Backward width", ge=1, le=16)

    @property
    def forward(self) -> int:
        return self.bits_forward if self.bits_forward is not None else self.bits

    @property
    def backward(self) -> int:
        return self.bits_backward if self.bits_backward is not None else self.bits


class PartitionSettings(BaseModel):
    hosts: int = Field(default=2, description="Number of hosts", ge=1)
    gpus_per_host: int = Field(default=2, description="Workers per host", ge=1)
    alpha: float = Field(default=1.0, description="Edge-balance weight", ge=0)
    beta: float = Field(default=1.0, description="Vertex-balance weight", ge=0)
    gamma: float = Field(default=0.1, description="Host-locality weight", ge=0, le=1)
    edge_order_seed: int | None = Field(
        default=DEFAULT_EDGE_ORDER_SEED,
        description="Seed of the edge stream order (None streams in CSR order)",
    )


class TrainSettings(BaseModel):
    epochs: int = Field(default=200, description="Training iterations", ge=0)
    lr: float = Field(default=0.01, description="Learning rate", gt=0)
    optimizer: Literal["adam", "sgd"] = Field(default="adam", description="Optimizer")
    hidden: int = Field(default=64, description="Hidden dimension", ge=1)
    layers: int = Field(default=2, description="Number of GCN layers", ge=1)
    precision: Literal["float64", "float32"] = Field(default="float64", description="Precision")
    seed: int = Field(default=0, description="Weight init seed")
    loss_reduction: Literal["mean", "sum"] = Field(default="mean", description="Loss reduction")
    param_sync: Literal["end", "per_layer"] = Field(
        default="end",
        description="Reduce gradients after backward or inside the layer loop",
    )
    self_loops: bool = Field(default=False, description="Normalize A + I instead of A")


class CostSettings(BaseModel):
    inner_bandwidth: float = Field(default=22.70e9, description="Inner P2P bytes/s", gt=0)
    outer_bandwidth: float = Field(default=8.27e9, description="Outer P2P bytes/s", gt=0)
    inner_broadcast_bandwidth: float = Field(
        default=19.47e9, description="Inner broadcast bytes/s", gt=0
    )
    outer_broadcast_bandwidth: float = Field(
        default=11.98e9, description="Outer broadcast bytes/s", gt=0
    )
    inner_latency: float = Field(default=1e-5, description="Inner latency (seconds)", gt=0)
    outer_latency: float = Field(default=2e-5, description="Outer latency (seconds)", gt=0)


class RuntimeSettings(BaseModel):
    barrier_timeout: float = Field(
        default=30.0,
        description="Barrier deadlock guard (seconds)",
        gt=0,
        le=3600,
    )
    jitter_seed: int | None = Field(default=None, description="Scheduling noise seed")


class KeyValueSettingsSource(PydanticBaseSettingsSource):
    """
    Settings from a key=value file with dotted keys (cache.enabled=true).

    Blank lines and '#' comments are skipped; "none" or an empty value maps to None.
    """

    def __init__(self, settings_cls: type[BaseSettings], path: Path | None) -> None:
        super().__init__(settings_cls)
        self._path = path

    def get_field_value(self, field: FieldInfo, field_name: str) -> tuple[Any, str, bool]:
        return None, field_name, False

    def __call__(self) -> dict[str, Any]:
        if self._path is None:
            return {}
        if not self._path.is_file():
            raise UsageError(f"config file {self._path} not found")
        data: dict[str, Any] = {}
        with open(self._path, encoding="utf-8") as f:
            for line_number, raw in enumerate(f, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{self._path}:{line_number}: expected key=value")
                key, value = (part.strip() for part in line.split("=", 1))
                parts = key.lower().split(".")
                if parts[0] not in self.settings_cls.model_fields:
                    logger.warning(
                        "unknown config key ignored",
                        extra={"key": key, "path": str(self._path)},
                    )
                    continue
                target = data
                for part in parts[:-1]:
                    target = target.setdefault(part, {})
                target[parts[-1]] = None if value.lower() in ("", "none") else value
        return data


class GroupEnvSettingsSource(EnvSettingsSource):
    """
    CDFGNN_* environment source that tolerates flat flag mirrors.

    CDFGNN_CACHE=on and CDFGNN_QUANT=off belong to the --cache/--quant flags;
    for the cache and quant groups only the CDFGNN_CACHE__* form is read.
    """

    def prepare_field_value(
        self,
        field_name: str,
        field: FieldInfo,
        value: Any,
        value_is_complex: bool,
    ) -> Any:
        is_group = isinstance(field.annotation, type) and issubclass(field.annotation, BaseModel)
        if is_group and value is not None:
            try:
                decoded = super().prepare_field_value(field_name, field, value, value_is_complex)
            except ValueError:
                decoded = None
            if isinstance(decoded, dict):
                return decoded
            value = None
        return super().prepare_field_value(field_name, field, value, value_is_complex)


class Settings(BaseSettings):
    """Simulator settings: CLI overrides > CDFGNN_* environment > config file > defaults."""

    model_config = SettingsConfigDict(
        env_prefix="CDFGNN_",
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="ignore",
    )

    cache: CacheSettings = Field(default_factory=CacheSettings)
    quant: QuantSettings = Field(default_factory=QuantSettings)
    partition: PartitionSettings = Field(default_factory=PartitionSettings)
    train: TrainSettings = Field(default_factory=TrainSettings)
    cost: CostSettings = Field(default_factory=CostSettings)
    runtime: RuntimeSettings = Field(default_factory=RuntimeSettings)

    # Logging settings
    log_level: str = Field(
        default="INFO",
        description="Logging level",
        pattern="^(DEBUG|INFO|WARNING|ERROR|CRITICAL)$",
    )
    metrics_wall_clock: bool = Field(
        default=True,
        description="Write measured wall time (False writes 0 for reproducible files)",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (
            init_settings,
            GroupEnvSettingsSource(settings_cls),
            KeyValueSettingsSource(settings_cls, _CONFIG_FILE.get()),
        )

    def warn_conflicts(self) -> list[str]:
        """Log and return settings that are set but have no effect."""
        warnings = []
        quant_fields = self.quant.model_fields_set - {"enabled"}
        if not self.quant.enabled and quant_fields:
            warnings.append("quant.bits given while quant.enabled is false; ignored")
        cache_fields = self.cache.model_fields_set - {"enabled"}
        if not self.cache.enabled and cache_fields:
            warnings.append("cache parameters given while cache.enabled is false; ignored")
        for message in warnings:
            logger.warning(message)
        return warnings


def load_settings(config_file: str | Path | None = None, **overrides: Any) -> Settings:
    """
    Build settings from an optional key=value file plus explicit overrides.

    Args:
        config_file: Path of a key=value file
        **overrides: Nested dicts taking precedence over every other source

    Returns:
        Settings instance

    Raises:
        UsageError: If the config file is missing or malformed
    """
    token = _CONFIG_FILE.set(Path(config_file) if config_file is not None else None)
    try:
        return Settings(**overrides)
    finally:
        _CONFIG_FILE.reset(token)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Settings from the environment alone, built once per process."""
    return Settings()
