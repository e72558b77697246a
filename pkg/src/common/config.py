"""
Configuration module for the flow-guided re-identification toolkit.

Process-level settings come from environment variables with sensible defaults.
Per-run configuration (RunConfig) is a flat ``key = value`` file that CLI flags override.
"""

import os
from pathlib import Path

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)
from pydantic_settings import BaseSettings

from src.common.errors import ConfigError
from src.common.utils import parse_int_list


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Logging configuration
    log_level: str = "INFO"
    environment: str = "development"

    # Compute configuration
    workers: int = 0
    precision: str = "float32"

    class Config:
        """Pydantic configuration."""

        env_prefix = "FRID_"
        env_file = ".env"
        case_sensitive = False


# Global settings instance
settings = Settings()


def resolve_workers(requested: int | None = None) -> int:
    """Return the worker count, falling back to the number of available CPUs."""
    workers = requested if requested else settings.workers
    if workers and workers > 0:
        return workers
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


# ===== Run configuration =====

RESOLVED_CONFIG_NAME = "resolved_config.txt"


def _split_ints(value: object) -> object:
    if isinstance(value, str):
        return parse_int_list(value)
    return value


class RunConfig(BaseModel):
    """Flat union of backbone, training, flow, protocol and path settings for one run."""

    model_config = ConfigDict(extra="forbid")

    # Reproducibility
    seed: int = 0
    workers: int = 0
    precision: str = Field(default_factory=lambda: settings.precision)

    # Data
    data_dir: str = "data"
    out_dir: str = "runs/default"
    frame_height: int = Field(64, ge=8)
    frame_width: int = Field(32, ge=8)
    flow_source: str = "estimated"

    # Flow estimation
    flow_alpha: float = Field(0.1, gt=0)
    flow_iterations: int = Field(100, ge=1)
    flow_cap: float = Field(16.0, gt=0)
    flow_presmooth: float = Field(0.5, ge=0)

    # Backbone
    stage_channels: list[int] = Field(default_factory=lambda: [16, 32, 64, 128, 128])
    inject_stage: int = 4
    descriptor_dim: int = Field(128, ge=4)
    se: bool = False
    se_reduction: int = Field(4, ge=1)

    # Model
    mode: str = "mutual"
    agg: str = "weighted"
    streams: int = Field(1, ge=1, le=2)
    embed_layers: int = Field(1, ge=1, le=2)
    raw_weights: bool = False
    reference_mode: str = "temporal_max"
    flow_cnn_channels: list[int] = Field(default_factory=lambda: [8, 16, 32])

    # Training
    seq_len: int = Field(4, ge=1)
    eval_seq_len: int = Field(4, ge=1)
    identities_per_batch: int = Field(8, ge=2)
    clips_per_identity: int = Field(4, ge=2)
    lr: float = Field(3e-4, ge=0)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    margin: float = Field(0.3, ge=0)
    lambda_id: float = 1.0
    lambda_tri: float = 1.0
    epochs: int = Field(150, ge=0)
    augment: bool = True
    evaluate_every: int = Field(0, ge=0)
    log_seconds: bool = True

    # Evaluation
    ranks: list[int] = Field(default_factory=lambda: [1, 5, 10, 20])
    distance: str = "euclidean"
    seeds: list[int] = Field(default_factory=lambda: [0])

    @field_validator("stage_channels", "flow_cnn_channels", "ranks", "seeds", mode="before")
    @classmethod
    def _split_lists(cls, value: object) -> object:
        return _split_ints(value)

    @model_validator(mode="after")
    def _check_inject_stage(self) -> "RunConfig":
        if not 1 <= self.inject_stage < len(self.stage_channels):
            raise ValueError(
                f"inject_stage must be in 1..{len(self.stage_channels) - 1} so that at least "
                f"one stage follows attention; got {self.inject_stage}"
            )
        return self

    @field_validator("mode")
    @classmethod
    def _check_mode(cls, value: str) -> str:
        if value not in ("mutual", "gated", "none"):
            raise ValueError(f"mode must be one of mutual, gated, none; got '{value}'")
        return value

    @field_validator("agg")
    @classmethod
    def _check_agg(cls, value: str) -> str:
        if value not in ("weighted", "avg", "tattn"):
            raise ValueError(f"agg must be one of weighted, avg, tattn; got '{value}'")
        return value

    @field_validator("precision")
    @classmethod
    def _check_precision(cls, value: str) -> str:
        if value not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64; got '{value}'")
        return value

    @field_validator("distance")
    @classmethod
    def _check_distance(cls, value: str) -> str:
        if value not in ("euclidean", "cosine"):
            raise ValueError(f"distance must be euclidean or cosine; got '{value}'")
        return value

    @field_validator("flow_source")
    @classmethod
    def _check_flow_source(cls, value: str) -> str:
        if value not in ("estimated", "ground_truth"):
            raise ValueError(f"flow_source must be estimated or ground_truth; got '{value}'")
        return value

    @field_validator("reference_mode")
    @classmethod
    def _check_reference_mode(cls, value: str) -> str:
        if value not in ("temporal_max", "argmax_frame"):
            raise ValueError(
                f"reference_mode must be temporal_max or argmax_frame; got '{value}'"
            )
        return value

    @field_validator("ranks")
    @classmethod
    def _sort_ranks(cls, value: list[int]) -> list[int]:
        if not value or any(k < 1 for k in value):
            raise ValueError("ranks must be positive integers")
        return sorted(set(value))

    def to_text(self) -> str:
        """Serialize as the flat ``key = value`` format, one key per line."""
        lines = []
        for key, value in self.model_dump().items():
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def write(self, directory: Path | str, name: str = RESOLVED_CONFIG_NAME) -> Path:
        """Write the resolved config next to run outputs."""
        path = Path(directory) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")
        return path


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        values[key.replace("-", "_")] = value
    return values


def load_run_config(
    path: Path | str | None = None, overrides: dict[str, object] | None = None
) -> RunConfig:
    """
    Resolve a RunConfig from an optional file plus CLI overrides.

    Args:
        path: Optional config file in ``key = value`` format
        overrides: Values from CLI flags; ``None`` entries are ignored

    Returns:
        RunConfig: Validated configuration

    Raises:
        ConfigError: Unknown keys, unparseable values or failed invariants
    """
    values: dict[str, object] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        values.update(parse_config_text(text))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(loc) for loc in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}") from e


def with_overrides(config: RunConfig, **changes: object) -> RunConfig:
    """Return a re-validated copy of ``config`` with ``changes`` applied."""
    try:
        return RunConfig(**{**config.model_dump(), **changes})
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
