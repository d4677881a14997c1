"""
config_io - The run configuration and its flat dotted-key file format.

One ``section.key=value`` per line; values are JSON literals (strings quoted),
``#`` starts a comment line. The writer sorts keys, so write(load(f)) reproduces
any file the writer produced byte for byte.

Example:
    ```
    schema_version=1
    loss.margin=0.01
    run.seed=7
    task.condition_kind="discrete"
    ```
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from pydantic import Field, ValidationError, model_validator

from ..config import Settings, config_error_from
from ..context import RunContext, env_workers
from ..denoiser import ArchConfig
from ..errors import ConfigError, ConfigMigrationError
from ..losses import PreferenceConfig
from ..schedule import ScheduleConfig
from ..toyworld import CurationConfig, ToyTask
from ..trainer import EvalConfig, TrainConfig
from ..variancelab import VarianceConfig

SCHEMA_VERSION = 1
CONFIG_NAME = "run.cfg"

# Keys filled in from other sections when a run is resolved.
DERIVED_KEYS = ("train.preference", "train.seed", "finetune.preference", "finetune.seed")


class RunSection(Settings):
    seed: int = Field(default=0, description="Global seed.")
    out_dir: str = Field(default="runs/default")
    deterministic: bool = Field(default=False, description="Single-threaded, bit-reproducible.")
    workers: int = Field(default=1, ge=1, description="Worker hint; PREFDIFF_THREADS overrides.")
    run_id: str = Field(default="run")
    debug: bool = Field(default=False, description="NaN/Inf screening after every autodiff op.")


class ModelSection(Settings):
    hidden: int = Field(default=128, ge=1)
    depth: int = Field(default=3, ge=1)
    time_dim: int = Field(default=16, ge=2)
    embed_dim: int = Field(default=16, ge=1)


class CurateSection(CurationConfig):
    source_size: int = Field(default=500, ge=1, description="Source examples to curate from.")

    def curation(self) -> CurationConfig:
        return CurationConfig.create(**self.model_dump(exclude={"source_size"}))


class RunConfig(Settings):
    """Every setting of an experiment, one section per concern."""

    schema_version: int = SCHEMA_VERSION
    run: RunSection = Field(default_factory=RunSection)
    task: ToyTask = Field(default_factory=ToyTask)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    model: ModelSection = Field(default_factory=ModelSection)
    loss: PreferenceConfig = Field(default_factory=PreferenceConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    finetune: TrainConfig = Field(default_factory=TrainConfig.for_finetune)
    curate: CurateSection = Field(default_factory=CurateSection)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    variance: VarianceConfig = Field(default_factory=VarianceConfig)

    @model_validator(mode="after")
    def _same_length(self) -> RunConfig:
        if self.loss.T != self.schedule.T:
            raise ValueError(f"loss.T={self.loss.T} differs from schedule.T={self.schedule.T}")
        return self

    def arch(self) -> ArchConfig:
        return self.task.arch(**self.model.model_dump(), seed=self.run.seed)

    def train_config(self) -> TrainConfig:
        return self.train.replace(seed=self.run.seed, preference=self.loss)

    def finetune_config(self) -> TrainConfig:
        return self.finetune.replace(seed=self.run.seed, preference=self.loss)

    def context(self) -> RunContext:
        return RunContext(
            seed=self.run.seed,
            deterministic=self.run.deterministic,
            workers=env_workers(self.run.workers),
            out_dir=Path(self.run.out_dir),
            run_id=self.run.run_id,
            debug=self.run.debug,
        )

    def with_overrides(self, overrides: dict[str, Any]) -> RunConfig:
        """Apply flat dotted-key overrides and validate the result."""
        flat = flatten(self)
        flat.update(overrides)
        return from_flat(flat)


def _walk(prefix: str, value: Any, out: dict[str, Any]) -> None:
    if isinstance(value, dict):
        for key, item in value.items():
            _walk(f"{prefix}.{key}" if prefix else key, item, out)
    else:
        out[prefix] = value


def _is_derived(key: str) -> bool:
    return any(key == d or key.startswith(d + ".") for d in DERIVED_KEYS)


def flatten(config: RunConfig) -> dict[str, Any]:
    """Dotted keys to JSON-compatible values; derived and computed keys are left out."""
    data = config.model_dump(mode="json", exclude={"loss": {"alpha_scale"}})
    flat: dict[str, Any] = {}
    _walk("", data, flat)
    return {k: v for k, v in flat.items() if not _is_derived(k) and k != "loss.alpha_scale"}


def from_flat(flat: dict[str, Any], source: str = "config") -> RunConfig:
    """Build a RunConfig from dotted keys, rejecting unknown and derived ones."""
    derived = sorted(k for k in flat if _is_derived(k))
    if derived:
        raise ConfigError(
            f"{', '.join(derived)}: set through run.seed and loss.* instead", keys=derived
        )
    version = flat.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        found = version if isinstance(version, int) else -1
        raise ConfigMigrationError(found, SCHEMA_VERSION, source=source)

    nested: dict[str, Any] = {}
    for key, value in flat.items():
        parts = key.split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"{key}: {part} is not a section", keys=[key])
            node = child
        node[parts[-1]] = value
    try:
        return RunConfig(**nested)
    except ValidationError as e:
        raise config_error_from(e) from e


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config(text: str, source: str = "config") -> RunConfig:
    """Parse the flat format; later keys may not repeat earlier ones."""
    flat: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {stripped!r}")
        if key in flat:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key}", keys=[key])
        flat[key] = _parse_value(raw.strip())
    return from_flat(flat, source)


def render_config(config: RunConfig) -> str:
    lines = ["# prefdiff run configuration"]
    lines += [f"{key}={json.dumps(value)}" for key, value in sorted(flatten(config).items())]
    return "\n".join(lines) + "\n"


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


def write_config(config: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_config(config), encoding="utf-8", newline="\n")
    return path
