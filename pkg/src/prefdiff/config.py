"""
Settings - Base class for every prefdiff configuration model.

Configuration sections are pydantic models that reject unknown keys and are frozen
once validated. ``Settings.create`` turns pydantic validation failures into the
package's ConfigError so callers only ever handle one error family.
"""

from __future__ import annotations

from typing import Any, Self

from pydantic import BaseModel, ConfigDict, ValidationError

from .errors import ConfigError


def _error_keys(exc: ValidationError) -> list[str]:
    return [".".join(str(part) for part in err["loc"]) for err in exc.errors()]


def config_error_from(exc: ValidationError, prefix: str = "") -> ConfigError:
    """Convert a pydantic ValidationError into a ConfigError naming the fields."""
    keys = [f"{prefix}{k}" if prefix else k for k in _error_keys(exc)]
    details = "; ".join(
        f"{key}: {err['msg']}" for key, err in zip(keys, exc.errors(), strict=True)
    )
    return ConfigError(f"invalid configuration ({details})", keys=keys)


class Settings(BaseModel):
    """Frozen, strict configuration model."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    @classmethod
    def create(cls, **values: Any) -> Self:
        """Validate ``values`` and build the model, raising ConfigError on failure."""
        try:
            return cls(**values)
        except ValidationError as e:
            raise config_error_from(e) from e

    def replace(self, **changes: Any) -> Self:
        """Return a validated copy with some fields changed."""
        data = {name: getattr(self, name) for name in type(self).model_fields}
        data.update(changes)
        return type(self).create(**data)
