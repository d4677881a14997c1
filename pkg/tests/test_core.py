from pathlib import Path

import numpy as np
import pytest
from pydantic import Field, ValidationError

from prefdiff.config import Settings
from prefdiff.context import RunContext, env_workers, make_rng, stream_seed
from prefdiff.errors import (
    ConfigError,
    ConfigMigrationError,
    InsufficientDrawsError,
    PrefDiffError,
    ShapeError,
    format_error,
    format_exception,
    format_success,
)


class Sample(Settings):
    rate: float = Field(default=0.5, gt=0.0)
    name: str = "a"


def test_settings_create_and_replace():
    s = Sample.create(rate=2.0)
    assert s.rate == 2.0
    t = s.replace(name="b")
    assert (t.rate, t.name) == (2.0, "b")
    assert s.name == "a"


def test_settings_errors_name_fields():
    with pytest.raises(ConfigError) as info:
        Sample.create(rate=-1.0)
    assert info.value.keys == ["rate"]
    with pytest.raises(ConfigError) as info:
        Sample.create(rat=1.0)
    assert info.value.keys == ["rat"]
    with pytest.raises(ConfigError):
        Sample().replace(rate=0.0)


def test_settings_are_frozen():
    with pytest.raises(ValidationError):
        Sample().rate = 1.0  # type: ignore[misc]


def test_format_exception_is_one_line():
    err = ConfigError("bad\nvalue   here", keys=["x"])
    assert format_exception(err) == "Error: ConfigError: bad value here"
    assert format_exception(OSError("disk")) == "Error: OSError: disk"
    assert format_error("boom") == "Error: boom"


def test_format_success():
    assert format_success("") == "Operation completed successfully."
    assert format_success("out") == "out"
    assert format_success("", "note") == "note"
    assert format_success("out", "note") == "out\n\n[note]"


def test_error_hierarchy():
    migration = ConfigMigrationError(3, 1, source="x.cfg")
    assert isinstance(migration, ConfigError)
    assert "x.cfg" in str(migration)
    assert migration.keys == ["schema_version"]
    draws = InsufficientDrawsError(10, 1000)
    assert isinstance(draws, PrefDiffError)
    assert draws.minimum == 1000
    shape = ShapeError("add", [(2, 3), (4,)])
    assert shape.shapes == [(2, 3), (4,)]
    assert "(2, 3)" in shape.message


def test_named_streams_are_deterministic_and_distinct():
    a = make_rng(7, "curate/item/1").standard_normal(4)
    b = make_rng(7, "curate/item/1").standard_normal(4)
    c = make_rng(7, "curate/item/2").standard_normal(4)
    d = make_rng(8, "curate/item/1").standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(a, d)


def test_stream_seed_handles_large_seeds():
    assert stream_seed(2**40, "x").entropy != stream_seed(0, "x").entropy


def test_env_workers(monkeypatch):
    monkeypatch.delenv("PREFDIFF_THREADS", raising=False)
    assert env_workers(4) == 4
    monkeypatch.setenv("PREFDIFF_THREADS", "6")
    assert env_workers(4) == 6
    monkeypatch.setenv("PREFDIFF_THREADS", "many")
    assert env_workers(2) == 2
    monkeypatch.setenv("PREFDIFF_THREADS", "0")
    assert env_workers(2) == 1


def test_run_context(tmp_path):
    ctx = RunContext(seed=3, deterministic=True, workers=8, out_dir=tmp_path / "out")
    assert ctx.effective_workers() == 1
    assert RunContext(deterministic=False, workers=8).effective_workers() == 8
    path = ctx.output_path("a.txt")
    assert path == tmp_path / "out" / "a.txt"
    assert path.parent.is_dir()
    np.testing.assert_array_equal(ctx.stream("s").random(3), make_rng(3, "s").random(3))


def test_run_context_without_output_dir():
    with pytest.raises(ValueError):
        RunContext().output_path(str(Path("x")))
