"""Command-line interface, run configuration and verification suite."""

from .config_io import (
    SCHEMA_VERSION,
    RunConfig,
    flatten,
    load_config,
    parse_config,
    render_config,
    write_config,
)
from .main import build_parser, main, resolve_config
from .report import collect_metrics, render_csv, write_report
from .verify import Check, CheckResult, get_all_checks, get_fast_checks, run_checks

__all__ = [
    "main",
    "build_parser",
    "resolve_config",
    # Configuration
    "RunConfig",
    "SCHEMA_VERSION",
    "load_config",
    "write_config",
    "parse_config",
    "render_config",
    "flatten",
    # Verification
    "Check",
    "CheckResult",
    "get_all_checks",
    "get_fast_checks",
    "run_checks",
    # Report
    "collect_metrics",
    "render_csv",
    "write_report",
]
