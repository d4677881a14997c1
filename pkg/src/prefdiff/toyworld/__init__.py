"""The 2-D toy task, sample generators and both curation pipelines."""

from .accounting import (
    StorageReport,
    compute_ratio,
    expected_coverage,
    order_stat_probability,
    storage_compute_report,
    storage_ratios,
)
from .curation import (
    CpoCuration,
    CpoTriplet,
    CurationConfig,
    CurationStats,
    DpoCuration,
    DpoPair,
    curate_cpo,
    curate_dpo,
)
from .generators import (
    DiffusionGenerator,
    NoiseGenerator,
    OracleGenerator,
    SampleGenerator,
    generate_rows,
)
from .records import RECORD_SCHEMA_VERSION, read_records, record_kind, write_records
from .task import (
    LabeledSample,
    ToyTask,
    circular_distance,
    controllability_score,
    detect_batch,
    detect_condition,
    matches,
    quality_proxy,
    quantize,
    sample_conditions,
    sample_dataset,
    sample_given,
    sector_of,
    stack_samples,
)

__all__ = [
    # Task
    "ToyTask",
    "LabeledSample",
    "sample_dataset",
    "sample_conditions",
    "sample_given",
    "stack_samples",
    "detect_condition",
    "detect_batch",
    "sector_of",
    "quantize",
    "matches",
    "circular_distance",
    "controllability_score",
    "quality_proxy",
    # Generators
    "SampleGenerator",
    "OracleGenerator",
    "NoiseGenerator",
    "DiffusionGenerator",
    "generate_rows",
    # Curation
    "CurationConfig",
    "CurationStats",
    "CpoTriplet",
    "DpoPair",
    "CpoCuration",
    "DpoCuration",
    "curate_cpo",
    "curate_dpo",
    # Accounting
    "order_stat_probability",
    "expected_coverage",
    "storage_compute_report",
    "storage_ratios",
    "compute_ratio",
    "StorageReport",
    # Records
    "write_records",
    "read_records",
    "record_kind",
    "RECORD_SCHEMA_VERSION",
]
