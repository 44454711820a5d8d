"""
PerturbKit Harness - Experiment config, runner, results and CLI.

Core Components:
- ExperimentConfig: one JSON document describing a sweep
- run_experiment: pre-train -> perturb -> fine-tune -> evaluate over the grid
- emit_results / load_results: CSV + JSON mirror
- cli.main: `python -m harness sweep --config configs/table1_tagging.json`
"""

from harness.config import (
    DatasetConfig,
    ExperimentConfig,
    LocationSpec,
    Task,
    TrainConfig,
    load_config,
)
from harness.results import (
    RunResult,
    aggregate_table,
    checkpoint_table,
    emit_results,
    format_table,
    load_results,
)
from harness.runner import (
    DestructionRow,
    HarnessDefaults,
    RunError,
    build_datasets,
    destruction_check,
    expand_grid,
    pretrain,
    resolve_threads,
    run_experiment,
)

__all__ = [
    # Config
    "ExperimentConfig",
    "LocationSpec",
    "TrainConfig",
    "DatasetConfig",
    "Task",
    "load_config",
    # Results
    "RunResult",
    "emit_results",
    "load_results",
    "aggregate_table",
    "format_table",
    "checkpoint_table",
    # Runner
    "run_experiment",
    "destruction_check",
    "DestructionRow",
    "pretrain",
    "build_datasets",
    "expand_grid",
    "resolve_threads",
    "HarnessDefaults",
    "RunError",
]

__version__ = "0.1.0"
