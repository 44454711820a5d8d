"""
PerturbKit Experiment Config - Pydantic models for sweep configuration.

An ExperimentConfig is a single JSON document:

    {
      "name": "table1_tagging",
      "task": "tagging",
      "model": {"layers": 2, "model_dim": 32, "heads": 2, "vocab": 64, "max_len": 16},
      "locations": [
        {"preset": "all", "lambdas": [0.2, 0.41]},
        {"select": "kind:bias and zone:encoder", "lambdas": [0.41]},
        {"layer_zones": true, "zone_lambdas": [[0.1, 0.9]]}
      ],
      "seeds": [0, 1, 2, 3, 4],
      "train": {"steps": 300, "batch_size": 16, "lr": 0.003},
      "dataset": {"size": 256, "eval_size": 128, "seed": 7},
      "output": "results/table1"
    }
"""

import hashlib
import math
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from data.schema import FIRST_WORD_ID
from data.synthetic import MIN_TAGGING_LEN, MIN_TAGGING_VOCAB
from models.layers import ModelConfig
from models.training import TrainingDefaults
from noise.engine import Distribution
from noise.rng import MASK64


# ============================================================================
# ENUMS
# ============================================================================


class Task(str, Enum):
    """Downstream task of an experiment."""

    TAGGING = "tagging"
    SEQ2SEQ = "seq2seq"


# ============================================================================
# SECTIONS
# ============================================================================


class LocationSpec(BaseModel):
    """
    One noise location and its λ grid.

    Exactly one of `preset`, `select` or `layer_zones` is set. Layer zones
    take either `lambdas` (the same λ for both zones) or `zone_lambdas`
    ([λ_low, λ_high] pairs).
    """

    preset: Optional[str] = Field(None, description="Preset name, e.g. bias / weights / add_norm")
    select: Optional[str] = Field(None, description="Selector expression text")
    layer_zones: bool = Field(False, description="Two encoder zones with their own intensities")
    lambdas: List[float] = Field(default_factory=list, description="λ values")
    zone_lambdas: List[Tuple[float, float]] = Field(default_factory=list, description="[λ_low, λ_high] pairs")
    label: Optional[str] = Field(None, description="Location name in reports (default derived)")

    @field_validator("lambdas")
    @classmethod
    def validate_lambdas(cls, v: List[float]) -> List[float]:
        for lam in v:
            if not math.isfinite(lam) or lam < 0:
                raise ValueError(f"λ must be finite and >= 0, got {lam}")
        return v

    @field_validator("zone_lambdas")
    @classmethod
    def validate_zone_lambdas(cls, v: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        for pair in v:
            for lam in pair:
                if not math.isfinite(lam) or lam < 0:
                    raise ValueError(f"λ must be finite and >= 0, got {lam}")
        return v

    @model_validator(mode="after")
    def validate_form(self) -> "LocationSpec":
        forms = [self.preset is not None, self.select is not None, self.layer_zones]
        if sum(forms) != 1:
            raise ValueError("Location needs exactly one of 'preset', 'select' or 'layer_zones'")
        if self.zone_lambdas and not self.layer_zones:
            raise ValueError("'zone_lambdas' is only valid with 'layer_zones'")
        if not self.lambdas and not self.zone_lambdas:
            raise ValueError("Location needs at least one λ")
        return self

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.preset is not None:
            return self.preset.strip().lower()
        if self.select is not None:
            return self.select.strip()
        return "layer_zones"


class TrainConfig(BaseModel):
    """Pre-training and fine-tuning hyperparameters (documented defaults)."""

    steps: int = Field(TrainingDefaults.STEPS, ge=0, description="Fine-tuning steps per run")
    pretrain_steps: int = Field(2 * TrainingDefaults.STEPS, ge=0, description="Pre-training steps")
    batch_size: int = Field(TrainingDefaults.BATCH_SIZE, ge=1)
    lr: float = Field(TrainingDefaults.LR, gt=0)
    betas: Tuple[float, float] = TrainingDefaults.BETAS
    eps: float = Field(TrainingDefaults.EPS, gt=0)
    log_every: int = Field(TrainingDefaults.LOG_EVERY, ge=0)

    @field_validator("betas")
    @classmethod
    def validate_betas(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if not all(0.0 <= b < 1.0 for b in v):
            raise ValueError(f"betas must lie in [0, 1), got {v}")
        return v


class DatasetConfig(BaseModel):
    """Synthetic data sizes, generator seed and task shift."""

    size: int = Field(256, ge=1, description="Training examples (pre-training and fine-tuning each)")
    eval_size: int = Field(128, ge=1, description="Held-out fine-tuning examples")
    seed: int = Field(0, ge=0, le=MASK64, description="Generator seed")
    seq_len: int = Field(16, ge=MIN_TAGGING_LEN, description="Tagging sentence length")
    n_sentences: int = Field(4, ge=2, description="Seq2seq source sentences")
    sentence_len: int = Field(4, ge=1, description="Seq2seq words per sentence")
    permute_labels: bool = Field(True, description="Fine-tuning task swaps cue/marker meaning")
    vocab_offset: int = Field(3, ge=0, description="Fine-tuning word-frequency rotation")

    @property
    def source_len(self) -> int:
        return self.n_sentences * (self.sentence_len + 1)

    @property
    def max_target_len(self) -> int:
        k = min(2, self.n_sentences - 1)
        return k * self.sentence_len + (k - 1)


# ============================================================================
# EXPERIMENT CONFIG
# ============================================================================


class ExperimentConfig(BaseModel):
    """A full sweep: locations × λ × seeds on one task."""

    name: str = Field("experiment", min_length=1, description="Experiment name")
    task: Task = Field(..., description="tagging or seq2seq")
    model: ModelConfig = Field(default_factory=ModelConfig)
    locations: List[LocationSpec] = Field(..., min_length=1)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    base_seed: int = Field(0, ge=0, le=MASK64, description="Config seed mixed into every run seed")
    distribution: Distribution = Distribution.UNIFORM
    train: TrainConfig = Field(default_factory=TrainConfig)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    output: str = Field("results", description="Output directory")
    record_timing: bool = Field(False, description="Write wall-clock seconds (breaks byte-identity)")

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, v: List[int]) -> List[int]:
        if len(set(v)) != len(v):
            raise ValueError(f"seeds must be pairwise distinct, got {v}")
        for s in v:
            if s < 0 or s > MASK64:
                raise ValueError(f"seed {s} outside the u64 range")
        return v

    @model_validator(mode="after")
    def validate_task_fit(self) -> "ExperimentConfig":
        m, d = self.model, self.dataset
        if self.task == Task.TAGGING:
            if m.vocab < MIN_TAGGING_VOCAB:
                raise ValueError(f"Tagging needs model.vocab >= {MIN_TAGGING_VOCAB}, got {m.vocab}")
            if d.seq_len > m.max_len:
                raise ValueError(f"dataset.seq_len {d.seq_len} exceeds model.max_len {m.max_len}")
        else:
            if m.vocab <= FIRST_WORD_ID:
                raise ValueError(f"Seq2seq needs model.vocab > {FIRST_WORD_ID}, got {m.vocab}")
            if d.source_len > m.max_len or d.max_target_len + 1 > m.max_len:
                raise ValueError(
                    f"Seq2seq sequences (source {d.source_len}, target {d.max_target_len + 1}) "
                    f"exceed model.max_len {m.max_len}"
                )
        names = [loc.name for loc in self.locations]
        if len(set(names)) != len(names):
            raise ValueError(f"Location names must be unique, got {names}")
        return self

    @property
    def output_dir(self) -> Path:
        return Path(self.output)

    def config_id(self) -> str:
        """Name plus a short digest of the canonical JSON form."""
        digest = hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()
        return f"{self.name}-{digest[:8]}"


def load_config(path) -> ExperimentConfig:
    """
    Read an ExperimentConfig JSON file.

    Raises:
        OSError: If the file cannot be read
        ValueError: If the content is invalid (pydantic ValidationError)
    """
    return ExperimentConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))
