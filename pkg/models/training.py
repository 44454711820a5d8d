"""
PerturbKit Training - Mini-batch training loop, loss evaluation, model I/O.

A loss function has the signature `loss_fn(model, leaves, examples) -> Node`
(see `tagger_loss` and `seq2seq_loss`). Training is deterministic given the
model parameters, the examples and the shuffle seed.

Model files:
- <name>.pkpt: parameters in the checkpoint format (float32)
- <name>.json: sidecar with the model type and its ModelConfig
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Type, Union

import numpy as np

from models.autodiff import Node, backward
from models.layers import ModelConfig, Params, ToyModel
from models.optim import AdamState, adam_step
from models.seq2seq import Seq2SeqModel
from models.tagger import TaggerModel
from params.checkpoint import CheckpointIOError, read_checkpoint, write_checkpoint


logger = logging.getLogger(__name__)

LossFn = Callable[[ToyModel, Params, Sequence], Node]
PathLike = Union[str, Path]

MODEL_TYPES: Dict[str, Type[ToyModel]] = {
    "tagger": TaggerModel,
    "seq2seq": Seq2SeqModel,
}


# ============================================================================
# CONSTANTS
# ============================================================================


class TrainingDefaults:
    """Optimizer and loop defaults for the toy tasks."""

    STEPS: int = 300
    BATCH_SIZE: int = 16
    LR: float = 3e-3
    BETAS: Tuple[float, float] = (0.9, 0.999)
    EPS: float = 1e-8
    LOG_EVERY: int = 50
    EVAL_BATCH_SIZE: int = 64


@dataclass
class TrainResult:
    """Loss trajectory of one training run."""

    losses: List[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


# ============================================================================
# TRAINING
# ============================================================================


def iterate_batches(n_items: int, batch_size: int, seed: int) -> Iterator[np.ndarray]:
    """Endless index batches; a fresh seeded permutation every epoch."""
    if n_items < 1:
        raise ValueError("Cannot batch an empty dataset")
    rng = np.random.default_rng(seed)
    while True:
        order = rng.permutation(n_items)
        for start in range(0, n_items, batch_size):
            yield order[start:start + batch_size]


def train(
    model: ToyModel,
    loss_fn: LossFn,
    examples: Sequence,
    steps: int = TrainingDefaults.STEPS,
    batch_size: int = TrainingDefaults.BATCH_SIZE,
    lr: float = TrainingDefaults.LR,
    betas: Tuple[float, float] = TrainingDefaults.BETAS,
    eps: float = TrainingDefaults.EPS,
    seed: int = 0,
    log_every: int = TrainingDefaults.LOG_EVERY,
) -> TrainResult:
    """
    Train `model` in place with Adam.

    Args:
        model: Model to update (its `params` dict is replaced every step)
        loss_fn: Loss builder
        examples: Training examples
        steps: Optimizer steps
        batch_size: Examples per step
        lr, betas, eps: Adam constants
        seed: Shuffle seed
        log_every: DEBUG loss log interval (0 disables)

    Returns:
        TrainResult with the per-step losses
    """
    result = TrainResult()
    state = AdamState()
    batches = iterate_batches(len(examples), batch_size, seed)
    for step in range(steps):
        batch = [examples[int(i)] for i in next(batches)]
        leaves = model.leaves()
        loss = loss_fn(model, leaves, batch)
        grads = backward(loss, leaves)
        model.params, state = adam_step(model.params, grads, state, lr, betas, eps)
        result.losses.append(float(loss.value))
        if log_every and (step + 1) % log_every == 0:
            logger.debug(f"step {step + 1}/{steps}: loss={result.losses[-1]:.6f}")
    return result


def evaluate_loss(
    model: ToyModel,
    loss_fn: LossFn,
    examples: Sequence,
    batch_size: int = TrainingDefaults.EVAL_BATCH_SIZE,
) -> float:
    """Example-weighted mean loss over `examples` in fixed order."""
    total, count = 0.0, 0
    for start in range(0, len(examples), batch_size):
        chunk = list(examples[start:start + batch_size])
        loss = loss_fn(model, model.leaves(), chunk)
        total += float(loss.value) * len(chunk)
        count += len(chunk)
    if count == 0:
        raise ValueError("Cannot evaluate loss on an empty example list")
    return total / count


# ============================================================================
# MODEL I/O
# ============================================================================


def model_type_name(model: ToyModel) -> str:
    for name, cls in MODEL_TYPES.items():
        if type(model) is cls:
            return name
    raise TypeError(f"Unsupported model type: {type(model).__name__}")


def sidecar_path(path: PathLike) -> Path:
    return Path(path).with_suffix(".json")


def save_model(model: ToyModel, path: PathLike, extra: Optional[Dict[str, Any]] = None) -> None:
    """
    Write the checkpoint and its JSON sidecar.

    Args:
        model: Model to save
        path: Checkpoint path; the sidecar goes next to it with a .json suffix
        extra: Additional sidecar entries (e.g. a cache key)

    Raises:
        CheckpointIOError: If either file cannot be written
    """
    path = Path(path)
    write_checkpoint(model.to_store(), path)
    sidecar = {"model_type": model_type_name(model), "config": model.config.model_dump(), **(extra or {})}
    try:
        sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        logger.error(f"Failed to write sidecar for {path}: {e}")
        raise CheckpointIOError(f"Cannot write sidecar {sidecar_path(path)}: {e}") from e
    logger.info(f"Saved {model_type_name(model)} model to {path}")


def load_model(path: PathLike) -> ToyModel:
    """
    Read a checkpoint plus sidecar back into a model.

    The float32 round trip means loaded parameters equal
    `params.astype(float32).astype(float64)` of the saved model.

    Raises:
        CheckpointIOError: Missing/unreadable files
        CheckpointError: Corrupt checkpoint
        ValueError: Unknown model type or invalid config
    """
    path = Path(path)
    try:
        sidecar = json.loads(sidecar_path(path).read_text())
    except OSError as e:
        raise CheckpointIOError(f"Cannot read sidecar {sidecar_path(path)}: {e}") from e
    except json.JSONDecodeError as e:
        raise ValueError(f"Malformed sidecar {sidecar_path(path)}: {e}") from e

    model_type = sidecar.get("model_type")
    if model_type not in MODEL_TYPES:
        raise ValueError(f"Unknown model type {model_type!r} in {sidecar_path(path)}")
    config = ModelConfig.model_validate(sidecar.get("config", {}))
    model = MODEL_TYPES[model_type].from_store(config, read_checkpoint(path))
    logger.info(f"Loaded {model_type} model from {path}")
    return model
