"""
PerturbKit Runner - Pre-train, perturb, fine-tune, evaluate.

Protocol per experiment:
1. Generate the pre-training, fine-tuning and evaluation datasets
   (fine-tuning and evaluation carry the task shift)
2. Pre-train the toy model once; cache it as <output>/pretrained.pkpt + .json
3. For every (location, λ, seed): perturb the pre-trained store with a
   seed-derived noise seed, fine-tune, evaluate on the held-out set
4. Aggregate per (location, λ) over seeds

The "none" location at λ = 0 is always part of the grid. Runs are
independent and may execute on a thread pool (PERTURBKIT_THREADS); results
are sorted before they are returned, so parallelism never changes output.
"""

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from data.synthetic import Dataset, TaskShift, gen_seq2seq_data, gen_tagging_data
from harness.config import ExperimentConfig, LocationSpec, Task
from harness.results import BASELINE_LOCATION, RunResult
from models.layers import ToyModel
from models.seq2seq import Seq2SeqModel, evaluate_rouge, seq2seq_loss
from models.tagger import TaggerModel, evaluate_f1, tagger_loss
from models.training import LossFn, evaluate_loss, load_model, save_model, train
from noise.engine import apply_noise_plan
from noise.presets import preset
from noise.rng import derive_seed
from noise.selector import Nothing, SelectorExpr, parse_selector
from params.store import ParamStore


logger = logging.getLogger(__name__)


# ============================================================================
# CONSTANTS & ERRORS
# ============================================================================


class HarnessDefaults:
    """Runner constants."""

    THREADS_ENV: str = "PERTURBKIT_THREADS"
    DEFAULT_THREADS: int = 1

    # λ used by the destruction check
    DESTRUCTION_LAMBDA: float = 10.0

    PRETRAINED_FILE: str = "pretrained.pkpt"
    RESULTS_FILE: str = "results.csv"

    # derive_seed stream tags
    PRETRAIN_STREAM: int = 0
    FINETUNE_STREAM: int = 1
    EVAL_STREAM: int = 2


class RunError(RuntimeError):
    """A single (location, λ, seed) run failed."""

    def __init__(self, location: str, lam: float, seed: int, cause: BaseException):
        self.location = location
        self.lam = lam
        self.seed = seed
        super().__init__(f"Run failed at location={location}, λ={lam:g}, seed={seed}: {cause}")


# ============================================================================
# TASKS
# ============================================================================


@dataclass(frozen=True)
class TaskSpec:
    """How a task builds, trains and scores its model."""

    model_cls: type
    loss_fn: LossFn
    metric_name: str
    evaluate: Callable[[ToyModel, Sequence], float]


TASKS: Dict[Task, TaskSpec] = {
    Task.TAGGING: TaskSpec(TaggerModel, tagger_loss, "adjusted_f1", evaluate_f1),
    Task.SEQ2SEQ: TaskSpec(
        Seq2SeqModel, seq2seq_loss, "rouge_average", lambda model, ex: evaluate_rouge(model, ex).average
    ),
}


@dataclass
class ExperimentData:
    pretrain: Dataset
    finetune: Dataset
    evaluation: Dataset


def build_datasets(config: ExperimentConfig) -> ExperimentData:
    """Source-task pre-training data plus shifted fine-tuning and evaluation data."""
    d = config.dataset
    shift = TaskShift(permute_labels=d.permute_labels, vocab_offset=d.vocab_offset)
    vocab = config.model.vocab

    def generate(stream: int, size: int, task_shift: Optional[TaskShift]) -> Dataset:
        seed = derive_seed(d.seed, stream)
        if config.task == Task.TAGGING:
            return gen_tagging_data(seed, size, vocab=vocab, seq_len=d.seq_len, shift=task_shift)
        return gen_seq2seq_data(
            seed, size, vocab=vocab, n_sentences=d.n_sentences, sentence_len=d.sentence_len, shift=task_shift
        )

    return ExperimentData(
        pretrain=generate(HarnessDefaults.PRETRAIN_STREAM, d.size, None),
        finetune=generate(HarnessDefaults.FINETUNE_STREAM, d.size, shift),
        evaluation=generate(HarnessDefaults.EVAL_STREAM, d.eval_size, shift),
    )


# ============================================================================
# RUN GRID
# ============================================================================


@dataclass(frozen=True)
class RunPoint:
    """One (location, λ) cell and the noise plan that realises it."""

    location: str
    lam: float
    plan: Tuple[Tuple[SelectorExpr, float], ...]


def expand_location(loc: LocationSpec, layers: int) -> List[RunPoint]:
    """
    RunPoints of one location.

    Layer zones with `zone_lambdas` are labelled "layer_zones[hi=<λ_high>]"
    and report λ_low in the λ column.
    """
    if loc.layer_zones:
        low, high = preset("layer_zone_low", layers), preset("layer_zone_high", layers)
        points = [RunPoint(loc.name, lam, ((low, lam), (high, lam))) for lam in loc.lambdas]
        for lam_low, lam_high in loc.zone_lambdas:
            label = f"{loc.name}[hi={lam_high:g}]"
            points.append(RunPoint(label, lam_low, ((low, lam_low), (high, lam_high))))
        return points

    selector = preset(loc.preset, layers) if loc.preset is not None else parse_selector(loc.select)
    return [RunPoint(loc.name, lam, ((selector, lam),)) for lam in loc.lambdas]


def expand_grid(config: ExperimentConfig) -> List[RunPoint]:
    """All RunPoints, with the none/0 baseline inserted when absent."""
    points: List[RunPoint] = []
    for loc in config.locations:
        points += expand_location(loc, config.model.layers)

    if not any(p.location == BASELINE_LOCATION and p.lam == 0.0 for p in points):
        logger.warning(f"Config {config.name!r} has no '{BASELINE_LOCATION}' λ=0 row; adding it")
        points.append(RunPoint(BASELINE_LOCATION, 0.0, ((Nothing(), 0.0),)))

    keys = [(p.location, p.lam) for p in points]
    if len(set(keys)) != len(keys):
        raise ValueError(f"Duplicate (location, λ) cells in config {config.name!r}")
    return sorted(points, key=lambda p: (p.location, p.lam))


def resolve_threads(requested: Optional[int] = None) -> int:
    """
    Worker count: `requested` (default 1), capped by PERTURBKIT_THREADS.

    Invalid environment values fall back to 1 with a warning.
    """
    raw = os.environ.get(HarnessDefaults.THREADS_ENV)
    cap: Optional[int] = None
    if raw is not None:
        try:
            cap = int(raw)
            if cap < 1:
                raise ValueError(raw)
        except ValueError:
            logger.warning(f"Ignoring invalid {HarnessDefaults.THREADS_ENV}={raw!r}; using 1 thread")
            cap = 1
    workers = requested if requested is not None else (cap or HarnessDefaults.DEFAULT_THREADS)
    if cap is not None:
        workers = min(workers, cap)
    return max(1, workers)


# ============================================================================
# PRE-TRAINING
# ============================================================================


def _pretrain_key(config: ExperimentConfig) -> str:
    """Everything the pre-trained weights depend on."""
    return json.dumps(
        {
            "task": config.task.value,
            "model": config.model.model_dump(),
            "dataset": config.dataset.model_dump(),
            "train": config.train.model_dump(),
            "base_seed": config.base_seed,
        },
        sort_keys=True,
    )


def pretrain(config: ExperimentConfig, data: ExperimentData, cache: bool = True) -> ParamStore:
    """
    Pre-train on the unshifted source task, or reuse the cached checkpoint.

    The cache is used only when its sidecar records the same pre-training key.
    """
    spec = TASKS[config.task]
    path = config.output_dir / HarnessDefaults.PRETRAINED_FILE
    key = _pretrain_key(config)

    if cache and path.exists():
        try:
            sidecar = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
            if sidecar.get("pretrain_key") == key:
                logger.info(f"Reusing pre-trained checkpoint {path}")
                return load_model(path).to_store()
            logger.info(f"Cached checkpoint {path} was built from a different config; retraining")
        except (OSError, ValueError) as e:
            logger.warning(f"Ignoring unreadable cached checkpoint {path}: {e}")

    model = spec.model_cls(config.model)
    t = config.train
    result = train(
        model,
        spec.loss_fn,
        data.pretrain.examples,
        steps=t.pretrain_steps,
        batch_size=t.batch_size,
        lr=t.lr,
        betas=t.betas,
        eps=t.eps,
        seed=derive_seed(config.base_seed, HarnessDefaults.PRETRAIN_STREAM),
        log_every=t.log_every,
    )
    logger.info(f"Pre-trained {config.task.value} model: final loss {result.final_loss:.6f}")
    if cache:
        save_model(model, path, extra={"pretrain_key": key})
    return model.to_store()


# ============================================================================
# SINGLE RUN
# ============================================================================


def noise_seed(config: ExperimentConfig, seed_index: int, seed: int) -> int:
    """Per-run noise seed from the config seed and the run seed (never the clock)."""
    return derive_seed(config.base_seed, seed_index, seed)


def perturb_store(
    config: ExperimentConfig,
    store: ParamStore,
    point: RunPoint,
    seed_index: int,
    seed: int,
) -> ParamStore:
    seed_value = noise_seed(config, seed_index, seed)
    noisy, _ = apply_noise_plan(store, list(point.plan), seed_value, config.distribution)
    return noisy


def run_single(
    config: ExperimentConfig,
    store: ParamStore,
    data: ExperimentData,
    point: RunPoint,
    seed_index: int,
    seed: int,
) -> Tuple[float, float]:
    """
    Perturb -> fine-tune -> evaluate for one run.

    Returns:
        (metric value, wall-clock seconds)
    """
    spec = TASKS[config.task]
    start = time.perf_counter()
    model = spec.model_cls.from_store(config.model, perturb_store(config, store, point, seed_index, seed))
    t = config.train
    train(
        model,
        spec.loss_fn,
        data.finetune.examples,
        steps=t.steps,
        batch_size=t.batch_size,
        lr=t.lr,
        betas=t.betas,
        eps=t.eps,
        seed=derive_seed(config.base_seed, HarnessDefaults.FINETUNE_STREAM, seed),
        log_every=t.log_every,
    )
    value = spec.evaluate(model, data.evaluation.examples)
    seconds = time.perf_counter() - start
    logger.info(f"Run location={point.location} λ={point.lam:g} seed={seed}: {spec.metric_name}={value:.6f}")
    return value, seconds


# ============================================================================
# EXPERIMENT
# ============================================================================


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> List[RunResult]:
    """
    Run the full location × λ × seed grid.

    Args:
        config: Validated experiment config
        threads: Worker threads (capped by PERTURBKIT_THREADS)

    Returns:
        One RunResult per (location, λ), sorted by (location, λ)

    Raises:
        RunError: Wrapping the first failing run, with its coordinates
    """
    spec = TASKS[config.task]
    points = expand_grid(config)
    data = build_datasets(config)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    store = pretrain(config, data)

    jobs = [(point, idx, seed) for point in points for idx, seed in enumerate(config.seeds)]
    workers = resolve_threads(threads)
    logger.info(
        f"Running {config.config_id()}: {len(points)} cells x {len(config.seeds)} seeds = {len(jobs)} runs "
        f"on {workers} thread(s)"
    )

    def run(job: Tuple[RunPoint, int, int]) -> Tuple[float, float]:
        point, idx, seed = job
        try:
            return run_single(config, store, data, point, idx, seed)
        except Exception as e:
            logger.error(f"Run failed: location={point.location} λ={point.lam:g} seed={seed}: {e}")
            raise RunError(point.location, point.lam, seed, e) from e

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(job) for job in jobs]

    results: List[RunResult] = []
    n_seeds = len(config.seeds)
    for i, point in enumerate(points):
        cell = outcomes[i * n_seeds:(i + 1) * n_seeds]
        seconds = [s for _, s in cell] if config.record_timing else None
        results.append(RunResult.from_values(
            config_id=config.config_id(),
            location=point.location,
            lam=point.lam,
            metric_name=spec.metric_name,
            seeds=config.seeds,
            values=[v for v, _ in cell],
            seconds=seconds,
        ))
    return sorted(results, key=RunResult.sort_key)


@dataclass(frozen=True)
class DestructionRow:
    """Pre-fine-tuning evaluation loss of one seed at λ and at 0."""

    seed: int
    loss_at_lambda: float
    loss_at_zero: float

    @property
    def destroyed(self) -> bool:
        return self.loss_at_lambda > self.loss_at_zero


def destruction_check(
    config: ExperimentConfig,
    lam: float = HarnessDefaults.DESTRUCTION_LAMBDA,
    store: Optional[ParamStore] = None,
) -> List[DestructionRow]:
    """
    Evaluation loss before fine-tuning with preset("all") noise at λ versus λ = 0.

    Large noise must raise the loss for every seed.
    """
    spec = TASKS[config.task]
    data = build_datasets(config)
    if store is None:
        config.output_dir.mkdir(parents=True, exist_ok=True)
        store = pretrain(config, data)
    base_loss = evaluate_loss(spec.model_cls.from_store(config.model, store), spec.loss_fn, data.evaluation.examples)

    rows = []
    point = RunPoint("all", lam, ((preset("all"), lam),))
    for idx, seed in enumerate(config.seeds):
        noisy = spec.model_cls.from_store(config.model, perturb_store(config, store, point, idx, seed))
        loss = evaluate_loss(noisy, spec.loss_fn, data.evaluation.examples)
        rows.append(DestructionRow(seed=seed, loss_at_lambda=loss, loss_at_zero=base_loss))
        logger.info(f"Destruction check seed={seed}: loss {loss:.6f} at λ={lam:g} vs {base_loss:.6f} at λ=0")
    return rows


def results_path(config: ExperimentConfig) -> Path:
    return config.output_dir / HarnessDefaults.RESULTS_FILE
