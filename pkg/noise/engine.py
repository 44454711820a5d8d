"""
PerturbKit Noise Engine - Localized parameter perturbation.

Each selected parameter tensor W is replaced by

    W + U(-λ/2, λ/2) · σ(W)

where σ(W) is the population standard deviation of the flattened tensor.
Restricting the update to the records a selector matches gives the
localized variant; selecting everything gives the global one.

Design principles:
- Pure: the input store is never mutated; a new store is returned
- Deterministic: every tensor draws from its own (seed, name) substream, so
  store order and thread scheduling never change the result
- Noise is applied once, before fine-tuning, never per step
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from params.store import ParamStore, TensorRecord
from noise.presets import NoiseDefaults, preset
from noise.rng import MASK64, Substream, derive_substream
from noise.selector import (
    All,
    And,
    KindIs,
    LayerIn,
    NameGlob,
    Not,
    Nothing,
    Or,
    SelectorExpr,
    ZoneIs,
    format_selector,
    parse_selector,
)


logger = logging.getLogger(__name__)

_SELECTOR_TYPES = (KindIs, NameGlob, ZoneIs, LayerIn, All, Nothing, And, Or, Not)


# ============================================================================
# ERRORS & ENUMS
# ============================================================================


class NonFiniteResult(ArithmeticError):
    """Perturbation produced NaN or Inf."""

    def __init__(self, tensor_name: str, message: str = ""):
        self.tensor_name = tensor_name
        super().__init__(message or f"Perturbation of {tensor_name!r} produced non-finite values")


class Distribution(str, Enum):
    """Noise distribution."""

    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"


# ============================================================================
# PYDANTIC MODELS
# ============================================================================


class NoiseSpec(BaseModel):
    """One perturbation request."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(..., ge=0.0, alias="lambda", description="Noise intensity λ")
    selector: Any = Field(default_factory=All, description="Selector AST or selector text")
    seed: int = Field(default=0, ge=0, le=MASK64, description="Unsigned 64-bit seed")
    distribution: Distribution = Field(default=Distribution.UNIFORM, description="Noise distribution")

    @field_validator("lam")
    @classmethod
    def validate_finite_lambda(cls, v: float) -> float:
        if not np.isfinite(v):
            raise ValueError(f"lambda must be finite, got {v}")
        return v

    @field_validator("selector", mode="before")
    @classmethod
    def validate_selector(cls, v: Any) -> SelectorExpr:
        """Accept selector text or an already-built AST."""
        if isinstance(v, str):
            return parse_selector(v)
        if isinstance(v, _SELECTOR_TYPES):
            return v
        raise ValueError(f"selector must be selector text or a SelectorExpr, got {type(v)}")

    @classmethod
    def from_preset(
        cls,
        name: str,
        lam: float,
        seed: int = 0,
        distribution: Distribution = Distribution.UNIFORM,
        layers: Optional[int] = None,
    ) -> "NoiseSpec":
        return cls(lam=lam, selector=preset(name, layers), seed=seed, distribution=distribution)


class TensorPerturbation(BaseModel):
    """Per-tensor line of a perturbation report."""

    name: str = Field(..., description="Tensor name")
    elements: int = Field(..., ge=1, description="Element count")
    lam: float = Field(..., ge=0.0, description="λ applied to this tensor")
    sigma: float = Field(..., ge=0.0, description="Pre-noise population std")
    max_abs_delta: float = Field(..., ge=0.0, description="max |new - old|")
    mean_delta: float = Field(..., description="mean(new - old)")


class PerturbationReport(BaseModel):
    """What apply_noise did."""

    selector: str = Field(..., description="Selector text")
    seed: int = Field(..., ge=0, description="Run seed")
    distribution: Distribution = Field(..., description="Noise distribution")
    tensors: List[TensorPerturbation] = Field(default_factory=list)

    @property
    def tensors_touched(self) -> int:
        return len(self.tensors)

    @property
    def elements_perturbed(self) -> int:
        return sum(t.elements for t in self.tensors)

    def to_dict(self, decimals: int = NoiseDefaults.REPORT_DECIMALS) -> Dict[str, Any]:
        """JSON-ready dict with floats rounded to `decimals` places."""
        return {
            "selector": self.selector,
            "seed": self.seed,
            "distribution": self.distribution.value,
            "tensors": [
                {
                    "name": t.name,
                    "elements": t.elements,
                    "lambda": round(t.lam, decimals),
                    "sigma": round(t.sigma, decimals),
                    "max_abs_delta": round(t.max_abs_delta, decimals),
                    "mean_delta": round(t.mean_delta, decimals),
                }
                for t in self.tensors
            ],
            "totals": {
                "tensors_touched": self.tensors_touched,
                "elements_perturbed": self.elements_perturbed,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# ============================================================================
# PER-TENSOR OPERATIONS
# ============================================================================


def tensor_std(rec: TensorRecord) -> float:
    """Population standard deviation of the flattened tensor, in float64."""
    return float(np.std(rec.data.astype(np.float64)))


def _draw(rng: Substream, n: int, lam: float, distribution: Distribution) -> np.ndarray:
    if distribution == Distribution.GAUSSIAN:
        return rng.normal(n) * (lam * NoiseDefaults.GAUSSIAN_STD_PER_LAMBDA)
    return (rng.uniform(n) - 0.5) * lam


def _perturb(
    rec: TensorRecord,
    lam: float,
    rng: Substream,
    distribution: Distribution,
) -> Tuple[TensorRecord, TensorPerturbation]:
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    sigma = tensor_std(rec)

    if lam == 0.0 or sigma == 0.0:
        stats = TensorPerturbation(
            name=rec.name, elements=rec.size, lam=lam, sigma=sigma, max_abs_delta=0.0, mean_delta=0.0
        )
        return rec, stats

    old = rec.data.astype(np.float64)
    noise = _draw(rng, rec.size, lam, distribution)
    with np.errstate(over="ignore", invalid="ignore"):
        new = (old + noise * sigma).astype(np.float32)
    if not np.all(np.isfinite(new)):
        raise NonFiniteResult(rec.name)

    delta = new.astype(np.float64) - old
    stats = TensorPerturbation(
        name=rec.name,
        elements=rec.size,
        lam=lam,
        sigma=sigma,
        max_abs_delta=float(np.max(np.abs(delta))),
        mean_delta=float(np.mean(delta)),
    )
    return rec.with_data(new), stats


def perturb_tensor(
    rec: TensorRecord,
    lam: float,
    rng: Substream,
    distribution: Distribution = Distribution.UNIFORM,
) -> TensorRecord:
    """
    Add σ-scaled noise to one tensor.

    Args:
        rec: Tensor to perturb
        lam: Noise intensity λ >= 0
        rng: Substream to draw from (advanced by rec.size draws unless λ or σ is 0)
        distribution: Uniform on [-λ/2, λ/2) or Gaussian with std λ/2

    Returns:
        New record; name, shape and metadata unchanged. Bitwise equal to the
        input when λ = 0 or σ = 0.

    Raises:
        NonFiniteResult: If any output element is NaN/Inf
    """
    out, _ = _perturb(rec, lam, rng, Distribution(distribution))
    return out


# ============================================================================
# STORE-LEVEL OPERATIONS
# ============================================================================


def apply_noise_plan(
    store: ParamStore,
    plan: Sequence[Tuple[SelectorExpr, float]],
    seed: int,
    distribution: Distribution = Distribution.UNIFORM,
    max_workers: int = 1,
) -> Tuple[ParamStore, PerturbationReport]:
    """
    Perturb a store where different selectors get different λ.

    Each record takes the λ of the first plan entry whose selector matches
    it; records matching no entry are left untouched.

    Args:
        store: Source store (not mutated)
        plan: (selector, λ) pairs, first match wins
        seed: Run seed for substream derivation
        distribution: Noise distribution
        max_workers: Threads used for per-tensor work (result is identical for any value)

    Returns:
        (new store, report)

    Raises:
        NonFiniteResult: Naming the offending tensor
    """
    distribution = Distribution(distribution)
    jobs: List[Tuple[TensorRecord, float]] = []
    for rec in store:
        for selector, lam in plan:
            if selector.matches(rec):
                jobs.append((rec, float(lam)))
                break

    def run(job: Tuple[TensorRecord, float]) -> Tuple[TensorRecord, TensorPerturbation]:
        rec, lam = job
        return _perturb(rec, lam, derive_substream(seed, rec.name), distribution)

    if max_workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    updates = {rec.name: rec for rec, _ in results}
    report = PerturbationReport(
        selector=" ; ".join(f"{format_selector(sel)} @ {lam:g}" for sel, lam in plan),
        seed=seed,
        distribution=distribution,
        tensors=[stats for _, stats in results],
    )

    for stats in report.tensors:
        logger.debug(
            f"Perturbed {stats.name}: n={stats.elements}, λ={stats.lam}, σ={stats.sigma:.6g}, "
            f"max|Δ|={stats.max_abs_delta:.6g}"
        )
    logger.info(
        f"Applied {distribution.value} noise (seed={seed}) to {report.tensors_touched}/{len(store)} tensors, "
        f"{report.elements_perturbed} elements"
    )
    return store.replace(updates), report


def apply_noise(
    store: ParamStore,
    spec: NoiseSpec,
    max_workers: int = 1,
) -> Tuple[ParamStore, PerturbationReport]:
    """
    Perturb every record the NoiseSpec selector matches.

    Non-matching records are carried over bitwise unchanged.

    Example:
        >>> spec = NoiseSpec.from_preset("bias", lam=0.41, seed=7)
        >>> noisy, report = apply_noise(store, spec)
        >>> report.tensors_touched
        7
    """
    noisy, report = apply_noise_plan(
        store, [(spec.selector, spec.lam)], spec.seed, spec.distribution, max_workers
    )
    return noisy, report.model_copy(update={"selector": format_selector(spec.selector)})


def apply_zone_noise(
    store: ParamStore,
    lambdas: Tuple[float, float],
    layers: int,
    seed: int,
    distribution: Distribution = Distribution.UNIFORM,
    max_workers: int = 1,
) -> Tuple[ParamStore, PerturbationReport]:
    """
    Two-zone perturbation: encoder layers [0, L/2) get λ_low, [L/2, L) get λ_high.

    Args:
        lambdas: (λ_low, λ_high); pass the same value twice for a shared λ
        layers: Encoder depth L
    """
    lam_low, lam_high = lambdas
    plan = [
        (preset("layer_zone_low", layers), lam_low),
        (preset("layer_zone_high", layers), lam_high),
    ]
    return apply_noise_plan(store, plan, seed, distribution, max_workers)
