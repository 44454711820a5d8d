"""
PerturbKit Results - Aggregated run results, CSV/JSON emission and tables.

CSV layout (one row per seed, 6-decimal fixed point, sorted by location, λ, seed):

    location,lambda,seed,metric,mean,std,seconds
    bias,0.410000,0,0.512345,0.498765,0.011111,0.000000

`metric` is the per-seed value; `mean` and `std` (population) aggregate
the row's (location, λ) group. The JSON mirror keeps full float precision.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from noise.engine import tensor_std
from params.store import ParamStore


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CSV_HEADER = ["location", "lambda", "seed", "metric", "mean", "std", "seconds"]
DECIMALS = 6
BASELINE_LOCATION = "none"


# ============================================================================
# PYDANTIC MODELS
# ============================================================================


class RunResult(BaseModel):
    """All seeds of one (location, λ) cell."""

    model_config = ConfigDict(populate_by_name=True)

    config_id: str = Field(..., description="Experiment identifier")
    location: str = Field(..., min_length=1, description="Noise location label")
    lam: float = Field(..., ge=0.0, alias="lambda", description="λ (λ_low for layer zones)")
    metric_name: str = Field(..., description="adjusted_f1 or rouge_average")
    seeds: List[int] = Field(..., min_length=1)
    values: List[float] = Field(..., min_length=1, description="Per-seed metric values")
    seconds: List[float] = Field(..., min_length=1, description="Per-seed wall-clock seconds")
    mean: float
    std: float = Field(..., ge=0.0, description="Population std over seeds")

    @model_validator(mode="after")
    def validate_aggregates(self) -> "RunResult":
        if not len(self.seeds) == len(self.values) == len(self.seconds):
            raise ValueError("seeds, values and seconds must have equal length")
        expected = float(np.mean(self.values))
        if abs(self.mean - expected) > 1e-12 * max(1.0, abs(expected)):
            raise ValueError(f"mean {self.mean} is not the mean of the values ({expected})")
        return self

    @classmethod
    def from_values(
        cls,
        config_id: str,
        location: str,
        lam: float,
        metric_name: str,
        seeds: Sequence[int],
        values: Sequence[float],
        seconds: Optional[Sequence[float]] = None,
    ) -> "RunResult":
        values = [float(v) for v in values]
        return cls(
            config_id=config_id,
            location=location,
            lam=lam,
            metric_name=metric_name,
            seeds=list(seeds),
            values=values,
            seconds=list(seconds) if seconds is not None else [0.0] * len(values),
            mean=float(np.mean(values)),
            std=float(np.std(values)),
        )

    def sort_key(self):
        return (self.location, self.lam)


# ============================================================================
# EMISSION
# ============================================================================


def _fmt(x: float) -> str:
    return f"{x:.{DECIMALS}f}"


def results_csv(results: Sequence[RunResult]) -> str:
    """CSV text of `results` (deterministic for equal inputs)."""
    rows = []
    for res in results:
        for seed, value, secs in zip(res.seeds, res.values, res.seconds):
            rows.append((res.location, res.lam, seed, value, res.mean, res.std, secs))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for location, lam, seed, value, mean, std, secs in rows:
        writer.writerow([location, _fmt(lam), seed, _fmt(value), _fmt(mean), _fmt(std), _fmt(secs)])
    return buffer.getvalue()


def results_json(results: Sequence[RunResult]) -> str:
    ordered = sorted(results, key=RunResult.sort_key)
    payload = {"results": [r.model_dump(by_alias=True) for r in ordered]}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def emit_results(results: Sequence[RunResult], path: PathLike) -> Path:
    """
    Write the results CSV and its JSON mirror (same stem, .json).

    Args:
        results: Non-empty result list
        path: CSV path

    Returns:
        Path of the JSON mirror

    Raises:
        ValueError: If results is empty
        OSError: If a file cannot be written
    """
    if not results:
        raise ValueError("Cannot emit an empty result list")
    path = Path(path)
    json_path = path.with_suffix(".json")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(results_csv(results), encoding="utf-8")
        json_path.write_text(results_json(results), encoding="utf-8")
    except OSError as e:
        logger.error(f"Failed to write results to {path}: {e}")
        raise
    logger.info(f"Wrote {len(results)} aggregate rows to {path} and {json_path}")
    return json_path


def load_results(path: PathLike) -> List[RunResult]:
    """
    Read a results JSON mirror.

    Raises:
        OSError: If the file cannot be read
        ValueError: If the content is invalid
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(payload, dict) or "results" not in payload:
        raise ValueError(f"{path}: missing 'results' list")
    return [RunResult.model_validate(r) for r in payload["results"]]


# ============================================================================
# TABLES
# ============================================================================


def aggregate_table(results: Sequence[RunResult]) -> List[Dict[str, Any]]:
    """
    Table rows (location, λ, mean, std, Δ vs the none/0 baseline), sorted.

    Δ is None when no baseline row is present.
    """
    baseline = next(
        (r.mean for r in results if r.location == BASELINE_LOCATION and r.lam == 0.0), None
    )
    rows = []
    for r in sorted(results, key=RunResult.sort_key):
        rows.append({
            "location": r.location,
            "lambda": r.lam,
            "metric": r.metric_name,
            "mean": r.mean,
            "std": r.std,
            "delta": None if baseline is None else r.mean - baseline,
            "runs": len(r.values),
        })
    return rows


def format_table(results: Sequence[RunResult]) -> str:
    """Fixed-width text table for the terminal (metric scaled to %)."""
    rows = aggregate_table(results)
    lines = [f"{'Noise added to':<28} {'λ':>8} {'mean %':>10} {'std %':>8} {'Δ %':>9}"]
    for row in rows:
        delta = "" if row["delta"] is None else f"{100 * row['delta']:+.3f}"
        lines.append(
            f"{row['location']:<28} {row['lambda']:>8.3f} {100 * row['mean']:>10.3f} "
            f"{100 * row['std']:>8.3f} {delta:>9}"
        )
    return "\n".join(lines)


def checkpoint_table(store: ParamStore) -> List[Dict[str, Any]]:
    """name / kind / zone / shape / σ per record, in store order."""
    return [
        {
            "name": rec.name,
            "kind": rec.kind.label,
            "zone": rec.zone.describe(),
            "shape": "x".join(str(d) for d in rec.shape),
            "sigma": tensor_std(rec),
        }
        for rec in store
    ]


def format_checkpoint_table(store: ParamStore) -> str:
    rows = checkpoint_table(store)
    width = max([len("name")] + [len(r["name"]) for r in rows])
    lines = [f"{'name':<{width}}  {'kind':<9}  {'zone':<11}  {'shape':<12}  {'sigma':>10}"]
    for r in rows:
        lines.append(
            f"{r['name']:<{width}}  {r['kind']:<9}  {r['zone']:<11}  {r['shape']:<12}  {r['sigma']:>10.6f}"
        )
    lines.append(f"{len(store)} tensors, {store.total_elements()} elements")
    return "\n".join(lines)
