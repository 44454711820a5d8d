"""
PerturbKit Param Store - Named, metadata-tagged model parameters.

This module provides the in-memory representation that every other part of
the toolkit works on:
- TensorKind / ZoneComponent: what a tensor is and where it lives
- TensorRecord: one named, shape-tagged float32 tensor
- ParamStore: insertion-ordered collection of records

Kind and zone are explicit metadata, never derived from names at runtime.
`infer_metadata()` exists only to tag foreign checkpoints and is advisory.
"""

import logging
import re
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np


# ============================================================================
# LOGGING
# ============================================================================

logger = logging.getLogger(__name__)


# ============================================================================
# ERRORS
# ============================================================================


class ParamStoreError(ValueError):
    """Base class for store validation failures."""


class DuplicateName(ParamStoreError):
    """A record with the same name is already present."""


class ShapeMismatch(ParamStoreError):
    """product(shape) does not equal the number of data elements."""


class NonFiniteValue(ParamStoreError):
    """Tensor data contains NaN or Inf."""


class InvalidName(ParamStoreError):
    """Record name is empty or not a dot-separated identifier path."""


# ============================================================================
# ENUMS
# ============================================================================


class TensorKind(IntEnum):
    """Parameter kind. Values are the on-disk codes."""

    WEIGHT = 0
    BIAS = 1
    LAYER_NORM_GAIN = 2
    LAYER_NORM_BIAS = 3
    EMBEDDING = 4
    OTHER = 5

    @property
    def label(self) -> str:
        return _KIND_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "TensorKind":
        key = label.strip().lower()
        for kind, name in _KIND_LABELS.items():
            if name == key:
                return kind
        raise ValueError(f"Unknown tensor kind: {label!r}")


_KIND_LABELS: Dict[TensorKind, str] = {
    TensorKind.WEIGHT: "weight",
    TensorKind.BIAS: "bias",
    TensorKind.LAYER_NORM_GAIN: "ln_gain",
    TensorKind.LAYER_NORM_BIAS: "ln_bias",
    TensorKind.EMBEDDING: "embedding",
    TensorKind.OTHER: "other",
}


class ZoneComponent(IntEnum):
    """Model component a tensor belongs to. Values are the on-disk codes."""

    NONE = 0
    ENCODER = 1
    DECODER = 2
    HEAD = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "ZoneComponent":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise ValueError(f"Unknown zone component: {label!r}") from None


# ============================================================================
# RECORDS
# ============================================================================

NAME_PATTERN = re.compile(r"[A-Za-z0-9_]+(\.[A-Za-z0-9_]+)*")


@dataclass(frozen=True)
class ZoneTag:
    """Where a tensor lives: component plus optional layer index."""

    component: ZoneComponent = ZoneComponent.NONE
    layer_index: Optional[int] = None

    def __post_init__(self):
        if self.layer_index is not None:
            if self.layer_index < 0:
                raise ValueError(f"layer_index must be >= 0, got {self.layer_index}")
            if self.component not in (ZoneComponent.ENCODER, ZoneComponent.DECODER):
                raise ValueError(
                    f"layer_index requires an encoder or decoder zone, got {self.component.label}"
                )

    def describe(self) -> str:
        if self.layer_index is None:
            return self.component.label
        return f"{self.component.label}[{self.layer_index}]"


@dataclass(frozen=True, eq=False)
class TensorRecord:
    """
    One named parameter tensor.

    `data` is a flat, row-major float32 array. The record is treated as
    immutable: operations that change values return a new record.
    """

    name: str
    shape: Tuple[int, ...]
    data: np.ndarray
    kind: TensorKind = TensorKind.OTHER
    zone: ZoneTag = field(default_factory=ZoneTag)

    @classmethod
    def from_array(
        cls,
        name: str,
        array: np.ndarray,
        kind: TensorKind = TensorKind.OTHER,
        zone: Optional[ZoneTag] = None,
    ) -> "TensorRecord":
        """Build a record from any-shaped array (cast to float32, flattened)."""
        arr = np.asarray(array)
        return cls(
            name=name,
            shape=tuple(int(d) for d in arr.shape) or (1,),
            data=np.ascontiguousarray(arr, dtype=np.float32).reshape(-1),
            kind=kind,
            zone=zone or ZoneTag(),
        )

    @property
    def size(self) -> int:
        return int(self.data.size)

    def array(self) -> np.ndarray:
        """Shaped float32 view of the data."""
        return self.data.reshape(self.shape)

    def with_data(self, data: np.ndarray) -> "TensorRecord":
        """Same metadata, new values."""
        return TensorRecord(
            name=self.name,
            shape=self.shape,
            data=np.ascontiguousarray(data, dtype=np.float32).reshape(-1),
            kind=self.kind,
            zone=self.zone,
        )

    def validate(self) -> None:
        """
        Check the record invariants.

        Raises:
            InvalidName: name empty or malformed
            ShapeMismatch: product(shape) != len(data) or non-positive dims
            NonFiniteValue: NaN/Inf present
        """
        if not self.name or not NAME_PATTERN.fullmatch(self.name):
            raise InvalidName(f"Invalid tensor name: {self.name!r}")
        if not self.shape or any(int(d) <= 0 for d in self.shape):
            raise ShapeMismatch(f"{self.name}: shape must be positive integers, got {list(self.shape)}")
        expected = int(np.prod(self.shape, dtype=np.int64))
        if expected != self.data.size:
            raise ShapeMismatch(
                f"{self.name}: shape {list(self.shape)} needs {expected} elements, data has {self.data.size}"
            )
        if self.data.dtype != np.float32:
            raise ShapeMismatch(f"{self.name}: data must be float32, got {self.data.dtype}")
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteValue(f"{self.name}: data contains NaN or Inf")


def records_equal(a: TensorRecord, b: TensorRecord) -> bool:
    """Field-by-field equality, comparing data bitwise."""
    return (
        a.name == b.name
        and tuple(a.shape) == tuple(b.shape)
        and a.kind == b.kind
        and a.zone == b.zone
        and a.data.dtype == b.data.dtype
        and a.data.tobytes() == b.data.tobytes()
    )


# ============================================================================
# STORE
# ============================================================================


class ParamStore:
    """
    Insertion-ordered collection of TensorRecords with unique names.

    The record count is the number of parameter matrices the noise engine
    iterates over. Stores are not mutated by the noise engine; it builds new
    ones via `replace()`.
    """

    def __init__(self, records: Optional[List[TensorRecord]] = None):
        self._records: Dict[str, TensorRecord] = {}
        for rec in records or []:
            self.put(rec)

    def put(self, rec: TensorRecord) -> "ParamStore":
        """
        Insert a record after validating it.

        Args:
            rec: Record to add (name must be new)

        Returns:
            self, for chaining

        Raises:
            DuplicateName, ShapeMismatch, NonFiniteValue, InvalidName
        """
        if rec.name in self._records:
            raise DuplicateName(f"Tensor {rec.name!r} already present in store")
        rec.validate()
        self._records[rec.name] = rec
        return self

    def get(self, name: str) -> TensorRecord:
        try:
            return self._records[name]
        except KeyError:
            raise KeyError(f"No tensor named {name!r} in store") from None

    def replace(self, updates: Dict[str, TensorRecord]) -> "ParamStore":
        """
        New store with some records swapped out, order preserved.

        Records not named in `updates` are shared (not copied); they are never
        mutated in place.
        """
        unknown = set(updates) - set(self._records)
        if unknown:
            raise KeyError(f"Cannot replace unknown tensors: {sorted(unknown)}")
        out = ParamStore()
        for name, rec in self._records.items():
            new = updates.get(name, rec)
            if new is not rec:
                new.validate()
            out._records[name] = new
        return out

    def names(self) -> List[str]:
        return list(self._records)

    def records(self) -> List[TensorRecord]:
        return list(self._records.values())

    def total_elements(self) -> int:
        return sum(rec.size for rec in self._records.values())

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[TensorRecord]:
        return iter(list(self._records.values()))

    def __contains__(self, name: object) -> bool:
        return name in self._records

    def __repr__(self) -> str:
        return f"ParamStore({len(self)} tensors, {self.total_elements()} elements)"


def put(store: ParamStore, rec: TensorRecord) -> ParamStore:
    """Functional form of `ParamStore.put`."""
    return store.put(rec)


def store_equal(a: ParamStore, b: ParamStore) -> bool:
    """Deep equality: same names in the same order, all fields equal."""
    if a.names() != b.names():
        return False
    return all(records_equal(x, y) for x, y in zip(a, b))


# ============================================================================
# NAME INFERENCE (advisory only)
# ============================================================================


def infer_metadata(name: str) -> Tuple[TensorKind, ZoneTag]:
    """
    Guess kind and zone from a tensor name.

    Used when ingesting checkpoints that carry no metadata. Rules:
    - a segment starting with "ln" or "norm" marks LayerNorm parameters
      (".weight"/".gain" -> gain, ".bias"/".shift" -> bias)
    - otherwise ".weight" -> Weight, ".bias" -> Bias; "emb" segment -> Embedding
    - "enc."/"dec."/"head." prefix picks the zone; the first numeric segment
      is the layer index (encoder/decoder only)

    Example:
        >>> infer_metadata("enc.3.attn.q.bias")
        (<TensorKind.BIAS: 1>, ZoneTag(component=<ZoneComponent.ENCODER: 1>, layer_index=3))
    """
    parts = name.split(".")
    suffix = parts[-1].lower() if parts else ""
    is_norm = any(p.lower().startswith(("ln", "norm")) for p in parts[:-1])

    if is_norm and suffix in ("weight", "gain", "gamma"):
        kind = TensorKind.LAYER_NORM_GAIN
    elif is_norm and suffix in ("bias", "shift", "beta"):
        kind = TensorKind.LAYER_NORM_BIAS
    elif any(p.lower().startswith("emb") for p in parts[:-1]):
        kind = TensorKind.EMBEDDING
    elif suffix == "weight":
        kind = TensorKind.WEIGHT
    elif suffix == "bias":
        kind = TensorKind.BIAS
    else:
        kind = TensorKind.OTHER

    head = parts[0].lower() if parts else ""
    component = {
        "enc": ZoneComponent.ENCODER,
        "encoder": ZoneComponent.ENCODER,
        "dec": ZoneComponent.DECODER,
        "decoder": ZoneComponent.DECODER,
        "head": ZoneComponent.HEAD,
    }.get(head, ZoneComponent.NONE)

    layer_index = None
    if component in (ZoneComponent.ENCODER, ZoneComponent.DECODER):
        for part in parts[1:]:
            if part.isdigit():
                layer_index = int(part)
                break

    return kind, ZoneTag(component=component, layer_index=layer_index)
