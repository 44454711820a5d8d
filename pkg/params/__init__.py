"""
PerturbKit Params - Metadata-tagged parameter storage and checkpoints.

Core Components:
- TensorRecord: named float32 tensor with kind/zone metadata
- ParamStore: insertion-ordered record collection
- read_checkpoint / write_checkpoint: bit-exact "PKPT" files

Usage:
    from params import ParamStore, TensorRecord, TensorKind, read_checkpoint

    store = read_checkpoint("pretrained.pkpt")
    for rec in store:
        print(rec.name, rec.kind.label, rec.zone.describe())
"""

from params.store import (
    DuplicateName,
    InvalidName,
    NonFiniteValue,
    ParamStore,
    ParamStoreError,
    ShapeMismatch,
    TensorKind,
    TensorRecord,
    ZoneComponent,
    ZoneTag,
    infer_metadata,
    put,
    records_equal,
    store_equal,
)
from params.checkpoint import (
    BadMagic,
    CheckpointError,
    CheckpointIOError,
    TruncatedFile,
    UnsupportedVersion,
    decode_checkpoint,
    encode_checkpoint,
    read_checkpoint,
    write_checkpoint,
)

__all__ = [
    # Store
    "ParamStore",
    "TensorRecord",
    "TensorKind",
    "ZoneComponent",
    "ZoneTag",
    "put",
    "infer_metadata",
    "records_equal",
    "store_equal",
    # Checkpoints
    "read_checkpoint",
    "write_checkpoint",
    "encode_checkpoint",
    "decode_checkpoint",
    # Errors
    "ParamStoreError",
    "DuplicateName",
    "ShapeMismatch",
    "NonFiniteValue",
    "InvalidName",
    "CheckpointError",
    "BadMagic",
    "UnsupportedVersion",
    "TruncatedFile",
    "CheckpointIOError",
]
