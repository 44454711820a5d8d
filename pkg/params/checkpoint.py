"""
PerturbKit Checkpoint Format - bit-exact reader/writer for ParamStores.

Layout (little-endian, no padding, no alignment):

    magic           4 bytes   b"PKPT"
    version         u32       1
    record count    u64
    per record:
      name length   u32
      name          UTF-8 bytes
      kind          u8        TensorKind code
      zone          u8        ZoneComponent code
      layer index   i32       -1 = absent
      ndim          u32
      dims          ndim x u64
      data          product(dims) x f32

An empty store serialises to exactly 16 bytes.
"""

import logging
import math
import struct
from pathlib import Path
from typing import Union

import numpy as np

from params.store import (
    ParamStore,
    TensorKind,
    TensorRecord,
    ZoneComponent,
    ZoneTag,
)


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MAGIC = b"PKPT"
VERSION = 1

_HEADER = struct.Struct("<4sIQ")
_U32 = struct.Struct("<I")
_RECORD_META = struct.Struct("<BBiI")


# ============================================================================
# ERRORS
# ============================================================================


class CheckpointError(ValueError):
    """Base class for malformed checkpoint files."""


class BadMagic(CheckpointError):
    """File does not start with b'PKPT'."""


class UnsupportedVersion(CheckpointError):
    """Format version is not one this reader understands."""


class TruncatedFile(CheckpointError):
    """File ends before the declared content."""


class CheckpointIOError(OSError):
    """Checkpoint could not be written or read from disk."""


# ============================================================================
# ENCODING
# ============================================================================


def encode_checkpoint(store: ParamStore) -> bytes:
    """Serialise a store to the canonical byte sequence."""
    chunks = [_HEADER.pack(MAGIC, VERSION, len(store))]
    for rec in store:
        name = rec.name.encode("utf-8")
        layer = -1 if rec.zone.layer_index is None else rec.zone.layer_index
        chunks.append(_U32.pack(len(name)))
        chunks.append(name)
        chunks.append(
            _RECORD_META.pack(int(rec.kind), int(rec.zone.component), layer, len(rec.shape))
        )
        chunks.append(np.asarray(rec.shape, dtype="<u8").tobytes())
        chunks.append(np.ascontiguousarray(rec.data, dtype="<f4").tobytes())
    return b"".join(chunks)


def write_checkpoint(store: ParamStore, path: PathLike) -> None:
    """
    Write a store to disk.

    Args:
        store: Valid store
        path: Destination file

    Raises:
        CheckpointIOError: If the file cannot be written
    """
    payload = encode_checkpoint(store)
    try:
        Path(path).write_bytes(payload)
    except OSError as e:
        logger.error(f"Failed to write checkpoint {path}: {type(e).__name__}: {e}")
        raise CheckpointIOError(f"Cannot write checkpoint {path}: {e}") from e
    logger.info(f"Wrote checkpoint {path} ({len(store)} tensors, {len(payload)} bytes)")


# ============================================================================
# DECODING
# ============================================================================


class _Reader:
    """Cursor over a byte buffer that raises TruncatedFile on overrun."""

    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.offset + n
        if end > len(self.payload):
            raise TruncatedFile(
                f"Truncated checkpoint: need {n} bytes for {what} at offset {self.offset}, "
                f"only {len(self.payload) - self.offset} left"
            )
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: struct.Struct, what: str) -> tuple:
        return fmt.unpack(self.take(fmt.size, what))


def decode_checkpoint(payload: bytes) -> ParamStore:
    """
    Parse checkpoint bytes into a store.

    Raises:
        BadMagic, UnsupportedVersion, TruncatedFile, CheckpointError,
        DuplicateName (and other ParamStoreError subclasses)
    """
    if len(payload) < 4 or payload[:4] != MAGIC:
        raise BadMagic(f"Bad magic {payload[:4]!r}, expected {MAGIC!r}")

    reader = _Reader(payload)
    _, version, count = reader.unpack(_HEADER, "header")
    if version != VERSION:
        raise UnsupportedVersion(f"Unsupported checkpoint version {version} (reader supports {VERSION})")

    store = ParamStore()
    for index in range(count):
        (name_len,) = reader.unpack(_U32, f"record {index} name length")
        raw_name = reader.take(name_len, f"record {index} name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"Record {index}: name is not valid UTF-8") from e

        kind_code, zone_code, layer, ndim = reader.unpack(_RECORD_META, f"{name} metadata")
        try:
            kind = TensorKind(kind_code)
            component = ZoneComponent(zone_code)
            zone = ZoneTag(component=component, layer_index=None if layer == -1 else layer)
        except ValueError as e:
            raise CheckpointError(f"{name}: invalid metadata ({e})") from e

        dims = np.frombuffer(reader.take(8 * ndim, f"{name} dims"), dtype="<u8")
        shape = tuple(int(d) for d in dims)
        count_elems = math.prod(shape) if shape else 0
        raw = reader.take(4 * count_elems, f"{name} data")
        data = np.frombuffer(raw, dtype="<f4").astype(np.float32)

        store.put(TensorRecord(name=name, shape=shape, data=data, kind=kind, zone=zone))

    if reader.offset != len(payload):
        logger.warning(
            f"Checkpoint has {len(payload) - reader.offset} trailing bytes after {count} records"
        )
    return store


def read_checkpoint(path: PathLike) -> ParamStore:
    """
    Read a checkpoint file.

    Args:
        path: Source file

    Returns:
        ParamStore with records in file order

    Raises:
        CheckpointIOError: If the file cannot be opened
        BadMagic, UnsupportedVersion, TruncatedFile, DuplicateName
    """
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointIOError(f"Cannot read checkpoint {path}: {e}") from e
    store = decode_checkpoint(payload)
    logger.info(f"Read checkpoint {path} ({len(store)} tensors)")
    return store
