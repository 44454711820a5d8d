"""
Unit tests for the PerturbKit param store and checkpoint format.

Tests cover:
- Record validation (duplicates, shape mismatch, NaN, bad names)
- Store ordering, replace(), deep equality
- Golden checkpoint fixture (cross-checked by a struct-level decoder)
- Round-trip and byte determinism
- Malformed files (magic, version, truncation) and IO errors
- Advisory name inference
"""

import struct

import numpy as np
import pytest

from params.checkpoint import (
    BadMagic,
    CheckpointIOError,
    TruncatedFile,
    UnsupportedVersion,
    decode_checkpoint,
    encode_checkpoint,
    read_checkpoint,
    write_checkpoint,
)
from params.store import (
    DuplicateName,
    InvalidName,
    NonFiniteValue,
    ParamStore,
    ShapeMismatch,
    TensorKind,
    TensorRecord,
    ZoneComponent,
    ZoneTag,
    infer_metadata,
    put,
    store_equal,
)
from tests.conftest import build_mixed_store


# ============================================================================
# HELPERS
# ============================================================================


def dump_records(payload: bytes):
    """Byte-level decoder written against the format description only."""
    assert payload[:4] == b"PKPT"
    version, count = struct.unpack_from("<IQ", payload, 4)
    offset = 16
    records = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        name = payload[offset:offset + name_len].decode("utf-8")
        offset += name_len
        kind, zone, layer, ndim = struct.unpack_from("<BBiI", payload, offset)
        offset += 10
        dims = list(struct.unpack_from(f"<{ndim}Q", payload, offset))
        offset += 8 * ndim
        n = 1
        for d in dims:
            n *= d
        data = list(struct.unpack_from(f"<{n}f", payload, offset))
        offset += 4 * n
        records.append({"name": name, "kind": kind, "zone": zone, "layer": layer, "dims": dims, "data": data})
    assert offset == len(payload)
    return version, records


def record(name="enc.0.q.weight", shape=(2, 2), data=(1, 0, 0, 1), kind=TensorKind.WEIGHT, zone=None):
    return TensorRecord(
        name=name,
        shape=tuple(shape),
        data=np.asarray(data, dtype=np.float32),
        kind=kind,
        zone=zone or ZoneTag(ZoneComponent.ENCODER, 0),
    )


# ============================================================================
# STORE TESTS
# ============================================================================


class TestParamStore:
    """Test record insertion and validation."""

    def test_put_into_empty_store(self):
        """Identity matrix insert gives a store of size 1."""
        store = put(ParamStore(), record())
        assert len(store) == 1
        assert "enc.0.q.weight" in store

    def test_put_duplicate_name_rejected(self):
        store = put(ParamStore(), record(name="a"))
        with pytest.raises(DuplicateName):
            put(store, record(name="a"))

    def test_put_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatch):
            put(ParamStore(), record(shape=(2, 3), data=[1, 2, 3, 4, 5]))

    def test_put_non_finite_rejected(self):
        with pytest.raises(NonFiniteValue):
            put(ParamStore(), record(data=[1, np.nan, 0, 1]))
        with pytest.raises(NonFiniteValue):
            put(ParamStore(), record(data=[np.inf, 0, 0, 1]))

    @pytest.mark.parametrize("name", ["", "enc..q", ".enc", "enc.q.", "enc q", "enc-0"])
    def test_put_invalid_name_rejected(self, name):
        with pytest.raises(InvalidName):
            put(ParamStore(), record(name=name))

    def test_errors_are_value_errors(self):
        """Store errors can be caught as ValueError."""
        with pytest.raises(ValueError):
            put(ParamStore(), record(shape=(3,), data=[1, 2]))

    def test_put_leaves_prior_records_unchanged(self):
        store = ParamStore([record(name="a")])
        before = store.get("a").data.copy()
        store.put(record(name="b"))
        assert store.get("a").data.tobytes() == before.tobytes()

    def test_iteration_follows_insertion_order(self):
        names = ["z.weight", "a.weight", "m.bias"]
        store = ParamStore([record(name=n) for n in names])
        assert store.names() == names
        assert [r.name for r in store] == names

    def test_replace_returns_new_store(self):
        store = ParamStore([record(name="a"), record(name="b")])
        new = store.replace({"a": store.get("a").with_data(np.zeros(4))})
        assert new.names() == ["a", "b"]
        assert np.all(new.get("a").data == 0)
        assert store.get("a").data[0] == 1.0
        assert new.get("b") is store.get("b")

    def test_replace_unknown_name_rejected(self):
        with pytest.raises(KeyError):
            ParamStore([record(name="a")]).replace({"b": record(name="b")})

    def test_get_missing_raises_key_error(self):
        with pytest.raises(KeyError, match="nope"):
            ParamStore().get("nope")

    def test_from_array_flattens_and_casts(self):
        rec = TensorRecord.from_array("x", np.arange(6, dtype=np.float64).reshape(2, 3))
        assert rec.shape == (2, 3)
        assert rec.data.dtype == np.float32
        assert rec.array().shape == (2, 3)

    def test_layer_index_needs_encoder_or_decoder(self):
        with pytest.raises(ValueError):
            ZoneTag(ZoneComponent.HEAD, 1)
        with pytest.raises(ValueError):
            ZoneTag(ZoneComponent.ENCODER, -1)


# ============================================================================
# CHECKPOINT TESTS
# ============================================================================


class TestGoldenCheckpoint:
    """Test reading the bundled 3-tensor fixture."""

    def test_golden_names_in_order(self, golden_path):
        store = read_checkpoint(golden_path)
        assert store.names() == ["emb.weight", "enc.0.w.weight", "enc.0.w.bias"]

    def test_golden_matches_struct_dump(self, golden_path):
        payload = golden_path.read_bytes()
        version, dumped = dump_records(payload)
        store = read_checkpoint(golden_path)
        assert version == 1
        for raw, rec in zip(dumped, store):
            assert raw["name"] == rec.name
            assert raw["kind"] == int(rec.kind)
            assert raw["zone"] == int(rec.zone.component)
            assert raw["layer"] == (-1 if rec.zone.layer_index is None else rec.zone.layer_index)
            assert raw["dims"] == list(rec.shape)
            assert raw["data"] == rec.data.tolist()

    def test_golden_contents(self, golden_path):
        store = read_checkpoint(golden_path)
        emb = store.get("emb.weight")
        assert emb.kind == TensorKind.EMBEDDING
        assert emb.zone == ZoneTag(ZoneComponent.NONE)
        assert emb.data.tolist() == [1.0, -1.0, 0.5, 2.0]
        w = store.get("enc.0.w.weight")
        assert w.shape == (1, 2)
        assert w.zone == ZoneTag(ZoneComponent.ENCODER, 0)
        b = store.get("enc.0.w.bias")
        assert b.kind == TensorKind.BIAS
        assert b.data.tolist() == [0.0, 1.0]

    def test_golden_rewrite_is_byte_identical(self, golden_path, tmp_path):
        out = tmp_path / "copy.pkpt"
        write_checkpoint(read_checkpoint(golden_path), out)
        assert out.read_bytes() == golden_path.read_bytes()


class TestCheckpointFormat:
    """Test round-trips, determinism and malformed input."""

    def test_empty_store_is_16_bytes(self, tmp_path):
        path = tmp_path / "empty.pkpt"
        write_checkpoint(ParamStore(), path)
        payload = path.read_bytes()
        assert len(payload) == 16
        assert payload == b"PKPT" + struct.pack("<I", 1) + struct.pack("<Q", 0)

    def test_round_trip_equal(self, mixed_store, tmp_path):
        path = tmp_path / "mixed.pkpt"
        write_checkpoint(mixed_store, path)
        loaded = read_checkpoint(path)
        assert store_equal(loaded, mixed_store)
        assert loaded.names() == mixed_store.names()

    def test_writes_are_deterministic(self, tmp_path):
        a, b = tmp_path / "a.pkpt", tmp_path / "b.pkpt"
        write_checkpoint(build_mixed_store(), a)
        write_checkpoint(build_mixed_store(), b)
        assert a.read_bytes() == b.read_bytes()

    def test_encode_decode_preserves_metadata(self):
        store = ParamStore([
            record(name="dec.4.ln.bias", shape=(2,), data=[0.5, -0.5],
                   kind=TensorKind.LAYER_NORM_BIAS, zone=ZoneTag(ZoneComponent.DECODER, 4)),
            record(name="head.out.weight", zone=ZoneTag(ZoneComponent.HEAD)),
        ])
        assert store_equal(decode_checkpoint(encode_checkpoint(store)), store)

    def test_bad_magic(self, golden_path, tmp_path):
        path = tmp_path / "bad.pkpt"
        path.write_bytes(b"XXXX" + golden_path.read_bytes()[4:])
        with pytest.raises(BadMagic):
            read_checkpoint(path)

    def test_unsupported_version(self, golden_path):
        payload = bytearray(golden_path.read_bytes())
        payload[4:8] = struct.pack("<I", 2)
        with pytest.raises(UnsupportedVersion):
            decode_checkpoint(bytes(payload))

    @pytest.mark.parametrize("cut", [1, 4, 20, 100])
    def test_truncated_file(self, golden_path, cut):
        payload = golden_path.read_bytes()
        with pytest.raises(TruncatedFile):
            decode_checkpoint(payload[:-cut])

    def test_huge_dims_do_not_wrap(self):
        """[2**62, 4] has 2**64 elements, which is 0 in int64 arithmetic."""
        name = b"w"
        payload = (
            struct.pack("<4sIQ", b"PKPT", 1, 1)
            + struct.pack("<I", len(name)) + name
            + struct.pack("<BBiI", int(TensorKind.WEIGHT), 0, -1, 2)
            + struct.pack("<QQ", 2 ** 62, 4)
        )
        with pytest.raises(TruncatedFile):
            decode_checkpoint(payload)

    def test_duplicate_names_in_file(self):
        payload = bytearray(encode_checkpoint(ParamStore([record(name="a"), record(name="b")])))
        # Both names have length 1; rename the second record in place
        idx = payload.rindex(b"b")
        payload[idx:idx + 1] = b"a"
        with pytest.raises(DuplicateName):
            decode_checkpoint(bytes(payload))

    def test_write_to_missing_directory(self, tmp_path):
        with pytest.raises(CheckpointIOError):
            write_checkpoint(ParamStore(), tmp_path / "missing" / "out.pkpt")

    def test_read_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_checkpoint(tmp_path / "nope.pkpt")


# ============================================================================
# NAME INFERENCE TESTS
# ============================================================================


class TestInferMetadata:
    """Test the advisory name-based tagging."""

    @pytest.mark.parametrize("name,kind,component,layer", [
        ("enc.3.attn.q.bias", TensorKind.BIAS, ZoneComponent.ENCODER, 3),
        ("enc.0.ffn.in.weight", TensorKind.WEIGHT, ZoneComponent.ENCODER, 0),
        ("dec.1.ln2.weight", TensorKind.LAYER_NORM_GAIN, ZoneComponent.DECODER, 1),
        ("dec.1.norm.bias", TensorKind.LAYER_NORM_BIAS, ZoneComponent.DECODER, 1),
        ("enc.emb.tok.weight", TensorKind.EMBEDDING, ZoneComponent.ENCODER, None),
        ("head.tag.weight", TensorKind.WEIGHT, ZoneComponent.HEAD, None),
        ("scale", TensorKind.OTHER, ZoneComponent.NONE, None),
    ])
    def test_inference_rules(self, name, kind, component, layer):
        got_kind, zone = infer_metadata(name)
        assert got_kind == kind
        assert zone == ZoneTag(component, layer)


# ============================================================================
# RUN TESTS
# ============================================================================

if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
