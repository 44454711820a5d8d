"""
Shared fixtures for the PerturbKit test suites.
"""

from pathlib import Path

import numpy as np
import pytest

from models.layers import ModelConfig
from models.seq2seq import Seq2SeqModel
from models.tagger import TaggerModel
from params.store import ParamStore, TensorKind, TensorRecord, ZoneComponent, ZoneTag


FIXTURES = Path(__file__).parent / "fixtures"

W, B = TensorKind.WEIGHT, TensorKind.BIAS
G, S = TensorKind.LAYER_NORM_GAIN, TensorKind.LAYER_NORM_BIAS
ENC, DEC, HEAD, NONE = ZoneComponent.ENCODER, ZoneComponent.DECODER, ZoneComponent.HEAD, ZoneComponent.NONE

# 9 weights, 7 biases, 6 LayerNorm tensors, 1 embedding, 1 other
MIXED_LAYOUT = [
    ("emb.tok.weight", (4, 3), TensorKind.EMBEDDING, ENC, None),
    ("enc.0.q.weight", (3, 3), W, ENC, 0),
    ("enc.0.q.bias", (3,), B, ENC, 0),
    ("enc.0.k.weight", (3, 3), W, ENC, 0),
    ("enc.0.ln.weight", (3,), G, ENC, 0),
    ("enc.0.ln.bias", (3,), S, ENC, 0),
    ("enc.1.q.weight", (3, 3), W, ENC, 1),
    ("enc.1.q.bias", (3,), B, ENC, 1),
    ("enc.1.ln.weight", (3,), G, ENC, 1),
    ("enc.1.ln.bias", (3,), S, ENC, 1),
    ("enc.2.q.weight", (3, 3), W, ENC, 2),
    ("enc.2.q.bias", (3,), B, ENC, 2),
    ("dec.0.q.weight", (3, 3), W, DEC, 0),
    ("dec.0.q.bias", (3,), B, DEC, 0),
    ("dec.0.k.weight", (3, 3), W, DEC, 0),
    ("dec.0.k.bias", (3,), B, DEC, 0),
    ("dec.0.ln.weight", (3,), G, DEC, 0),
    ("dec.0.ln.bias", (3,), S, DEC, 0),
    ("dec.1.q.weight", (3, 3), W, DEC, 1),
    ("dec.1.q.bias", (3,), B, DEC, 1),
    ("head.out.weight", (3, 2), W, HEAD, None),
    ("head.out.bias", (2,), B, HEAD, None),
    ("head.extra.weight", (2, 2), W, HEAD, None),
    ("misc.scale", (1, 2), TensorKind.OTHER, NONE, None),
]


def build_mixed_store(order=None) -> ParamStore:
    """Random-valued store over MIXED_LAYOUT; `order` permutes insertion order."""
    rng = np.random.default_rng(1234)
    records = []
    for name, shape, kind, component, layer in MIXED_LAYOUT:
        records.append(TensorRecord.from_array(
            name, rng.standard_normal(shape), kind, ZoneTag(component, layer)
        ))
    if order is not None:
        records = [records[i] for i in order]
    return ParamStore(records)


@pytest.fixture
def golden_path() -> Path:
    return FIXTURES / "golden_3tensor.pkpt"


@pytest.fixture
def mixed_store() -> ParamStore:
    return build_mixed_store()


@pytest.fixture
def tiny_config() -> ModelConfig:
    """Tagger-sized config used across model tests."""
    return ModelConfig(layers=2, model_dim=16, heads=2, vocab=32, max_len=12, init_seed=3)


@pytest.fixture
def tiny_tagger(tiny_config) -> TaggerModel:
    return TaggerModel(tiny_config)


@pytest.fixture
def tiny_seq2seq() -> Seq2SeqModel:
    config = ModelConfig(layers=2, model_dim=16, heads=2, vocab=24, max_len=16, decoder_layers=2, init_seed=5)
    return Seq2SeqModel(config)
