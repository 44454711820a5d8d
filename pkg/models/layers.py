"""
PerturbKit Layers - Parameter layout, initialisation and transformer blocks.

A toy model is a flat dict of float64 arrays plus a list of ParamSpecs that
carries the kind/zone metadata for every name. Blocks are plain functions
over a name -> Node map, so the same code serves forward passes, training
and gradient checks.

Naming scheme (post-LN transformer, BERT style):
    enc.emb.tok.weight / enc.emb.pos.weight / enc.emb.ln.{weight,bias}
    enc.{i}.attn.{q,k,v,o}.{weight,bias}
    enc.{i}.ln1.{weight,bias}, enc.{i}.ffn.{in,out}.{weight,bias}, enc.{i}.ln2.*
    dec.{i}.self.*, dec.{i}.cross.*, dec.{i}.ln{1,2,3}.*, dec.{i}.ffn.*
    head.<name>.{weight,bias}
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Type, TypeVar

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.stats import truncnorm

from data.schema import N_RELATION_LABELS, N_TAGS
from models.autodiff import (
    Node,
    ShapeError,
    add,
    const,
    embed_lookup,
    gelu,
    layer_norm,
    leaf,
    matmul,
    mul,
    reshape,
    softmax,
    transpose,
)
from params.store import ParamStore, TensorKind, TensorRecord, ZoneComponent, ZoneTag


logger = logging.getLogger(__name__)

Params = Dict[str, Node]
M = TypeVar("M", bound="ToyModel")


# ============================================================================
# CONSTANTS
# ============================================================================


class InitDefaults:
    """Initialisation constants."""

    # Truncated normal for weight matrices and embeddings, cut at ±2σ
    WEIGHT_STD: float = 0.02
    TRUNCATION: float = 2.0

    # LayerNorm epsilon
    LN_EPS: float = 1e-12

    # Additive attention mask for disallowed positions
    MASK_VALUE: float = -1e9


# ============================================================================
# CONFIG
# ============================================================================


class ModelConfig(BaseModel):
    """Architecture of a toy transformer."""

    layers: int = Field(2, ge=1, description="Encoder depth L")
    model_dim: int = Field(32, ge=1, description="Hidden size d")
    heads: int = Field(2, ge=1, description="Attention heads h (h must divide d)")
    vocab: int = Field(64, ge=1, description="Vocabulary size")
    max_len: int = Field(32, ge=1, description="Longest sequence a model accepts")
    decoder_layers: Optional[int] = Field(None, ge=1, description="Decoder depth (seq2seq only; default L)")
    ffn_dim: Optional[int] = Field(None, ge=1, description="Feed-forward width (default 2d)")
    n_tags: int = Field(N_TAGS, ge=1, description="Tag classes of the tagger head")
    n_rel_labels: int = Field(N_RELATION_LABELS, ge=1, description="Relation classes incl. 'none'")
    init_seed: int = Field(0, ge=0, description="Seed for parameter initialisation")

    @model_validator(mode="after")
    def validate_heads(self) -> "ModelConfig":
        if self.model_dim % self.heads != 0:
            raise ValueError(f"heads ({self.heads}) must divide model_dim ({self.model_dim})")
        return self

    @property
    def ffn_width(self) -> int:
        return self.ffn_dim or 2 * self.model_dim

    @property
    def decoder_depth(self) -> int:
        return self.decoder_layers or self.layers


# ============================================================================
# PARAMETER SPECS
# ============================================================================


@dataclass(frozen=True)
class ParamSpec:
    """Name, shape and metadata of one parameter."""

    name: str
    shape: Tuple[int, ...]
    kind: TensorKind
    zone: ZoneTag


def linear_specs(prefix: str, d_in: int, d_out: int, zone: ZoneTag) -> List[ParamSpec]:
    return [
        ParamSpec(f"{prefix}.weight", (d_in, d_out), TensorKind.WEIGHT, zone),
        ParamSpec(f"{prefix}.bias", (d_out,), TensorKind.BIAS, zone),
    ]


def ln_specs(prefix: str, d: int, zone: ZoneTag) -> List[ParamSpec]:
    return [
        ParamSpec(f"{prefix}.weight", (d,), TensorKind.LAYER_NORM_GAIN, zone),
        ParamSpec(f"{prefix}.bias", (d,), TensorKind.LAYER_NORM_BIAS, zone),
    ]


def attention_specs(prefix: str, d: int, zone: ZoneTag) -> List[ParamSpec]:
    specs: List[ParamSpec] = []
    for proj in ("q", "k", "v", "o"):
        specs += linear_specs(f"{prefix}.{proj}", d, d, zone)
    return specs


def embedding_specs(prefix: str, config: ModelConfig, component: ZoneComponent) -> List[ParamSpec]:
    zone = ZoneTag(component)
    d = config.model_dim
    return [
        ParamSpec(f"{prefix}.tok.weight", (config.vocab, d), TensorKind.EMBEDDING, zone),
        ParamSpec(f"{prefix}.pos.weight", (config.max_len, d), TensorKind.EMBEDDING, zone),
        *ln_specs(f"{prefix}.ln", d, zone),
    ]


def encoder_block_specs(index: int, config: ModelConfig) -> List[ParamSpec]:
    zone = ZoneTag(ZoneComponent.ENCODER, index)
    d, f = config.model_dim, config.ffn_width
    prefix = f"enc.{index}"
    return [
        *attention_specs(f"{prefix}.attn", d, zone),
        *ln_specs(f"{prefix}.ln1", d, zone),
        *linear_specs(f"{prefix}.ffn.in", d, f, zone),
        *linear_specs(f"{prefix}.ffn.out", f, d, zone),
        *ln_specs(f"{prefix}.ln2", d, zone),
    ]


def decoder_block_specs(index: int, config: ModelConfig) -> List[ParamSpec]:
    zone = ZoneTag(ZoneComponent.DECODER, index)
    d, f = config.model_dim, config.ffn_width
    prefix = f"dec.{index}"
    return [
        *attention_specs(f"{prefix}.self", d, zone),
        *ln_specs(f"{prefix}.ln1", d, zone),
        *attention_specs(f"{prefix}.cross", d, zone),
        *ln_specs(f"{prefix}.ln2", d, zone),
        *linear_specs(f"{prefix}.ffn.in", d, f, zone),
        *linear_specs(f"{prefix}.ffn.out", f, d, zone),
        *ln_specs(f"{prefix}.ln3", d, zone),
    ]


def init_params(specs: List[ParamSpec], seed: int) -> Dict[str, np.ndarray]:
    """
    Deterministic initialisation, drawn in spec order.

    Weights and embeddings: truncated normal (std 0.02, cut at ±2σ).
    Biases and LayerNorm shifts: 0. LayerNorm gains: 1.
    """
    rng = np.random.default_rng(seed)
    bound = InitDefaults.TRUNCATION
    params: Dict[str, np.ndarray] = {}
    for spec in specs:
        if spec.kind in (TensorKind.WEIGHT, TensorKind.EMBEDDING):
            params[spec.name] = truncnorm.rvs(
                -bound, bound, scale=InitDefaults.WEIGHT_STD, size=spec.shape, random_state=rng
            ).astype(np.float64)
        elif spec.kind == TensorKind.LAYER_NORM_GAIN:
            params[spec.name] = np.ones(spec.shape)
        else:
            params[spec.name] = np.zeros(spec.shape)
    return params


# ============================================================================
# MODEL BASE
# ============================================================================


class ToyModel:
    """
    Float64 parameters plus their metadata.

    Subclasses define `build_specs()` and their forward functions. A model
    instance is used by one thread at a time.
    """

    def __init__(self, config: ModelConfig, params: Optional[Dict[str, np.ndarray]] = None):
        self.config = config
        self.specs = self.build_specs(config)
        if params is None:
            params = init_params(self.specs, config.init_seed)
        self._check_params(params)
        self.params = params

    @staticmethod
    def build_specs(config: ModelConfig) -> List[ParamSpec]:
        raise NotImplementedError

    def _check_params(self, params: Dict[str, np.ndarray]) -> None:
        expected = {spec.name: spec.shape for spec in self.specs}
        if set(params) != set(expected):
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise ShapeError(f"Parameter names differ from the architecture (missing={missing}, extra={extra})")
        for name, shape in expected.items():
            if tuple(params[name].shape) != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {params[name].shape}")

    def leaves(self) -> Params:
        """Fresh leaf nodes for one forward/backward pass."""
        return {name: leaf(value, name) for name, value in self.params.items()}

    def copy(self: M) -> M:
        return type(self)(self.config, {n: v.copy() for n, v in self.params.items()})

    def num_parameters(self) -> int:
        return sum(int(v.size) for v in self.params.values())

    def to_store(self) -> ParamStore:
        """Serialise to a float32 ParamStore in spec order."""
        return ParamStore([
            TensorRecord.from_array(spec.name, self.params[spec.name], spec.kind, spec.zone)
            for spec in self.specs
        ])

    @classmethod
    def from_store(cls: Type[M], config: ModelConfig, store: ParamStore) -> M:
        """
        Load parameters from a store (cast to float64).

        Raises:
            ShapeError: If names or shapes do not match the architecture
        """
        params = {rec.name: rec.array().astype(np.float64) for rec in store}
        return cls(config, params)


# ============================================================================
# BLOCKS
# ============================================================================


def linear(p: Params, prefix: str, x: Node) -> Node:
    return add(matmul(x, p[f"{prefix}.weight"]), p[f"{prefix}.bias"])


def norm(p: Params, prefix: str, x: Node) -> Node:
    return layer_norm(x, p[f"{prefix}.weight"], p[f"{prefix}.bias"], InitDefaults.LN_EPS)


def causal_mask(length: int) -> np.ndarray:
    """[T, T] additive mask: 0 on and below the diagonal, MASK_VALUE above."""
    return np.triu(np.full((length, length), InitDefaults.MASK_VALUE), k=1)


def attention(
    p: Params,
    prefix: str,
    queries: Node,
    memory: Node,
    heads: int,
    mask: Optional[np.ndarray] = None,
) -> Node:
    """
    Multi-head scaled dot-product attention.

    Args:
        queries: [B, Tq, d]
        memory: [B, Tk, d] (same node as queries for self-attention)
        heads: Number of heads
        mask: Optional additive [Tq, Tk] mask

    Returns:
        [B, Tq, d]
    """
    b, tq, d = queries.shape
    tk = memory.shape[1]
    dh = d // heads

    q = transpose(reshape(linear(p, f"{prefix}.q", queries), (b, tq, heads, dh)), (0, 2, 1, 3))
    k = transpose(reshape(linear(p, f"{prefix}.k", memory), (b, tk, heads, dh)), (0, 2, 3, 1))
    v = transpose(reshape(linear(p, f"{prefix}.v", memory), (b, tk, heads, dh)), (0, 2, 1, 3))

    scores = mul(matmul(q, k), const(1.0 / np.sqrt(dh)))
    if mask is not None:
        scores = add(scores, const(mask))
    context = matmul(softmax(scores, axis=-1), v)
    context = reshape(transpose(context, (0, 2, 1, 3)), (b, tq, d))
    return linear(p, f"{prefix}.o", context)


def feed_forward(p: Params, prefix: str, x: Node) -> Node:
    return linear(p, f"{prefix}.out", gelu(linear(p, f"{prefix}.in", x)))


def embed(p: Params, prefix: str, ids: np.ndarray, max_len: int, vocab: int) -> Node:
    """Token + position embeddings followed by LayerNorm; ids [B, T]."""
    ids = np.asarray(ids)
    if ids.ndim != 2:
        raise ShapeError(f"Token batch must be 2-D [batch, seq], got shape {ids.shape}")
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"Token ids must be integers, got dtype {ids.dtype}")
    _, t = ids.shape
    if t == 0 or t > max_len:
        raise ShapeError(f"Sequence length {t} outside [1, {max_len}]")
    if ids.min() < 0 or ids.max() >= vocab:
        raise ShapeError(f"Token ids must lie in [0, {vocab}), got [{ids.min()}, {ids.max()}]")
    tokens = embed_lookup(p[f"{prefix}.tok.weight"], ids)
    positions = embed_lookup(p[f"{prefix}.pos.weight"], np.arange(t))
    return norm(p, f"{prefix}.ln", add(tokens, positions))


def encoder_block(p: Params, index: int, x: Node, heads: int) -> Node:
    prefix = f"enc.{index}"
    x = norm(p, f"{prefix}.ln1", add(x, attention(p, f"{prefix}.attn", x, x, heads)))
    return norm(p, f"{prefix}.ln2", add(x, feed_forward(p, f"{prefix}.ffn", x)))


def decoder_block(p: Params, index: int, x: Node, memory: Node, heads: int) -> Node:
    prefix = f"dec.{index}"
    mask = causal_mask(x.shape[1])
    x = norm(p, f"{prefix}.ln1", add(x, attention(p, f"{prefix}.self", x, x, heads, mask)))
    x = norm(p, f"{prefix}.ln2", add(x, attention(p, f"{prefix}.cross", x, memory, heads)))
    return norm(p, f"{prefix}.ln3", add(x, feed_forward(p, f"{prefix}.ffn", x)))


def encode(p: Params, config: ModelConfig, ids: np.ndarray) -> Node:
    """Embeddings plus the encoder stack: [B, T] ids -> [B, T, d]."""
    x = embed(p, "enc.emb", ids, config.max_len, config.vocab)
    for i in range(config.layers):
        x = encoder_block(p, i, x, config.heads)
    return x
