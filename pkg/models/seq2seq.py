"""
PerturbKit Seq2Seq - Encoder-decoder transformer with greedy decoding.

The decoder uses causal self-attention plus cross-attention over the
encoder output. Training uses teacher forcing: the decoder input is
[BOS] + target and the label sequence is target + [EOS]; shorter targets
are right-padded and masked out of the loss.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from data.schema import BOS_ID, EOS_ID, PAD_ID
from data.synthetic import Seq2SeqExample, render_tokens
from metrics.rouge import RougeScores, mean_scores
from models.autodiff import Node, ShapeError, cross_entropy
from models.layers import (
    ModelConfig,
    ParamSpec,
    Params,
    ToyModel,
    decoder_block,
    decoder_block_specs,
    embed,
    embedding_specs,
    encode,
    encoder_block_specs,
    linear,
    linear_specs,
)
from params.store import ZoneComponent, ZoneTag


logger = logging.getLogger(__name__)


# ============================================================================
# MODEL
# ============================================================================


class Seq2SeqModel(ToyModel):
    """Encoder stack, decoder stack and a vocabulary projection head."""

    @staticmethod
    def build_specs(config: ModelConfig) -> List[ParamSpec]:
        specs = embedding_specs("enc.emb", config, ZoneComponent.ENCODER)
        for i in range(config.layers):
            specs += encoder_block_specs(i, config)
        specs += embedding_specs("dec.emb", config, ZoneComponent.DECODER)
        for i in range(config.decoder_depth):
            specs += decoder_block_specs(i, config)
        specs += linear_specs("head.lm", config.model_dim, config.vocab, ZoneTag(ZoneComponent.HEAD))
        return specs


# ============================================================================
# FORWARD
# ============================================================================


def decode_step_logits(model: Seq2SeqModel, p: Params, memory: Node, tgt_prefix: np.ndarray) -> Node:
    """Decoder stack and LM head over an encoded source."""
    config = model.config
    tgt_prefix = np.asarray(tgt_prefix)
    if tgt_prefix.ndim != 2 or tgt_prefix.shape[0] != memory.shape[0]:
        raise ShapeError(
            f"Target prefix must be [batch, len] with batch {memory.shape[0]}, got {tgt_prefix.shape}"
        )
    x = embed(p, "dec.emb", tgt_prefix, config.max_len, config.vocab)
    for i in range(config.decoder_depth):
        x = decoder_block(p, i, x, memory, config.heads)
    return linear(p, "head.lm", x)


def forward_seq2seq(
    model: Seq2SeqModel,
    src_batch: np.ndarray,
    tgt_prefix: np.ndarray,
    p: Optional[Params] = None,
) -> Node:
    """
    Next-token logits for every prefix position.

    Args:
        model: Seq2seq model
        src_batch: int array [batch, src_len]
        tgt_prefix: int array [batch, tgt_len], starting with BOS
        p: Optional leaf map when gradients are needed

    Returns:
        Logits node [batch, tgt_len, vocab]; position t only depends on prefix[:t+1]

    Raises:
        ShapeError: On malformed batches
    """
    p = p if p is not None else model.leaves()
    memory = encode(p, model.config, np.asarray(src_batch))
    return decode_step_logits(model, p, memory, tgt_prefix)


def greedy_decode(model: Seq2SeqModel, src: Sequence[int], max_steps: int) -> List[int]:
    """
    Greedy decoding of one source sequence.

    Stops at EOS or after `max_steps` tokens (also capped by max_len - 1).
    The returned tokens exclude BOS and EOS.

    Example:
        >>> greedy_decode(model, [4, 9, 12, 3, 7], max_steps=0)
        []
    """
    if max_steps < 0:
        raise ValueError(f"max_steps must be >= 0, got {max_steps}")
    steps = min(max_steps, model.config.max_len - 1)
    if steps == 0:
        return []

    p = model.leaves()
    memory = encode(p, model.config, np.asarray([list(src)], dtype=np.int64))
    prefix = [BOS_ID]
    output: List[int] = []
    for _ in range(steps):
        logits = decode_step_logits(model, p, memory, np.asarray([prefix], dtype=np.int64))
        token = int(np.argmax(logits.value[0, -1]))
        if token == EOS_ID:
            break
        output.append(token)
        prefix.append(token)
    return output


# ============================================================================
# TRAINING & EVALUATION
# ============================================================================


def teacher_forcing_batch(
    examples: Sequence[Seq2SeqExample],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Arrays for one teacher-forced step.

    Returns:
        (source [B, S], decoder input [B, T], labels [B, T], loss weights [B, T])
    """
    lengths = {len(ex.source) for ex in examples}
    if len(lengths) != 1:
        raise ShapeError(f"Seq2seq batch needs equal-length sources, got lengths {sorted(lengths)}")
    width = max(len(ex.target) for ex in examples) + 1
    source = np.array([ex.source for ex in examples], dtype=np.int64)
    inputs = np.full((len(examples), width), PAD_ID, dtype=np.int64)
    labels = np.full((len(examples), width), PAD_ID, dtype=np.int64)
    weights = np.zeros((len(examples), width))
    for b, ex in enumerate(examples):
        n = len(ex.target) + 1
        inputs[b, :n] = [BOS_ID] + list(ex.target)
        labels[b, :n] = list(ex.target) + [EOS_ID]
        weights[b, :n] = 1.0
    return source, inputs, labels, weights


def seq2seq_loss(model: Seq2SeqModel, p: Params, examples: Sequence[Seq2SeqExample]) -> Node:
    """Masked next-token cross-entropy under teacher forcing."""
    source, inputs, labels, weights = teacher_forcing_batch(examples)
    logits = forward_seq2seq(model, source, inputs, p)
    return cross_entropy(logits, labels, weights)


def evaluate_rouge(model: Seq2SeqModel, examples: Sequence[Seq2SeqExample]) -> RougeScores:
    """Mean ROUGE scores of greedy decodes against the targets."""
    max_steps = model.config.max_len - 1
    pairs = [
        (render_tokens(greedy_decode(model, ex.source, max_steps)), render_tokens(ex.target))
        for ex in examples
    ]
    return mean_scores(pairs)
