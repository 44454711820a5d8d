"""
PerturbKit Tagger - Encoder tagger with a bilinear relation head.

Forward pass:
1. Encoder stack over token ids -> hidden states H [B, T, d]
2. Tag head: H -> BIO tag logits [B, T, n_tags]
3. Spans: gold spans during training, BIO-decoded argmax tags at inference
4. Span representations: mean of their token states
5. Relation head: every ordered span pair (i, j), i != j, scored with a
   bilinear form head_i^T U_r tail_j + b_r for each relation label r

Pairs are padded to the longest pair list in the batch; padded rows carry
zero weight in the loss and are never decoded.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from data.schema import NO_RELATION, RELATION_LABELS, decode_bio, encode_bio, relation_signature_ok
from data.synthetic import TaggingExample
from metrics.jnere import EntitySpan, RelationInstance, corpus_adjusted_f1
from models.autodiff import (
    Node,
    ShapeError,
    add,
    const,
    cross_entropy,
    matmul,
    mul,
    reshape,
    sum_,
)
from models.layers import (
    ModelConfig,
    ParamSpec,
    Params,
    ToyModel,
    embedding_specs,
    encode,
    encoder_block_specs,
    linear,
    linear_specs,
)
from params.store import TensorKind, ZoneComponent, ZoneTag


logger = logging.getLogger(__name__)

Span = Tuple[str, List[int]]


# ============================================================================
# MODEL
# ============================================================================


class TaggerModel(ToyModel):
    """Encoder + tag head + relation head."""

    @staticmethod
    def build_specs(config: ModelConfig) -> List[ParamSpec]:
        head = ZoneTag(ZoneComponent.HEAD)
        d, r = config.model_dim, config.n_rel_labels
        specs = embedding_specs("enc.emb", config, ZoneComponent.ENCODER)
        for i in range(config.layers):
            specs += encoder_block_specs(i, config)
        specs += linear_specs("head.tag", d, config.n_tags, head)
        specs += [
            ParamSpec("head.rel.weight", (d, r * d), TensorKind.WEIGHT, head),
            ParamSpec("head.rel.bias", (r,), TensorKind.BIAS, head),
        ]
        return specs


@dataclass
class TaggerOutput:
    """Forward-pass result."""

    tag_logits: Node  # [B, T, n_tags]
    relation_logits: Node  # [B, P, n_rel_labels]
    spans: List[List[Span]]  # spans used per sentence
    pairs: List[List[Tuple[int, int]]]  # (head span idx, tail span idx) per sentence


# ============================================================================
# FORWARD
# ============================================================================


def _pairs(n_spans: int) -> List[Tuple[int, int]]:
    return [(i, j) for i in range(n_spans) for j in range(n_spans) if i != j]


def _pooling_matrices(
    spans: List[List[Span]],
    pairs: List[List[Tuple[int, int]]],
    seq_len: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """[B, P, T] matrices averaging the head / tail span tokens of each pair."""
    batch = len(spans)
    max_pairs = max(len(p) for p in pairs)
    head_pool = np.zeros((batch, max_pairs, seq_len))
    tail_pool = np.zeros((batch, max_pairs, seq_len))
    for b, (sentence_spans, sentence_pairs) in enumerate(zip(spans, pairs)):
        for k, (i, j) in enumerate(sentence_pairs):
            head_positions = sentence_spans[i][1]
            tail_positions = sentence_spans[j][1]
            head_pool[b, k, head_positions] = 1.0 / len(head_positions)
            tail_pool[b, k, tail_positions] = 1.0 / len(tail_positions)
    return head_pool, tail_pool


def forward_tagger(
    model: TaggerModel,
    token_batch: np.ndarray,
    spans: Optional[List[List[Span]]] = None,
    p: Optional[Params] = None,
) -> TaggerOutput:
    """
    Tag and relation logits for a batch of sentences.

    Args:
        model: Tagger
        token_batch: int array [batch, seq]
        spans: Optional gold spans per sentence; decoded from the tag logits when omitted
        p: Optional leaf map (from model.leaves()) when gradients are needed

    Returns:
        TaggerOutput

    Raises:
        ShapeError: On malformed batch (wrong rank, ids outside vocab, too long)
    """
    config = model.config
    p = p if p is not None else model.leaves()
    token_batch = np.asarray(token_batch)
    hidden = encode(p, config, token_batch)
    batch, seq_len, d = hidden.shape

    tag_logits = linear(p, "head.tag", hidden)
    if spans is None:
        spans = decode_tags(tag_logits.value)
    elif len(spans) != batch:
        raise ShapeError(f"Got spans for {len(spans)} sentences, batch has {batch}")

    pairs = [_pairs(len(s)) for s in spans]
    r = config.n_rel_labels
    if max(len(x) for x in pairs) == 0:
        return TaggerOutput(tag_logits, const(np.zeros((batch, 0, r))), spans, pairs)

    head_pool, tail_pool = _pooling_matrices(spans, pairs, seq_len)
    heads = matmul(const(head_pool), hidden)  # [B, P, d]
    tails = matmul(const(tail_pool), hidden)
    n_pairs = head_pool.shape[1]

    projected = reshape(matmul(heads, p["head.rel.weight"]), (batch, n_pairs, r, d))
    scores = sum_(mul(projected, reshape(tails, (batch, n_pairs, 1, d))), axis=-1)
    relation_logits = add(scores, p["head.rel.bias"])
    return TaggerOutput(tag_logits, relation_logits, spans, pairs)


def decode_tags(tag_logits: np.ndarray) -> List[List[Span]]:
    """Argmax BIO decoding per sentence."""
    return [decode_bio(list(row)) for row in np.argmax(tag_logits, axis=-1)]


# ============================================================================
# TRAINING & PREDICTION
# ============================================================================


def batch_tokens(examples: Sequence[TaggingExample]) -> np.ndarray:
    lengths = {len(ex.tokens) for ex in examples}
    if len(lengths) != 1:
        raise ShapeError(f"Tagging batch needs equal-length sentences, got lengths {sorted(lengths)}")
    return np.array([ex.tokens for ex in examples], dtype=np.int64)


def _relation_targets(
    examples: Sequence[TaggingExample],
    pairs: List[List[Tuple[int, int]]],
    n_pairs: int,
) -> Tuple[np.ndarray, np.ndarray]:
    targets = np.zeros((len(examples), n_pairs), dtype=np.int64)
    weights = np.zeros((len(examples), n_pairs))
    for b, (ex, sentence_pairs) in enumerate(zip(examples, pairs)):
        gold = {(h, t): RELATION_LABELS.index(label) for h, t, label in ex.relations}
        for k, pair in enumerate(sentence_pairs):
            targets[b, k] = gold.get(pair, NO_RELATION)
            weights[b, k] = 1.0
    return targets, weights


def tagger_loss(model: TaggerModel, p: Params, examples: Sequence[TaggingExample]) -> Node:
    """Tag cross-entropy plus relation cross-entropy over gold span pairs."""
    tokens = batch_tokens(examples)
    out = forward_tagger(model, tokens, spans=[ex.entities for ex in examples], p=p)
    tags = np.array([encode_bio(len(ex.tokens), ex.entities) for ex in examples], dtype=np.int64)
    loss = cross_entropy(out.tag_logits, tags)
    n_pairs = out.relation_logits.shape[1]
    if n_pairs:
        targets, weights = _relation_targets(examples, out.pairs, n_pairs)
        loss = add(loss, cross_entropy(out.relation_logits, targets, weights))
    return loss


def _span(span: Span) -> EntitySpan:
    label, positions = span
    return EntitySpan(token_ids=frozenset(positions), label=label)


def predict_relations(model: TaggerModel, examples: Sequence[TaggingExample]) -> List[List[RelationInstance]]:
    """
    Decoded relations per sentence.

    A pair is emitted when its argmax label is not "none" and the entity
    labels fit the relation label (kpi-cy needs a kpi head and a cy tail).
    """
    out = forward_tagger(model, batch_tokens(examples))
    labels = np.argmax(out.relation_logits.value, axis=-1) if out.relation_logits.shape[1] else None
    predictions: List[List[RelationInstance]] = []
    for b, (sentence_spans, sentence_pairs) in enumerate(zip(out.spans, out.pairs)):
        sentence: List[RelationInstance] = []
        for k, (i, j) in enumerate(sentence_pairs):
            label = RELATION_LABELS[int(labels[b, k])]
            if label == RELATION_LABELS[NO_RELATION]:
                continue
            head, tail = sentence_spans[i], sentence_spans[j]
            if relation_signature_ok(label, head[0], tail[0]):
                sentence.append(RelationInstance(head=_span(head), tail=_span(tail), label=label))
        predictions.append(sentence)
    return predictions


def evaluate_f1(model: TaggerModel, examples: Sequence[TaggingExample], batch_size: int = 64) -> float:
    """Corpus adjusted F1 of predicted against gold relations."""
    pairs = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        for pred, ex in zip(predict_relations(model, chunk), chunk):
            pairs.append((pred, ex.gold_relations()))
    return corpus_adjusted_f1(pairs)
