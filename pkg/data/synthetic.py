"""
PerturbKit Synthetic Data - Desk-scale tagging and seq2seq tasks

Tagging (joint entity & relation extraction):
- Fixed-length sentences over an integer vocabulary
- One kpi span plus a cy and/or py value span, each value introduced by a cue
  token ("current" / "prior"); relations kpi-cy and kpi-py
- Every sentence carries at least one relation

Seq2seq (salient-sentence extraction):
- Source: sentences, each opened by MARK (salient) or SEP (plain)
- Target: the salient sentences' words joined by SEP, so every target token
  appears in its source and the target is shorter than the source

Task shift (pre-train -> fine-tune):
- permute_labels swaps what the cue / marker tokens mean
- vocab_offset rotates the Zipf-shaped word frequencies inside each token
  group, changing the surface distribution

All generators are deterministic given (seed, size, shift).
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from data.schema import (
    BOS_ID,
    EOS_ID,
    FIRST_WORD_ID,
    MARK_ID,
    PAD_ID,
    SEP_ID,
)
from metrics.jnere import EntitySpan, RelationInstance


# ============================================================================
# LOGGING
# ============================================================================

logger = logging.getLogger(__name__)


class EmptyDataset(ValueError):
    """A dataset of size 0 was requested."""


# ============================================================================
# DATA MODELS
# ============================================================================


@dataclass(frozen=True)
class TaskShift:
    """Difference between the pre-training and the fine-tuning task."""

    permute_labels: bool = False  # swap cue/marker meaning
    vocab_offset: int = 0  # rotate word frequencies within each group


@dataclass
class TaggingExample:
    """One tagged sentence."""

    tokens: List[int]
    entities: List[Tuple[str, List[int]]]  # (label, sorted token positions)
    relations: List[Tuple[int, int, str]]  # (head entity idx, tail entity idx, label)

    def gold_relations(self) -> List[RelationInstance]:
        """Relations as metric objects; token identifiers are sentence positions."""
        out = []
        for head_idx, tail_idx, label in self.relations:
            head_label, head_pos = self.entities[head_idx]
            tail_label, tail_pos = self.entities[tail_idx]
            out.append(RelationInstance(
                head=EntitySpan(token_ids=frozenset(head_pos), label=head_label),
                tail=EntitySpan(token_ids=frozenset(tail_pos), label=tail_label),
                label=label,
            ))
        return out

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class Seq2SeqExample:
    """One source document and its extractive summary (no BOS/EOS)."""

    source: List[int]
    target: List[int]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class Dataset:
    """A generated dataset and the parameters it was generated with."""

    task: str  # "tagging" or "seq2seq"
    examples: List[Any]
    seed: int
    vocab: int
    shift: TaskShift = field(default_factory=TaskShift)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[Any]:
        return iter(self.examples)

    def __getitem__(self, idx: int) -> Any:
        return self.examples[idx]

    def subset(self, indices) -> List[Any]:
        return [self.examples[int(i)] for i in indices]


# ============================================================================
# VOCABULARY
# ============================================================================


def _zipf_weights(n: int, offset: int) -> np.ndarray:
    """Zipf-shaped probabilities over n tokens, rotated by offset."""
    weights = 1.0 / np.arange(1, n + 1)
    weights = np.roll(weights, offset % n)
    return weights / weights.sum()


class _WordGroup:
    """A contiguous id range sampled with rotated Zipf weights."""

    def __init__(self, start: int, size: int, offset: int):
        if size < 1:
            raise ValueError("Vocabulary too small for the requested task")
        self.start = start
        self.size = size
        self.probs = _zipf_weights(size, offset)

    def draw(self, rng: np.random.Generator, n: int) -> List[int]:
        return [self.start + int(k) for k in rng.choice(self.size, size=n, p=self.probs)]


# ============================================================================
# TAGGING TASK
# ============================================================================

CUE_CURRENT = FIRST_WORD_ID
CUE_PRIOR = FIRST_WORD_ID + 1
MIN_TAGGING_VOCAB = FIRST_WORD_ID + 2 + 9
MIN_TAGGING_LEN = 10


def _tagging_groups(vocab: int, offset: int) -> Tuple[_WordGroup, _WordGroup, _WordGroup]:
    first = CUE_PRIOR + 1
    pool = vocab - first
    third = pool // 3
    kpi = _WordGroup(first, third, offset)
    numbers = _WordGroup(first + third, third, offset)
    filler = _WordGroup(first + 2 * third, pool - 2 * third, offset)
    return kpi, numbers, filler


def _tagging_sentence(
    rng: np.random.Generator,
    seq_len: int,
    groups: Tuple[_WordGroup, _WordGroup, _WordGroup],
    shift: TaskShift,
) -> TaggingExample:
    kpi_words, number_words, filler_words = groups
    cue_for = {"cy": CUE_CURRENT, "py": CUE_PRIOR}
    if shift.permute_labels:
        cue_for = {"cy": CUE_PRIOR, "py": CUE_CURRENT}

    present = [["cy"], ["py"], ["cy", "py"]][int(rng.integers(3))]
    if len(present) == 2 and rng.random() < 0.5:
        present = present[::-1]

    # Segments: (entity label or None for the cue, tokens)
    segments: List[List[Tuple[Optional[str], int]]] = [
        [("kpi", t) for t in kpi_words.draw(rng, int(rng.integers(1, 4)))]
    ]
    for label in present:
        value = number_words.draw(rng, int(rng.integers(1, 3)))
        segments.append([(None, cue_for[label])] + [(label, t) for t in value])

    content = sum(len(s) for s in segments)
    gaps = rng.multinomial(seq_len - content, np.full(len(segments) + 1, 1.0 / (len(segments) + 1)))

    tokens: List[int] = []
    entities: List[Tuple[str, List[int]]] = []
    for gap, segment in zip(gaps, segments + [[]]):
        tokens += filler_words.draw(rng, int(gap))
        positions: List[int] = []
        label = None
        for seg_label, token in segment:
            if seg_label is not None:
                label = seg_label
                positions.append(len(tokens))
            tokens.append(token)
        if positions:
            entities.append((label, positions))

    relations = []
    for idx, (label, _) in enumerate(entities):
        if label != "kpi":
            relations.append((0, idx, f"kpi-{label}"))
    return TaggingExample(tokens=tokens, entities=entities, relations=relations)


def gen_tagging_data(
    seed: int,
    size: int,
    vocab: int = 64,
    seq_len: int = 16,
    shift: Optional[TaskShift] = None,
) -> Dataset:
    """
    Generate a synthetic tagging dataset.

    Args:
        seed: Generator seed
        size: Number of sentences (>= 1)
        vocab: Vocabulary size (ids below FIRST_WORD_ID stay unused)
        seq_len: Fixed sentence length
        shift: Optional task shift

    Returns:
        Dataset of TaggingExample

    Raises:
        EmptyDataset: If size < 1
        ValueError: If vocab or seq_len is too small

    Example:
        >>> data = gen_tagging_data(seed=0, size=100)
        >>> len(data), data[0].relations[0][2]
        (100, 'kpi-cy')
    """
    if size < 1:
        raise EmptyDataset(f"Tagging dataset size must be >= 1, got {size}")
    if vocab < MIN_TAGGING_VOCAB:
        raise ValueError(f"Tagging vocab must be >= {MIN_TAGGING_VOCAB}, got {vocab}")
    if seq_len < MIN_TAGGING_LEN:
        raise ValueError(f"Tagging seq_len must be >= {MIN_TAGGING_LEN}, got {seq_len}")

    shift = shift or TaskShift()
    rng = np.random.default_rng(seed)
    groups = _tagging_groups(vocab, shift.vocab_offset)
    examples = [_tagging_sentence(rng, seq_len, groups, shift) for _ in range(size)]

    n_rel = sum(len(ex.relations) for ex in examples)
    logger.debug(f"Generated tagging data: seed={seed}, size={size}, relations={n_rel}, shift={shift}")
    return Dataset(task="tagging", examples=examples, seed=seed, vocab=vocab, shift=shift)


# ============================================================================
# SEQ2SEQ TASK
# ============================================================================


def gen_seq2seq_data(
    seed: int,
    size: int,
    vocab: int = 48,
    n_sentences: int = 4,
    sentence_len: int = 4,
    shift: Optional[TaskShift] = None,
) -> Dataset:
    """
    Generate a salient-sentence extraction dataset.

    Each source has `n_sentences` sentences of `sentence_len` words; 1 to
    n_sentences - 1 of them are salient. With `permute_labels` the salient
    sentences are the unmarked ones.

    Raises:
        EmptyDataset: If size < 1
        ValueError: If the shape parameters are degenerate
    """
    if size < 1:
        raise EmptyDataset(f"Seq2seq dataset size must be >= 1, got {size}")
    if n_sentences < 2 or sentence_len < 1:
        raise ValueError(f"Need n_sentences >= 2 and sentence_len >= 1, got {n_sentences}, {sentence_len}")

    shift = shift or TaskShift()
    rng = np.random.default_rng(seed)
    words = _WordGroup(FIRST_WORD_ID, vocab - FIRST_WORD_ID, shift.vocab_offset)
    max_salient = min(2, n_sentences - 1)

    examples = []
    for _ in range(size):
        n_marked = int(rng.integers(1, max_salient + 1))
        if shift.permute_labels:
            n_marked = n_sentences - n_marked
        marked = set(int(i) for i in rng.choice(n_sentences, size=n_marked, replace=False))

        source: List[int] = []
        salient: List[List[int]] = []
        for i in range(n_sentences):
            sentence = words.draw(rng, sentence_len)
            source += [MARK_ID if i in marked else SEP_ID] + sentence
            if (i in marked) != shift.permute_labels:
                salient.append(sentence)

        target: List[int] = []
        for j, sentence in enumerate(salient):
            if j:
                target.append(SEP_ID)
            target += sentence
        examples.append(Seq2SeqExample(source=source, target=target))

    logger.debug(f"Generated seq2seq data: seed={seed}, size={size}, shift={shift}")
    return Dataset(task="seq2seq", examples=examples, seed=seed, vocab=vocab, shift=shift)


# ============================================================================
# RENDERING
# ============================================================================


def render_tokens(tokens: List[int]) -> str:
    """
    Text form of a token sequence for ROUGE: one line per SEP-delimited
    sentence, words spelled "w<id>", specials dropped.
    """
    lines: List[List[str]] = [[]]
    for tok in tokens:
        tok = int(tok)
        if tok == EOS_ID:
            break
        if tok in (SEP_ID, MARK_ID):
            if lines[-1]:
                lines.append([])
            continue
        if tok in (PAD_ID, BOS_ID):
            continue
        lines[-1].append(f"w{tok}")
    return "\n".join(" ".join(line) for line in lines if line)

