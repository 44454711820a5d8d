"""
PerturbKit ROUGE - ROUGE-1/2/L/Lsum and the ROUGE-Average aggregate.

Tokenizer: lower-case, split on runs of non-alphanumeric characters.
Sentences (for ROUGE-Lsum) are newline-separated lines.

Conventions:
- Scores are 0 when either side has no n-grams / tokens.
- ROUGE-Lsum takes, for every reference sentence, the union of its LCS
  positions against each candidate sentence, clips by token counts, and
  computes a micro precision/recall over the whole summary.
- ROUGE-Average is the mean of the ROUGE-1, ROUGE-2, ROUGE-L and
  ROUGE-Lsum F1 values.
"""

import re
from collections import Counter
from typing import List, NamedTuple, Sequence, Set, Tuple, Union

from pydantic import BaseModel, Field


_TOKEN = re.compile(r"[a-z0-9]+")

Tokens = Sequence[str]
Sentences = Sequence[Sequence[str]]


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


ZERO = PRF(0.0, 0.0, 0.0)


class RougeScores(BaseModel):
    """F1 values of the four ROUGE variants."""

    rouge1: float = Field(..., ge=0.0, le=1.0)
    rouge2: float = Field(..., ge=0.0, le=1.0)
    rougeL: float = Field(..., ge=0.0, le=1.0)
    rougeLsum: float = Field(..., ge=0.0, le=1.0)

    @property
    def average(self) -> float:
        return (self.rouge1 + self.rouge2 + self.rougeL + self.rougeLsum) / 4.0


# ============================================================================
# TOKENIZATION
# ============================================================================


def tokenize(text: str) -> List[str]:
    return _TOKEN.findall(text.lower())


def split_sentences(text: str) -> List[List[str]]:
    """Tokenized non-empty lines."""
    sentences = [tokenize(line) for line in text.split("\n")]
    return [s for s in sentences if s]


# ============================================================================
# CORE SCORES
# ============================================================================


def _prf(hits: int, cand_total: int, ref_total: int) -> PRF:
    if cand_total == 0 or ref_total == 0:
        return ZERO
    precision = hits / cand_total
    recall = hits / ref_total
    if precision + recall == 0.0:
        return PRF(precision, recall, 0.0)
    return PRF(precision, recall, 2.0 * precision * recall / (precision + recall))


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Tokens, reference: Tokens, n: int) -> PRF:
    """
    Clipped n-gram overlap.

    Example:
        >>> rouge_n("the cat sat".split(), "the dog sat".split(), 1)
        PRF(precision=0.666..., recall=0.666..., f1=0.666...)
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cand, ref = _ngrams(candidate, n), _ngrams(reference, n)
    hits = sum((cand & ref).values())
    return _prf(hits, sum(cand.values()), sum(ref.values()))


def _lcs_table(a: Tokens, b: Tokens) -> List[List[int]]:
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        row, prev = table[i], table[i - 1]
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            if ai == b[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = row[j - 1] if row[j - 1] > prev[j] else prev[j]
    return table


def lcs_length(a: Tokens, b: Tokens) -> int:
    return _lcs_table(a, b)[len(a)][len(b)]


def _lcs_positions(ref: Tokens, cand: Tokens) -> Set[int]:
    """Indices into `ref` of one longest common subsequence with `cand`."""
    table = _lcs_table(ref, cand)
    i, j = len(ref), len(cand)
    positions: Set[int] = set()
    while i > 0 and j > 0:
        if ref[i - 1] == cand[j - 1]:
            positions.add(i - 1)
            i -= 1
            j -= 1
        elif table[i - 1][j] >= table[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return positions


def rouge_l(candidate: Tokens, reference: Tokens) -> PRF:
    """LCS-based precision, recall and F1."""
    return _prf(lcs_length(reference, candidate), len(candidate), len(reference))


def rouge_lsum_prf(candidate: Sentences, reference: Sentences) -> PRF:
    """Summary-level union-LCS scores."""
    cand_total = sum(len(s) for s in candidate)
    ref_total = sum(len(s) for s in reference)
    if cand_total == 0 or ref_total == 0:
        return ZERO

    cand_counts = Counter(tok for s in candidate for tok in s)
    ref_counts = Counter(tok for s in reference for tok in s)
    hits = 0
    for ref_sent in reference:
        union: Set[int] = set()
        for cand_sent in candidate:
            union |= _lcs_positions(ref_sent, cand_sent)
        for idx in sorted(union):
            tok = ref_sent[idx]
            if cand_counts[tok] > 0 and ref_counts[tok] > 0:
                hits += 1
                cand_counts[tok] -= 1
                ref_counts[tok] -= 1
    return _prf(hits, cand_total, ref_total)


def rouge_lsum(candidate: Sentences, reference: Sentences) -> float:
    """ROUGE-Lsum F1 over sentence-segmented token lists."""
    return rouge_lsum_prf(candidate, reference).f1


# ============================================================================
# AGGREGATES
# ============================================================================


def _as_sentences(text: Union[str, Sentences]) -> List[List[str]]:
    if isinstance(text, str):
        return split_sentences(text)
    return [list(s) for s in text if len(s) > 0]


def rouge_scores(candidate: Union[str, Sentences], reference: Union[str, Sentences]) -> RougeScores:
    """
    All four ROUGE F1 values.

    Args:
        candidate: Raw text (tokenized and split on newlines) or pre-tokenized sentences
        reference: Same form as candidate
    """
    cand_sents, ref_sents = _as_sentences(candidate), _as_sentences(reference)
    cand = [tok for s in cand_sents for tok in s]
    ref = [tok for s in ref_sents for tok in s]
    return RougeScores(
        rouge1=rouge_n(cand, ref, 1).f1,
        rouge2=rouge_n(cand, ref, 2).f1,
        rougeL=rouge_l(cand, ref).f1,
        rougeLsum=rouge_lsum(cand_sents, ref_sents),
    )


def rouge_average(candidate: Union[str, Sentences], reference: Union[str, Sentences]) -> float:
    """Mean of ROUGE-1, ROUGE-2, ROUGE-L and ROUGE-Lsum F1."""
    return rouge_scores(candidate, reference).average


def mean_scores(pairs: Sequence[Tuple[Union[str, Sentences], Union[str, Sentences]]]) -> RougeScores:
    """Per-document scores averaged over a corpus (documents in given order)."""
    if not pairs:
        return RougeScores(rouge1=0.0, rouge2=0.0, rougeL=0.0, rougeLsum=0.0)
    scores = [rouge_scores(c, r) for c, r in pairs]
    n = len(scores)
    return RougeScores(
        rouge1=sum(s.rouge1 for s in scores) / n,
        rouge2=sum(s.rouge2 for s in scores) / n,
        rougeL=sum(s.rougeL for s in scores) / n,
        rougeLsum=sum(s.rougeLsum for s in scores) / n,
    )
