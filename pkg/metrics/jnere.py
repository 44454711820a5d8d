"""
PerturbKit JNERE Metrics - Adjusted F1 for joint entity & relation extraction.

Partial entity matches earn partial credit. For a predicted relation r
between entities i and j scored against a gold relation:

    o_i  = |pred_i ∩ gold_i|
    tp_r = ½ (o_i / n_i,gold + o_j / n_j,gold)
    fn_r = 1 - tp_r
    fp_r = ½ ((n_i,pred - o_i) / n_i,pred + (n_j,pred - o_j) / n_j,pred)

Predictions pair with gold relations greedily (see `match_relations`);
unmatched predictions add fp = 1, unmatched gold relations add fn = 1.
The micro F1 is 2·TP / (2·TP + FP + FN), and 1.0 when both sides are empty.
"""

import logging
from typing import FrozenSet, List, Sequence, Tuple

from pydantic import AliasChoices, BaseModel, ConfigDict, Field, field_validator, model_validator


logger = logging.getLogger(__name__)


# ============================================================================
# PYDANTIC MODELS
# ============================================================================


class EntitySpan(BaseModel):
    """
    An entity as a set of token identifiers plus a label.

    JSON documents spell the token set `tokens`; `token_ids` is also accepted.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    token_ids: FrozenSet[int] = Field(
        ...,
        min_length=1,
        validation_alias=AliasChoices("tokens", "token_ids"),
        serialization_alias="tokens",
        description="Token identifiers",
    )
    label: str = Field(..., min_length=1, description="Entity label, e.g. kpi / cy / py")

    @field_validator("token_ids")
    @classmethod
    def validate_non_negative(cls, v: FrozenSet[int]) -> FrozenSet[int]:
        if any(t < 0 for t in v):
            raise ValueError(f"token ids must be non-negative, got {sorted(v)}")
        return v

    def key(self) -> Tuple:
        return (self.label, tuple(sorted(self.token_ids)))


class RelationInstance(BaseModel):
    """A labelled, directed relation between two entity spans."""

    model_config = ConfigDict(frozen=True)

    head: EntitySpan
    tail: EntitySpan
    label: str = Field(..., min_length=1, description="Relation label, e.g. kpi-cy")

    @model_validator(mode="after")
    def validate_distinct_spans(self) -> "RelationInstance":
        if self.head.token_ids & self.tail.token_ids:
            raise ValueError("head and tail spans of a relation must not share tokens")
        return self

    def key(self) -> Tuple:
        return (self.label, self.head.key(), self.tail.key())


class RelationScore(BaseModel):
    """Fractional counts for one (prediction, gold) pair."""

    model_config = ConfigDict(frozen=True)

    tp: float = Field(..., ge=0.0, le=1.0)
    fn: float = Field(..., ge=0.0, le=1.0)
    fp: float = Field(..., ge=0.0, le=1.0)


class AdjustedCounts(BaseModel):
    """Summed counts over one or more sentences."""

    tp: float = 0.0
    fn: float = 0.0
    fp: float = 0.0

    def __add__(self, other: "AdjustedCounts") -> "AdjustedCounts":
        return AdjustedCounts(tp=self.tp + other.tp, fn=self.fn + other.fn, fp=self.fp + other.fp)

    @property
    def f1(self) -> float:
        denom = 2.0 * self.tp + self.fp + self.fn
        if denom == 0.0:
            return 1.0
        return 2.0 * self.tp / denom


# ============================================================================
# SCORING
# ============================================================================


def overlap(pred: EntitySpan, gt: EntitySpan) -> int:
    """Number of shared token identifiers."""
    return len(pred.token_ids & gt.token_ids)


def score_relation(pred: RelationInstance, gt: RelationInstance) -> RelationScore:
    """
    Partial-credit counts for one predicted relation against one gold relation.

    Example:
        head {2,3,4} vs gold {1,2,3}, tail {7} vs {7} -> tp=5/6, fn=1/6, fp=1/6
    """
    o_i = overlap(pred.head, gt.head)
    o_j = overlap(pred.tail, gt.tail)
    n_i_gt, n_j_gt = len(gt.head.token_ids), len(gt.tail.token_ids)
    n_i_pred, n_j_pred = len(pred.head.token_ids), len(pred.tail.token_ids)

    tp = 0.5 * (o_i / n_i_gt + o_j / n_j_gt)
    fp = 0.5 * ((n_i_pred - o_i) / n_i_pred + (n_j_pred - o_j) / n_j_pred)
    return RelationScore(tp=tp, fn=1.0 - tp, fp=fp)


def _compatible(pred: RelationInstance, gt: RelationInstance) -> bool:
    return (
        pred.label == gt.label
        and pred.head.label == gt.head.label
        and pred.tail.label == gt.tail.label
    )


def match_relations(
    preds: Sequence[RelationInstance],
    gts: Sequence[RelationInstance],
) -> List[Tuple[int, int, RelationScore]]:
    """
    Greedy one-to-one matching of predictions to gold relations.

    Candidate pairs need equal relation labels and equal entity labels at
    both ends. Pairs are taken in descending tp, then ascending fp, then by
    relation content, then by input position; each side is used at most once.
    The content key makes the totals independent of list order.

    Returns:
        (pred index, gold index, score) triples in selection order
    """
    candidates = []
    for p_idx, pred in enumerate(preds):
        for g_idx, gt in enumerate(gts):
            if _compatible(pred, gt):
                score = score_relation(pred, gt)
                candidates.append(
                    ((-score.tp, score.fp, pred.key(), gt.key(), p_idx, g_idx), p_idx, g_idx, score)
                )
    candidates.sort(key=lambda c: c[0])

    used_pred, used_gold = set(), set()
    matched = []
    for _, p_idx, g_idx, score in candidates:
        if p_idx in used_pred or g_idx in used_gold:
            continue
        used_pred.add(p_idx)
        used_gold.add(g_idx)
        matched.append((p_idx, g_idx, score))
    return matched


def adjusted_counts(
    preds: Sequence[RelationInstance],
    gts: Sequence[RelationInstance],
) -> AdjustedCounts:
    """Summed tp/fn/fp for one sentence (or any single scoring unit)."""
    matched = match_relations(preds, gts)
    tp = sum(score.tp for _, _, score in matched)
    fn = sum(score.fn for _, _, score in matched)
    fp = sum(score.fp for _, _, score in matched)
    fp += len(preds) - len(matched)
    fn += len(gts) - len(matched)
    return AdjustedCounts(tp=tp, fn=fn, fp=fp)


def adjusted_f1(
    preds: Sequence[RelationInstance],
    gts: Sequence[RelationInstance],
) -> float:
    """
    Adjusted micro F1 in [0, 1].

    Returns 1.0 when both lists are empty and 0.0 when exactly one is.
    """
    return adjusted_counts(preds, gts).f1


def corpus_adjusted_f1(
    sentences: Sequence[Tuple[Sequence[RelationInstance], Sequence[RelationInstance]]],
) -> float:
    """
    Micro F1 over many sentences: counts are summed per sentence, then F1.

    Token identifiers are only compared within a sentence.
    """
    total = AdjustedCounts()
    for preds, gts in sentences:
        total = total + adjusted_counts(preds, gts)
    logger.debug(
        f"Corpus adjusted counts over {len(sentences)} sentences: "
        f"tp={total.tp:.4f}, fp={total.fp:.4f}, fn={total.fn:.4f}"
    )
    return total.f1
