"""
PerturbKit Metrics - Adjusted F1 for entity/relation extraction and ROUGE.

Usage:
    from metrics import adjusted_f1, rouge_average

    f1 = adjusted_f1(predicted_relations, gold_relations)
    avg = rouge_average("the cat sat", "the dog sat")
"""

from metrics.jnere import (
    AdjustedCounts,
    EntitySpan,
    RelationInstance,
    RelationScore,
    adjusted_counts,
    adjusted_f1,
    corpus_adjusted_f1,
    match_relations,
    overlap,
    score_relation,
)
from metrics.rouge import (
    PRF,
    RougeScores,
    lcs_length,
    mean_scores,
    rouge_average,
    rouge_l,
    rouge_lsum,
    rouge_lsum_prf,
    rouge_n,
    rouge_scores,
    split_sentences,
    tokenize,
)

__all__ = [
    # JNERE
    "EntitySpan",
    "RelationInstance",
    "RelationScore",
    "AdjustedCounts",
    "overlap",
    "score_relation",
    "match_relations",
    "adjusted_counts",
    "adjusted_f1",
    "corpus_adjusted_f1",
    # ROUGE
    "PRF",
    "RougeScores",
    "tokenize",
    "split_sentences",
    "lcs_length",
    "rouge_n",
    "rouge_l",
    "rouge_lsum",
    "rouge_lsum_prf",
    "rouge_scores",
    "rouge_average",
    "mean_scores",
]
