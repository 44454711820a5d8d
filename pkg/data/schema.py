"""
PerturbKit Schema - Labels and special tokens shared by data and models.

Tagging task:
- Entity labels: kpi, cy (current-year value), py (prior-year value)
- BIO tags: 0 = O, then B-/I- per entity label (7 tags)
- Relation labels: none (no relation between a span pair), kpi-cy, kpi-py

Seq2seq task: token ids below FIRST_WORD_ID are reserved specials.
"""

from typing import Dict, List, Tuple


# ============================================================================
# TAGGING LABELS
# ============================================================================

ENTITY_LABELS: List[str] = ["kpi", "cy", "py"]

RELATION_LABELS: List[str] = ["none", "kpi-cy", "kpi-py"]

# Relation label -> (head entity label, tail entity label)
RELATION_SIGNATURES: Dict[str, Tuple[str, str]] = {
    "kpi-cy": ("kpi", "cy"),
    "kpi-py": ("kpi", "py"),
}

NO_RELATION = 0
OUTSIDE_TAG = 0
N_TAGS = 1 + 2 * len(ENTITY_LABELS)
N_RELATION_LABELS = len(RELATION_LABELS)


def begin_tag(label: str) -> int:
    return 1 + 2 * ENTITY_LABELS.index(label)


def inside_tag(label: str) -> int:
    return 2 + 2 * ENTITY_LABELS.index(label)


def tag_names() -> List[str]:
    names = ["O"]
    for label in ENTITY_LABELS:
        names += [f"B-{label}", f"I-{label}"]
    return names


def encode_bio(length: int, spans: List[Tuple[str, List[int]]]) -> List[int]:
    """
    BIO tag sequence for contiguous spans.

    Args:
        length: Sequence length
        spans: (label, sorted positions) pairs; positions must not overlap
    """
    tags = [OUTSIDE_TAG] * length
    for label, positions in spans:
        for i, pos in enumerate(positions):
            tags[pos] = begin_tag(label) if i == 0 else inside_tag(label)
    return tags


def decode_bio(tags: List[int]) -> List[Tuple[str, List[int]]]:
    """
    Spans from a BIO tag sequence.

    An I- tag that does not continue a span of the same label opens a new one.

    Example:
        >>> decode_bio([1, 2, 0, 3])
        [('kpi', [0, 1]), ('cy', [3])]
    """
    spans: List[Tuple[str, List[int]]] = []
    current = None
    for pos, tag in enumerate(tags):
        tag = int(tag)
        if tag == OUTSIDE_TAG:
            current = None
            continue
        label = ENTITY_LABELS[(tag - 1) // 2]
        is_begin = (tag - 1) % 2 == 0
        if is_begin or current is None or current[0] != label:
            current = (label, [pos])
            spans.append(current)
        else:
            current[1].append(pos)
    return spans


# ============================================================================
# SEQ2SEQ SPECIAL TOKENS
# ============================================================================

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
SEP_ID = 3
MARK_ID = 4
FIRST_WORD_ID = 5


def relation_signature_ok(label: str, head_label: str, tail_label: str) -> bool:
    """True when the entity labels fit the relation label."""
    return RELATION_SIGNATURES.get(label) == (head_label, tail_label)
