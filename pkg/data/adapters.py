"""
PerturbKit Data Adapters - Swappable sources for evaluation inputs

Adapter pattern implementation:
- Abstract base: EvalDataAdapter
- File implementation: FileAdapter (relation JSON files, summary text directories)
- In-memory implementation: MemoryAdapter (tests, dashboard, generated datasets)

Relation JSON layout (token ids are integers local to a sentence):
    {"sentences": [
        {"relations": [
            {"head": {"tokens": [0, 1], "label": "kpi"},
             "tail": {"tokens": [5], "label": "cy"},
             "label": "kpi-cy"}
        ]},
        ...
    ]}
A single sentence may also be written as {"relations": [...]}.

Summary directories hold one UTF-8 `<doc>.txt` per document, one sentence
per line; candidate and reference directories are paired by file name.
"""

import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from pydantic import ValidationError

from metrics.jnere import RelationInstance


# ============================================================================
# LOGGING
# ============================================================================

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
SentenceRelations = List[List[RelationInstance]]


# ============================================================================
# ABSTRACT BASE ADAPTER
# ============================================================================


class EvalDataAdapter(ABC):
    """
    Abstract base for evaluation data sources.

    All adapters must implement:
    - load_relations: per-sentence relation lists
    - load_summaries: document name -> summary text
    """

    @abstractmethod
    def load_relations(self, source: Any) -> SentenceRelations:
        """
        Load relations grouped by sentence.

        Raises:
            ValueError: If the content is malformed
        """

    @abstractmethod
    def load_summaries(self, source: Any) -> Dict[str, str]:
        """
        Load summaries keyed by document name (sorted by name).

        Raises:
            ValueError: If the source is empty or malformed
        """


# ============================================================================
# PARSING HELPERS
# ============================================================================


def parse_relations(payload: Any) -> SentenceRelations:
    """
    Validate a decoded relation document.

    Raises:
        ValueError: On unknown layout or invalid relations
    """
    if isinstance(payload, dict) and "sentences" in payload:
        sentences = payload["sentences"]
        if not isinstance(sentences, list):
            raise ValueError("'sentences' must be a list")
        raw = [s.get("relations", []) if isinstance(s, dict) else s for s in sentences]
    elif isinstance(payload, dict) and "relations" in payload:
        raw = [payload["relations"]]
    else:
        raise ValueError("Relation document needs a 'sentences' or 'relations' key")

    out: SentenceRelations = []
    for idx, sentence in enumerate(raw):
        if not isinstance(sentence, list):
            raise ValueError(f"Sentence {idx}: relations must be a list")
        try:
            out.append([RelationInstance.model_validate(r) for r in sentence])
        except ValidationError as e:
            raise ValueError(f"Sentence {idx}: invalid relation: {e}") from e
    return out


def relations_to_payload(sentences: Sequence[Sequence[RelationInstance]]) -> Dict[str, Any]:
    """Inverse of `parse_relations` (token ids written sorted)."""

    def span(s) -> Dict[str, Any]:
        return {"tokens": sorted(s.token_ids), "label": s.label}

    return {
        "sentences": [
            {"relations": [{"head": span(r.head), "tail": span(r.tail), "label": r.label} for r in sentence]}
            for sentence in sentences
        ]
    }


# ============================================================================
# FILE ADAPTER
# ============================================================================


class FileAdapter(EvalDataAdapter):
    """Reads relation JSON files and summary text directories."""

    def load_relations(self, source: PathLike) -> SentenceRelations:
        path = Path(source)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except OSError as e:
            logger.error(f"Cannot read relation file {path}: {e}")
            raise
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: invalid JSON: {e}") from e
        sentences = parse_relations(payload)
        logger.info(f"Loaded {sum(len(s) for s in sentences)} relations in {len(sentences)} sentences from {path}")
        return sentences

    def load_summaries(self, source: PathLike) -> Dict[str, str]:
        directory = Path(source)
        if not directory.is_dir():
            raise ValueError(f"Not a directory: {directory}")
        docs = {p.stem: p.read_text(encoding="utf-8") for p in sorted(directory.glob("*.txt"))}
        if not docs:
            raise ValueError(f"No .txt summaries in {directory}")
        logger.info(f"Loaded {len(docs)} summaries from {directory}")
        return docs

    def write_relations(self, sentences: Sequence[Sequence[RelationInstance]], path: PathLike) -> None:
        Path(path).write_text(json.dumps(relations_to_payload(sentences), indent=2) + "\n", encoding="utf-8")
        logger.info(f"Wrote {len(sentences)} sentences of relations to {path}")


# ============================================================================
# MEMORY ADAPTER
# ============================================================================


class MemoryAdapter(EvalDataAdapter):
    """
    In-memory adapter.

    `source` is a key into the dicts given at construction; relation
    entries may be decoded JSON documents or ready-made relation lists.
    """

    def __init__(
        self,
        relations: Optional[Dict[str, Any]] = None,
        summaries: Optional[Dict[str, Dict[str, str]]] = None,
    ):
        self.relations = relations or {}
        self.summaries = summaries or {}
        logger.info(f"MemoryAdapter initialized ({len(self.relations)} relation sets, {len(self.summaries)} summary sets)")

    def load_relations(self, source: str) -> SentenceRelations:
        if source not in self.relations:
            raise ValueError(f"No relation set named {source!r}")
        value = self.relations[source]
        if isinstance(value, dict):
            return parse_relations(value)
        return [list(sentence) for sentence in value]

    def load_summaries(self, source: str) -> Dict[str, str]:
        docs = self.summaries.get(source)
        if not docs:
            raise ValueError(f"No summaries named {source!r}")
        return dict(sorted(docs.items()))


# ============================================================================
# ADAPTER FACTORY
# ============================================================================


def get_adapter(adapter_type: str = "file", **kwargs) -> EvalDataAdapter:
    """
    Factory function to get adapter instance.

    Args:
        adapter_type: "file" or "memory"
        **kwargs: relations= / summaries= for the memory adapter

    Returns:
        EvalDataAdapter instance

    Example:
        >>> adapter = get_adapter("file")
        >>> preds = adapter.load_relations("pred.json")
    """
    if adapter_type == "file":
        return FileAdapter()
    elif adapter_type == "memory":
        return MemoryAdapter(relations=kwargs.get("relations"), summaries=kwargs.get("summaries"))
    else:
        raise ValueError(f"Unknown adapter type: {adapter_type}")
