"""
PerturbKit Data - Synthetic tasks and evaluation data adapters.

This package provides:
- Label schema and special tokens shared with the models
- Deterministic synthetic tagging and seq2seq datasets
- Swappable adapters for evaluation inputs (files, in-memory)

Usage:
    from data import gen_tagging_data, get_adapter

    train_set = gen_tagging_data(seed=0, size=256)
    gold = get_adapter("file").load_relations("gold.json")
"""

from data.synthetic import (
    Dataset,
    EmptyDataset,
    Seq2SeqExample,
    TaggingExample,
    TaskShift,
    gen_seq2seq_data,
    gen_tagging_data,
    render_tokens,
)
from data.adapters import (
    EvalDataAdapter,
    FileAdapter,
    MemoryAdapter,
    get_adapter,
    parse_relations,
    relations_to_payload,
)

__all__ = [
    # Synthetic data
    "Dataset",
    "TaggingExample",
    "Seq2SeqExample",
    "TaskShift",
    "EmptyDataset",
    "gen_tagging_data",
    "gen_seq2seq_data",
    "render_tokens",
    # Adapters
    "EvalDataAdapter",
    "FileAdapter",
    "MemoryAdapter",
    "get_adapter",
    "parse_relations",
    "relations_to_payload",
]

__version__ = "0.1.0"
