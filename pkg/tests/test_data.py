"""
Unit tests for PerturbKit data: schema, synthetic tasks and adapters.

Tests cover:
- BIO encoding/decoding and relation signatures
- Tagging generator structure, determinism and task shift
- Seq2seq generator (targets extracted from sources)
- Token rendering for ROUGE
- File and memory adapters, adapter factory
"""

import json

import pytest

from data.adapters import FileAdapter, MemoryAdapter, get_adapter, parse_relations, relations_to_payload
from data.schema import (
    FIRST_WORD_ID,
    MARK_ID,
    N_TAGS,
    SEP_ID,
    decode_bio,
    encode_bio,
    relation_signature_ok,
    tag_names,
)
from data.synthetic import (
    CUE_CURRENT,
    CUE_PRIOR,
    EmptyDataset,
    TaskShift,
    gen_seq2seq_data,
    gen_tagging_data,
    render_tokens,
)
from metrics.jnere import EntitySpan, RelationInstance


# ============================================================================
# FIXTURES
# ============================================================================


@pytest.fixture
def sample_relations():
    """Two sentences of gold relations."""
    kpi = EntitySpan(token_ids=frozenset({0, 1}), label="kpi")
    cy = EntitySpan(token_ids=frozenset({5}), label="cy")
    py = EntitySpan(token_ids=frozenset({8, 9}), label="py")
    return [
        [RelationInstance(head=kpi, tail=cy, label="kpi-cy"), RelationInstance(head=kpi, tail=py, label="kpi-py")],
        [],
    ]


def split_source(source):
    """(marker, words) per sentence of a seq2seq source."""
    sentences = []
    for tok in source:
        if tok in (MARK_ID, SEP_ID):
            sentences.append((tok, []))
        else:
            sentences[-1][1].append(tok)
    return sentences


def join_with_sep(sentences):
    out = []
    for i, words in enumerate(sentences):
        if i:
            out.append(SEP_ID)
        out += words
    return out


# ============================================================================
# SCHEMA TESTS
# ============================================================================


class TestSchema:
    """Test tag and relation label helpers."""

    def test_tag_inventory(self):
        assert tag_names() == ["O", "B-kpi", "I-kpi", "B-cy", "I-cy", "B-py", "I-py"]
        assert N_TAGS == 7

    def test_encode_bio(self):
        assert encode_bio(6, [("kpi", [0, 1]), ("cy", [3])]) == [1, 2, 0, 3, 0, 0]

    def test_decode_bio(self):
        assert decode_bio([1, 2, 0, 3]) == [("kpi", [0, 1]), ("cy", [3])]

    def test_orphan_inside_tag_opens_span(self):
        assert decode_bio([2, 2, 0, 6]) == [("kpi", [0, 1]), ("py", [3])]

    def test_label_change_splits_span(self):
        assert decode_bio([1, 4]) == [("kpi", [0]), ("cy", [1])]

    def test_relation_signatures(self):
        assert relation_signature_ok("kpi-cy", "kpi", "cy")
        assert not relation_signature_ok("kpi-cy", "kpi", "py")
        assert not relation_signature_ok("none", "kpi", "cy")


# ============================================================================
# TAGGING GENERATOR TESTS
# ============================================================================


class TestTaggingData:
    """Test the synthetic tagging task."""

    @pytest.fixture
    def dataset(self):
        return gen_tagging_data(seed=0, size=50)

    def test_size_and_length(self, dataset):
        assert len(dataset) == 50
        assert all(len(ex.tokens) == 16 for ex in dataset)

    def test_deterministic(self, dataset):
        again = gen_tagging_data(seed=0, size=50)
        assert [ex.to_dict() for ex in again] == [ex.to_dict() for ex in dataset]

    def test_seed_changes_data(self, dataset):
        other = gen_tagging_data(seed=1, size=50)
        assert [ex.tokens for ex in other] != [ex.tokens for ex in dataset]

    def test_token_range(self, dataset):
        assert all(FIRST_WORD_ID <= t < 64 for ex in dataset for t in ex.tokens)

    def test_every_sentence_has_kpi_relation(self, dataset):
        for ex in dataset:
            assert ex.entities[0][0] == "kpi"
            assert ex.relations
            for head, tail, label in ex.relations:
                assert head == 0
                assert relation_signature_ok(label, ex.entities[head][0], ex.entities[tail][0])

    def test_bio_round_trip(self, dataset):
        for ex in dataset:
            assert decode_bio(encode_bio(len(ex.tokens), ex.entities)) == ex.entities

    def test_values_follow_their_cue(self, dataset):
        cue = {"cy": CUE_CURRENT, "py": CUE_PRIOR}
        for ex in dataset:
            for label, positions in ex.entities[1:]:
                assert ex.tokens[positions[0] - 1] == cue[label]

    def test_permuted_labels_swap_cues(self):
        shifted = gen_tagging_data(seed=0, size=30, shift=TaskShift(permute_labels=True))
        cue = {"cy": CUE_PRIOR, "py": CUE_CURRENT}
        for ex in shifted:
            for label, positions in ex.entities[1:]:
                assert ex.tokens[positions[0] - 1] == cue[label]

    def test_vocab_offset_changes_surface(self, dataset):
        shifted = gen_tagging_data(seed=0, size=50, shift=TaskShift(vocab_offset=3))
        assert [ex.tokens for ex in shifted] != [ex.tokens for ex in dataset]

    def test_gold_relations(self, dataset):
        ex = dataset[0]
        gold = ex.gold_relations()
        assert len(gold) == len(ex.relations)
        assert gold[0].head.token_ids == frozenset(ex.entities[0][1])

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            gen_tagging_data(seed=0, size=0)

    def test_too_small_vocab_or_length(self):
        with pytest.raises(ValueError):
            gen_tagging_data(seed=0, size=4, vocab=15)
        with pytest.raises(ValueError):
            gen_tagging_data(seed=0, size=4, seq_len=9)

    def test_subset(self, dataset):
        assert dataset.subset([3, 1]) == [dataset[3], dataset[1]]


# ============================================================================
# SEQ2SEQ GENERATOR TESTS
# ============================================================================


class TestSeq2SeqData:
    """Test the salient-sentence extraction task."""

    @pytest.fixture
    def dataset(self):
        return gen_seq2seq_data(seed=0, size=40)

    def test_source_layout(self, dataset):
        for ex in dataset:
            assert len(ex.source) == 4 * (1 + 4)
            assert all(len(words) == 4 for _, words in split_source(ex.source))

    def test_target_is_marked_sentences(self, dataset):
        for ex in dataset:
            marked = [words for marker, words in split_source(ex.source) if marker == MARK_ID]
            assert 1 <= len(marked) <= 2
            assert ex.target == join_with_sep(marked)

    def test_target_tokens_appear_in_source(self, dataset):
        for ex in dataset:
            assert set(ex.target) <= set(ex.source)
            assert len(ex.target) < len(ex.source)

    def test_permuted_labels_extract_unmarked(self):
        shifted = gen_seq2seq_data(seed=0, size=20, shift=TaskShift(permute_labels=True))
        for ex in shifted:
            plain = [words for marker, words in split_source(ex.source) if marker == SEP_ID]
            assert ex.target == join_with_sep(plain)

    def test_deterministic(self, dataset):
        again = gen_seq2seq_data(seed=0, size=40)
        assert [ex.to_dict() for ex in again] == [ex.to_dict() for ex in dataset]

    def test_invalid_sizes(self):
        with pytest.raises(EmptyDataset):
            gen_seq2seq_data(seed=0, size=0)
        with pytest.raises(ValueError):
            gen_seq2seq_data(seed=0, size=2, n_sentences=1)


class TestRenderTokens:
    """Test token -> text rendering."""

    def test_sentences_split_on_separators(self):
        assert render_tokens([5, 6, SEP_ID, 7]) == "w5 w6\nw7"

    def test_specials_dropped_and_eos_stops(self):
        assert render_tokens([1, MARK_ID, 9, 0, 10, 2, 11]) == "w9 w10"

    def test_empty(self):
        assert render_tokens([]) == ""


# ============================================================================
# ADAPTER TESTS
# ============================================================================


class TestParseRelations:
    """Test relation document validation."""

    def test_sentences_layout(self, sample_relations):
        assert parse_relations(relations_to_payload(sample_relations)) == sample_relations

    def test_single_sentence_layout(self, sample_relations):
        payload = relations_to_payload(sample_relations)["sentences"][0]
        assert parse_relations(payload) == [sample_relations[0]]

    def test_unknown_layout(self):
        with pytest.raises(ValueError, match="sentences"):
            parse_relations({"items": []})

    def test_invalid_relation(self):
        bad = {"relations": [{"head": {"token_ids": [1], "label": "kpi"},
                              "tail": {"token_ids": [1], "label": "cy"}, "label": "kpi-cy"}]}
        with pytest.raises(ValueError, match="Sentence 0"):
            parse_relations(bad)

    def test_tokens_key(self):
        doc = {"relations": [{"label": "kpi-cy",
                              "head": {"tokens": [2, 1], "label": "kpi"},
                              "tail": {"tokens": [5], "label": "cy"}}]}
        [[rel]] = parse_relations(doc)
        assert rel.head.token_ids == frozenset({1, 2})
        assert rel.tail.token_ids == frozenset({5})

    def test_token_ids_key_still_accepted(self):
        doc = {"relations": [{"label": "kpi-cy",
                              "head": {"token_ids": [1], "label": "kpi"},
                              "tail": {"token_ids": [5], "label": "cy"}}]}
        assert parse_relations(doc)[0][0].head.token_ids == frozenset({1})

    def test_payload_sorts_token_ids(self, sample_relations):
        payload = relations_to_payload(sample_relations)
        assert payload["sentences"][0]["relations"][1]["tail"]["tokens"] == [8, 9]


class TestFileAdapter:
    """Test file-backed evaluation inputs."""

    def test_write_then_load(self, sample_relations, tmp_path):
        adapter = FileAdapter()
        path = tmp_path / "gold.json"
        adapter.write_relations(sample_relations, path)
        assert adapter.load_relations(path) == sample_relations

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ValueError, match="invalid JSON"):
            FileAdapter().load_relations(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            FileAdapter().load_relations(tmp_path / "absent.json")

    def test_load_summaries_sorted(self, tmp_path):
        (tmp_path / "b.txt").write_text("second doc")
        (tmp_path / "a.txt").write_text("first doc\nline two")
        (tmp_path / "notes.md").write_text("ignored")
        docs = FileAdapter().load_summaries(tmp_path)
        assert list(docs) == ["a", "b"]
        assert docs["a"] == "first doc\nline two"

    def test_empty_summary_dir(self, tmp_path):
        with pytest.raises(ValueError):
            FileAdapter().load_summaries(tmp_path)

    def test_summary_path_not_directory(self, tmp_path):
        path = tmp_path / "file.txt"
        path.write_text("x")
        with pytest.raises(ValueError, match="Not a directory"):
            FileAdapter().load_summaries(path)


class TestMemoryAdapter:
    """Test in-memory evaluation inputs."""

    def test_relations_from_lists_and_documents(self, sample_relations):
        adapter = MemoryAdapter(relations={
            "lists": sample_relations,
            "doc": json.loads(json.dumps(relations_to_payload(sample_relations))),
        })
        assert adapter.load_relations("lists") == sample_relations
        assert adapter.load_relations("doc") == sample_relations

    def test_unknown_names(self):
        adapter = MemoryAdapter()
        with pytest.raises(ValueError):
            adapter.load_relations("gold")
        with pytest.raises(ValueError):
            adapter.load_summaries("refs")

    def test_summaries_sorted(self):
        adapter = MemoryAdapter(summaries={"refs": {"z": "last", "a": "first"}})
        assert list(adapter.load_summaries("refs")) == ["a", "z"]


class TestGetAdapter:
    """Test the adapter factory."""

    def test_types(self):
        assert isinstance(get_adapter("file"), FileAdapter)
        assert isinstance(get_adapter("memory", summaries={"s": {"d": "x"}}), MemoryAdapter)

    def test_unknown_type(self):
        with pytest.raises(ValueError, match="Unknown adapter type"):
            get_adapter("s3")


# ============================================================================
# RUN TESTS
# ============================================================================

if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
