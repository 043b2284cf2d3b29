"""Candidate generation: windowing, masking, distances, labels, files."""

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ksm.corpus import (CorpusError, Document, LABEL_NEGATIVE,
                        LABEL_POSITIVE, LABEL_UNLABELED,
                        Mention, assign_labels,
                        build_context_window, document_from_json,
                        generate_candidate_pairs, instance_to_json,
                        preprocess_document, read_corpus, read_instances,
                        sorted_pair, validate_document, write_instances)
from ksm.synthetic import toy_documents

DATA = Path(__file__).parent / "data"


def _doc(sentences, mentions, gold=()):
    return Document(doc_id="T", sentences=sentences, mentions=mentions,
                    gold_relations={sorted_pair(*p) for p in gold})


def _single_sentence_doc():
    # the worked example: two single-token mentions and a number in between
    return _doc(
        [["A", "B", "P1", "C", "D", "42", "P2", "E", "F", "G"]],
        [Mention("G1", 0, (2, 3)), Mention("G2", 0, (6, 7))],
    )


# ---------------------------------------------------------------------------
# pair generation


def test_pair_within_two_sentences_is_kept():
    doc = _doc([["x", "P1"], ["y"], ["P2", "z"]],
               [Mention("G1", 0, (1, 2)), Mention("G2", 2, (0, 1))])
    assert len(generate_candidate_pairs(doc)) == 1


def test_pair_three_sentences_apart_is_excluded():
    doc = _doc([["x", "P1"], ["y"], ["w"], ["P2", "z"]],
               [Mention("G1", 0, (1, 2)), Mention("G2", 3, (0, 1))])
    assert generate_candidate_pairs(doc) == []


def test_single_mention_yields_nothing():
    doc = _doc([["only", "P1", "here"]], [Mention("G1", 0, (1, 2))])
    assert generate_candidate_pairs(doc) == []


def test_same_entity_mentions_never_pair():
    doc = _doc([["P1", "and", "P1b"]],
               [Mention("G1", 0, (0, 1)), Mention("G1", 0, (2, 3))])
    assert generate_candidate_pairs(doc) == []


def test_first_mention_precedes_second():
    doc = _doc([["P2", "then", "P1"]],
               [Mention("G1", 0, (2, 3)), Mention("G2", 0, (0, 1))])
    pairs = generate_candidate_pairs(doc)
    assert len(pairs) == 1
    m1, m2 = pairs[0]
    assert m1.entity_id == "G2" and m2.entity_id == "G1"


def test_every_cooccurrence_gets_its_own_pair():
    doc = _doc([["P1", "x", "P2", "y", "P1b"]],
               [Mention("G1", 0, (0, 1)), Mention("G2", 0, (2, 3)),
                Mention("G1", 0, (4, 5))])
    pairs = generate_candidate_pairs(doc)
    assert [(a.entity_id, b.entity_id) for a, b in pairs] == \
        [("G1", "G2"), ("G2", "G1")]


# ---------------------------------------------------------------------------
# windowing and masking


def test_worked_example_tokens_and_distances():
    doc = _single_sentence_doc()
    m1, m2 = generate_candidate_pairs(doc)[0]
    inst = build_context_window(doc, m1, m2)
    assert inst.tokens == ["A", "B", "C", "D", "NUMBER", "E", "F", "G"]
    assert inst.pos1 == [2, 1, 1, 2, 3, 4, 5, 6]
    assert inst.pos2 == [5, 4, 3, 2, 1, 1, 2, 3]
    assert inst.pair == ("G1", "G2")


def test_window_clips_at_document_start():
    doc = _doc([["P1", "a", "P2", "b", "c", "d", "e"]],
               [Mention("G1", 0, (0, 1)), Mention("G2", 0, (2, 3))])
    inst = build_context_window(doc, *generate_candidate_pairs(doc)[0])
    # no left expansion exists; 'a' between; three right expansions
    assert inst.tokens == ["a", "b", "c", "d"]
    assert inst.pos1 == [1, 2, 3, 4]
    assert inst.pos2 == [1, 1, 2, 3]


def test_multitoken_third_mention_collapses_to_one_gene0():
    doc = _doc(
        [["P1", "with", "XYZ", "kinase", "near", "P2"]],
        [Mention("G1", 0, (0, 1)), Mention("G2", 0, (5, 6)),
         Mention("G3", 0, (2, 4))])
    pairs = generate_candidate_pairs(doc)
    focal = next((a, b) for a, b in pairs
                 if {a.entity_id, b.entity_id} == {"G1", "G2"})
    inst = build_context_window(doc, *focal)
    assert inst.tokens == ["with", "gene0", "near"]
    # gene0 carries the minimum distance over its collapsed tokens
    assert inst.pos1 == [1, 2, 4]
    assert inst.pos2 == [4, 2, 1]


def test_adjacent_distinct_mentions_stay_separate_gene0_tokens():
    doc = _doc(
        [["P1", "a", "X", "Y", "b", "P2"]],
        [Mention("G1", 0, (0, 1)), Mention("G2", 0, (5, 6)),
         Mention("G3", 0, (2, 3)), Mention("G4", 0, (3, 4))])
    pairs = generate_candidate_pairs(doc)
    focal = next((a, b) for a, b in pairs
                 if {a.entity_id, b.entity_id} == {"G1", "G2"})
    inst = build_context_window(doc, *focal)
    assert inst.tokens == ["a", "gene0", "gene0", "b"]


def test_nonfocal_mention_nested_in_focal_span_vanishes():
    doc = _doc(
        [["before", "P1", "X", "tail", "mid", "P2", "after"]],
        [Mention("G1", 0, (1, 3)),          # focal span covers "P1 X"
         Mention("G3", 0, (2, 3)),          # nested inside the focal span
         Mention("G2", 0, (5, 6))])
    pairs = generate_candidate_pairs(doc)
    focal = next((a, b) for a, b in pairs
                 if {a.entity_id, b.entity_id} == {"G1", "G2"})
    inst = build_context_window(doc, *focal)
    assert "gene0" not in inst.tokens
    assert inst.tokens == ["before", "tail", "mid", "after"]


def test_number_and_special_character_masking():
    doc = _doc(
        [["P1", "3.5", "-7%", "IL*2", "(", "]", "w†", "P2"]],
        [Mention("G1", 0, (0, 1)), Mention("G2", 0, (7, 8))])
    inst = build_context_window(doc, *generate_candidate_pairs(doc)[0])
    assert inst.tokens == ["NUMBER", "NUMBER", "IL2", "w"]
    # "(" and "]" drop as lone punctuation but still count for distances
    assert inst.pos1 == [1, 2, 3, 6]


def test_number_rule_checks_the_raw_token_before_stripping():
    # masking applies in order: NUMBER test first, then char stripping,
    # so "7*" strips to "7" rather than becoming NUMBER
    doc = _doc([["P1", "7*", "P2"]],
               [Mention("G1", 0, (0, 1)), Mention("G2", 0, (2, 3))])
    inst = build_context_window(doc, *generate_candidate_pairs(doc)[0])
    assert inst.tokens == ["7"]


def test_window_emptied_by_masking_is_dropped():
    doc = _doc([["P1", "*", "P2"]],
               [Mention("G1", 0, (0, 1)), Mention("G2", 0, (2, 3))])
    assert build_context_window(doc, *generate_candidate_pairs(doc)[0]) is None


def test_focal_tokens_never_survive():
    for doc in toy_documents():
        for inst in preprocess_document(doc, "train"):
            focal_surfaces = set()
            for m in doc.mentions:
                focal_surfaces.add(doc.sentences[m.sentence_index][
                    m.token_span[0]])
            assert "P1" not in inst.tokens and "P2" not in inst.tokens
            assert len(inst.tokens) >= 1


def test_window_spans_sentence_boundaries():
    doc = _doc([["P1", "ends"], ["starts", "P2", "tail"]],
               [Mention("G1", 0, (0, 1)), Mention("G2", 1, (1, 2))])
    inst = build_context_window(doc, *generate_candidate_pairs(doc)[0])
    assert inst.tokens == ["ends", "starts", "tail"]
    assert inst.pos1 == [1, 2, 3]  # the focal span of P2 never counts
    assert inst.pos2 == [2, 1, 1]


# ---------------------------------------------------------------------------
# labels


def test_gold_pair_labels_every_instance_positive():
    doc = _doc([["P1", "a", "P2", "b", "P1b", "c", "P2b"]],
               [Mention("G1", 0, (0, 1)), Mention("G2", 0, (2, 3)),
                Mention("G1", 0, (4, 5)), Mention("G2", 0, (6, 7))],
               gold=[("G1", "G2")])
    instances = preprocess_document(doc, "train")
    assert len(instances) == 4
    assert all(i.label == LABEL_POSITIVE for i in instances)


def test_non_gold_pair_is_negative():
    doc = _single_sentence_doc()
    instances = preprocess_document(doc, "train")
    assert [i.label for i in instances] == [LABEL_NEGATIVE]


def test_test_phase_marks_unlabeled():
    doc = _single_sentence_doc()
    doc.gold_relations = {("G1", "G2")}
    instances = preprocess_document(doc, "test")
    assert [i.label for i in instances] == [LABEL_UNLABELED]


def test_assign_labels_rejects_unknown_phase():
    with pytest.raises(ValueError):
        assign_labels([], set(), "dev")


# ---------------------------------------------------------------------------
# validation and files


def test_validate_rejects_out_of_range_span():
    doc = _doc([["a", "b"]], [Mention("G1", 0, (1, 3))])
    with pytest.raises(CorpusError):
        validate_document(doc)


def test_validate_warns_on_gold_without_mention():
    doc = _doc([["P1", "x", "P2"]],
               [Mention("G1", 0, (0, 1)), Mention("G2", 0, (2, 3))],
               gold=[("G1", "G9")])
    warnings = validate_document(doc)
    assert any("G9" in w for w in warnings)


def test_mention_span_must_be_nonempty():
    with pytest.raises(CorpusError):
        Mention("G1", 0, (2, 2))


def test_malformed_corpus_line_reports_location(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"doc_id":"ok","sentences":[],"mentions":[],'
                    '"gold_relations":[]}\n{not json\n')
    with pytest.raises(CorpusError, match=r"bad\.jsonl:2"):
        read_corpus(path)


def test_corpus_missing_field_reports_location():
    with pytest.raises(CorpusError, match="here:3"):
        document_from_json('{"doc_id":"x"}', where="here:3")


def test_golden_corpus_roundtrip_and_instances(tmp_path):
    docs = read_corpus(DATA / "toy_corpus.jsonl")
    for phase, golden in (("train", "toy_instances_train.jsonl"),
                          ("test", "toy_instances_test.jsonl")):
        instances = []
        for doc in docs:
            instances.extend(preprocess_document(doc, phase))
        out = tmp_path / f"{phase}.jsonl"
        write_instances(out, instances)
        assert out.read_bytes() == (DATA / golden).read_bytes()
        # and the reader inverts the writer
        again = read_instances(out)
        assert [instance_to_json(i) for i in again] == \
            [instance_to_json(i) for i in instances]


def test_preprocessing_is_deterministic():
    docs = toy_documents()
    first = [instance_to_json(i) for d in docs
             for i in preprocess_document(d, "train")]
    second = [instance_to_json(i) for d in docs
              for i in preprocess_document(d, "train")]
    assert first == second


# ---------------------------------------------------------------------------
# randomized structural invariants


@st.composite
def documents(draw):
    n_sent = draw(st.integers(1, 4))
    sentences = [
        draw(st.lists(st.sampled_from(["aa", "bb", "cc", "42", "*", "("]),
                      min_size=1, max_size=6))
        for _ in range(n_sent)
    ]
    mentions = []
    n_mentions = draw(st.integers(2, 4))
    for i in range(n_mentions):
        s = draw(st.integers(0, n_sent - 1))
        start = draw(st.integers(0, len(sentences[s]) - 1))
        end = draw(st.integers(start + 1, len(sentences[s])))
        mentions.append(Mention(f"E{draw(st.integers(0, 2))}", s, (start, end)))
    return Document(doc_id="R", sentences=sentences, mentions=mentions,
                    gold_relations=set())


@settings(max_examples=150, deadline=None)
@given(documents())
def test_random_documents_respect_instance_invariants(doc):
    instances = []
    for m1, m2 in generate_candidate_pairs(doc):
        inst = build_context_window(doc, m1, m2)
        if inst is not None:
            instances.append((inst, m1, m2))
    for inst, m1, m2 in instances:
        assert len(inst.tokens) == len(inst.pos1) == len(inst.pos2) >= 1
        assert all(p >= 1 for p in inst.pos1 + inst.pos2)
        assert inst.pair == sorted_pair(m1.entity_id, m2.entity_id)
        # windows and masking keep every surviving token nonempty
        assert all(inst.tokens)
