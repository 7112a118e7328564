from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from browselab.corpus import (
    CorpusError,
    CorpusManifest,
    Document,
    QAInstance,
    canonical_url,
    ingest_documents,
    load_qa,
    normalize_answer,
    normalize_text,
    plant_gold,
    rule_based_answer,
)


def test_whitespace_normalization_forced_example():
    manifest = CorpusManifest()
    report = ingest_documents(
        manifest, [{"url": "https://a.example/x", "title": "", "body": "Hello\r\n\r\nWorld"}]
    )
    assert len(report.added) == 1
    assert report.added[0].body == "Hello\nWorld"
    assert report.added[0].role == "distractor"


def test_byte_identical_bodies_dedup():
    manifest = CorpusManifest()
    report = ingest_documents(
        manifest,
        [
            {"url": "https://a.example/x", "body": "same text"},
            {"url": "https://b.example/y", "body": "same text"},
        ],
    )
    assert len(manifest) == 1
    assert [r.reason for r in report.rejected] == ["duplicate"]


def test_five_record_fixture_hand_count():
    # hand count: r1, r2, r5 added; r4 duplicates r2; r3 empty
    records = [
        {"url": "https://a.example/1", "body": "alpha text"},
        {"url": "https://a.example/2", "body": "beta text"},
        {"url": "https://a.example/3", "body": "   \r\n "},
        {"url": "https://a.example/4", "body": "beta text"},
        {"url": "https://a.example/5", "body": "gamma text"},
    ]
    manifest = CorpusManifest()
    report = ingest_documents(manifest, records)
    assert len(manifest) == 3
    reasons = sorted(r.reason for r in report.rejected)
    assert reasons == ["duplicate", "empty_body"]


def test_ingest_idempotent():
    records = [
        {"url": "https://a.example/1", "body": "alpha text"},
        {"url": "https://a.example/2", "body": "beta text"},
    ]
    once = CorpusManifest()
    ingest_documents(once, records)
    twice = CorpusManifest()
    ingest_documents(twice, records)
    ingest_documents(twice, records)
    assert [d.to_record() for d in once.documents] == [d.to_record() for d in twice.documents]


def test_doc_id_deterministic():
    record = {"url": "HTTPS://A.Example/x/", "body": "stable body"}
    a = CorpusManifest()
    b = CorpusManifest()
    ingest_documents(a, [record])
    ingest_documents(b, [dict(record)])
    assert a.documents[0].doc_id == b.documents[0].doc_id
    assert a.documents[0].url == "https://a.example/x"


def test_canonical_url_rules():
    assert canonical_url("HTTPS://Ex.Ample/Path/") == "https://ex.ample/Path"
    assert canonical_url("https://ex.ample/p#frag") == "https://ex.ample/p"
    assert canonical_url("https://ex.ample/p?q=1") == "https://ex.ample/p?q=1"


def test_dedup_soundness_property():
    manifest = CorpusManifest()
    bodies = ["one two", "two one", "one two", "three", "three "]
    ingest_documents(
        manifest,
        [{"url": f"https://a.example/{i}", "body": b} for i, b in enumerate(bodies)],
    )
    checksums = [d.checksum for d in manifest.documents]
    assert len(checksums) == len(set(checksums))


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=300))
def test_normalize_text_idempotent(text):
    assert normalize_text(normalize_text(text)) == normalize_text(text)


def test_plant_gold_empty_manifest():
    manifest = CorpusManifest()
    qa = QAInstance(qid="q1", question="q?", reference_answer="a")
    planted = plant_gold(manifest, qa, [{"url": "https://g.example/1", "body": "the answer"}])
    assert len(manifest) == 1
    assert qa.gold_doc_ids == {planted[0].doc_id}
    assert planted[0].role == "gold"


def test_plant_gold_counts():
    manifest = CorpusManifest()
    ingest_documents(
        manifest,
        [{"url": f"https://d.example/{i}", "body": f"distractor number {i}"} for i in range(10)],
    )
    qa = QAInstance(qid="q1", question="q?", reference_answer="a")
    plant_gold(
        manifest,
        qa,
        [
            {"url": "https://g.example/1", "body": "gold body one"},
            {"url": "https://g.example/2", "body": "gold body two"},
        ],
    )
    assert manifest.counts_by_role() == {"gold": 2, "distractor": 10}


def test_plant_gold_retags_duplicate_distractor():
    manifest = CorpusManifest()
    ingest_documents(manifest, [{"url": "https://d.example/1", "body": "shared body"}])
    existing_id = manifest.documents[0].doc_id
    qa = QAInstance(qid="q1", question="q?", reference_answer="a")
    planted = plant_gold(manifest, qa, [{"url": "https://g.example/1", "body": "shared body"}])
    assert len(manifest) == 1
    assert planted[0].doc_id == existing_id
    assert manifest.get(existing_id).role == "gold"
    assert qa.gold_doc_ids == {existing_id}


def test_plant_gold_accepts_document_instances():
    manifest = CorpusManifest()
    qa = QAInstance(qid="q1", question="q?", reference_answer="a")
    doc = Document("x", "https://g.example/1", "t", "gold body", "gold", "c")
    plant_gold(manifest, qa, [doc])
    assert len(manifest) == 1


def test_normalize_answer_boxed():
    assert normalize_answer(r"so the result is \boxed{42}") == "42"


def test_normalize_answer_already_minimal():
    assert normalize_answer("June") == "June"


def test_normalize_answer_label_stripped():
    text = "Looked at several papers.\nThe quote is attributed clearly.\nFinal answer: Annie Levin"
    assert normalize_answer(text) == "Annie Levin"


def test_normalize_answer_client_path_and_failure():
    assert normalize_answer("some text", client=lambda prompt: "  The Answer \n") == "The Answer"

    def broken(prompt):
        raise RuntimeError("offline")

    assert normalize_answer(r"x \boxed{7}", client=broken) == "7"


def test_normalize_answer_empty_raises():
    with pytest.raises(CorpusError):
        normalize_answer("   ")


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=200))
def test_rule_based_answer_idempotent(text):
    once = rule_based_answer(text)
    assert rule_based_answer(once) == once


def test_load_qa_roundtrip(tmp_path):
    path = tmp_path / "qa.jsonl"
    path.write_text(
        json.dumps({"qid": "q1", "question": "one?", "reference_answer": "1"})
        + "\n"
        + json.dumps({"qid": "q2", "question": "two?", "reference_answer": "2"})
        + "\n",
        encoding="utf-8",
    )
    instances = load_qa(path)
    assert [qa.qid for qa in instances] == ["q1", "q2"]


def test_load_qa_missing_field_names_line(tmp_path):
    path = tmp_path / "qa.jsonl"
    lines = [
        json.dumps({"qid": "q1", "question": "one?", "reference_answer": "1"}),
        json.dumps({"qid": "q2", "question": "two?", "reference_answer": "2"}),
        json.dumps({"qid": "q3", "reference_answer": "3"}),
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="line 3: missing field question"):
        load_qa(path)


def test_load_qa_duplicate_qid_names_both_lines(tmp_path):
    path = tmp_path / "qa.jsonl"
    lines = [
        json.dumps({"qid": "q1", "question": "one?", "reference_answer": "1"}),
        json.dumps({"qid": "q2", "question": "two?", "reference_answer": "2"}),
        json.dumps({"qid": "q3", "question": "three?", "reference_answer": "3"}),
        json.dumps({"qid": "q1", "question": "again?", "reference_answer": "4"}),
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(CorpusError, match=r"duplicate qid 'q1' on lines 1 and 4"):
        load_qa(path)


def test_manifest_save_load_roundtrip(tmp_path, three_doc_manifest):
    path = tmp_path / "corpus.jsonl"
    three_doc_manifest.save(path)
    loaded = CorpusManifest.load(path)
    assert [d.to_record() for d in loaded.documents] == [
        d.to_record() for d in three_doc_manifest.documents
    ]
    # wire format: one JSON object per line with the documented fields
    first = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert set(first) == {"doc_id", "url", "title", "body", "role", "checksum"}
