from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from browselab.corpus import CorpusManifest, ingest_documents
from browselab.retrieval import build_index

from fixtures_corpus import make_wotd_manifest


@pytest.fixture
def three_doc_manifest() -> CorpusManifest:
    manifest = CorpusManifest()
    ingest_documents(
        manifest,
        [
            {"url": "https://a.example/d1", "title": "Apple pie", "body": "apple pie recipe"},
            {"url": "https://a.example/d2", "title": "Orchard", "body": "apple orchard"},
            {"url": "https://a.example/d3", "title": "Cars", "body": "car engine"},
        ],
    )
    return manifest


@pytest.fixture
def wotd_manifest() -> CorpusManifest:
    """Word-of-the-day style fixture: one answer-bearing page plus noise."""
    return make_wotd_manifest()


@pytest.fixture
def wotd_index(wotd_manifest):
    index = build_index(wotd_manifest)
    index.qa = wotd_manifest.qa
    return index


@pytest.fixture
def three_doc_index(three_doc_manifest):
    return build_index(three_doc_manifest)


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if name.startswith("test_criterion"):
        status = "PASS" if report.passed else "FAIL"
        label = name.removeprefix("test_criterion_").replace("_", " ")
        print(f"\n[ACCEPTANCE] {label}: {status}", flush=True)
