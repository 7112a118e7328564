"""Lexical BM25 index over a corpus manifest.

Tokenization is Unicode-aware lowercase segmentation on letter/digit runs.
Scoring uses the non-negative idf variant so every matching document has a
strictly positive score:

    idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))
    score(d, q) = sum over unique query terms t of
                  idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))

Repeated query terms count once. Query terms are always folded in sorted
order, which makes scores bit-identical across the compiled and fallback
kernels, across runs, and against the brute-force oracle used in tests.
Ties are broken by doc_id ascending. A built index is immutable and safe to
share across threads.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional
from urllib.parse import urlsplit

import numpy as np

from ..corpus import CorpusManifest, Document, canonical_url
from . import kernels
from .snippets import SNIPPET_CHARS, lower_preserving_length, make_snippet

INDEX_FORMAT_VERSION = 1

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


class RetrievalError(Exception):
    """Raised for index construction, lookup, and persistence failures."""


def tokenize(text: str) -> list[str]:
    """Lowercased letter/digit runs."""
    return _TOKEN.findall(text.lower())


def tokenize_with_offsets(text: str) -> list[tuple[str, int, int]]:
    """Tokens with (start, end) character offsets valid in the original text."""
    lowered = lower_preserving_length(text)
    return [(m.group(), m.start(), m.end()) for m in _TOKEN.finditer(lowered)]


@dataclass(frozen=True)
class SearchHit:
    rank: int
    doc_id: str
    title: str
    url: str
    snippet: str
    score: float


@dataclass(frozen=True)
class IndexStats:
    document_count: int
    total_postings: int
    average_document_length: float


class Bm25Index:
    """Immutable inverted index; construct via :func:`build_index` or :meth:`load`."""

    backend_name = "bm25"

    def __init__(
        self,
        documents: list[Document],
        vocab: dict[str, int],
        doc_idx_flat: np.ndarray,
        tfs_flat: np.ndarray,
        term_offsets: np.ndarray,
        doc_lens: np.ndarray,
        k1: float,
        b: float,
    ) -> None:
        self._documents = documents
        self._vocab = vocab
        self._doc_idx_flat = doc_idx_flat
        self._tfs_flat = tfs_flat
        self._term_offsets = term_offsets
        self._doc_lens = doc_lens
        self.k1 = float(k1)
        self.b = float(b)
        self._n = len(documents)
        total_tokens = int(doc_lens.sum())
        self._avgdl = total_tokens / self._n if self._n else 0.0
        self._by_id = {doc.doc_id: i for i, doc in enumerate(documents)}
        self._by_url = {doc.url: i for i, doc in enumerate(documents)}
        # tie rank: position of each doc in doc_id-ascending order
        order = sorted(range(self._n), key=lambda i: documents[i].doc_id)
        self._id_rank = np.empty(self._n, dtype=np.int64)
        for rank, i in enumerate(order):
            self._id_rank[i] = rank

    # -- lookups -----------------------------------------------------------

    def get_document(self, doc_id: str) -> Document:
        try:
            return self._documents[self._by_id[doc_id]]
        except KeyError:
            raise RetrievalError(f"unknown doc_id {doc_id!r}") from None

    def resolve_url(self, url: str) -> Optional[Document]:
        idx = self._by_url.get(url)
        if idx is None:
            idx = self._by_url.get(canonical_url(url))
        return self._documents[idx] if idx is not None else None

    @property
    def documents(self) -> list[Document]:
        return self._documents

    def stats(self) -> IndexStats:
        return IndexStats(
            document_count=self._n,
            total_postings=int(self._doc_idx_flat.shape[0]),
            average_document_length=self._avgdl,
        )

    def term_frequency(self, doc_id: str, term: str) -> int:
        """Occurrences of ``term`` in the document (0 when absent)."""
        tid = self._vocab.get(term)
        if tid is None:
            return 0
        doc_pos = self._by_id.get(doc_id)
        if doc_pos is None:
            raise RetrievalError(f"unknown doc_id {doc_id!r}")
        lo, hi = int(self._term_offsets[tid]), int(self._term_offsets[tid + 1])
        span = self._doc_idx_flat[lo:hi]
        at = int(np.searchsorted(span, doc_pos))
        if at < span.shape[0] and int(span[at]) == doc_pos:
            return int(self._tfs_flat[lo + at])
        return 0

    def document_frequency(self, term: str) -> int:
        tid = self._vocab.get(term)
        if tid is None:
            return 0
        return int(self._term_offsets[tid + 1] - self._term_offsets[tid])

    def idf(self, term: str) -> float:
        df = self.document_frequency(term)
        if df == 0:
            return 0.0
        return math.log(1.0 + (self._n - df + 0.5) / (df + 0.5))

    # -- scoring -----------------------------------------------------------

    def _query_terms(self, query: str) -> list[str]:
        return sorted(set(tokenize(query)))

    def search(self, query: str, topn: int = 10) -> list[SearchHit]:
        """Top ``topn`` hits with score > 0, ties broken by doc_id ascending."""
        if topn <= 0:
            return []
        terms = [t for t in self._query_terms(query) if t in self._vocab]
        if not terms:
            return []
        scores = np.zeros(self._n, dtype=np.float64)
        idx_slices = []
        tf_slices = []
        idfs = np.empty(len(terms), dtype=np.float64)
        offsets = np.zeros(len(terms) + 1, dtype=np.int64)
        for i, term in enumerate(terms):
            tid = self._vocab[term]
            lo, hi = int(self._term_offsets[tid]), int(self._term_offsets[tid + 1])
            idx_slices.append(self._doc_idx_flat[lo:hi])
            tf_slices.append(self._tfs_flat[lo:hi])
            idfs[i] = self.idf(term)
            offsets[i + 1] = offsets[i] + (hi - lo)
        doc_idx = np.concatenate(idx_slices)
        tfs = np.concatenate(tf_slices)
        kernels.get_kernel().accumulate_query(
            scores, doc_idx, tfs, offsets, idfs, self._doc_lens, self._avgdl, self.k1, self.b
        )

        candidates = np.flatnonzero(scores > 0.0)
        if candidates.shape[0] == 0:
            return []
        order = np.lexsort((self._id_rank[candidates], -scores[candidates]))
        top = candidates[order[:topn]]
        query_term_set = set(tokenize(query))
        hits = []
        for rank, pos in enumerate(int(i) for i in top):
            doc = self._documents[pos]
            hits.append(
                SearchHit(
                    rank=rank,
                    doc_id=doc.doc_id,
                    title=doc.title,
                    url=doc.url,
                    snippet=make_snippet(doc.body, query_term_set),
                    score=float(scores[pos]),
                )
            )
        return hits

    def score(self, doc_id: str, query: str) -> float:
        """Exactly the score :meth:`search` would assign to this document."""
        if doc_id not in self._by_id:
            raise RetrievalError(f"unknown doc_id {doc_id!r}")
        dl = float(self._doc_lens[self._by_id[doc_id]])
        one_minus_b = 1.0 - self.b
        k1p1 = self.k1 + 1.0
        total = 0.0
        for term in self._query_terms(query):
            tf = float(self.term_frequency(doc_id, term))
            if tf == 0.0:
                continue
            norm = self.k1 * (one_minus_b + self.b * (dl / self._avgdl))
            total += (self.idf(term) * (tf * k1p1)) / (tf + norm)
        return total

    # -- persistence -------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        header = {
            "format_version": INDEX_FORMAT_VERSION,
            "backend": self.backend_name,
            "k1": self.k1,
            "b": self.b,
            "document_count": self._n,
        }
        (directory / "header.json").write_text(
            json.dumps(header, indent=2) + "\n", encoding="utf-8"
        )
        with (directory / "documents.jsonl").open("w", encoding="utf-8") as fh:
            for doc in self._documents:
                fh.write(json.dumps(doc.to_record(), ensure_ascii=False) + "\n")
        terms = [""] * len(self._vocab)
        for term, tid in self._vocab.items():
            terms[tid] = term
        (directory / "vocab.txt").write_text("\n".join(terms), encoding="utf-8")
        np.savez(
            directory / "postings.npz",
            doc_idx=self._doc_idx_flat,
            tfs=self._tfs_flat,
            term_offsets=self._term_offsets,
            doc_lens=self._doc_lens,
        )

    @classmethod
    def load(cls, directory: str | Path) -> "Bm25Index":
        directory = Path(directory)
        header_path = directory / "header.json"
        if not header_path.exists():
            raise RetrievalError(f"no index header at {header_path}")
        header = json.loads(header_path.read_text(encoding="utf-8"))
        version = header.get("format_version")
        if version != INDEX_FORMAT_VERSION:
            raise RetrievalError(
                f"unsupported index format version {version!r} "
                f"(this build reads version {INDEX_FORMAT_VERSION})"
            )
        if header.get("backend") != cls.backend_name:
            raise RetrievalError(f"index backend {header.get('backend')!r} is not {cls.backend_name!r}")
        documents = []
        with (directory / "documents.jsonl").open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    documents.append(Document.from_record(json.loads(line)))
        vocab_text = (directory / "vocab.txt").read_text(encoding="utf-8")
        vocab = {term: tid for tid, term in enumerate(vocab_text.split("\n"))} if vocab_text else {}
        arrays = np.load(directory / "postings.npz")
        return cls(
            documents=documents,
            vocab=vocab,
            doc_idx_flat=arrays["doc_idx"],
            tfs_flat=arrays["tfs"],
            term_offsets=arrays["term_offsets"],
            doc_lens=arrays["doc_lens"],
            k1=header["k1"],
            b=header["b"],
        )


def build_index(manifest: CorpusManifest, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Bm25Index:
    """Build an immutable index over all manifest documents."""
    if len(manifest) == 0:
        raise RetrievalError("empty corpus")
    documents = list(manifest.documents)
    vocab: dict[str, int] = {}
    per_term_docs: list[list[int]] = []
    per_term_tfs: list[list[int]] = []
    doc_lens = np.zeros(len(documents), dtype=np.uint32)
    for pos, doc in enumerate(documents):
        tokens = tokenize(doc.body)
        doc_lens[pos] = len(tokens)
        for term, tf in Counter(tokens).items():
            tid = vocab.get(term)
            if tid is None:
                tid = len(vocab)
                vocab[term] = tid
                per_term_docs.append([])
                per_term_tfs.append([])
            per_term_docs[tid].append(pos)
            per_term_tfs[tid].append(tf)

    term_offsets = np.zeros(len(vocab) + 1, dtype=np.int64)
    for tid, docs in enumerate(per_term_docs):
        term_offsets[tid + 1] = term_offsets[tid] + len(docs)
    total = int(term_offsets[-1])
    doc_idx_flat = np.empty(total, dtype=np.uint32)
    tfs_flat = np.empty(total, dtype=np.uint32)
    for tid, (docs, tfs) in enumerate(zip(per_term_docs, per_term_tfs)):
        lo = int(term_offsets[tid])
        doc_idx_flat[lo : lo + len(docs)] = docs
        tfs_flat[lo : lo + len(tfs)] = tfs

    return Bm25Index(
        documents=documents,
        vocab=vocab,
        doc_idx_flat=doc_idx_flat,
        tfs_flat=tfs_flat,
        term_offsets=term_offsets,
        doc_lens=doc_lens,
        k1=k1,
        b=b,
    )


def host_of(url: str) -> str:
    """Display host for search bullets (netloc, lowercased)."""
    netloc = urlsplit(url).netloc
    return netloc.lower() if netloc else url


__all__ = [
    "Bm25Index",
    "IndexStats",
    "RetrievalError",
    "SearchHit",
    "SNIPPET_CHARS",
    "build_index",
    "host_of",
    "tokenize",
    "tokenize_with_offsets",
]
