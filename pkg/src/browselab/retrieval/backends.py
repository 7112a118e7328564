"""Pluggable search-backend seam.

The default backend is lexical BM25. A dense backend can be dropped in by
registering a factory implementing :class:`SearchBackend`; everything above
this layer (browser, orchestrator, analytics) only touches the protocol
surface, so gold-hit instrumentation stays backend-agnostic.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Protocol, runtime_checkable

from ..corpus import CorpusManifest, Document
from .bm25 import Bm25Index, IndexStats, RetrievalError, SearchHit, build_index


@runtime_checkable
class SearchIndex(Protocol):
    """What a built index must provide to the rest of the system."""

    def search(self, query: str, topn: int = 10) -> list[SearchHit]: ...

    def score(self, doc_id: str, query: str) -> float: ...

    def stats(self) -> IndexStats: ...

    def get_document(self, doc_id: str) -> Document: ...

    def resolve_url(self, url: str) -> Document | None: ...

    def save(self, directory: str | Path) -> None: ...


class SearchBackend(Protocol):
    name: str

    def build(self, manifest: CorpusManifest, **params) -> SearchIndex: ...

    def load(self, directory: str | Path) -> SearchIndex: ...


class Bm25Backend:
    name = "bm25"

    def build(self, manifest: CorpusManifest, **params) -> Bm25Index:
        return build_index(manifest, **params)

    def load(self, directory: str | Path) -> Bm25Index:
        return Bm25Index.load(directory)


_REGISTRY: dict[str, SearchBackend] = {"bm25": Bm25Backend()}


def register_backend(name: str, backend: SearchBackend) -> None:
    _REGISTRY[name] = backend


def get_backend(name: str) -> SearchBackend:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise RetrievalError(
            f"unknown search backend {name!r}; registered: {sorted(_REGISTRY)}"
        ) from None


def backend_names() -> list[str]:
    return sorted(_REGISTRY)


def load_index(directory: str | Path) -> SearchIndex:
    """Open an on-disk index, dispatching on the backend named in its header."""
    header_path = Path(directory) / "header.json"
    if not header_path.exists():
        raise RetrievalError(f"no index header at {header_path}")
    header = json.loads(header_path.read_text(encoding="utf-8"))
    return get_backend(header.get("backend", "bm25")).load(directory)
