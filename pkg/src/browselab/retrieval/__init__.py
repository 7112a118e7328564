from .backends import Bm25Backend, SearchBackend, SearchIndex, backend_names, get_backend, load_index, register_backend
from .bm25 import (
    DEFAULT_B,
    DEFAULT_K1,
    Bm25Index,
    IndexStats,
    RetrievalError,
    SearchHit,
    build_index,
    host_of,
    tokenize,
    tokenize_with_offsets,
)
from .kernels import active_kernel_name, available_kernels, override
from .snippets import SNIPPET_CHARS, make_snippet

__all__ = [
    "Bm25Backend",
    "Bm25Index",
    "DEFAULT_B",
    "DEFAULT_K1",
    "IndexStats",
    "RetrievalError",
    "SNIPPET_CHARS",
    "SearchBackend",
    "SearchHit",
    "SearchIndex",
    "active_kernel_name",
    "available_kernels",
    "backend_names",
    "build_index",
    "get_backend",
    "host_of",
    "load_index",
    "make_snippet",
    "override",
    "register_backend",
    "tokenize",
    "tokenize_with_offsets",
]
