"""Scoring-kernel selection: compiled extension when importable, numpy
fallback otherwise. ``BROWSELAB_KERNEL=python|compiled`` overrides the
default at import; :func:`override` switches at runtime (tests, benchmarks).
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from . import _bm25_fallback

try:
    from . import _bm25_kernel  # type: ignore[attr-defined]
except ImportError:
    _bm25_kernel = None

_KERNELS = {"python": _bm25_fallback}
if _bm25_kernel is not None:
    _KERNELS["compiled"] = _bm25_kernel


def _default_name() -> str:
    requested = os.environ.get("BROWSELAB_KERNEL", "").strip().lower()
    if requested:
        if requested not in _KERNELS:
            raise RuntimeError(
                f"BROWSELAB_KERNEL={requested!r} is not available; "
                f"choices: {sorted(_KERNELS)}"
            )
        return requested
    return "compiled" if "compiled" in _KERNELS else "python"


_active_name = _default_name()


def available_kernels() -> list[str]:
    return sorted(_KERNELS)


def active_kernel_name() -> str:
    return _active_name


def get_kernel():
    """Module providing ``accumulate_query``; resolved per call so that
    :func:`override` affects indexes that are already built."""
    return _KERNELS[_active_name]


@contextmanager
def override(name: str):
    """Temporarily force a kernel; not safe while searches run in other threads."""
    global _active_name
    if name not in _KERNELS:
        raise RuntimeError(f"kernel {name!r} is not available; choices: {sorted(_KERNELS)}")
    previous = _active_name
    _active_name = name
    try:
        yield
    finally:
        _active_name = previous
