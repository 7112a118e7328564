"""Pure-Python (numpy) BM25 score accumulation, used when the compiled
kernel is unavailable. Produces bit-identical scores: the expression shape
and per-document accumulation order match ``_bm25_kernel.pyx`` exactly, and
numpy ufuncs evaluate element-wise without reassociation."""

from __future__ import annotations

import numpy as np

KERNEL_NAME = "python"


def accumulate_query(scores, doc_idx, tfs, offsets, idfs, doc_lens, avgdl, k1, b):
    one_minus_b = 1.0 - b
    k1p1 = k1 + 1.0
    for t in range(len(offsets) - 1):
        lo, hi = offsets[t], offsets[t + 1]
        if lo == hi:
            continue
        idx = doc_idx[lo:hi]
        tf = tfs[lo:hi].astype(np.float64)
        dl = doc_lens[idx].astype(np.float64)
        norm = k1 * (one_minus_b + b * (dl / avgdl))
        # idx values are unique within a term, so fancy-index += is safe
        scores[idx] += (idfs[t] * (tf * k1p1)) / (tf + norm)
