# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled BM25 score accumulation.

Arithmetic must stay bit-identical to ``_bm25_fallback``: same expression
shape, same per-document accumulation order (query terms sorted by the
caller), and the build disables FP contraction.
"""

from libc.stdint cimport int64_t, uint32_t

KERNEL_NAME = "compiled"


def accumulate_query(double[::1] scores,
                     const uint32_t[::1] doc_idx,
                     const uint32_t[::1] tfs,
                     const int64_t[::1] offsets,
                     const double[::1] idfs,
                     const uint32_t[::1] doc_lens,
                     double avgdl, double k1, double b):
    """Add BM25 contributions for one query into ``scores``.

    Postings for all query terms are concatenated; ``offsets`` delimits the
    per-term slices (len(terms) + 1 entries) and ``idfs`` holds one idf per
    term, in the caller's (sorted) term order.
    """
    cdef Py_ssize_t t, p
    cdef double idf, tf, norm
    cdef double one_minus_b = 1.0 - b
    cdef double k1p1 = k1 + 1.0
    cdef uint32_t d
    for t in range(offsets.shape[0] - 1):
        idf = idfs[t]
        for p in range(offsets[t], offsets[t + 1]):
            d = doc_idx[p]
            tf = <double> tfs[p]
            norm = k1 * (one_minus_b + b * (<double> doc_lens[d] / avgdl))
            scores[d] += (idf * (tf * k1p1)) / (tf + norm)
