"""Independent reference implementations used to pin expected values.

Nothing here touches the package's index machinery: scoring is the direct
per-document formula, snippet selection is an exhaustive window scan, and
pass@k is literal subset enumeration. Arithmetic expression shapes mirror the
documented contract so comparisons can be exact.
"""

from __future__ import annotations

import math
import re
from itertools import combinations

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)

K1 = 0.9
B = 0.4


def tok(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def bm25_scores(
    docs: list[tuple[str, str]], query: str, k1: float = K1, b: float = B
) -> dict[str, float]:
    """Direct BM25 of every document: no inverted index, no candidate pruning."""
    tokens = {doc_id: tok(body) for doc_id, body in docs}
    n = len(docs)
    avgdl = sum(len(t) for t in tokens.values()) / n
    df: dict[str, int] = {}
    for terms in tokens.values():
        for term in set(terms):
            df[term] = df.get(term, 0) + 1
    one_minus_b = 1.0 - b
    k1p1 = k1 + 1.0
    out: dict[str, float] = {}
    for doc_id, terms in tokens.items():
        counts: dict[str, int] = {}
        for term in terms:
            counts[term] = counts.get(term, 0) + 1
        dl = float(len(terms))
        score = 0.0
        for term in sorted(set(tok(query))):
            f = float(counts.get(term, 0))
            if f == 0.0 or term not in df:
                continue
            idf = math.log(1.0 + (n - df[term] + 0.5) / (df[term] + 0.5))
            norm = k1 * (one_minus_b + b * (dl / avgdl))
            score += (idf * (f * k1p1)) / (f + norm)
        out[doc_id] = score
    return out


def bm25_ranking(
    docs: list[tuple[str, str]], query: str, topn: int, k1: float = K1, b: float = B
) -> list[tuple[str, float]]:
    """Full ranking with the contract tie rule: score desc, doc_id asc."""
    scores = bm25_scores(docs, query, k1, b)
    candidates = [(doc_id, s) for doc_id, s in scores.items() if s > 0.0]
    candidates.sort(key=lambda pair: (-pair[1], pair[0]))
    return candidates[:topn]


def snippet_window_scan(body: str, query_terms: set[str], width: int = 240) -> int:
    """Best window start by checking every token boundary exhaustively."""
    tokens = [(m.group(), m.start(), m.end()) for m in _TOKEN.finditer(body.lower())]
    best_start, best_count = 0, 0
    for _, start, _ in tokens:
        inside = [t for t, s, e in tokens if s >= start and e <= start + width]
        count = len(query_terms & set(inside))
        if count > best_count:
            best_start, best_count = start, count
    return best_start if best_count > 0 else 0


def pass_at_k_enumeration(n: int, c: int, k: int) -> float:
    """Probability a size-k subset of n samples (c correct) contains a hit."""
    subsets = list(combinations(range(n), k))
    hits = sum(1 for subset in subsets if any(i < c for i in subset))
    return hits / len(subsets)


def find_match_lines(segments: list[tuple[int, str]], pattern: str, width: int = 80) -> list[int]:
    """Naive case-insensitive scan: every line containing a match start."""
    needle = pattern.lower()
    lines: list[int] = []
    for base, text in segments:
        lowered = text.lower()
        for at in range(len(lowered)):
            if lowered.startswith(needle, at):
                line = base + at // width
                if line not in lines:
                    lines.append(line)
    return lines
