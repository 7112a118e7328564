"""Search-result snippet extraction.

A snippet is the 240-character window of the body holding the most distinct
query terms, starting at a token boundary; the earliest such window wins
ties. When no query term occurs the snippet is simply the head of the body.
An ellipsis is appended when the window stops short of the body's end.
"""

from __future__ import annotations

import re

SNIPPET_CHARS = 240

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


def lower_preserving_length(text: str) -> str:
    """Lowercase without ever changing the string length, so offsets computed
    on the folded text stay valid in the original (str.lower() expands a few
    characters, e.g. U+0130)."""
    lowered = text.lower()
    if len(lowered) == len(text):
        return lowered
    out = []
    for ch in text:
        low = ch.lower()
        out.append(low if len(low) == 1 else ch)
    return "".join(out)


def best_window_start(body: str, query_terms: set[str], width: int = SNIPPET_CHARS) -> int:
    """Token-boundary start offset of the densest window; 0 when nothing matches."""
    tokens = [
        (m.group(), m.start(), m.end())
        for m in _TOKEN.finditer(lower_preserving_length(body))
    ]
    if not tokens or not query_terms:
        return 0
    best_start = 0
    best_count = 0
    counts: dict[str, int] = {}
    distinct = 0
    j = 0
    for i, (_, start_i, _) in enumerate(tokens):
        limit = start_i + width
        while j < len(tokens) and tokens[j][2] <= limit:
            term = tokens[j][0]
            if term in query_terms:
                counts[term] = counts.get(term, 0) + 1
                if counts[term] == 1:
                    distinct += 1
            j += 1
        if distinct > best_count:
            best_count = distinct
            best_start = start_i
        # evict the leading token before the window advances
        term = tokens[i][0]
        if term in query_terms:
            counts[term] -= 1
            if counts[term] == 0:
                distinct -= 1
        if j < i + 1:
            j = i + 1
    return best_start if best_count > 0 else 0


def make_snippet(body: str, query_terms: set[str], width: int = SNIPPET_CHARS) -> str:
    if len(body) <= width:
        return body
    start = best_window_start(body, query_terms, width)
    window = body[start : start + width]
    if start + width < len(body):
        window += "..."
    return window
