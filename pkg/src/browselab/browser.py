"""Stateful browsing sessions over an immutable search index.

A session exposes the three primitives (search, open, find) and renders every
observation in a fixed text grammar treated as a wire format:

    [<cursor>] <title> (<url>)
    **viewing lines [<a> - <b>] of <N>**

    L<k>: <content>

Search pages list hits as ``  * [<rank>†<title>†<host>] <snippet>`` bullets;
find pages list ``# [<i>†match at L<line>]`` blocks. Page text is hard-wrapped
at a fixed column width before line numbering. Pages are append-only and
addressed by a session-scoped cursor; virtual timestamps come from the page
counter, never the wall clock, so replaying a tool-call sequence against the
same index is byte-identical.

A session accepts one tool call at a time (single writer); any number of
sessions may share one index concurrently.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

from .prompts import tool_schema, tool_schemas
from .retrieval import SearchIndex, host_of
from .retrieval.snippets import lower_preserving_length


class PageKind(str, Enum):
    SEARCH_RESULTS = "search_results"
    DOCUMENT = "document"
    FIND_RESULTS = "find_results"


@dataclass(frozen=True)
class BrowserConfig:
    """Rendering knobs. Defaults follow the observable transcript format but
    every value stays configurable."""

    wrap_width: int = 80
    viewport_lines: int = 45
    find_context_chars: int = 240
    max_find_matches: int = 50
    ts_base: int = 1769000000
    default_topn: int = 10


@dataclass(frozen=True)
class Viewport:
    loc: int
    num_lines: int


@dataclass(frozen=True)
class Page:
    """One rendered browsing artifact. ``segments`` holds the unwrapped text
    spans (first wrapped-line index, text) that find() scans."""

    cursor: int
    kind: PageKind
    title: str
    url: str
    lines: tuple[str, ...]
    links: dict[int, str]
    segments: tuple[tuple[int, str], ...]
    doc_id: Optional[str] = None
    result_doc_ids: tuple[str, ...] = ()

    @property
    def total_lines(self) -> int:
        return len(self.lines)


@dataclass(frozen=True)
class Observation:
    """What a tool call returns. Errors carry no page (cursor is None) and
    leave the session unchanged."""

    text: str
    tool: str
    cursor: Optional[int] = None
    kind: Optional[PageKind] = None
    is_error: bool = False
    undispatchable: bool = False
    doc_id: Optional[str] = None
    result_doc_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class ToolCall:
    """A raw tool invocation. ``args`` wins when present; otherwise
    ``raw_args`` is parsed as JSON at dispatch time."""

    name: str
    args: Optional[dict] = None
    raw_args: Optional[str] = None


@dataclass(frozen=True)
class Citation:
    cursor: int
    line_start: int
    line_end: Optional[int] = None


class BrowserError(Exception):
    """Execution failure inside a primitive; rendered as an error observation."""


_CITATION_CANDIDATE = re.compile(r"\[[^\[\]]*†L[^\[\]]*\]")
_CITATION_STRICT = re.compile(r"^\[(\d+)†L(\d+)(?:-L(\d+))?\]$")


def hard_wrap(text: str, width: int) -> list[str]:
    """Split into fixed-width slices (no word awareness, spaces preserved)."""
    if not text:
        return []
    return [text[i : i + width] for i in range(0, len(text), width)]


def flatten(text: str) -> str:
    """Single flow of text for wrapping: newlines become spaces."""
    return text.replace("\n", " ")


def resolve_viewport(loc: int, num_lines: int, total: int, default_lines: int) -> Viewport:
    """Clamped viewport: loc=-1 means the beginning, num_lines<=0 the default,
    and a loc past the end snaps back to the last full viewport."""
    num = default_lines if num_lines is None or num_lines <= 0 else num_lines
    if loc is None or loc < 0:
        loc = 0
    if loc > total:
        loc = max(total - num, 0)
    return Viewport(loc=loc, num_lines=num)


def render_page(page: Page, viewport: Viewport) -> str:
    a = viewport.loc
    b = min(viewport.loc + viewport.num_lines, page.total_lines)
    out = [
        f"[{page.cursor}] {page.title} ({page.url})",
        f"**viewing lines [{a} - {b}] of {page.total_lines}**",
        "",
    ]
    for k in range(a, b):
        out.append(f"L{k}: {page.lines[k]}")
    return "\n".join(out)


def parse_citation(
    text: str, session: Optional["BrowserSession"] = None
) -> tuple[list[Citation], list[str]]:
    """Extract ``[cursor†Lstart(-Lend)?]`` citations; malformed or (when a
    session is given) unresolvable ones are skipped and reported as warnings."""
    citations: list[Citation] = []
    warnings: list[str] = []
    for match in _CITATION_CANDIDATE.finditer(text):
        candidate = match.group()
        strict = _CITATION_STRICT.match(candidate)
        if not strict:
            warnings.append(f"malformed citation {candidate!r}")
            continue
        cursor = int(strict.group(1))
        line_start = int(strict.group(2))
        line_end = int(strict.group(3)) if strict.group(3) else None
        if line_end is not None and line_start > line_end:
            warnings.append(f"citation {candidate!r} has line_start > line_end")
            continue
        if session is not None:
            if cursor >= len(session.pages):
                warnings.append(f"citation {candidate!r} refers to unknown cursor {cursor}")
                continue
            total = session.pages[cursor].total_lines
            last = line_end if line_end is not None else line_start
            if last >= total:
                warnings.append(
                    f"citation {candidate!r} exceeds page [{cursor}] with {total} lines"
                )
                continue
        citations.append(Citation(cursor=cursor, line_start=line_start, line_end=line_end))
    return citations, warnings


def _validation_error(tool_name: str, detail: str, undispatchable: bool = False) -> Observation:
    text = (
        f"Error: Invalid arguments for function '{tool_name}'. "
        f"Please check the function signature. Details: {detail}"
    )
    return Observation(text=text, tool=tool_name, is_error=True, undispatchable=undispatchable)


_SCHEMA_TYPES = {
    "string": str,
    "integer": int,
    "boolean": bool,
}

# accepted beyond the published schema, matching the serving tool's observable
# behavior: search tolerates a source label and the top_n spelling
_EXTRA_ARGS = {"search": {"source": {"type": "string"}}}
_ARG_ALIASES = {"search": {"top_n": "topn"}}


def _type_ok(value, type_spec) -> bool:
    specs = type_spec if isinstance(type_spec, list) else [type_spec]
    for spec in specs:
        expected = _SCHEMA_TYPES.get(spec)
        if expected is None:
            continue
        if expected is int and isinstance(value, bool):
            continue
        if isinstance(value, expected):
            return True
    return False


class BrowserSession:
    """Append-only page history plus the three primitives."""

    def __init__(self, index: SearchIndex, config: Optional[BrowserConfig] = None) -> None:
        self.index = index
        self.config = config or BrowserConfig()
        self.pages: list[Page] = []
        self.log: list[dict] = []
        self._lock = threading.Lock()

    # -- helpers -----------------------------------------------------------

    def _page_at(self, cursor: int) -> Page:
        if cursor == -1:
            if not self.pages:
                raise BrowserError("no pages in this session")
            return self.pages[-1]
        if 0 <= cursor < len(self.pages):
            return self.pages[cursor]
        raise BrowserError(f"cursor {cursor} not found in session")

    def _push(self, page: Page) -> Page:
        self.pages.append(page)
        return page

    def _next_cursor(self) -> int:
        return len(self.pages)

    def _wrap(self, text: str) -> list[str]:
        return hard_wrap(text, self.config.wrap_width)

    def _observe(self, page: Page, viewport: Viewport, tool: str) -> Observation:
        return Observation(
            text=render_page(page, viewport),
            tool=tool,
            cursor=page.cursor,
            kind=page.kind,
            doc_id=page.doc_id,
            result_doc_ids=page.result_doc_ids,
        )

    def _document_page(self, doc) -> Page:
        lines: list[str] = [""]
        url_lines = self._wrap(f"URL: {doc.url}")
        lines.extend(url_lines)
        body = flatten(doc.body)
        body_base = len(lines)
        lines.extend(self._wrap(body))
        return Page(
            cursor=self._next_cursor(),
            kind=PageKind.DOCUMENT,
            title=doc.title,
            url=doc.url,
            lines=tuple(lines),
            links={},
            segments=((body_base, body),),
            doc_id=doc.doc_id,
        )

    # -- primitives ----------------------------------------------------------

    def search(self, query: str, topn: Optional[int] = None, source: Optional[str] = None) -> Observation:
        """Ranked results page. ``source`` is recorded but does not filter:
        there is a single offline corpus behind every source label."""
        topn = self.config.default_topn if topn is None else topn
        hits = self.index.search(query, topn)
        ts = self.config.ts_base + self._next_cursor()
        url = f"web-search://ts={ts}"
        lines: list[str] = [""]
        lines.extend(self._wrap(f"URL: {url}"))
        lines.append("# Search Results")
        lines.append("")
        links: dict[int, str] = {}
        segments: list[tuple[int, str]] = []
        for hit in hits:
            bullet = f"  * [{hit.rank}†{hit.title}†{host_of(hit.url)}] {hit.snippet}"
            segments.append((len(lines), bullet))
            lines.extend(self._wrap(bullet))
            links[hit.rank] = hit.url
        page = self._push(
            Page(
                cursor=self._next_cursor(),
                kind=PageKind.SEARCH_RESULTS,
                title=query,
                url=url,
                lines=tuple(lines),
                links=links,
                segments=tuple(segments),
                result_doc_ids=tuple(hit.doc_id for hit in hits),
            )
        )
        self.log.append({"tool": "search", "query": query, "topn": topn, "source": source,
                         "cursor": page.cursor})
        viewport = resolve_viewport(0, -1, page.total_lines, self.config.viewport_lines)
        return self._observe(page, viewport, "search")

    def open(
        self,
        id: Union[int, str] = -1,
        cursor: int = -1,
        loc: int = -1,
        num_lines: int = -1,
        view_source: bool = False,
        source: Optional[str] = None,
    ) -> Observation:
        """Open a link id or URL, or re-view a page under a new viewport.

        Re-viewing (id=-1) still allocates a new cursor; ``view_source`` and
        ``source`` are recorded for fidelity but do not change rendering of a
        plain-text corpus.
        """
        if isinstance(id, str):
            doc = self.index.resolve_url(id)
            if doc is None:
                raise BrowserError(f"page not found: {id}")
            page = self._push(self._document_page(doc))
        elif id == -1:
            base = self._page_at(cursor)
            page = self._push(
                Page(
                    cursor=self._next_cursor(),
                    kind=base.kind,
                    title=base.title,
                    url=base.url,
                    lines=base.lines,
                    links=dict(base.links),
                    segments=base.segments,
                    doc_id=base.doc_id,
                    result_doc_ids=base.result_doc_ids,
                )
            )
        else:
            base = self._page_at(cursor)
            target = base.links.get(id)
            if target is None:
                raise BrowserError(f"link id {id} not found on page at cursor {base.cursor}")
            doc = self.index.resolve_url(target)
            if doc is None:
                raise BrowserError(f"page not found: {target}")
            page = self._push(self._document_page(doc))
        self.log.append({"tool": "open", "id": id, "cursor": cursor, "loc": loc,
                         "num_lines": num_lines, "view_source": view_source,
                         "source": source, "new_cursor": page.cursor})
        viewport = resolve_viewport(loc, num_lines, page.total_lines, self.config.viewport_lines)
        return self._observe(page, viewport, "open")

    def find(self, pattern: str, cursor: int = -1) -> Observation:
        """Case-insensitive substring scan over the target page's unwrapped
        text; at most ``max_find_matches`` blocks, one per matching line."""
        target = self._page_at(cursor)
        needle = lower_preserving_length(pattern)
        width = self.config.wrap_width
        matches: list[tuple[int, str]] = []  # (page line, context)
        for base_line, text in target.segments:
            lowered = lower_preserving_length(text)
            seen_lines: set[int] = set()
            at = lowered.find(needle)
            while at != -1 and len(matches) < self.config.max_find_matches:
                line = base_line + at // width
                if line not in seen_lines:
                    seen_lines.add(line)
                    context_start = (at // width) * width
                    context = text[context_start : context_start + self.config.find_context_chars]
                    if context_start + self.config.find_context_chars < len(text):
                        context += "..."
                    matches.append((line, context))
                at = lowered.find(needle, at + 1)
            if len(matches) >= self.config.max_find_matches:
                break

        lines: list[str] = []
        segments: list[tuple[int, str]] = []
        links: dict[int, str] = {}
        for i, (line, context) in enumerate(matches):
            if i > 0:
                lines.append("")
            lines.append(f"# [{i}†match at L{line}]")
            segments.append((len(lines), context))
            lines.extend(self._wrap(context))
            links[i] = target.url
        page = self._push(
            Page(
                cursor=self._next_cursor(),
                kind=PageKind.FIND_RESULTS,
                title=f"Find results for text: `{needle}` in `{target.title}`",
                url=f"{target.url}/find?pattern={needle}",
                lines=tuple(lines),
                links=links,
                segments=tuple(segments),
            )
        )
        self.log.append({"tool": "find", "pattern": pattern, "cursor": cursor,
                         "new_cursor": page.cursor})
        viewport = resolve_viewport(0, -1, page.total_lines, self.config.viewport_lines)
        return self._observe(page, viewport, "find")

    # -- dispatch ------------------------------------------------------------

    def dispatch(self, call: ToolCall) -> Observation:
        """Validate and route one tool call. Every failure comes back as an
        error observation (the episode continues); only argument payloads that
        cannot even be parsed are flagged undispatchable."""
        with self._lock:
            return self._dispatch_locked(call)

    def _dispatch_locked(self, call: ToolCall) -> Observation:
        name = call.name
        short = name.removeprefix("browser.")
        if short not in ("search", "open", "find"):
            return _validation_error(
                name, f"'{name}' is not a supported function (expected search, open, or find)"
            )

        args = call.args
        if args is None:
            if call.raw_args is None:
                args = {}
            else:
                try:
                    args = json.loads(call.raw_args)
                except (json.JSONDecodeError, TypeError) as exc:
                    return _validation_error(
                        short, f"arguments are not valid JSON: {exc}", undispatchable=True
                    )
        if not isinstance(args, dict):
            return _validation_error(
                short, "arguments must be a JSON object", undispatchable=True
            )

        schema = tool_schema(short)["function"]["parameters"]
        properties = dict(schema["properties"])
        properties.update(_EXTRA_ARGS.get(short, {}))
        aliases = _ARG_ALIASES.get(short, {})
        args = {aliases.get(key, key): value for key, value in args.items()}
        for key in args:
            if key not in properties:
                return _validation_error(
                    short,
                    f"BrowserSession.{short}() got an unexpected keyword argument '{key}'",
                )
        for key in schema.get("required", []):
            if key not in args:
                return _validation_error(
                    short, f"BrowserSession.{short}() missing a required argument: '{key}'"
                )
        for key, value in args.items():
            if not _type_ok(value, properties[key]["type"]):
                return _validation_error(
                    short,
                    f"BrowserSession.{short}() argument '{key}' must be of type "
                    f"{properties[key]['type']}",
                )
        if short == "find" and not args.get("pattern"):
            return _validation_error(
                short, "BrowserSession.find() argument 'pattern' must be a non-empty string"
            )

        method = getattr(self, short)
        try:
            return method(**args)
        except BrowserError as exc:
            observation = Observation(text=f"Error: {exc}", tool=short, is_error=True)
            self.log.append({"tool": short, "error": observation.text})
            return observation


# re-exported here because the schemas are part of the browser's contract
emit_tool_schemas = tool_schemas
