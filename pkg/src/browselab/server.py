"""Newline-delimited JSON tool service over a local TCP socket.

One browser session per connection; the shared index is immutable, so any
number of connections can be served concurrently. Protocol, one JSON object
per line:

    request   {"name": "search", "args": {"query": "..."}}
              {"name": "open", "raw_args": "{\\"id\\": 0}"}
              {"op": "tools"} | {"op": "ping"}
    response  {"observation": str, "cursor": int|null, "kind": str|null,
               "is_error": bool}
              {"tools": [...]} | {"ok": true}
              {"error": "<why the request line was unusable>"}
"""

from __future__ import annotations

import json
import logging
import socketserver
import threading
from typing import Optional

from .browser import BrowserConfig, BrowserSession, ToolCall
from .prompts import tool_schemas
from .retrieval import SearchIndex

logger = logging.getLogger(__name__)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        session = BrowserSession(self.server.index, self.server.browser_config)  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            response = self._respond(session, line)
            self.wfile.write((json.dumps(response, ensure_ascii=False) + "\n").encode("utf-8"))

    @staticmethod
    def _respond(session: BrowserSession, line: str) -> dict:
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            return {"error": f"request is not valid JSON: {exc.msg}"}
        if not isinstance(request, dict):
            return {"error": "request must be a JSON object"}
        if request.get("op") == "ping":
            return {"ok": True}
        if request.get("op") == "tools":
            return {"tools": tool_schemas()}
        if "name" not in request:
            return {"error": "request needs a 'name' field (or an 'op')"}
        call = ToolCall(
            name=request["name"],
            args=request.get("args"),
            raw_args=request.get("raw_args"),
        )
        observation = session.dispatch(call)
        return {
            "observation": observation.text,
            "cursor": observation.cursor,
            "kind": observation.kind.value if observation.kind else None,
            "is_error": observation.is_error,
        }


class _ThreadingServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class ToolServer:
    """Long-running tool service; ``port=0`` binds an ephemeral port."""

    def __init__(
        self,
        index: SearchIndex,
        host: str = "127.0.0.1",
        port: int = 0,
        browser_config: Optional[BrowserConfig] = None,
    ) -> None:
        self._server = _ThreadingServer((host, port), _Handler)
        self._server.index = index  # type: ignore[attr-defined]
        self._server.browser_config = browser_config  # type: ignore[attr-defined]
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> "ToolServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        logger.info("tool server listening on %s:%d", *self.address)
        return self

    def serve_forever(self) -> None:
        logger.info("tool server listening on %s:%d", *self.address)
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self) -> "ToolServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
