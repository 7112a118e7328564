"""Tool-calling policy clients.

A policy is any callable taking a :class:`PolicyRequest` and returning a
:class:`PolicyResponse` (reasoning plus either one tool call or a final
answer). Transport problems raise :class:`PolicyTransportError` so the
episode runner can retry and, eventually, mark the trajectory as a policy
failure.

Two implementations ship here: a deterministic scripted policy for fixtures
and offline runs, and a chat-completions HTTP client for real model serving.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import requests

from .browser import ToolCall


class PolicyError(Exception):
    """Unrecoverable policy behavior (exhausted script, bad response shape)."""


class PolicyTransportError(Exception):
    """Network/service failure; retried by the episode runner."""


@dataclass(frozen=True)
class PolicyRequest:
    system_prompt: str
    user_prompt: str
    tools: list
    history: list
    seed: int = 0
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PolicyResponse:
    reasoning: str = ""
    tool_call: Optional[ToolCall] = None
    final_answer: Optional[str] = None


class ScriptedPolicy:
    """Replays a fixed list of steps; used by tests and offline synthesis.

    Steps are dicts: {"reasoning", "tool", "args"} for calls (or "raw_args"
    for deliberately malformed payloads), {"reasoning", "final"} to answer.
    ``repeat_last=True`` keeps replaying the final step, which makes budget
    exhaustion easy to script.
    """

    def __init__(self, steps: list[dict], repeat_last: bool = False) -> None:
        if not steps:
            raise PolicyError("scripted policy needs at least one step")
        self.steps = steps
        self.repeat_last = repeat_last
        self._pos = 0

    def __call__(self, request: PolicyRequest) -> PolicyResponse:
        if self._pos >= len(self.steps):
            if not self.repeat_last:
                raise PolicyError(f"scripted policy exhausted after {len(self.steps)} steps")
            step = self.steps[-1]
        else:
            step = self.steps[self._pos]
            self._pos += 1
        reasoning = step.get("reasoning", "")
        if "final" in step:
            return PolicyResponse(reasoning=reasoning, final_answer=step["final"])
        return PolicyResponse(
            reasoning=reasoning,
            tool_call=ToolCall(
                name=step["tool"],
                args=step.get("args"),
                raw_args=step.get("raw_args"),
            ),
        )


class ScriptedPolicyBook:
    """Per-(qid, seed) scripts loaded from a JSON file.

    Layout: {"<qid>": {"<seed>": [steps...], "*": [steps...]}, "*": {...}}.
    """

    def __init__(self, scripts: dict) -> None:
        self.scripts = scripts

    @classmethod
    def load(cls, path: str | Path) -> "ScriptedPolicyBook":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def for_episode(self, qid: str, seed: int) -> ScriptedPolicy:
        per_qid = self.scripts.get(qid) or self.scripts.get("*")
        if per_qid is None:
            raise PolicyError(f"no script for qid {qid!r}")
        steps = per_qid.get(str(seed)) or per_qid.get("*")
        if steps is None:
            raise PolicyError(f"no script for qid {qid!r} seed {seed}")
        return ScriptedPolicy(steps)


class HttpChatPolicy:
    """Chat-completions-style client. Endpoint, model, and key come from
    configuration; the key is only ever read from an environment variable."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "BROWSELAB_POLICY_API_KEY",
        temperature: float = 1.0,
        top_p: float = 0.95,
        timeout: float = 120.0,
        max_in_flight: int = 8,
        session: Optional[requests.Session] = None,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = os.environ.get(api_key_env, "")
        self.temperature = temperature
        self.top_p = top_p
        self.timeout = timeout
        self._session = session or requests.Session()
        self._gate = threading.Semaphore(max_in_flight)

    def _messages(self, request: PolicyRequest) -> list[dict]:
        messages = [
            {"role": "system", "content": request.system_prompt},
            {"role": "user", "content": request.user_prompt},
        ]
        call_no = 0
        for entry in request.history:
            if entry["role"] == "assistant":
                message = {"role": "assistant", "content": entry.get("reasoning", "")}
                if entry.get("tool_name"):
                    message["tool_calls"] = [
                        {
                            "id": f"call_{call_no}",
                            "type": "function",
                            "function": {
                                "name": f"browser.{entry['tool_name']}",
                                "arguments": entry.get("tool_args", "{}"),
                            },
                        }
                    ]
                messages.append(message)
            else:
                messages.append(
                    {
                        "role": "tool",
                        "tool_call_id": f"call_{call_no}",
                        "content": entry["content"],
                    }
                )
                call_no += 1
        return messages

    def __call__(self, request: PolicyRequest) -> PolicyResponse:
        payload = {
            "model": self.model,
            "messages": self._messages(request),
            "tools": request.tools,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "seed": request.seed,
        }
        payload.update(request.options)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        with self._gate:
            try:
                response = self._session.post(
                    f"{self.endpoint}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                raise PolicyTransportError(str(exc)) from exc
        if response.status_code >= 500:
            raise PolicyTransportError(f"policy service returned {response.status_code}")
        if response.status_code != 200:
            raise PolicyError(f"policy service returned {response.status_code}: {response.text[:500]}")
        try:
            message = response.json()["choices"][0]["message"]
        except (ValueError, KeyError, IndexError) as exc:
            raise PolicyError(f"malformed policy response: {exc}") from exc
        reasoning = message.get("reasoning_content") or ""
        tool_calls = message.get("tool_calls") or []
        if tool_calls:
            function = tool_calls[0].get("function", {})
            return PolicyResponse(
                reasoning=reasoning or (message.get("content") or ""),
                tool_call=ToolCall(
                    name=function.get("name", ""),
                    raw_args=function.get("arguments", "{}"),
                ),
            )
        return PolicyResponse(reasoning=reasoning, final_answer=message.get("content") or "")
