"""Prompt and tool-metadata assets.

Templates live under ``browselab/assets/`` and use single-brace placeholders
({text}, {question}, ...). Filling is done by literal replacement, never
``str.format``, because the templates themselves contain brace characters.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

SYSTEM_PROMPT_ID = "system/v1"

TOOL_NAMES = ("search", "open", "find")


@lru_cache(maxsize=None)
def _asset_text(name: str) -> str:
    return resources.files("browselab.assets").joinpath(name).read_text(encoding="utf-8")


def _fill(template: str, values: dict[str, str]) -> str:
    for key, value in values.items():
        template = template.replace("{" + key + "}", value)
    return template


def render_answer_normalization_prompt(text: str) -> str:
    return _fill(_asset_text("answer_normalization_prompt.txt"), {"text": text})


def render_system_prompt(sources: str = "web") -> str:
    return _fill(_asset_text("system_prompt.txt"), {"sources": sources})


def render_user_prompt(question: str) -> str:
    return _fill(_asset_text("user_prompt.txt"), {"question": question})


def render_judge_prompt(question: str, response: str, correct_answer: str) -> str:
    return _fill(
        _asset_text("judge_prompt.txt"),
        {"question": question, "response": response, "correct_answer": correct_answer},
    )


@lru_cache(maxsize=None)
def tool_schema(name: str) -> dict:
    """One of the three browser tool schemas, keyed by short name."""
    if name not in TOOL_NAMES:
        raise KeyError(f"unknown tool {name!r}")
    return json.loads(_asset_text(f"tool_{name}.json"))


def tool_schemas() -> list[dict]:
    """The three tool schema objects in (search, open, find) order."""
    return [tool_schema(name) for name in TOOL_NAMES]
