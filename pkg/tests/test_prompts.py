from __future__ import annotations

from browselab.prompts import (
    render_answer_normalization_prompt,
    render_judge_prompt,
    render_system_prompt,
    render_user_prompt,
    tool_schema,
    tool_schemas,
)


def test_answer_normalization_prompt_fills_text():
    prompt = render_answer_normalization_prompt("the raw answer text")
    assert "Extract the final answer from the following text." in prompt
    assert "\\boxed{...}" in prompt
    assert prompt.rstrip().endswith("Text: the raw answer text")
    assert "{text}" not in prompt


def test_system_prompt_template():
    prompt = render_system_prompt(sources="web")
    assert "helpful and harmless assistant" in prompt
    assert "[{cursor}]" in prompt  # literal cursor notation, not a placeholder
    assert "[{cursor}†L{line_start}(-L{line_end})?]" in prompt
    assert "For example: [6†L9-L11] or [8†L3]." in prompt
    assert "Do not quote more than 10 words" in prompt
    assert "Designated sources: web." in prompt
    assert "{sources}" not in prompt


def test_user_prompt_template():
    prompt = render_user_prompt("What is the word?")
    assert prompt.startswith("Query: What is the word?")
    assert "Explanation:" in prompt
    assert "Exact Answer:" in prompt
    assert "Confidence:" in prompt


def test_judge_prompt_has_all_fields():
    prompt = render_judge_prompt("q", "r", "a")
    for label in ("Extracted_final_answer:", "Reasoning:", "Correct:", "Confidence:"):
        assert label in prompt


def test_tool_schema_lookup_matches_list():
    assert tool_schemas() == [tool_schema("search"), tool_schema("open"), tool_schema("find")]
