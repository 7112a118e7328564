from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from browselab.judge import (
    JudgeTransportError,
    JudgeVerdict,
    VerdictParseError,
    accuracy,
    extract_exact_answer,
    judge,
    parse_verdict,
    render_verdict,
    string_judge,
)
from browselab.prompts import render_judge_prompt


def test_parse_yes_with_confidence():
    verdict = parse_verdict(
        "Extracted_final_answer: June\n"
        "Reasoning: The month matches exactly.\n"
        "Correct: yes\n"
        "Confidence: 95"
    )
    assert verdict.correct is True
    assert verdict.confidence == 95
    assert verdict.extracted_final_answer == "June"


def test_parse_no_without_confidence_defaults_100():
    verdict = parse_verdict("Extracted_final_answer: May\nReasoning: mismatch\nCorrect: no")
    assert verdict.correct is False
    assert verdict.confidence == 100


def test_parse_missing_correct_errors_with_raw():
    raw = "Extracted_final_answer: June\nReasoning: looks right"
    with pytest.raises(VerdictParseError) as err:
        parse_verdict(raw)
    assert err.value.raw_text == raw


def test_parse_tolerates_prose_markdown_and_percent():
    verdict = parse_verdict(
        "Here is my judgement of the response.\n"
        "**Extracted_final_answer:** Maria Vogel\n"
        "**Reasoning:** Same writer, same spelling,\nacross two lines.\n"
        "**Correct:** 'yes'\n"
        "**Confidence:** 95%\n"
        "Thanks!"
    )
    assert verdict.correct is True
    assert verdict.confidence == 95
    assert verdict.extracted_final_answer == "Maria Vogel"


def test_parse_case_insensitive_labels():
    verdict = parse_verdict("extracted_final_answer: x\nREASONING: r\nCORRECT: NO\nconfidence: 7")
    assert verdict.correct is False and verdict.confidence == 7


_SAFE = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc"), blacklist_characters=":"),
    min_size=0,
    max_size=60,
)


@settings(max_examples=150, deadline=None)
@given(answer=_SAFE, reasoning=_SAFE, correct=st.booleans(), confidence=st.integers(0, 100))
def test_render_parse_roundtrip(answer, reasoning, correct, confidence):
    verdict = JudgeVerdict(
        extracted_final_answer=" ".join(answer.split()) or "None",
        reasoning=" ".join(reasoning.split()),
        correct=correct,
        confidence=confidence,
    )
    assert parse_verdict(render_verdict(verdict)) == verdict


def test_confidence_bounds_enforced():
    with pytest.raises(Exception):
        JudgeVerdict("a", "r", True, 101)


def test_judge_prompt_fills_placeholders():
    prompt = render_judge_prompt("Q-text?", "R-text", "A-text")
    assert "Question: Q-text?" in prompt
    assert "Response: R-text" in prompt
    assert "Correct Answer: A-text" in prompt
    assert "Put 100 if there is no confidence score available." in prompt


def test_judge_with_mock_client():
    canned = "Extracted_final_answer: June\nReasoning: same month\nCorrect: yes\nConfidence: 88"
    verdict = judge("Which month?", "Exact Answer: June", "June", lambda prompt: canned)
    assert verdict == JudgeVerdict("June", "same month", True, 88)


def test_judge_empty_response_precondition():
    with pytest.raises(ValueError, match="response is empty"):
        judge("q", "   ", "a", lambda prompt: "Correct: yes")


def test_judge_retries_then_raises():
    attempts = []

    def down(prompt: str) -> str:
        attempts.append(1)
        raise JudgeTransportError("unreachable")

    with pytest.raises(JudgeTransportError):
        judge("q", "r", "a", down, retries=2, sleep=lambda s: None)
    assert len(attempts) == 3


def test_judge_retry_then_recover():
    calls = {"n": 0}

    def flaky(prompt: str) -> str:
        calls["n"] += 1
        if calls["n"] == 1:
            raise JudgeTransportError("blip")
        return "Correct: yes"

    verdict = judge("q", "r", "a", flaky, sleep=lambda s: None)
    assert verdict.correct


def test_extract_exact_answer_label():
    response = (
        "Explanation: The entry quotes the writer in context [1†L5].\n\n"
        "Exact Answer: Maria Vogel\n\nConfidence: 99%"
    )
    assert extract_exact_answer(response) == "Maria Vogel"


def test_extract_exact_answer_fallback_last_line():
    assert extract_exact_answer("no labels here\njust text\n42") == "42"


def test_string_judge_exact_and_case_insensitive():
    verdict = string_judge("q?", "Exact Answer: maria vogel\nConfidence: 90%", "Maria Vogel")
    assert verdict.correct and verdict.confidence == 90
    assert string_judge("q?", "Exact Answer: Maria Vogel", "Annie Levin").correct is False


def test_string_judge_trims_whitespace():
    assert string_judge("q?", "Exact Answer:   June  ", "June").correct


def test_accuracy_examples():
    assert accuracy([True, False]) == 0.5
    assert accuracy([True, True, True]) == 1.0
    assert accuracy([True, False, False, True, False, False, True, False]) == 0.375


def test_accuracy_permutation_invariant():
    verdicts = [JudgeVerdict("a", "", flag, 100) for flag in (True, False, True, False, False)]
    assert accuracy(verdicts) == accuracy(list(reversed(verdicts)))


def test_accuracy_empty_errors():
    with pytest.raises(Exception):
        accuracy([])
