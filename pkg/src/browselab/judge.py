"""LLM-as-judge harness plus a deterministic offline string judge.

The judge prompt fills {question}/{response}/{correct_answer} and the model
replies in a labeled-field format (Extracted_final_answer / Reasoning /
Correct / Confidence) that :func:`parse_verdict` extracts tolerantly. The
string judge needs no network: it extracts the response's exact answer and
compares it to the reference after trimming and case folding. Numeric
near-misses are NOT accepted by the string judge; that leniency is left to
model judges.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

from .corpus import rule_based_answer
from .prompts import render_judge_prompt


class JudgeError(Exception):
    pass


class JudgeTransportError(JudgeError):
    """Network/service failure; retried before giving up."""


class VerdictParseError(JudgeError):
    def __init__(self, message: str, raw_text: str) -> None:
        super().__init__(message)
        self.raw_text = raw_text


@dataclass(frozen=True)
class JudgeVerdict:
    extracted_final_answer: str
    reasoning: str
    correct: bool
    confidence: int

    def __post_init__(self) -> None:
        if not 0 <= self.confidence <= 100:
            raise JudgeError(f"confidence {self.confidence} outside [0, 100]")


_LABELS = ("extracted_final_answer", "reasoning", "correct", "confidence")
_LABEL_RE = re.compile(
    r"^[ \t>*#-]*(extracted_final_answer|reasoning|correct|confidence)\s*\**\s*[:：]\**",
    re.IGNORECASE | re.MULTILINE,
)
_YESNO_RE = re.compile(r"^[\s'\"*`]*(yes|no)\b", re.IGNORECASE)
_INT_RE = re.compile(r"(\d{1,3})")
_EXACT_ANSWER_RE = re.compile(r"^[ \t>*#-]*exact answer\s*\**\s*[:：]\s*(.*)$", re.IGNORECASE | re.MULTILINE)
_CONFIDENCE_LINE_RE = re.compile(r"^[ \t>*#-]*confidence\s*\**\s*[:：]\s*(.*)$", re.IGNORECASE | re.MULTILINE)


def render_verdict(verdict: JudgeVerdict) -> str:
    """Canonical verdict text; newlines inside fields are collapsed so the
    output always parses back to the same verdict."""
    answer = " ".join(verdict.extracted_final_answer.split()) or "None"
    reasoning = " ".join(verdict.reasoning.split())
    return (
        f"Extracted_final_answer: {answer}\n"
        f"Reasoning: {reasoning}\n"
        f"Correct: {'yes' if verdict.correct else 'no'}\n"
        f"Confidence: {verdict.confidence}"
    )


def parse_verdict(raw_text: str) -> JudgeVerdict:
    """Labeled-field extraction, tolerant of surrounding prose and markdown.

    A missing Correct field is a parse error; a missing Confidence defaults
    to 100.
    """
    fields: dict[str, str] = {}
    matches = list(_LABEL_RE.finditer(raw_text))
    for i, match in enumerate(matches):
        label = match.group(1).lower()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(raw_text)
        if label not in fields:  # first occurrence wins
            fields[label] = raw_text[match.end() : end].strip()

    if "correct" not in fields:
        raise VerdictParseError("verdict is missing the Correct field", raw_text)
    yesno = _YESNO_RE.match(fields["correct"])
    if not yesno:
        raise VerdictParseError(
            f"cannot read yes/no from Correct field {fields['correct']!r}", raw_text
        )
    correct = yesno.group(1).lower() == "yes"

    confidence = 100
    if "confidence" in fields:
        found = _INT_RE.search(fields["confidence"])
        if found:
            confidence = min(int(found.group(1)), 100)

    return JudgeVerdict(
        extracted_final_answer=fields.get("extracted_final_answer", "None") or "None",
        reasoning=fields.get("reasoning", ""),
        correct=correct,
        confidence=confidence,
    )


def judge(
    question: str,
    response: str,
    reference_answer: str,
    client: Callable[[str], str],
    *,
    retries: int = 3,
    backoff_base: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> JudgeVerdict:
    """Render the judging prompt, call the model client, parse the verdict."""
    for name, value in (("question", question), ("response", response),
                        ("reference_answer", reference_answer)):
        if not value or not value.strip():
            raise ValueError(f"judge precondition failed: {name} is empty")
    prompt = render_judge_prompt(question, response, reference_answer)
    attempt = 0
    while True:
        try:
            raw = client(prompt)
            break
        except JudgeTransportError:
            if attempt >= retries:
                raise
            sleep(backoff_base * (2**attempt))
            attempt += 1
    return parse_verdict(raw)


def extract_exact_answer(response: str) -> str:
    """The response's 'Exact Answer:' field, falling back to rule-based
    extraction (boxed content or the last non-empty line)."""
    found = _EXACT_ANSWER_RE.search(response)
    if found and found.group(1).strip():
        return found.group(1).strip()
    return rule_based_answer(response)


def string_judge(question: str, response: str, reference_answer: str) -> JudgeVerdict:
    """Offline deterministic judge: exact match after trim + casefold."""
    extracted = extract_exact_answer(response)
    correct = bool(extracted) and extracted.strip().casefold() == reference_answer.strip().casefold()
    confidence = 100
    conf_found = _CONFIDENCE_LINE_RE.search(response)
    if conf_found:
        digits = _INT_RE.search(conf_found.group(1))
        if digits:
            confidence = min(int(digits.group(1)), 100)
    return JudgeVerdict(
        extracted_final_answer=extracted or "None",
        reasoning="exact match" if correct else "answers differ",
        correct=correct,
        confidence=confidence,
    )


def accuracy(verdicts: Sequence[Union[JudgeVerdict, bool]]) -> float:
    """Fraction of correct verdicts; permutation-invariant."""
    if not verdicts:
        raise JudgeError("accuracy needs at least one verdict")
    correct = sum(
        1 for v in verdicts if (v.correct if isinstance(v, JudgeVerdict) else bool(v))
    )
    return correct / len(verdicts)
