"""Episode runner and trajectory pipeline.

One episode drives a tool-calling policy through a fresh browser session
until it answers or a budget trips, recording every reasoning-action-
observation turn. The reference answer never reaches the policy: prompts are
built from the question alone.

Trajectories serialize to single-line JSON records (schema version 1) and
flow through filtering and rejection sampling before training use.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Protocol, Sequence, Union

from .browser import BrowserConfig, BrowserSession, Observation, ToolCall
from .corpus import QAInstance
from .policy import PolicyError, PolicyRequest, PolicyResponse, PolicyTransportError
from .prompts import SYSTEM_PROMPT_ID, render_system_prompt, render_user_prompt, tool_schemas
from .retrieval import SearchIndex

logger = logging.getLogger(__name__)

TRAJECTORY_SCHEMA_VERSION = 1

# Default token estimate: whitespace tokens x 1.3. The multiplier is a rough
# subword-inflation constant; swap in a real model tokenizer via TokenCounter
# when exact context accounting matters.
DEFAULT_TOKENS_PER_WORD = 1.3


class OrchestratorError(Exception):
    pass


class TrajectoryVersionError(OrchestratorError):
    """Record written by an unknown (future) schema version."""


class Termination(str, Enum):
    ANSWERED = "answered"
    TURN_BUDGET = "turn_budget"
    TOKEN_BUDGET = "token_budget"
    POLICY_FAILURE = "policy_failure"


class TokenCounter(Protocol):
    def count(self, text: str) -> int: ...


@dataclass(frozen=True)
class WhitespaceTokenCounter:
    tokens_per_word: float = DEFAULT_TOKENS_PER_WORD

    def count(self, text: str) -> int:
        if not text:
            return 0
        return math.ceil(len(text.split()) * self.tokens_per_word)


@dataclass(frozen=True)
class Budgets:
    """Synthesis defaults; use :meth:`evaluation` for the evaluation budget."""

    max_turns: int = 150
    max_total_tokens: int = 128_000
    topn_per_search: int = 10

    def __post_init__(self) -> None:
        if self.max_turns <= 0 or self.max_total_tokens <= 0 or self.topn_per_search <= 0:
            raise OrchestratorError("budgets must be positive")

    @classmethod
    def evaluation(cls) -> "Budgets":
        return cls(max_turns=200)


@dataclass(frozen=True)
class FinalAnswer:
    text: str


@dataclass(frozen=True)
class ToolCallAction:
    name: str
    args: Optional[dict] = None
    raw_args: Optional[str] = None
    undispatchable: bool = False


Action = Union[ToolCallAction, FinalAnswer]


@dataclass(frozen=True)
class Turn:
    """One reasoning-action-observation triplet. The observation is present
    exactly when the action is a tool call; structured result identities are
    recorded alongside so analytics never re-parses rendered text."""

    reasoning: str
    action: Action
    observation: Optional[str] = None
    token_counts: dict = field(default_factory=dict)
    result_doc_ids: tuple[str, ...] = ()
    opened_doc_id: Optional[str] = None
    observation_is_error: bool = False


@dataclass
class Trajectory:
    qid: str
    seed: int
    system_prompt_id: str
    turns: list[Turn]
    final_answer: Optional[str]
    termination: Termination
    total_tokens: int
    metadata: dict = field(default_factory=dict)

    @property
    def tool_call_count(self) -> int:
        return sum(1 for t in self.turns if isinstance(t.action, ToolCallAction))

    def calls_by_tool(self) -> dict[str, int]:
        counts: dict[str, int] = {"search": 0, "open": 0, "find": 0}
        for turn in self.turns:
            if isinstance(turn.action, ToolCallAction):
                name = turn.action.name.removeprefix("browser.")
                counts[name] = counts.get(name, 0) + 1
        return counts


@dataclass(frozen=True)
class FilterVerdict:
    keep: bool
    reasons: frozenset[str]

    @classmethod
    def from_reasons(cls, reasons: Iterable[str]) -> "FilterVerdict":
        frozen = frozenset(reasons)
        return cls(keep=not frozen, reasons=frozen)


REASON_OVERLONG = "overlong_context"
REASON_MALFORMED = "malformed_calls"
REASON_NO_ANSWER = "no_final_answer"


def _action_text(action: Action) -> str:
    if isinstance(action, FinalAnswer):
        return action.text
    if action.raw_args is not None:
        return f"{action.name} {action.raw_args}"
    return f"{action.name} {json.dumps(action.args or {}, ensure_ascii=False)}"


def run_episode(
    policy: Callable[[PolicyRequest], PolicyResponse],
    index: SearchIndex,
    qa: QAInstance,
    budgets: Optional[Budgets] = None,
    seed: int = 0,
    *,
    browser_config: Optional[BrowserConfig] = None,
    token_counter: Optional[TokenCounter] = None,
    sources: str = "web",
    transport_retries: int = 3,
    backoff_base: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
    metadata: Optional[dict] = None,
) -> Trajectory:
    """Run one (question, seed) episode and record its trajectory.

    The loop alternates policy calls and tool dispatch until the policy emits
    a final answer or a budget trips. Error observations (bad arguments,
    unknown links) are fed back to the policy and the episode continues.
    """
    budgets = budgets or Budgets()
    counter = token_counter or WhitespaceTokenCounter()
    session = BrowserSession(index, browser_config)
    system_prompt = render_system_prompt(sources=sources)
    user_prompt = render_user_prompt(qa.question)
    tools = tool_schemas()

    history: list[dict] = []
    turns: list[Turn] = []
    total_tokens = 0
    final_answer: Optional[str] = None
    termination: Optional[Termination] = None

    for _ in range(budgets.max_turns):
        request = PolicyRequest(
            system_prompt=system_prompt,
            user_prompt=user_prompt,
            tools=tools,
            history=list(history),
            seed=seed,
        )
        try:
            response = _call_with_retries(policy, request, transport_retries, backoff_base, sleep)
        except PolicyTransportError as exc:
            logger.warning("qid=%s seed=%d: policy failure: %s", qa.qid, seed, exc)
            termination = Termination.POLICY_FAILURE
            break

        reasoning = response.reasoning or ""
        reasoning_tokens = counter.count(reasoning)

        if response.final_answer is not None:
            action: Action = FinalAnswer(response.final_answer)
            action_tokens = counter.count(response.final_answer)
            turns.append(
                Turn(
                    reasoning=reasoning,
                    action=action,
                    token_counts={
                        "reasoning": reasoning_tokens,
                        "action": action_tokens,
                        "observation": 0,
                    },
                )
            )
            total_tokens += reasoning_tokens + action_tokens
            final_answer = response.final_answer
            termination = Termination.ANSWERED
            break

        if response.tool_call is None:
            # policy produced neither an action nor an answer
            observation = Observation(
                text="Error: policy returned neither a tool call nor a final answer",
                tool="",
                is_error=True,
                undispatchable=True,
            )
            call = ToolCall(name="", args={})
        else:
            call = response.tool_call
            observation = session.dispatch(call)

        action = ToolCallAction(
            name=call.name,
            args=call.args,
            raw_args=call.raw_args,
            undispatchable=observation.undispatchable,
        )
        action_tokens = counter.count(_action_text(action))
        observation_tokens = counter.count(observation.text)
        turns.append(
            Turn(
                reasoning=reasoning,
                action=action,
                observation=observation.text,
                token_counts={
                    "reasoning": reasoning_tokens,
                    "action": action_tokens,
                    "observation": observation_tokens,
                },
                result_doc_ids=observation.result_doc_ids,
                opened_doc_id=observation.doc_id if observation.tool == "open" else None,
                observation_is_error=observation.is_error,
            )
        )
        total_tokens += reasoning_tokens + action_tokens + observation_tokens
        history.append(
            {
                "role": "assistant",
                "reasoning": reasoning,
                "tool_name": call.name.removeprefix("browser."),
                "tool_args": call.raw_args
                if call.raw_args is not None
                else json.dumps(call.args or {}, ensure_ascii=False),
            }
        )
        history.append({"role": "tool", "content": observation.text})

        if total_tokens > budgets.max_total_tokens:
            termination = Termination.TOKEN_BUDGET
            break

    if termination is None:
        termination = Termination.TURN_BUDGET

    return Trajectory(
        qid=qa.qid,
        seed=seed,
        system_prompt_id=SYSTEM_PROMPT_ID,
        turns=turns,
        final_answer=final_answer,
        termination=termination,
        total_tokens=total_tokens,
        metadata=dict(metadata or {}),
    )


def _call_with_retries(policy, request, retries: int, backoff_base: float, sleep) -> PolicyResponse:
    attempt = 0
    while True:
        try:
            return policy(request)
        except PolicyTransportError:
            if attempt >= retries:
                raise
            sleep(backoff_base * (2**attempt))
            attempt += 1


def run_grid(
    policy_factory: Callable[[str, int], Callable[[PolicyRequest], PolicyResponse]],
    index: SearchIndex,
    qa_list: Sequence[QAInstance],
    seeds: Sequence[int],
    budgets: Optional[Budgets] = None,
    workers: int = 1,
    **episode_kwargs,
) -> list[Trajectory]:
    """Run the (qid x seed) grid, possibly in parallel, in deterministic order.

    Episodes are independent: each owns its session; the index is shared
    read-only. Results come back sorted by (qid, seed) regardless of workers.
    """
    units = [(qa, seed) for qa in qa_list for seed in seeds]

    def one(unit):
        qa, seed = unit
        policy = policy_factory(qa.qid, seed)
        return run_episode(policy, index, qa, budgets, seed, **episode_kwargs)

    if workers <= 1:
        results = [one(unit) for unit in units]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, units))
    return sorted(results, key=lambda t: (t.qid, t.seed))


# -- filtering and sampling --------------------------------------------------


@dataclass(frozen=True)
class FilterLimits:
    max_total_tokens: int = 128_000


def filter_trajectory(
    trajectory: Trajectory, limits: Optional[FilterLimits] = None
) -> FilterVerdict:
    """Flag trajectories that are overlong, contain undispatchable actions,
    or never reached a final answer.

    Validation-error observations the policy recovered from do NOT count as
    malformed: only argument payloads that could not be dispatched at all do.
    """
    limits = limits or FilterLimits()
    reasons: set[str] = set()
    if trajectory.total_tokens > limits.max_total_tokens:
        reasons.add(REASON_OVERLONG)
    for turn in trajectory.turns:
        if isinstance(turn.action, ToolCallAction) and turn.action.undispatchable:
            reasons.add(REASON_MALFORMED)
            break
    if trajectory.termination != Termination.ANSWERED:
        reasons.add(REASON_NO_ANSWER)
    return FilterVerdict.from_reasons(reasons)


@dataclass
class RejectionResult:
    training_set: list[Trajectory]
    counts: dict[str, int]


def rejection_sample(
    trajectories: Sequence[Trajectory],
    judge_verdicts: Mapping[tuple[str, int], bool],
    limits: Optional[FilterLimits] = None,
) -> RejectionResult:
    """Keep exactly the filter-kept AND judged-correct trajectories.

    ``judge_verdicts`` maps (qid, seed) to correctness; a missing entry is an
    error naming the episode.
    """
    counts = {
        "keep_correct": 0,
        "keep_incorrect": 0,
        "drop_correct": 0,
        "drop_incorrect": 0,
    }
    kept: list[Trajectory] = []
    for trajectory in trajectories:
        key = (trajectory.qid, trajectory.seed)
        if key not in judge_verdicts:
            raise OrchestratorError(
                f"missing judge verdict for qid={trajectory.qid!r} seed={trajectory.seed}"
            )
        correct = bool(judge_verdicts[key])
        keep = filter_trajectory(trajectory, limits).keep
        bucket = ("keep" if keep else "drop") + ("_correct" if correct else "_incorrect")
        counts[bucket] += 1
        if keep and correct:
            kept.append(trajectory)
    return RejectionResult(training_set=kept, counts=counts)


# -- serialization ------------------------------------------------------------


def _action_record(action: Action) -> dict:
    if isinstance(action, FinalAnswer):
        return {"type": "final_answer", "text": action.text}
    return {
        "type": "tool_call",
        "name": action.name,
        "args": action.args,
        "raw_args": action.raw_args,
        "undispatchable": action.undispatchable,
    }


def _action_from_record(record: dict) -> Action:
    if record["type"] == "final_answer":
        return FinalAnswer(text=record["text"])
    return ToolCallAction(
        name=record["name"],
        args=record.get("args"),
        raw_args=record.get("raw_args"),
        undispatchable=record.get("undispatchable", False),
    )


def serialize_trajectory(trajectory: Trajectory) -> str:
    """One line of JSON with stable field order."""
    record = {
        "version": TRAJECTORY_SCHEMA_VERSION,
        "qid": trajectory.qid,
        "seed": trajectory.seed,
        "system_prompt_id": trajectory.system_prompt_id,
        "termination": trajectory.termination.value,
        "final_answer": trajectory.final_answer,
        "total_tokens": trajectory.total_tokens,
        "metadata": trajectory.metadata,
        "turns": [
            {
                "reasoning": turn.reasoning,
                "action": _action_record(turn.action),
                "observation": turn.observation,
                "token_counts": turn.token_counts,
                "result_doc_ids": list(turn.result_doc_ids),
                "opened_doc_id": turn.opened_doc_id,
                "observation_is_error": turn.observation_is_error,
            }
            for turn in trajectory.turns
        ],
    }
    return json.dumps(record, ensure_ascii=False)


def deserialize_trajectory(line: str) -> Trajectory:
    record = json.loads(line)
    version = record.get("version")
    if version != TRAJECTORY_SCHEMA_VERSION:
        raise TrajectoryVersionError(
            f"unsupported trajectory version {version!r} "
            f"(this build reads version {TRAJECTORY_SCHEMA_VERSION})"
        )
    turns = [
        Turn(
            reasoning=t["reasoning"],
            action=_action_from_record(t["action"]),
            observation=t.get("observation"),
            token_counts=t.get("token_counts", {}),
            result_doc_ids=tuple(t.get("result_doc_ids", ())),
            opened_doc_id=t.get("opened_doc_id"),
            observation_is_error=t.get("observation_is_error", False),
        )
        for t in record["turns"]
    ]
    return Trajectory(
        qid=record["qid"],
        seed=record["seed"],
        system_prompt_id=record["system_prompt_id"],
        turns=turns,
        final_answer=record.get("final_answer"),
        termination=Termination(record["termination"]),
        total_tokens=record["total_tokens"],
        metadata=record.get("metadata", {}),
    )


def write_trajectories(trajectories: Iterable[Trajectory], path) -> int:
    from pathlib import Path

    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for trajectory in trajectories:
            fh.write(serialize_trajectory(trajectory) + "\n")
            n += 1
    return n


def read_trajectories(path) -> list[Trajectory]:
    from pathlib import Path

    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(deserialize_trajectory(line))
    return out
