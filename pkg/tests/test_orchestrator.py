from __future__ import annotations

import json

import pytest

from browselab.browser import BrowserSession, ToolCall
from browselab.corpus import QAInstance
from browselab.orchestrator import (
    Budgets,
    FilterLimits,
    FinalAnswer,
    OrchestratorError,
    Termination,
    ToolCallAction,
    TrajectoryVersionError,
    WhitespaceTokenCounter,
    deserialize_trajectory,
    filter_trajectory,
    rejection_sample,
    run_episode,
    run_grid,
    serialize_trajectory,
)
from browselab.policy import (
    PolicyRequest,
    PolicyResponse,
    PolicyTransportError,
    ScriptedPolicy,
    ScriptedPolicyBook,
)

ANSWER_NOW = [{"reasoning": "I already know.", "final": "Exact Answer: Maria Vogel"}]

SEARCH_OPEN_FIND_ANSWER = [
    {"reasoning": "Look it up.", "tool": "search",
     "args": {"query": "halcyon word of the day", "topn": 10, "source": "news"}},
    {"reasoning": "Open the entry.", "tool": "open", "args": {"cursor": 0, "id": 0}},
    {"reasoning": "Locate the attribution.", "tool": "find",
     "args": {"cursor": 1, "pattern": "—"}},
    {"reasoning": "Quoted writer found.", "final": "Exact Answer: Maria Vogel"},
]


def qa_fixture() -> QAInstance:
    return QAInstance(
        qid="wotd-1",
        question="Which writer is quoted in the Lexicon word of the day for halcyon?",
        reference_answer="Maria Vogel",
    )


def test_immediate_answer(wotd_index):
    trajectory = run_episode(ScriptedPolicy(ANSWER_NOW), wotd_index, qa_fixture(), seed=3)
    assert trajectory.termination is Termination.ANSWERED
    assert len(trajectory.turns) == 1
    assert isinstance(trajectory.turns[0].action, FinalAnswer)
    assert trajectory.turns[0].observation is None
    assert trajectory.final_answer == "Exact Answer: Maria Vogel"
    assert trajectory.seed == 3


def test_turn_budget_exhaustion(wotd_index):
    policy = ScriptedPolicy(
        [{"reasoning": "again", "tool": "search", "args": {"query": "halcyon"}}],
        repeat_last=True,
    )
    budgets = Budgets(max_turns=5)
    trajectory = run_episode(policy, wotd_index, qa_fixture(), budgets)
    assert trajectory.termination is Termination.TURN_BUDGET
    assert len(trajectory.turns) == 5
    assert trajectory.final_answer is None


def test_observations_match_direct_browser_replay(wotd_index):
    trajectory = run_episode(
        ScriptedPolicy(SEARCH_OPEN_FIND_ANSWER), wotd_index, qa_fixture()
    )
    assert trajectory.termination is Termination.ANSWERED
    assert len(trajectory.turns) == 4
    # oracle: replay the identical calls straight against the browser module
    session = BrowserSession(wotd_index)
    expected = [
        session.dispatch(ToolCall(step["tool"], step["args"])).text
        for step in SEARCH_OPEN_FIND_ANSWER
        if "tool" in step
    ]
    observed = [turn.observation for turn in trajectory.turns if turn.observation is not None]
    assert observed == expected


def test_turn_invariants(wotd_index):
    trajectory = run_episode(
        ScriptedPolicy(SEARCH_OPEN_FIND_ANSWER), wotd_index, qa_fixture()
    )
    finals = [t for t in trajectory.turns if isinstance(t.action, FinalAnswer)]
    assert len(finals) == 1 and trajectory.turns[-1] is finals[0]
    for turn in trajectory.turns:
        assert (turn.observation is not None) == isinstance(turn.action, ToolCallAction)


def test_gold_identities_recorded(wotd_index):
    trajectory = run_episode(
        ScriptedPolicy(SEARCH_OPEN_FIND_ANSWER), wotd_index, qa_fixture()
    )
    gold_id = next(iter(wotd_index.qa.gold_doc_ids))
    assert gold_id in trajectory.turns[0].result_doc_ids
    assert trajectory.turns[1].opened_doc_id == gold_id
    assert trajectory.turns[2].opened_doc_id is None


def test_token_budget_stops_after_overflow_step(wotd_index):
    policy = ScriptedPolicy(
        [{"reasoning": "search loop", "tool": "search",
          "args": {"query": "halcyon word of the day"}}],
        repeat_last=True,
    )
    budgets = Budgets(max_turns=150, max_total_tokens=1000)
    trajectory = run_episode(policy, wotd_index, qa_fixture(), budgets)
    assert trajectory.termination is Termination.TOKEN_BUDGET
    assert trajectory.total_tokens > 1000
    # every prefix before the overflow step stays within budget
    running = 0
    for turn in trajectory.turns[:-1]:
        running += sum(turn.token_counts.values())
        assert running <= 1000
    assert trajectory.total_tokens == running + sum(
        trajectory.turns[-1].token_counts.values()
    )


def test_policy_failure_after_bounded_retries(wotd_index):
    attempts = []

    def flaky(request: PolicyRequest) -> PolicyResponse:
        attempts.append(1)
        raise PolicyTransportError("connection refused")

    sleeps: list[float] = []
    trajectory = run_episode(
        flaky, wotd_index, qa_fixture(), transport_retries=3, sleep=sleeps.append
    )
    assert trajectory.termination is Termination.POLICY_FAILURE
    assert len(attempts) == 4  # initial + 3 retries
    assert sleeps == [0.5, 1.0, 2.0]  # exponential backoff
    assert trajectory.turns == []


def test_retry_then_recover(wotd_index):
    calls = {"n": 0}

    def flaky_once(request: PolicyRequest) -> PolicyResponse:
        calls["n"] += 1
        if calls["n"] == 1:
            raise PolicyTransportError("blip")
        return PolicyResponse(reasoning="ok", final_answer="Exact Answer: done")

    trajectory = run_episode(flaky_once, wotd_index, qa_fixture(), sleep=lambda s: None)
    assert trajectory.termination is Termination.ANSWERED


def test_reference_answer_never_reaches_policy(wotd_index):
    sentinel = "XYZZY-SENTINEL-ANSWER"
    qa = QAInstance(qid="q-sentinel", question="What is the word?", reference_answer=sentinel)
    seen: list[PolicyRequest] = []

    def spy(request: PolicyRequest) -> PolicyResponse:
        seen.append(request)
        if len(seen) < 3:
            return PolicyResponse(
                reasoning="searching", tool_call=ToolCall("search", {"query": "halcyon"})
            )
        return PolicyResponse(reasoning="give up", final_answer="Exact Answer: unknown")

    run_episode(spy, wotd_index, qa)
    for request in seen:
        blob = request.system_prompt + request.user_prompt + json.dumps(request.history)
        assert sentinel not in blob


def test_policy_receives_exact_tool_schemas(wotd_index):
    from browselab.prompts import tool_schemas

    seen: list[PolicyRequest] = []

    def spy(request: PolicyRequest) -> PolicyResponse:
        seen.append(request)
        return PolicyResponse(reasoning="", final_answer="Exact Answer: x")

    run_episode(spy, wotd_index, qa_fixture())
    assert seen[0].tools == tool_schemas()


def test_parallel_matches_serial(wotd_index):
    qa_list = [
        QAInstance(qid=f"q{i}", question=f"question {i} about halcyon?", reference_answer="x")
        for i in range(3)
    ]

    def factory(qid: str, seed: int) -> ScriptedPolicy:
        return ScriptedPolicy(SEARCH_OPEN_FIND_ANSWER)

    serial = run_grid(factory, wotd_index, qa_list, seeds=[0, 1], workers=1)
    parallel = run_grid(factory, wotd_index, qa_list, seeds=[0, 1], workers=8)
    assert [serialize_trajectory(t) for t in serial] == [
        serialize_trajectory(t) for t in parallel
    ]


def test_budgets_validation():
    with pytest.raises(OrchestratorError):
        Budgets(max_turns=0)
    assert Budgets.evaluation().max_turns == 200
    assert Budgets().max_turns == 150
    assert Budgets().max_total_tokens == 128_000
    assert Budgets().topn_per_search == 10


def test_token_counter_default():
    counter = WhitespaceTokenCounter()
    assert counter.count("") == 0
    assert counter.count("one two three") == 4  # ceil(3 * 1.3)


# -- filtering ----------------------------------------------------------------


def test_filter_answered_within_budget(wotd_index):
    trajectory = run_episode(ScriptedPolicy(ANSWER_NOW), wotd_index, qa_fixture())
    verdict = filter_trajectory(trajectory)
    assert verdict.keep and verdict.reasons == frozenset()


def test_filter_turn_budget_means_no_final_answer(wotd_index):
    policy = ScriptedPolicy(
        [{"reasoning": "r", "tool": "search", "args": {"query": "halcyon"}}], repeat_last=True
    )
    trajectory = run_episode(policy, wotd_index, qa_fixture(), Budgets(max_turns=3))
    verdict = filter_trajectory(trajectory)
    assert not verdict.keep and verdict.reasons == {"no_final_answer"}


def test_filter_recoverable_validation_error_kept(wotd_index):
    steps = [
        {"reasoning": "bad", "tool": "search",
         "args": {"query": "halcyon", "recency_days": "-1"}},
        {"reasoning": "fixed", "tool": "search", "args": {"query": "halcyon"}},
        {"reasoning": "answer", "final": "Exact Answer: Maria Vogel"},
    ]
    trajectory = run_episode(ScriptedPolicy(steps), wotd_index, qa_fixture())
    assert trajectory.turns[0].observation_is_error
    verdict = filter_trajectory(trajectory)
    assert verdict.keep


def test_filter_undispatchable_flags_malformed(wotd_index):
    steps = [
        {"reasoning": "broken", "tool": "search", "raw_args": '{"query": '},
        {"reasoning": "recovered", "final": "Exact Answer: Maria Vogel"},
    ]
    trajectory = run_episode(ScriptedPolicy(steps), wotd_index, qa_fixture())
    verdict = filter_trajectory(trajectory)
    assert not verdict.keep and verdict.reasons == {"malformed_calls"}


def test_filter_overlong_context(wotd_index):
    trajectory = run_episode(
        ScriptedPolicy(SEARCH_OPEN_FIND_ANSWER), wotd_index, qa_fixture()
    )
    verdict = filter_trajectory(trajectory, FilterLimits(max_total_tokens=10))
    assert not verdict.keep and "overlong_context" in verdict.reasons


def test_rejection_sampling_two_by_two(wotd_index):
    keep_a = run_episode(ScriptedPolicy(ANSWER_NOW), wotd_index, qa_fixture(), seed=0)
    keep_b = run_episode(ScriptedPolicy(ANSWER_NOW), wotd_index, qa_fixture(), seed=1)
    drop_policy = ScriptedPolicy(
        [{"reasoning": "r", "tool": "search", "args": {"query": "halcyon"}}], repeat_last=True
    )
    drop_a = run_episode(drop_policy, wotd_index, qa_fixture(), Budgets(max_turns=2), seed=2)
    drop_policy2 = ScriptedPolicy(
        [{"reasoning": "r", "tool": "search", "args": {"query": "halcyon"}}], repeat_last=True
    )
    drop_b = run_episode(drop_policy2, wotd_index, qa_fixture(), Budgets(max_turns=2), seed=3)
    trajectories = [keep_a, keep_b, drop_a, drop_b]
    verdicts = {
        ("wotd-1", 0): True,
        ("wotd-1", 1): False,
        ("wotd-1", 2): True,
        ("wotd-1", 3): False,
    }
    result = rejection_sample(trajectories, verdicts)
    assert [t.seed for t in result.training_set] == [0]
    assert result.counts == {
        "keep_correct": 1,
        "keep_incorrect": 1,
        "drop_correct": 1,
        "drop_incorrect": 1,
    }


def test_rejection_sampling_missing_verdict(wotd_index):
    trajectory = run_episode(ScriptedPolicy(ANSWER_NOW), wotd_index, qa_fixture(), seed=7)
    with pytest.raises(OrchestratorError, match="qid='wotd-1' seed=7"):
        rejection_sample([trajectory], {})


# -- serialization --------------------------------------------------------------


def test_serialize_roundtrip(wotd_index):
    trajectory = run_episode(
        ScriptedPolicy(SEARCH_OPEN_FIND_ANSWER), wotd_index, qa_fixture(), seed=11,
        metadata={"temperature": 1.0, "top_p": 0.95},
    )
    line = serialize_trajectory(trajectory)
    assert "\n" not in line
    json.loads(line)  # valid single-line JSON
    restored = deserialize_trajectory(line)
    assert restored == trajectory
    assert serialize_trajectory(restored) == line


def test_serialize_rejects_future_version(wotd_index):
    trajectory = run_episode(ScriptedPolicy(ANSWER_NOW), wotd_index, qa_fixture())
    record = json.loads(serialize_trajectory(trajectory))
    record["version"] = 2
    with pytest.raises(TrajectoryVersionError, match="version 2"):
        deserialize_trajectory(json.dumps(record))


# -- scripted policy book ---------------------------------------------------------


def test_policy_book_resolution(tmp_path):
    book_path = tmp_path / "book.json"
    book_path.write_text(
        json.dumps(
            {
                "q1": {"0": ANSWER_NOW, "*": SEARCH_OPEN_FIND_ANSWER},
                "*": {"*": ANSWER_NOW},
            }
        ),
        encoding="utf-8",
    )
    book = ScriptedPolicyBook.load(book_path)
    assert book.for_episode("q1", 0).steps == ANSWER_NOW
    assert book.for_episode("q1", 5).steps == SEARCH_OPEN_FIND_ANSWER
    assert book.for_episode("unknown", 9).steps == ANSWER_NOW
