"""Instrumentation over synthesized trajectories.

Everything here is a pure function of immutable inputs: gold-hit events come
from the structured doc identities recorded at synthesis time (never from
re-parsing rendered text), conditional statistics report None for empty
condition sets (a 0 would corrupt Bayes-consistency checks), and pass@k uses
the unbiased combinatorial estimator.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .orchestrator import Termination, ToolCallAction, Trajectory


class AnalyticsError(Exception):
    pass


# -- gold-hit events ----------------------------------------------------------


@dataclass(frozen=True)
class GoldHitEvents:
    """Per-trajectory gold exposure. A search-hit surfaces a gold document in
    returned results; an open-hit actually opens one as a page. Turn numbers
    are 1-based."""

    first_search_hit_turn: Optional[int]
    first_open_hit_turn: Optional[int]
    distinct_gold_opened: int
    search_hit_flags: tuple[bool, ...]
    open_hit_flags: tuple[bool, ...]

    @property
    def has_search_hit(self) -> bool:
        return self.first_search_hit_turn is not None

    @property
    def has_open_hit(self) -> bool:
        return self.first_open_hit_turn is not None


def gold_events(trajectory: Trajectory, gold_doc_ids: Iterable[str]) -> GoldHitEvents:
    gold = set(gold_doc_ids)
    search_flags: list[bool] = []
    open_flags: list[bool] = []
    first_search: Optional[int] = None
    first_open: Optional[int] = None
    opened: set[str] = set()
    for turn_no, turn in enumerate(trajectory.turns, start=1):
        search_hit = any(doc_id in gold for doc_id in turn.result_doc_ids)
        open_hit = turn.opened_doc_id is not None and turn.opened_doc_id in gold
        search_flags.append(search_hit)
        open_flags.append(open_hit)
        if search_hit and first_search is None:
            first_search = turn_no
        if open_hit:
            if first_open is None:
                first_open = turn_no
            opened.add(turn.opened_doc_id)
    return GoldHitEvents(
        first_search_hit_turn=first_search,
        first_open_hit_turn=first_open,
        distinct_gold_opened=len(opened),
        search_hit_flags=tuple(search_flags),
        open_hit_flags=tuple(open_flags),
    )


# -- conditional statistics ---------------------------------------------------


@dataclass(frozen=True)
class ConditionalStats:
    """Empirical conditionals linking gold exposure to correctness. A None
    means the conditioning event never occurred."""

    p_correct_given_search_hit: Optional[float]
    p_correct_given_open_hit: Optional[float]
    p_search_hit_given_correct: Optional[float]
    p_open_hit_given_correct: Optional[float]


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


def conditional_stats(
    events: Sequence[GoldHitEvents], corrects: Sequence[bool]
) -> ConditionalStats:
    if len(events) != len(corrects):
        raise AnalyticsError("events and verdicts must align one-to-one")
    search_hits = sum(1 for e in events if e.has_search_hit)
    open_hits = sum(1 for e in events if e.has_open_hit)
    correct_total = sum(1 for c in corrects if c)
    correct_and_search = sum(1 for e, c in zip(events, corrects) if c and e.has_search_hit)
    correct_and_open = sum(1 for e, c in zip(events, corrects) if c and e.has_open_hit)
    return ConditionalStats(
        p_correct_given_search_hit=_ratio(correct_and_search, search_hits),
        p_correct_given_open_hit=_ratio(correct_and_open, open_hits),
        p_search_hit_given_correct=_ratio(correct_and_search, correct_total),
        p_open_hit_given_correct=_ratio(correct_and_open, correct_total),
    )


# -- pass@k --------------------------------------------------------------------


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased estimator 1 - C(n-c, k)/C(n, k) in stable product form."""
    if not 0 <= c <= n:
        raise AnalyticsError(f"need 0 <= c <= n, got c={c} n={n}")
    if not 1 <= k <= n:
        raise AnalyticsError(f"need 1 <= k <= n, got k={k} n={n}")
    if c == 0:
        return 0.0
    if n - c < k:
        return 1.0
    product = 1.0
    for i in range(k):
        product *= (n - c - i) / (n - i)
    return 1.0 - product


def dataset_pass_at_k(correct_counts: Sequence[int], n: int, k: int) -> float:
    """Mean single-question pass@k over the dataset."""
    if not correct_counts:
        raise AnalyticsError("dataset pass@k needs at least one question")
    return sum(pass_at_k(n, c, k) for c in correct_counts) / len(correct_counts)


# -- tool usage ------------------------------------------------------------------


@dataclass(frozen=True)
class ToolUsageRow:
    count: int
    rate: float
    avg_tool_calls: float
    avg_searches: float
    max_tool_calls: int
    max_searches: int


@dataclass(frozen=True)
class ToolUsageStats:
    """Success / Failure / All rows; a bucket with no trajectories is None."""

    success: Optional[ToolUsageRow]
    failure: Optional[ToolUsageRow]
    all: ToolUsageRow


def _usage_row(trajectories: Sequence[Trajectory], total: int) -> Optional[ToolUsageRow]:
    if not trajectories:
        return None
    calls = [t.tool_call_count for t in trajectories]
    searches = [t.calls_by_tool().get("search", 0) for t in trajectories]
    return ToolUsageRow(
        count=len(trajectories),
        rate=len(trajectories) / total,
        avg_tool_calls=sum(calls) / len(calls),
        avg_searches=sum(searches) / len(searches),
        max_tool_calls=max(calls),
        max_searches=max(searches),
    )


def tool_usage_stats(
    trajectories: Sequence[Trajectory], corrects: Sequence[bool]
) -> ToolUsageStats:
    if not trajectories:
        raise AnalyticsError("tool usage stats need at least one trajectory")
    if len(trajectories) != len(corrects):
        raise AnalyticsError("trajectories and verdicts must align one-to-one")
    wins = [t for t, c in zip(trajectories, corrects) if c]
    losses = [t for t, c in zip(trajectories, corrects) if not c]
    total = len(trajectories)
    return ToolUsageStats(
        success=_usage_row(wins, total),
        failure=_usage_row(losses, total),
        all=_usage_row(list(trajectories), total),
    )


def per_tool_averages(
    trajectories: Sequence[Trajectory], corrects: Sequence[bool]
) -> dict[str, dict[str, Optional[float]]]:
    """Average calls per primitive, split by outcome (None for empty buckets)."""
    if len(trajectories) != len(corrects):
        raise AnalyticsError("trajectories and verdicts must align one-to-one")
    buckets = {
        "success": [t for t, c in zip(trajectories, corrects) if c],
        "failure": [t for t, c in zip(trajectories, corrects) if not c],
        "all": list(trajectories),
    }
    out: dict[str, dict[str, Optional[float]]] = {}
    for tool in ("search", "open", "find"):
        out[tool] = {}
        for name, bucket in buckets.items():
            if not bucket:
                out[tool][name] = None
            else:
                out[tool][name] = sum(t.calls_by_tool().get(tool, 0) for t in bucket) / len(bucket)
    return out


def tool_call_histogram(
    trajectories: Sequence[Trajectory],
    corrects: Sequence[bool],
    bin_width: int = 5,
) -> dict:
    """Tool-call count distribution split by outcome, plus per-bucket medians."""
    if bin_width <= 0:
        raise AnalyticsError("bin_width must be positive")
    if len(trajectories) != len(corrects):
        raise AnalyticsError("trajectories and verdicts must align one-to-one")
    wins = [t.tool_call_count for t, c in zip(trajectories, corrects) if c]
    losses = [t.tool_call_count for t, c in zip(trajectories, corrects) if not c]
    top = max([t.tool_call_count for t in trajectories], default=0)
    n_bins = top // bin_width + 1
    bins = []
    for i in range(n_bins):
        lo, hi = i * bin_width, (i + 1) * bin_width
        bins.append(
            {
                "lo": lo,
                "hi": hi,
                "success": sum(1 for v in wins if lo <= v < hi),
                "failure": sum(1 for v in losses if lo <= v < hi),
            }
        )
    return {
        "bin_width": bin_width,
        "bins": bins,
        "median_success": statistics.median(wins) if wins else None,
        "median_failure": statistics.median(losses) if losses else None,
    }


# -- solve-rate distribution -----------------------------------------------------


@dataclass(frozen=True)
class SolveRateDistribution:
    """Histogram of per-question solve rates c/n over fixed edges {0, 1/n, .., 1}.

    Bin i covers [i/n, (i+1)/n); the last bin is closed, so c == n lands in
    bin n-1. Mean and median are over the raw rates.
    """

    n: int
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    mean: float
    median: float


def solve_rate_distribution(correct_counts: Sequence[int], n: int) -> SolveRateDistribution:
    if n <= 0:
        raise AnalyticsError("n must be positive")
    if not correct_counts:
        raise AnalyticsError("solve-rate distribution needs at least one question")
    for c in correct_counts:
        if not 0 <= c <= n:
            raise AnalyticsError(f"correct count {c} outside [0, {n}]")
    counts = [0] * n
    for c in correct_counts:
        counts[min(c, n - 1)] += 1
    rates = [c / n for c in correct_counts]
    return SolveRateDistribution(
        n=n,
        bin_edges=tuple(i / n for i in range(n + 1)),
        counts=tuple(counts),
        mean=sum(rates) / len(rates),
        median=statistics.median(rates),
    )


# -- open-hit timing x coverage grid -----------------------------------------------


@dataclass(frozen=True)
class GridCell:
    count: int
    accuracy: float


@dataclass(frozen=True)
class OpenHitGrid:
    """Rows keyed by first-open-turn bucket ("1-10", ...) plus a "none" row
    for trajectories that never opened a gold document. Cells are keyed by
    distinct gold documents opened; empty cells are simply absent."""

    bucket_width: int
    rows: dict[str, dict[int, GridCell]] = field(default_factory=dict)
    none_row: Optional[GridCell] = None


def open_hit_grid(
    events: Sequence[GoldHitEvents],
    corrects: Sequence[bool],
    bucket_width: int = 10,
) -> OpenHitGrid:
    if bucket_width <= 0:
        raise AnalyticsError("bucket_width must be positive")
    if len(events) != len(corrects):
        raise AnalyticsError("events and verdicts must align one-to-one")
    tallies: dict[tuple[str, int], list[int]] = {}
    none_tally = [0, 0]  # count, correct
    for event, correct in zip(events, corrects):
        if event.first_open_hit_turn is None:
            none_tally[0] += 1
            none_tally[1] += int(correct)
            continue
        bucket = (event.first_open_hit_turn - 1) // bucket_width
        label = f"{bucket * bucket_width + 1}-{(bucket + 1) * bucket_width}"
        cell = tallies.setdefault((label, event.distinct_gold_opened), [0, 0])
        cell[0] += 1
        cell[1] += int(correct)
    rows: dict[str, dict[int, GridCell]] = {}
    for (label, coverage), (count, correct) in sorted(
        tallies.items(), key=lambda item: (int(item[0][0].split("-")[0]), item[0][1])
    ):
        rows.setdefault(label, {})[coverage] = GridCell(count=count, accuracy=correct / count)
    none_row = (
        GridCell(count=none_tally[0], accuracy=none_tally[1] / none_tally[0])
        if none_tally[0]
        else None
    )
    return OpenHitGrid(bucket_width=bucket_width, rows=rows, none_row=none_row)


# -- full report -------------------------------------------------------------------


@dataclass
class MetricsReport:
    trajectory_count: int
    question_count: int
    seeds_per_question: int
    success_rate: float
    tool_usage: ToolUsageStats
    per_tool: dict
    tool_histogram: dict
    pass_at_k_table: dict[int, float]
    conditional: ConditionalStats
    solve_rate: SolveRateDistribution
    grid: OpenHitGrid

    def to_json_dict(self) -> dict:
        def usage_row(row: Optional[ToolUsageRow]) -> Optional[dict]:
            if row is None:
                return None
            return {
                "count": row.count,
                "rate": row.rate,
                "avg_tool_calls": row.avg_tool_calls,
                "avg_searches": row.avg_searches,
                "max_tool_calls": row.max_tool_calls,
                "max_searches": row.max_searches,
            }

        return {
            "trajectory_count": self.trajectory_count,
            "question_count": self.question_count,
            "seeds_per_question": self.seeds_per_question,
            "success_rate": self.success_rate,
            "tool_usage": {
                "success": usage_row(self.tool_usage.success),
                "failure": usage_row(self.tool_usage.failure),
                "all": usage_row(self.tool_usage.all),
            },
            "per_tool_averages": self.per_tool,
            "tool_call_histogram": self.tool_histogram,
            "pass_at_k": {str(k): v for k, v in self.pass_at_k_table.items()},
            "conditional": {
                "p_correct_given_search_hit": self.conditional.p_correct_given_search_hit,
                "p_correct_given_open_hit": self.conditional.p_correct_given_open_hit,
                "p_search_hit_given_correct": self.conditional.p_search_hit_given_correct,
                "p_open_hit_given_correct": self.conditional.p_open_hit_given_correct,
            },
            "solve_rate": {
                "n": self.solve_rate.n,
                "bin_edges": list(self.solve_rate.bin_edges),
                "counts": list(self.solve_rate.counts),
                "mean": self.solve_rate.mean,
                "median": self.solve_rate.median,
            },
            "open_hit_grid": {
                "bucket_width": self.grid.bucket_width,
                "rows": {
                    label: {
                        str(cov): {"count": cell.count, "accuracy": cell.accuracy}
                        for cov, cell in cells.items()
                    }
                    for label, cells in self.grid.rows.items()
                },
                "none": (
                    {"count": self.grid.none_row.count, "accuracy": self.grid.none_row.accuracy}
                    if self.grid.none_row
                    else None
                ),
            },
        }


def build_report(
    trajectories: Sequence[Trajectory],
    corrects: Sequence[bool],
    gold_by_qid: dict[str, set[str]],
    ks: Sequence[int] = (1, 2, 4, 8, 16),
    grid_bucket_width: int = 10,
    histogram_bin_width: int = 5,
) -> MetricsReport:
    """Assemble every table from one trajectory set and aligned verdicts.

    ``n`` (samples per question) is inferred and must be uniform, matching
    the synthesis grid.
    """
    if not trajectories:
        raise AnalyticsError("report needs at least one trajectory")
    if len(trajectories) != len(corrects):
        raise AnalyticsError("trajectories and verdicts must align one-to-one")
    per_question: dict[str, list[bool]] = {}
    for trajectory, correct in zip(trajectories, corrects):
        per_question.setdefault(trajectory.qid, []).append(bool(correct))
    sizes = {len(v) for v in per_question.values()}
    if len(sizes) != 1:
        raise AnalyticsError(f"samples per question must be uniform, saw {sorted(sizes)}")
    n = sizes.pop()
    correct_counts = [sum(v) for v in per_question.values()]

    events = [
        gold_events(t, gold_by_qid.get(t.qid, set())) for t in trajectories
    ]
    usable_ks = [k for k in ks if 1 <= k <= n]
    return MetricsReport(
        trajectory_count=len(trajectories),
        question_count=len(per_question),
        seeds_per_question=n,
        success_rate=sum(map(bool, corrects)) / len(corrects),
        tool_usage=tool_usage_stats(trajectories, corrects),
        per_tool=per_tool_averages(trajectories, corrects),
        tool_histogram=tool_call_histogram(trajectories, corrects, histogram_bin_width),
        pass_at_k_table={k: dataset_pass_at_k(correct_counts, n, k) for k in usable_ks},
        conditional=conditional_stats(events, [bool(c) for c in corrects]),
        solve_rate=solve_rate_distribution(correct_counts, n),
        grid=open_hit_grid(events, [bool(c) for c in corrects], grid_bucket_width),
    )


def write_report(report: MetricsReport, directory: str | Path) -> None:
    """report.json plus one CSV per table (plot-ready data)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = report.to_json_dict()
    (directory / "report.json").write_text(
        json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )

    def write_csv(name: str, header: list[str], rows: Iterable[Sequence]) -> None:
        with (directory / name).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)

    usage = payload["tool_usage"]
    write_csv(
        "tool_usage.csv",
        ["bucket", "count", "rate", "avg_tool_calls", "avg_searches", "max_tool_calls", "max_searches"],
        [
            [name] + ["" if row is None else row[k] for k in
                      ("count", "rate", "avg_tool_calls", "avg_searches",
                       "max_tool_calls", "max_searches")]
            for name, row in usage.items()
        ],
    )
    write_csv(
        "per_tool_averages.csv",
        ["tool", "success", "failure", "all"],
        [
            [tool] + ["" if v is None else v for v in (cols["success"], cols["failure"], cols["all"])]
            for tool, cols in payload["per_tool_averages"].items()
        ],
    )
    write_csv(
        "pass_at_k.csv",
        ["k", "pass_at_k"],
        [[k, v] for k, v in payload["pass_at_k"].items()],
    )
    write_csv(
        "conditional.csv",
        ["statistic", "value"],
        [[k, "" if v is None else v] for k, v in payload["conditional"].items()],
    )
    write_csv(
        "solve_rate.csv",
        ["bin_lo", "bin_hi", "count"],
        [
            [payload["solve_rate"]["bin_edges"][i], payload["solve_rate"]["bin_edges"][i + 1], c]
            for i, c in enumerate(payload["solve_rate"]["counts"])
        ],
    )
    write_csv(
        "tool_call_histogram.csv",
        ["lo", "hi", "success", "failure"],
        [[b["lo"], b["hi"], b["success"], b["failure"]] for b in payload["tool_call_histogram"]["bins"]],
    )
    grid_rows = []
    for label, cells in payload["open_hit_grid"]["rows"].items():
        for coverage, cell in cells.items():
            grid_rows.append([label, coverage, cell["count"], cell["accuracy"]])
    if payload["open_hit_grid"]["none"]:
        none_cell = payload["open_hit_grid"]["none"]
        grid_rows.append(["none", 0, none_cell["count"], none_cell["accuracy"]])
    write_csv("open_hit_grid.csv", ["first_open_bucket", "distinct_gold_opened", "count", "accuracy"], grid_rows)


def correct_flags(
    trajectories: Sequence[Trajectory],
    verdicts: dict[tuple[str, int], bool],
) -> list[bool]:
    """Align a (qid, seed)->correct mapping with a trajectory sequence."""
    flags = []
    for t in trajectories:
        key = (t.qid, t.seed)
        if key not in verdicts:
            raise AnalyticsError(f"missing verdict for qid={t.qid!r} seed={t.seed}")
        flags.append(bool(verdicts[key]))
    return flags
