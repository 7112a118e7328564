"""Operator CLI: ingest, index, serve, synthesize, filter, judge, analyze.

Exit codes: 0 ok, 1 configuration error (bad flags/config/fields), 2 runtime
error. Long commands (synthesize, judge) are resumable: each finished
(qid, seed) unit is persisted under the output directory, completed units are
skipped on re-run, and the final JSONL is rewritten in sorted grid order so
an interrupted-then-resumed run is byte-identical to an uninterrupted one.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from . import corpus as corpus_mod
from .analytics import build_report, correct_flags, write_report
from .browser import BrowserConfig
from .config import ConfigError, RunConfig, load_config
from .judge import JudgeTransportError, JudgeVerdict, judge as judge_op, string_judge
from .orchestrator import (
    Budgets,
    FilterLimits,
    filter_trajectory,
    read_trajectories,
    rejection_sample,
    run_episode,
    serialize_trajectory,
)
from .policy import HttpChatPolicy, ScriptedPolicyBook
from .retrieval import build_index, load_index
from .server import ToolServer

logger = logging.getLogger(__name__)

_UNSAFE = re.compile(r"[^A-Za-z0-9_.-]")


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on bad flags (flags mirror config fields)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _unit_name(qid: str, seed: int) -> str:
    safe = _UNSAFE.sub("_", qid)
    if safe != qid:
        safe = f"{safe}.{hashlib.sha256(qid.encode('utf-8')).hexdigest()[:8]}"
    return f"{safe}__{seed}.json"


# -- commands -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    manifest = corpus_mod.CorpusManifest()
    if args.resume_from and Path(args.resume_from).exists():
        manifest = corpus_mod.CorpusManifest.load(args.resume_from)
    total_added = 0
    total_rejected = 0
    for path in args.input or []:
        report = corpus_mod.ingest_documents(
            manifest, corpus_mod.iter_jsonl(path), role=args.role
        )
        total_added += len(report.added)
        total_rejected += len(report.rejected)
        manifest.note(f"ingested {path} role={args.role}: +{len(report.added)}")
    qa_instances = corpus_mod.load_qa(args.qa) if args.qa else []
    if args.gold:
        if not args.qa:
            raise ConfigError("--gold requires --qa (gold documents are planted per question)")
        by_qid = {qa.qid: qa for qa in qa_instances}
        gold_records: dict[str, list[dict]] = {}
        for record in corpus_mod.iter_jsonl(args.gold):
            qid = record.get("qid")
            if qid not in by_qid:
                raise ConfigError(f"gold record names unknown qid {qid!r}")
            gold_records.setdefault(qid, []).append(record)
        for qid, records in gold_records.items():
            corpus_mod.plant_gold(manifest, by_qid[qid], records)
        manifest.note(f"planted gold documents for {len(gold_records)} questions")
    manifest.save(args.output)
    if args.qa_out:
        corpus_mod.save_qa(qa_instances, args.qa_out)
    counts = manifest.counts_by_role()
    print(
        f"corpus: {len(manifest)} documents "
        f"({counts['gold']} gold, {counts['distractor']} distractor); "
        f"added {total_added}, rejected {total_rejected} -> {args.output}"
    )
    return 0


def cmd_index(args) -> int:
    manifest = corpus_mod.CorpusManifest.load(args.corpus)
    index = build_index(manifest, k1=args.k1, b=args.b)
    index.save(args.output)
    stats = index.stats()
    print(
        f"index: {stats.document_count} documents, {stats.total_postings} postings, "
        f"avg length {stats.average_document_length:.1f} tokens -> {args.output}"
    )
    return 0


def cmd_serve(args) -> int:
    index = load_index(args.index)
    server = ToolServer(index, host=args.host, port=args.port, browser_config=_browser_config(args))
    host, port = server.address
    print(f"serving tool calls on {host}:{port} (Ctrl-C to stop)", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


def _browser_config(args) -> Optional[BrowserConfig]:
    if getattr(args, "viewport_lines", None) is None:
        return None
    return BrowserConfig(viewport_lines=args.viewport_lines)


def _policy_factory(config: RunConfig):
    if config.policy.kind == "scripted":
        if not config.policy.script:
            raise ConfigError("config.policy.script is required when policy.kind is 'scripted'")
        book = ScriptedPolicyBook.load(config.policy.script)
        return lambda qid, seed: book.for_episode(qid, seed)
    if not config.policy.endpoint or not config.policy.model:
        raise ConfigError(
            "config.policy.endpoint and config.policy.model are required for http policies"
        )
    client = HttpChatPolicy(
        endpoint=config.policy.endpoint,
        model=config.policy.model,
        api_key_env=config.policy.api_key_env,
        temperature=config.policy.temperature,
        top_p=config.policy.top_p,
        max_in_flight=config.max_in_flight,
    )
    return lambda qid, seed: client


def cmd_synthesize(args) -> int:
    config = load_config(args.config)
    if args.output:
        config.output_dir = args.output
    if args.seeds:
        config.seeds_per_question = args.seeds
    if args.workers:
        config.workers = args.workers
    if not config.qa_path or not config.index_dir:
        raise ConfigError("config.qa and config.index_dir are required for synthesize")

    index = load_index(config.index_dir)
    qa_list = corpus_mod.load_qa(config.qa_path)
    factory = _policy_factory(config)
    out_dir = Path(config.output_dir)
    episodes_dir = out_dir / "episodes"
    episodes_dir.mkdir(parents=True, exist_ok=True)

    units = [(qa, seed) for qa in qa_list for seed in range(config.seeds_per_question)]
    pending = [
        (qa, seed)
        for qa, seed in units
        if not (episodes_dir / _unit_name(qa.qid, seed)).exists()
    ]

    def run_unit(unit) -> None:
        qa, seed = unit
        trajectory = run_episode(
            factory(qa.qid, seed),
            index,
            qa,
            config.budgets,
            seed,
            sources=config.sources,
            transport_retries=config.policy.transport_retries,
            metadata={
                "temperature": config.policy.temperature,
                "top_p": config.policy.top_p,
                "model": config.policy.model,
            },
        )
        path = episodes_dir / _unit_name(qa.qid, seed)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(serialize_trajectory(trajectory) + "\n", encoding="utf-8")
        tmp.replace(path)

    if config.workers <= 1:
        for unit in pending:
            run_unit(unit)
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(run_unit, pending))

    out_path = out_dir / "trajectories.jsonl"
    with out_path.open("w", encoding="utf-8") as fh:
        for qa, seed in sorted(units, key=lambda u: (u[0].qid, u[1])):
            fh.write((episodes_dir / _unit_name(qa.qid, seed)).read_text(encoding="utf-8"))
    print(
        f"synthesize: {len(units)} episodes ({len(units) - len(pending)} from ledger, "
        f"{len(pending)} new) -> {out_path}"
    )
    return 0


def cmd_filter(args) -> int:
    trajectories = read_trajectories(args.trajectories)
    limits = FilterLimits(max_total_tokens=args.max_total_tokens)
    out_path = Path(args.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    kept = 0
    with out_path.open("w", encoding="utf-8") as fh:
        for trajectory in trajectories:
            verdict = filter_trajectory(trajectory, limits)
            kept += int(verdict.keep)
            fh.write(
                json.dumps(
                    {
                        "qid": trajectory.qid,
                        "seed": trajectory.seed,
                        "keep": verdict.keep,
                        "reasons": sorted(verdict.reasons),
                    }
                )
                + "\n"
            )
    if args.kept_output:
        with Path(args.kept_output).open("w", encoding="utf-8") as fh:
            for trajectory in trajectories:
                if filter_trajectory(trajectory, limits).keep:
                    fh.write(serialize_trajectory(trajectory) + "\n")
    print(f"filter: kept {kept}/{len(trajectories)} -> {out_path}")
    return 0


def _make_judge(config: RunConfig):
    if config.judge.kind == "string":
        return string_judge

    import requests

    def http_client(prompt: str) -> str:
        import os

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(config.judge.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            response = requests.post(
                f"{config.judge.endpoint.rstrip('/')}/chat/completions",
                json={
                    "model": config.judge.model,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": 0.0,
                },
                headers=headers,
                timeout=120,
            )
        except requests.RequestException as exc:
            raise JudgeTransportError(str(exc)) from exc
        if response.status_code >= 500:
            raise JudgeTransportError(f"judge service returned {response.status_code}")
        response.raise_for_status()
        return response.json()["choices"][0]["message"]["content"]

    def model_judge(question: str, response: str, reference: str) -> JudgeVerdict:
        return judge_op(question, response, reference, http_client)

    return model_judge


def cmd_judge(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    trajectories = read_trajectories(args.trajectories)
    qa_list = corpus_mod.load_qa(args.qa)
    by_qid = {qa.qid: qa for qa in qa_list}
    judge_fn = _make_judge(config)

    verdicts_dir = Path(args.output).parent / "verdict_units"
    verdicts_dir.mkdir(parents=True, exist_ok=True)

    for trajectory in trajectories:
        unit = verdicts_dir / _unit_name(trajectory.qid, trajectory.seed)
        if unit.exists():
            continue
        qa = by_qid.get(trajectory.qid)
        if qa is None:
            raise ConfigError(f"trajectory names unknown qid {trajectory.qid!r}")
        if trajectory.final_answer:
            verdict = judge_fn(qa.question, trajectory.final_answer, qa.reference_answer)
        else:
            verdict = JudgeVerdict(
                extracted_final_answer="None",
                reasoning="no final answer to judge",
                correct=False,
                confidence=100,
            )
        record = {
            "qid": trajectory.qid,
            "seed": trajectory.seed,
            "correct": verdict.correct,
            "confidence": verdict.confidence,
            "extracted_final_answer": verdict.extracted_final_answer,
        }
        tmp = unit.with_suffix(".tmp")
        tmp.write_text(json.dumps(record, ensure_ascii=False) + "\n", encoding="utf-8")
        tmp.replace(unit)

    out_path = Path(args.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as fh:
        for trajectory in sorted(trajectories, key=lambda t: (t.qid, t.seed)):
            fh.write(
                (verdicts_dir / _unit_name(trajectory.qid, trajectory.seed)).read_text(
                    encoding="utf-8"
                )
            )
    print(f"judge: {len(trajectories)} verdicts ({config.judge.kind}) -> {out_path}")
    return 0


def _load_verdicts(path) -> dict[tuple[str, int], bool]:
    verdicts: dict[tuple[str, int], bool] = {}
    for record in corpus_mod.iter_jsonl(path):
        verdicts[(record["qid"], record["seed"])] = bool(record["correct"])
    return verdicts


def cmd_analyze(args) -> int:
    trajectories = read_trajectories(args.trajectories)
    verdicts = _load_verdicts(args.verdicts)
    corrects = correct_flags(trajectories, verdicts)
    gold_by_qid: dict[str, set[str]] = {}
    if args.qa:
        for qa in corpus_mod.load_qa(args.qa):
            gold_by_qid[qa.qid] = qa.gold_doc_ids
    report = build_report(
        trajectories,
        corrects,
        gold_by_qid,
        grid_bucket_width=args.bucket_width,
        histogram_bin_width=args.bin_width,
    )
    write_report(report, args.output)
    result = rejection_sample(
        trajectories, verdicts, FilterLimits(max_total_tokens=args.max_total_tokens)
    )
    (Path(args.output) / "rejection_sampling.json").write_text(
        json.dumps(
            {"training_set_size": len(result.training_set), "counts": result.counts}, indent=2
        )
        + "\n",
        encoding="utf-8",
    )
    print(
        f"analyze: {report.trajectory_count} trajectories, success rate "
        f"{report.success_rate:.3f}, training set {len(result.training_set)} -> {args.output}"
    )
    return 0


# -- parser ----------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="browselab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize + deduplicate raw records into a corpus manifest")
    p.add_argument("--input", action="append", help="raw JSONL ({url, title, body}); repeatable")
    p.add_argument("--role", default="distractor", choices=["distractor", "gold"])
    p.add_argument("--gold", help="gold JSONL ({qid, url, title, body}) planted per question")
    p.add_argument("--qa", help="QA JSONL to resolve --gold qids against")
    p.add_argument("--qa-out", help="write QA back with assigned gold_doc_ids")
    p.add_argument("--resume-from", help="extend an existing corpus manifest")
    p.add_argument("--output", required=True, help="corpus manifest JSONL to write")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="build the search index from a corpus manifest")
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True, help="index directory")
    p.add_argument("--k1", type=float, default=0.9)
    p.add_argument("--b", type=float, default=0.4)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("serve", help="serve tool calls over newline-delimited JSON")
    p.add_argument("--index", required=True, help="index directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8377)
    p.add_argument("--viewport-lines", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("synthesize", help="run the (question x seed) episode grid")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="override config.output_dir")
    p.add_argument("--seeds", type=int, help="override config.seeds_per_question")
    p.add_argument("--workers", type=int, help="override config.workers")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("filter", help="apply the trajectory quality filters")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--output", required=True, help="filter verdict JSONL")
    p.add_argument("--kept-output", help="also write the kept trajectories")
    p.add_argument("--max-total-tokens", type=int, default=128_000)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("judge", help="grade final answers against references")
    p.add_argument("--config", help="config with the judge section (default: offline string judge)")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--output", required=True, help="verdict JSONL")
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("analyze", help="emit the metrics report and plot data")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--verdicts", required=True, help="judge verdict JSONL")
    p.add_argument("--qa", help="QA JSONL with gold_doc_ids (enables gold-hit metrics)")
    p.add_argument("--output", required=True, help="report directory")
    p.add_argument("--bucket-width", type=int, default=10)
    p.add_argument("--bin-width", type=int, default=5)
    p.add_argument("--max-total-tokens", type=int, default=128_000)
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # runtime failures
        logger.debug("unhandled error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
