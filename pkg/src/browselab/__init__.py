"""browselab: an offline research environment and trajectory-synthesis pipeline.

A local corpus feeds a BM25 search index served through three browser
primitives (search, open, find); a ReAct-style loop records
reasoning-action-observation trajectories from any tool-calling policy; and
filtering, judging, and analytics turn those trajectories into training sets
and instrumentation reports.
"""

__version__ = "0.1.0"

from .browser import (
    BrowserConfig,
    BrowserSession,
    Citation,
    Observation,
    Page,
    PageKind,
    ToolCall,
    Viewport,
    parse_citation,
    render_page,
)
from .corpus import (
    CorpusError,
    CorpusManifest,
    Document,
    QAInstance,
    ingest_documents,
    load_qa,
    normalize_answer,
    plant_gold,
)
from .judge import JudgeVerdict, accuracy, judge, parse_verdict, render_verdict, string_judge
from .orchestrator import (
    Budgets,
    FilterVerdict,
    Termination,
    Trajectory,
    Turn,
    deserialize_trajectory,
    filter_trajectory,
    rejection_sample,
    run_episode,
    serialize_trajectory,
)
from .prompts import render_system_prompt, render_user_prompt, tool_schemas
from .retrieval import Bm25Index, SearchHit, build_index, load_index
from .server import ToolServer

__all__ = [
    "Bm25Index",
    "BrowserConfig",
    "BrowserSession",
    "Budgets",
    "Citation",
    "CorpusError",
    "CorpusManifest",
    "Document",
    "FilterVerdict",
    "JudgeVerdict",
    "Observation",
    "Page",
    "PageKind",
    "QAInstance",
    "SearchHit",
    "Termination",
    "ToolCall",
    "ToolServer",
    "Trajectory",
    "Turn",
    "Viewport",
    "accuracy",
    "build_index",
    "deserialize_trajectory",
    "filter_trajectory",
    "ingest_documents",
    "judge",
    "load_index",
    "load_qa",
    "normalize_answer",
    "parse_citation",
    "parse_verdict",
    "plant_gold",
    "rejection_sample",
    "render_page",
    "render_system_prompt",
    "render_user_prompt",
    "render_verdict",
    "run_episode",
    "serialize_trajectory",
    "string_judge",
    "tool_schemas",
]
