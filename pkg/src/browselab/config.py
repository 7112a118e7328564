"""Run configuration: one JSON file, environment-variable overrides for
anything secret or deployment-specific. API keys never live in the file;
the config only names the environment variable that holds them."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .orchestrator import Budgets, OrchestratorError


class ConfigError(Exception):
    pass


@dataclass
class PolicyConfig:
    kind: str = "http"  # "http" | "scripted"
    endpoint: Optional[str] = None
    model: Optional[str] = None
    temperature: float = 1.0
    top_p: float = 0.95
    api_key_env: str = "BROWSELAB_POLICY_API_KEY"
    script: Optional[str] = None  # path to a ScriptedPolicyBook JSON
    transport_retries: int = 3


@dataclass
class JudgeConfig:
    kind: str = "string"  # "string" | "http"
    endpoint: Optional[str] = None
    model: Optional[str] = None
    api_key_env: str = "BROWSELAB_JUDGE_API_KEY"


@dataclass
class RunConfig:
    corpus_path: Optional[str] = None
    qa_path: Optional[str] = None
    index_dir: Optional[str] = None
    output_dir: str = "runs/out"
    seeds_per_question: int = 16
    workers: int = 4
    max_in_flight: int = 8
    sources: str = "web"
    budgets: Budgets = field(default_factory=Budgets)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    judge: JudgeConfig = field(default_factory=JudgeConfig)


_ENV_OVERRIDES = {
    "BROWSELAB_POLICY_ENDPOINT": ("policy", "endpoint"),
    "BROWSELAB_POLICY_MODEL": ("policy", "model"),
    "BROWSELAB_JUDGE_ENDPOINT": ("judge", "endpoint"),
    "BROWSELAB_JUDGE_MODEL": ("judge", "model"),
}


def load_config(path: str | Path, env: Optional[dict] = None) -> RunConfig:
    """Parse and validate a config file; error messages name the bad field."""
    env = os.environ if env is None else env
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(raw, env)


def _take(raw: dict, key: str, expected, where: str):
    value = raw.pop(key)
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, expected) or isinstance(value, bool) and expected is not bool:
        names = (
            expected.__name__
            if not isinstance(expected, tuple)
            else " or ".join(e.__name__ for e in expected)
        )
        raise ConfigError(f"{where}.{key} must be {names}")
    return value


def parse_config(raw: dict, env: Optional[dict] = None) -> RunConfig:
    env = os.environ if env is None else env
    raw = dict(raw)
    config = RunConfig()

    policy_present = "policy" in raw
    judge_present = "judge" in raw

    for key, attr, expected in (
        ("corpus", "corpus_path", str),
        ("qa", "qa_path", str),
        ("index_dir", "index_dir", str),
        ("output_dir", "output_dir", str),
        ("seeds_per_question", "seeds_per_question", int),
        ("workers", "workers", int),
        ("max_in_flight", "max_in_flight", int),
        ("sources", "sources", str),
    ):
        if key in raw:
            setattr(config, attr, _take(raw, key, expected, "config"))

    if "budgets" in raw:
        budgets_raw = raw.pop("budgets")
        if not isinstance(budgets_raw, dict):
            raise ConfigError("config.budgets must be an object")
        known = {"max_turns", "max_total_tokens", "topn_per_search"}
        unknown = set(budgets_raw) - known
        if unknown:
            raise ConfigError(f"config.budgets has unknown field {sorted(unknown)[0]!r}")
        try:
            config.budgets = Budgets(**{k: int(v) for k, v in budgets_raw.items()})
        except (TypeError, ValueError, OrchestratorError) as exc:
            raise ConfigError(f"config.budgets invalid: {exc}") from None

    if "policy" in raw:
        policy_raw = raw.pop("policy")
        if not isinstance(policy_raw, dict):
            raise ConfigError("config.policy must be an object")
        policy = PolicyConfig()
        for key in ("kind", "endpoint", "model", "api_key_env", "script"):
            if key in policy_raw and policy_raw[key] is not None:
                policy_raw_value = policy_raw.pop(key)
                if not isinstance(policy_raw_value, str):
                    raise ConfigError(f"config.policy.{key} must be str")
                setattr(policy, key, policy_raw_value)
            else:
                policy_raw.pop(key, None)
        for key in ("temperature", "top_p"):
            if key in policy_raw:
                setattr(policy, key, float(_take(policy_raw, key, (int, float), "config.policy")))
        if "transport_retries" in policy_raw:
            policy.transport_retries = _take(policy_raw, "transport_retries", int, "config.policy")
        if policy_raw:
            raise ConfigError(f"config.policy has unknown field {sorted(policy_raw)[0]!r}")
        if policy.kind not in ("http", "scripted"):
            raise ConfigError("config.policy.kind must be 'http' or 'scripted'")
        config.policy = policy

    if "judge" in raw:
        judge_raw = raw.pop("judge")
        if not isinstance(judge_raw, dict):
            raise ConfigError("config.judge must be an object")
        judge = JudgeConfig()
        for key in ("kind", "endpoint", "model", "api_key_env"):
            if key in judge_raw and judge_raw[key] is not None:
                value = judge_raw.pop(key)
                if not isinstance(value, str):
                    raise ConfigError(f"config.judge.{key} must be str")
                setattr(judge, key, value)
            else:
                judge_raw.pop(key, None)
        if judge_raw:
            raise ConfigError(f"config.judge has unknown field {sorted(judge_raw)[0]!r}")
        if judge.kind not in ("string", "http"):
            raise ConfigError("config.judge.kind must be 'string' or 'http'")
        config.judge = judge

    if raw:
        raise ConfigError(f"config has unknown field {sorted(raw)[0]!r}")

    for env_key, (section, attr) in _ENV_OVERRIDES.items():
        if env.get(env_key):
            setattr(getattr(config, section), attr, env[env_key])

    if config.seeds_per_question <= 0:
        raise ConfigError("config.seeds_per_question must be positive")
    if config.workers <= 0:
        raise ConfigError("config.workers must be positive")
    # requirement checks apply only when the section was actually configured;
    # commands that need a policy/judge re-check at use time
    if policy_present:
        if config.policy.kind == "scripted" and not config.policy.script:
            raise ConfigError("config.policy.script is required when policy.kind is 'scripted'")
        if config.policy.kind == "http" and (not config.policy.endpoint or not config.policy.model):
            raise ConfigError(
                "config.policy.endpoint and config.policy.model are required for http policies"
            )
    if judge_present and config.judge.kind == "http" and (
        not config.judge.endpoint or not config.judge.model
    ):
        raise ConfigError("config.judge.endpoint and config.judge.model are required for http judges")
    return config
