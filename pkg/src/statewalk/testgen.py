"""Test cases from root-to-leaf paths of a knowledge graph."""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .executor import AppDriver, ExecutorConfig, Outcome, execute
from .graph import KnowledgeGraph, TransitionEdge
from .graphio import atomic_write_text
from .state import Action, fingerprint

DEFAULT_TAG_RULES: tuple[tuple[str, str], ...] = (
    ("checkout", r"checkout|delivery|thank|order"),
    ("auth", r"login|log in|sign in|password|account|dashboard"),
    ("cart", r"cart"),
    ("search", r"search|results"),
)


@dataclass(frozen=True)
class TestStep:
    __test__ = False

    action: Action
    expected_fingerprint: str

    def to_dict(self) -> dict[str, Any]:
        a = self.action.to_dict()
        return {
            "action_type": a["action_type"],
            "selector": a["target_selector"],
            "payload": a["payload"],
            "description": a["description"],
            "target_attributes": a["target_attributes"],
            "expected_fingerprint": self.expected_fingerprint,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TestStep:
        action = Action.from_dict({
            "action_type": d["action_type"],
            "target_selector": d["selector"],
            "payload": d.get("payload"),
            "description": d.get("description", ""),
            "target_attributes": d.get("target_attributes") or {},
        })
        return cls(action, d["expected_fingerprint"])


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    id: str
    title: str
    steps: tuple[TestStep, ...]
    tags: frozenset[str] = frozenset()
    start_fingerprint: str | None = None

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a test case needs at least one step")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "title": self.title,
            "tags": sorted(self.tags),
            "start_fingerprint": self.start_fingerprint,
            "steps": [s.to_dict() for s in self.steps],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TestCase:
        return cls(d["id"], d.get("title", ""), tuple(TestStep.from_dict(s) for s in d["steps"]),
                   frozenset(d.get("tags") or ()), d.get("start_fingerprint"))

    @classmethod
    def loads(cls, text: str) -> TestCase:
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | os.PathLike) -> TestCase:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class TestGenConfig:
    __test__ = False

    path_budget: int = 10_000
    tag_rules: tuple[tuple[str, str], ...] = DEFAULT_TAG_RULES


@dataclass
class PathEnumeration:
    paths: list[list[TransitionEdge]]
    truncated: bool = False


def enumerate_paths(g: KnowledgeGraph, budget: int = 10_000) -> PathEnumeration:
    """Simple root-to-leaf paths, depth-first in edge insertion order.

    Edges back into a node already on the current path are skipped.  A
    node whose remaining out-edges are all such back-edges ends the path,
    as does a node with no out-edges at all.
    """
    out: list[list[TransitionEdge]] = []
    if g.root is None:
        return PathEnumeration(out)
    truncated = False
    path: list[TransitionEdge] = []
    on_path = {g.root}

    def dfs(u: str) -> None:
        nonlocal truncated
        if truncated:
            return
        nxt = [e for e in g.out_edges(u) if e.target not in on_path]
        if not nxt:
            if len(out) >= budget:
                truncated = True
                return
            out.append(list(path))
            return
        for e in nxt:
            path.append(e)
            on_path.add(e.target)
            dfs(e.target)
            on_path.discard(e.target)
            path.pop()
            if truncated:
                return

    dfs(g.root)
    return PathEnumeration(out, truncated)


def case_id(path: list[TransitionEdge]) -> str:
    h = hashlib.sha256()
    for e in path:
        h.update(json.dumps([e.source, e.action.key, e.target], separators=(",", ":")).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()[:16]


def _tags(text: str, rules) -> frozenset[str]:
    return frozenset(tag for tag, pattern in rules if re.search(pattern, text, re.IGNORECASE))


def generate(g: KnowledgeGraph, config: TestGenConfig = TestGenConfig()) -> list[TestCase]:
    cases = []
    for path in enumerate_paths(g, config.path_budget).paths:
        if not path:
            continue
        steps = tuple(TestStep(e.action, e.target) for e in path)
        title = " -> ".join(e.action.description or e.action.action_type.value for e in path)
        urls = " ".join(g.node(e.target).fingerprint.url_path for e in path)
        cases.append(TestCase(case_id(path), title, steps, _tags(title + " " + urls, config.tag_rules), g.root))
    return cases


def write_cases(cases: list[TestCase], out_dir: str | os.PathLike) -> list[Path]:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for c in cases:
        p = d / f"{c.id}.case"
        atomic_write_text(p, c.dumps())
        paths.append(p)
    return paths


@dataclass(frozen=True)
class Verdict:
    passed: bool
    failed_step: int | None = None  # 1-based
    diagnostic: str = ""

    def __str__(self) -> str:
        if self.passed:
            return "pass"
        return f"fail at step {self.failed_step}: {self.diagnostic}"


def replay(driver: AppDriver, case: TestCase, config: ExecutorConfig = ExecutorConfig()) -> Verdict:
    """Reset the driver and run the case, checking fingerprints after each step."""
    try:
        driver.reset()
        obs = driver.observe()
    except Exception as exc:  # driver failures are verdict data here
        return Verdict(False, 1, f"driver unavailable: {exc}")
    if case.start_fingerprint is not None:
        actual = fingerprint(obs, config.fingerprint).digest
        if actual != case.start_fingerprint:
            return Verdict(False, 1, f"start state {actual[:12]} != expected {case.start_fingerprint[:12]}")
    for k, step in enumerate(case.steps, 1):
        try:
            r = execute(driver, step.action, obs, config)
        except Exception as exc:
            return Verdict(False, k, f"driver error: {exc}")
        if r.outcome is Outcome.FAILED:
            return Verdict(False, k, r.error or "action failed")
        if r.after.digest != step.expected_fingerprint:
            return Verdict(False, k, f"reached {r.after.digest[:12]}, expected {step.expected_fingerprint[:12]}")
        obs = r.after_obs
    return Verdict(True)
