"""Candidate generation and next-action selection.

The explored store remembers which actions were executed from which
state and what happened.  Reasoners propose candidate actions for an
observation; :func:`select_next` picks from the reranked list.
"""

from __future__ import annotations

import json
import logging
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping, Protocol, Sequence
from urllib.parse import urldefrag, urljoin, urlsplit

from .dom import Document, Element, is_text_input, parse_markup
from .errors import RemoteReasonerUnavailable
from .reward import RewardScore
from .state import (DEFAULT_FINGERPRINT, Action, ActionType, FingerprintConfig, Observation,
                    StateFingerprint, fingerprint)
from .values import ValueDictionary

if TYPE_CHECKING:
    from .rerank import RankedAction

log = logging.getLogger(__name__)

REASONER_URL_ENV = "STATEWALK_REASONER_URL"
REASONER_TOKEN_ENV = "STATEWALK_REASONER_TOKEN"
REASONER_TIMEOUT_ENV = "STATEWALK_REASONER_TIMEOUT_MS"


def _d(s: StateFingerprint | str) -> str:
    return s.digest if isinstance(s, StateFingerprint) else s


class CandidateSource(str, Enum):
    HEURISTIC = "Heuristic"
    REMOTE = "Remote"


@dataclass(frozen=True)
class CandidateAction:
    action: Action
    novelty: float
    source: CandidateSource = CandidateSource.HEURISTIC

    def __post_init__(self):
        if not 0.0 <= self.novelty <= 1.0:
            raise ValueError("novelty must be in [0, 1]")

    @property
    def executed(self) -> bool:
        return self.novelty == 0.0


class CandidateList(list):
    """List of candidates plus a flag set when the remote reasoner was skipped."""

    degraded: bool = False
    warning: str | None = None


@dataclass
class ExploredStore:
    """Visited states, executed actions and their outcomes, keyed by digest.

    ``candidates`` holds the actionable candidate keys last inferred for a
    state and ``exhausted`` the states the explorer gave up on; both are
    loop bookkeeping on top of the three core maps.
    """

    visited: set[str] = field(default_factory=set)
    executed: dict[str, set[str]] = field(default_factory=dict)
    outcomes: dict[tuple[str, str], tuple[str | None, RewardScore]] = field(default_factory=dict)
    actions: dict[str, Action] = field(default_factory=dict)
    candidates: dict[str, list[str]] = field(default_factory=dict)
    exhausted: set[str] = field(default_factory=set)

    def visit(self, s: StateFingerprint | str) -> None:
        self.visited.add(_d(s))

    def was_executed(self, s: StateFingerprint | str, key: str) -> bool:
        return key in self.executed.get(_d(s), ())

    def set_candidates(self, s: StateFingerprint | str, keys: Iterable[str]) -> None:
        self.candidates[_d(s)] = list(keys)

    def candidates_known(self, s: StateFingerprint | str) -> bool:
        return _d(s) in self.candidates

    def untried(self, s: StateFingerprint | str) -> list[str]:
        done = self.executed.get(_d(s), set())
        return [k for k in self.candidates.get(_d(s), ()) if k not in done]

    def class_outcomes(self, action_class: tuple[str, str]) -> list[tuple[str | None, RewardScore]]:
        return [v for (s, k), v in self.outcomes.items() if self.actions[k].action_class == action_class]


def query_explored(store: ExploredStore, s: StateFingerprint | str) -> tuple[bool, set[str], list]:
    """(visited?, executed action keys, [(action key, result digest, reward)]) for ``s``."""
    d = _d(s)
    executed = set(store.executed.get(d, ()))
    outcomes = [(k, *store.outcomes[(d, k)]) for k in sorted(executed) if (d, k) in store.outcomes]
    return d in store.visited, executed, outcomes


def record_outcome(store: ExploredStore, s: StateFingerprint | str, action: Action,
                   result_state: StateFingerprint | str | None, reward: RewardScore) -> ExploredStore:
    d = _d(s)
    store.visited.add(d)
    store.executed.setdefault(d, set()).add(action.key)
    store.actions[action.key] = action
    target = _d(result_state) if result_state is not None else None
    if target is not None:
        store.visited.add(target)
    store.outcomes[(d, action.key)] = (target, reward)
    return store


# -- reasoners -----------------------------------------------------------------------

class Reasoner(Protocol):
    def propose(self, obs: Observation, explored: Sequence[str]) -> list[Action]:
        """Actions plausible on ``obs``; ``explored`` lists keys already executed there."""
        ...


_SKIP_SCHEMES = ("javascript:", "mailto:", "tel:", "data:")
_CLICK_INPUT_TYPES = frozenset({"button", "reset", "image"})


def _attrs(el: Element, doc: Document) -> tuple[tuple[str, str], ...]:
    out = [("tag", el.tag)]
    for k in ("id", "name", "type", "href", "action"):
        if k in el.attrs:
            out.append((k, el.attrs[k] or ""))
    return tuple(out)


def _label(el: Element) -> str:
    return el.text or el.get("value") or el.get("placeholder") or el.get("name") or el.get("id") or el.tag


def _is_submit_control(el: Element) -> bool:
    if el.tag == "button":
        return (el.get("type") or "submit").lower() == "submit" and el.closest("form") is not None
    return el.tag == "input" and (el.get("type") or "").lower() == "submit"


def _is_search_box(el: Element) -> bool:
    return (el.tag == "input" and (el.get("type") or "").lower() == "search"
            and el.closest("form") is None)


@dataclass
class HeuristicReasoner:
    """Deterministic DOM-walk reasoner.

    Document order: anchors become Navigate, buttons and onclick elements
    Click, text inputs FillField, each form a SubmitForm after its fields,
    standalone search boxes KeyInput (Enter), other ``on*`` handlers
    ScriptEvent.
    """

    values: ValueDictionary = field(default_factory=ValueDictionary)

    def propose(self, obs: Observation, explored: Sequence[str] = ()) -> list[Action]:
        doc = parse_markup(obs.page_source)
        origin = urlsplit(obs.url)[:2]
        out: list[Action] = []

        def emit(a: Action) -> None:
            if all(a.key != b.key for b in out):
                out.append(a)

        def walk(el: Element) -> None:
            sel = doc.selector_for(el)
            attrs = _attrs(el, doc)
            if el.tag == "a" and el.get("href") is not None:
                href = (el.get("href") or "").strip()
                if href and not href.lower().startswith(_SKIP_SCHEMES) and not href.startswith("#"):
                    url = urldefrag(urljoin(obs.url, href))[0]
                    if urlsplit(url)[:2] == origin:
                        emit(Action(ActionType.NAVIGATE, sel, attrs, url, f"navigate to {_label(el)}"))
            elif (el.tag == "button" and not _is_submit_control(el)) or (
                    el.tag == "input" and (el.get("type") or "").lower() in _CLICK_INPUT_TYPES):
                emit(Action(ActionType.CLICK, sel, attrs, None, f"click {_label(el)}"))
            elif "onclick" in el.attrs:
                emit(Action(ActionType.CLICK, sel, attrs, None, f"click {_label(el)}"))
            if is_text_input(el) and el.get("name"):
                value = self.values.value_for(el.get("name"), el.get("type"))
                emit(Action(ActionType.FILL_FIELD, sel, attrs, value, f"fill {el.get('name')}"))
                if _is_search_box(el):
                    emit(Action(ActionType.KEY_INPUT, sel, attrs, (("key", "Enter"), ("text", value)),
                                f"search {value}"))
            for name in sorted(el.attrs):
                if name.startswith("on") and name != "onclick" and len(name) > 2:
                    emit(Action(ActionType.SCRIPT_EVENT, sel, attrs, name[2:], f"{name[2:]} {_label(el)}"))
            for c in el.children:
                walk(c)
            if el.tag == "form":
                payload = []
                for f in (e for e in doc.elements if el in e.ancestors()):
                    if is_text_input(f) and f.get("name"):
                        payload.append((f.get("name"), self.values.value_for(f.get("name"), f.get("type"))))
                submit = next((e for e in doc.elements if el in e.ancestors() and _is_submit_control(e)), None)
                label = _label(submit) if submit is not None else (el.get("id") or "form")
                emit(Action(ActionType.SUBMIT_FORM, sel, attrs, tuple(payload), f"submit {label}"))

        for root in doc.roots:
            walk(root)
        return out


def _validate_remote(entry: object, doc: Document) -> Action | None:
    if not isinstance(entry, Mapping):
        return None
    try:
        action_type = ActionType(entry["action_type"])
        selector = str(entry["target_selector"])
    except (KeyError, ValueError):
        return None
    try:
        matches = doc.resolve(selector)
    except ValueError:
        return None
    if len(matches) != 1:
        return None
    payload = entry.get("payload")
    try:
        return Action(action_type, selector, _attrs(matches[0], doc), payload, str(entry.get("description", "")))
    except (ValueError, TypeError):
        return None


@dataclass
class RemoteReasoner:
    """Reasoner backed by an HTTP endpoint, merged on top of the heuristic one.

    Request body: ``page_source`` (truncated to ``max_source_bytes``),
    ``screenshot_ref``, ``metadata`` and ``explored`` (executed action keys).
    Response body: ``{"candidates": [{action_type, target_selector, payload,
    description}, ...]}``.  Entries that fail validation are dropped.
    """

    url: str
    token: str | None = None
    timeout_ms: int = 10000
    max_source_bytes: int = 200_000
    fallback: HeuristicReasoner = field(default_factory=HeuristicReasoner)

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None, **kw) -> RemoteReasoner:
        env = os.environ if env is None else env
        url = env.get(REASONER_URL_ENV)
        if not url:
            raise RemoteReasonerUnavailable(f"{REASONER_URL_ENV} is not set")
        return cls(url, env.get(REASONER_TOKEN_ENV), int(env.get(REASONER_TIMEOUT_ENV, "10000")), **kw)

    def fetch_remote(self, obs: Observation, explored: Sequence[str]) -> list:
        source = obs.page_source.encode("utf-8")[: self.max_source_bytes].decode("utf-8", "ignore")
        body = json.dumps({
            "page_source": source,
            "screenshot_ref": obs.screenshot_ref,
            "metadata": dict(obs.metadata),
            "explored": list(explored),
        }).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, method="POST",
                                     headers={"Content-Type": "application/json"})
        if self.token:
            req.add_header("Authorization", f"Bearer {self.token}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_ms / 1000) as resp:
                data = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise RemoteReasonerUnavailable(f"remote reasoner failed: {exc}") from exc
        entries = data.get("candidates") if isinstance(data, Mapping) else None
        if not isinstance(entries, list):
            raise RemoteReasonerUnavailable("remote reasoner response has no candidate list")
        return entries

    def propose(self, obs: Observation, explored: Sequence[str] = ()) -> list[Action]:
        return self.fallback.propose(obs, explored)

    def propose_remote(self, obs: Observation, explored: Sequence[str] = ()) -> list[Action]:
        doc = parse_markup(obs.page_source)
        out = []
        for entry in self.fetch_remote(obs, explored):
            a = _validate_remote(entry, doc)
            if a is None:
                log.warning("dropping malformed remote candidate: %r", entry)
                continue
            out.append(a)
        return out


def infer_candidates(reasoner: Reasoner, obs: Observation, store: ExploredStore,
                     fp_config: FingerprintConfig = DEFAULT_FINGERPRINT,
                     state: StateFingerprint | str | None = None) -> CandidateList:
    s = _d(state) if state is not None else fingerprint(obs, fp_config).digest
    explored = sorted(store.executed.get(s, ()))
    out = CandidateList()
    seen: set[str] = set()

    def add(actions: Iterable[Action], source: CandidateSource) -> None:
        for a in actions:
            if a.key in seen:
                continue
            seen.add(a.key)
            out.append(CandidateAction(a, 0.0 if store.was_executed(s, a.key) else 1.0, source))

    add(reasoner.propose(obs, explored), CandidateSource.HEURISTIC)
    if isinstance(reasoner, RemoteReasoner):
        try:
            add(reasoner.propose_remote(obs, explored), CandidateSource.REMOTE)
        except RemoteReasonerUnavailable as exc:
            log.warning("%s; using heuristic candidates only", exc)
            out.degraded = True
            out.warning = str(exc)
    return out


def select_next(ranked: Sequence[RankedAction], k: int = 1, store: ExploredStore | None = None,
                floor: float = 0.0) -> list[Action]:
    """First ``k`` ranked actions above ``floor``, skipping already executed ones."""
    if k < 1:
        raise ValueError("k must be positive")
    out = []
    for r in ranked:
        if r.priority > floor and r.novelty_term > 0:
            out.append(r.action)
            if len(out) == k:
                break
    return out
