"""Candidate re-ranking by outcome entropy, expected reward and novelty."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from . import config as cfg
from .inference import CandidateAction, ExploredStore, _d
from .state import Action, ActionType, StateFingerprint

DEFAULT_DENYLIST = ("mouseover", "mouseenter", "mouseout", "hover", "contextmenu", "focus", "blur")


@dataclass(frozen=True)
class RerankConfig:
    w_entropy: float = 0.2
    w_reward: float = 0.4
    w_novelty: float = 0.4
    prior: float = 0.5
    floor: float = 0.0
    denylist: tuple[str, ...] = DEFAULT_DENYLIST

    def __post_init__(self):
        ws = (self.w_entropy, self.w_reward, self.w_novelty)
        if any(w < 0 for w in ws) or abs(sum(ws) - 1.0) > 1e-9:
            raise ValueError("rerank weights must be nonnegative and sum to 1")
        if not -1.0 <= self.prior <= 1.0:
            raise ValueError("prior must be in [-1, 1]")

    @classmethod
    def from_mapping(cls, m: Mapping[str, str]) -> RerankConfig:
        kw: dict[str, Any] = {}
        for k in ("w_entropy", "w_reward", "w_novelty", "prior", "floor"):
            if k in m:
                kw[k] = cfg.as_float(m[k])
        if "denylist" in m:
            kw["denylist"] = cfg.as_list(m["denylist"])
        return cls(**kw)

    def is_trivial(self, action: Action) -> bool:
        """Denylisted: script events whose name is listed (hover, right-click, focus...)."""
        return action.action_type is ActionType.SCRIPT_EVENT and str(action.payload).lower() in self.denylist


@dataclass(frozen=True)
class RankedAction:
    action: Action
    priority: float
    entropy_term: float
    expected_reward_term: float
    novelty_term: float
    index: int = 0  # document order among the candidates


def outcome_entropy(store: ExploredStore, action_class: tuple[str, str]) -> float:
    outcomes = [t for t, _ in store.class_outcomes(action_class) if t is not None]
    if len(outcomes) < 2:
        return 0.0
    n = len(outcomes)
    return -sum(c / n * math.log(c / n) for c in Counter(outcomes).values())


def expected_reward(store: ExploredStore, s: StateFingerprint | str, action: Action,
                    prior: float = 0.5) -> float:
    hit = store.outcomes.get((_d(s), action.key))
    if hit is not None:
        return hit[1].value
    rewards = [r.value for _, r in store.class_outcomes(action.action_class)]
    if rewards:
        return sum(rewards) / len(rewards)
    return prior


def rerank(candidates: Sequence[CandidateAction], store: ExploredStore, s: StateFingerprint | str,
           config: RerankConfig = RerankConfig()) -> list[RankedAction]:
    ranked = []
    entropy_cache: dict[tuple[str, str], float] = {}
    for i, c in enumerate(candidates):
        cls = c.action.action_class
        if cls not in entropy_cache:
            entropy_cache[cls] = outcome_entropy(store, cls)
        h = entropy_cache[cls]
        er = expected_reward(store, s, c.action, config.prior)
        nov = c.novelty
        if config.is_trivial(c.action):
            prio = -1.0
        else:
            prio = config.w_entropy * h + config.w_reward * er + config.w_novelty * nov
        ranked.append(RankedAction(c.action, prio, h, er, nov, i))
    ranked.sort(key=lambda r: (-r.priority, r.index))
    return ranked
