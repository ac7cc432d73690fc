"""Reward/penalty scoring of executed actions, retrial and path-halting rules."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Iterable, Mapping

from . import config as cfg

if TYPE_CHECKING:
    from .executor import ExecutionResult
    from .graph import KnowledgeGraph
    from .inference import ExploredStore


class RewardReason(str, Enum):
    NEW_STATE = "NewState"
    NEW_EDGE_KNOWN_STATE = "NewEdgeKnownState"
    NO_CHANGE = "NoChange"
    LEAF_DEAD_END = "LeafDeadEnd"
    FAILURE = "Failure"


_POSITIVE = {RewardReason.NEW_STATE}
_NEGATIVE = {RewardReason.NO_CHANGE, RewardReason.LEAF_DEAD_END, RewardReason.FAILURE}


@dataclass(frozen=True)
class RewardScore:
    value: float
    reason: RewardReason

    def __post_init__(self):
        object.__setattr__(self, "reason", RewardReason(self.reason))
        if not -1.0 <= self.value <= 1.0:
            raise ValueError(f"reward {self.value} outside [-1, 1]")
        if self.reason in _POSITIVE and self.value <= 0:
            raise ValueError(f"{self.reason.value} requires a positive value")
        if self.reason in _NEGATIVE and self.value >= 0:
            raise ValueError(f"{self.reason.value} requires a negative value")

    def to_dict(self) -> dict[str, Any]:
        return {"value": self.value, "reason": self.reason.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RewardScore:
        return cls(float(d["value"]), RewardReason(d["reason"]))


def _default_values() -> dict[RewardReason, float]:
    return {
        RewardReason.NEW_STATE: 1.0,
        RewardReason.NEW_EDGE_KNOWN_STATE: 0.25,
        RewardReason.NO_CHANGE: -0.5,
        RewardReason.LEAF_DEAD_END: -1.0,
        RewardReason.FAILURE: -1.0,
    }


@dataclass(frozen=True)
class RewardConfig:
    min_reward: float = 0.0
    retry_band: float = 0.2
    max_retries: int = 3
    values: Mapping[RewardReason, float] = field(default_factory=_default_values)

    def __post_init__(self):
        if self.retry_band < 0:
            raise ValueError("retry_band must be >= 0")
        for reason, v in self.values.items():
            if not -1.0 <= v <= 1.0:
                raise ValueError(f"reward value for {reason} outside [-1, 1]")

    @classmethod
    def from_mapping(cls, m: Mapping[str, str]) -> RewardConfig:
        values = _default_values()
        for reason in RewardReason:
            if reason.value in m:
                values[reason] = cfg.as_float(m[reason.value])
        kw: dict[str, Any] = {"values": values}
        if "min_reward" in m:
            kw["min_reward"] = cfg.as_float(m["min_reward"])
        if "retry_band" in m:
            kw["retry_band"] = cfg.as_float(m["retry_band"])
        if "max_retries" in m:
            kw["max_retries"] = cfg.as_int(m["max_retries"])
        return cls(**kw)

    def make(self, reason: RewardReason) -> RewardScore:
        return RewardScore(self.values[reason], reason)


def score(result: ExecutionResult, graph: KnowledgeGraph, store: ExploredStore,
          config: RewardConfig = RewardConfig(), action_key: str | None = None) -> RewardScore:
    """Score one execution outcome.

    Cases are checked in this order and exactly one fires: failure, no
    change, new state, known terminal leaf with no untried candidates,
    known state via a (from, action) pair not yet recorded.  Re-running an
    already recorded pair into a known state adds nothing and scores as
    NoChange.
    """
    from .executor import Outcome

    if result.outcome is Outcome.FAILED:
        return config.make(RewardReason.FAILURE)
    if result.outcome is Outcome.UNCHANGED or result.after is None:
        return config.make(RewardReason.NO_CHANGE)
    target = result.after.digest
    if target not in graph:
        return config.make(RewardReason.NEW_STATE)
    if graph.out_degree(target) == 0 and store.candidates_known(target) and not store.untried(target):
        return config.make(RewardReason.LEAF_DEAD_END)
    key = action_key if action_key is not None else (result.action.key if result.action else None)
    if key is None or not store.was_executed(result.before.digest, key):
        return config.make(RewardReason.NEW_EDGE_KNOWN_STATE)
    return config.make(RewardReason.NO_CHANGE)


def _value(x: RewardScore | float) -> float:
    return x.value if isinstance(x, RewardScore) else float(x)


def should_retry(r: RewardScore | float, attempts: int, config: RewardConfig = RewardConfig()) -> bool:
    """True when the reward sits in the band just under the threshold and retries remain."""
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    v = _value(r)
    return config.min_reward - config.retry_band <= v <= config.min_reward and attempts <= config.max_retries


def should_halt_path(frontier_rewards: Iterable[RewardScore | float], config: RewardConfig = RewardConfig()) -> bool:
    """True when no reward on the frontier exceeds ``min_reward`` (vacuously for none)."""
    return all(_value(r) <= config.min_reward for r in frontier_rewards)
