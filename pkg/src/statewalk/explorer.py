"""The exploration loop: infer, rerank, select, execute, score, record."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import IO, Any, Callable, Iterable, Mapping

from . import config as cfg
from .errors import DriverError, DriverUnavailable
from .executor import AppDriver, ExecutionResult, ExecutorConfig, Outcome, WallClock, execute, recover
from .graph import KnowledgeGraph, StateNode, TransitionEdge
from .graphio import atomic_write_text
from .inference import (ExploredStore, HeuristicReasoner, Reasoner, infer_candidates, record_outcome,
                        select_next)
from .obstore import ObservationStore
from .rerank import RerankConfig, rerank
from .reward import RewardConfig, RewardReason, RewardScore, score, should_halt_path, should_retry
from .state import DEFAULT_FINGERPRINT, FingerprintConfig, Observation, StateFingerprint, fingerprint

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExplorationConfig:
    min_reward: float = 0.0
    max_leaf_branches: int = 999
    max_consecutive_actions: int = 5
    max_retries: int = 3
    seed: int = 0
    budget: int | None = None
    start_url: str | None = None

    def __post_init__(self):
        if self.max_leaf_branches < 1 or self.max_consecutive_actions < 1:
            raise ValueError("max_leaf_branches and max_consecutive_actions must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be >= 0")
        if not -(2 ** 63) <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")

    @classmethod
    def from_mapping(cls, m: Mapping[str, str]) -> ExplorationConfig:
        kw: dict[str, Any] = {}
        if "min_reward" in m:
            kw["min_reward"] = cfg.as_float(m["min_reward"])
        for k in ("max_leaf_branches", "max_consecutive_actions", "max_retries", "seed", "budget"):
            if k in m:
                kw[k] = cfg.as_int(m[k])
        if "start_url" in m:
            kw["start_url"] = m["start_url"]
        return cls(**kw)


@dataclass(frozen=True)
class LogRecord:
    step: int
    segment: int
    kind: str  # "action" or "recover"
    state: str
    action: dict | None = None
    outcome: str | None = None
    reward: dict | None = None
    attempts: int = 1
    errors: int = 0
    target: str | None = None
    elapsed_ms: int = 0

    @property
    def first_failed(self) -> bool:
        return self.errors >= 1

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["first_failed"] = self.first_failed
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> LogRecord:
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class ExplorationLog:
    records: list[LogRecord] = field(default_factory=list)

    def append(self, rec: LogRecord) -> None:
        if self.records and rec.step <= self.records[-1].step:
            raise ValueError("log step indices must be strictly increasing")
        self.records.append(rec)

    def actions(self) -> list[LogRecord]:
        return [r for r in self.records if r.kind == "action"]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def dumps(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)

    @classmethod
    def loads(cls, text: str) -> ExplorationLog:
        out = cls()
        for n, line in enumerate(text.splitlines(), 1):
            if line.strip():
                try:
                    out.append(LogRecord.from_dict(json.loads(line)))
                except (ValueError, TypeError, KeyError) as exc:
                    raise ValueError(f"bad log record on line {n}: {exc}") from None
        return out

    def save(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, self.dumps())

    @classmethod
    def load(cls, path: str | os.PathLike) -> ExplorationLog:
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def frontier(graph: KnowledgeGraph, store: ExploredStore) -> list[str]:
    """Non-exhausted states with untried candidates, oldest discovery first."""
    return [d for d in graph.node_ids() if d not in store.exhausted and store.untried(d)]


@dataclass
class Explorer:
    driver: AppDriver
    reasoner: Reasoner = field(default_factory=HeuristicReasoner)
    config: ExplorationConfig = field(default_factory=ExplorationConfig)
    rerank_config: RerankConfig = field(default_factory=RerankConfig)
    fingerprint_config: FingerprintConfig = DEFAULT_FINGERPRINT
    obstore: ObservationStore = field(default_factory=ObservationStore)
    reward_values: Mapping[RewardReason, float] | None = None
    on_record: Callable[[LogRecord], None] | None = None

    def __post_init__(self):
        rc = RewardConfig(min_reward=self.config.min_reward, max_retries=self.config.max_retries)
        if self.reward_values is not None:
            rc = RewardConfig(self.config.min_reward, rc.retry_band, self.config.max_retries, dict(self.reward_values))
        self.reward_config = rc
        self.exec_config = ExecutorConfig(self.config.max_retries, self.fingerprint_config, self.obstore)
        self.graph = KnowledgeGraph()
        self.store = ExploredStore()
        self.log = ExplorationLog()
        clock = getattr(self.driver, "clock", None)
        self._clock = clock if callable(clock) else WallClock()
        self._step = 0

    # -- helpers
    def _fp(self, obs: Observation) -> StateFingerprint:
        return fingerprint(obs, self.fingerprint_config)

    def _actionable(self, cands) -> list[str]:
        return [c.action.key for c in cands if not self.rerank_config.is_trivial(c.action)]

    def _note_candidates(self, s: str, obs: Observation):
        cands = infer_candidates(self.reasoner, obs, self.store, self.fingerprint_config, s)
        self.store.set_candidates(s, self._actionable(cands))
        return cands

    def _emit(self, rec: LogRecord) -> None:
        self.log.append(rec)
        if self.on_record:
            self.on_record(rec)

    def _next_step(self) -> int:
        self._step += 1
        return self._step

    def _add_node(self, fp: StateFingerprint, obs: Observation, t0: int) -> StateNode:
        return StateNode(fp, self._clock() - t0, self.obstore.put(obs))

    # -- main loop
    def run(self) -> tuple[KnowledgeGraph, ExplorationLog]:
        cfg_ = self.config
        t0 = self._clock()
        try:
            self.driver.reset()
            if cfg_.start_url:
                self.driver.navigate(cfg_.start_url)
            obs = self.driver.observe()
        except DriverError as exc:
            raise DriverUnavailable(f"cannot reach start page: {exc}") from exc
        root = self._fp(obs)
        self.graph.add_state(self._add_node(root, obs, t0))
        self.store.visit(root)
        self._note_candidates(root.digest, obs)

        current, cur_obs = root.digest, obs
        segment, seg_actions, keep_going = 1, 0, True
        actions_done = 0
        while cfg_.budget is None or actions_done < cfg_.budget:
            if not keep_going:
                fr = frontier(self.graph, self.store)
                if not fr:
                    break
                target = fr[0]
                ok = recover(self.driver, self.graph, target, self.exec_config)
                self._emit(LogRecord(self._next_step(), segment + 1, "recover", target,
                                     outcome="ok" if ok else "diverged", elapsed_ms=self._clock() - t0))
                segment += 1
                seg_actions = 0
                if not ok:
                    self.store.exhausted.add(target)
                    continue
                current, cur_obs = target, self.driver.observe()
                keep_going = True

            if self.graph.out_degree(current) >= cfg_.max_leaf_branches:
                self.store.exhausted.add(current)
                keep_going = False
                continue
            cands = self._note_candidates(current, cur_obs)
            ranked = rerank(cands, self.store, current, self.rerank_config)
            chosen = select_next(ranked, 1, self.store, self.rerank_config.floor)
            predicted = [r.expected_reward_term for r in ranked
                         if r.novelty_term > 0 and not self.rerank_config.is_trivial(r.action)]
            if not chosen or should_halt_path(predicted, self.reward_config):
                self.store.exhausted.add(current)
                keep_going = False
                continue

            action = chosen[0]
            started = self._clock()
            result, reward, attempts, errors = self._execute_scored(action, current, cur_obs)
            actions_done += 1
            seg_actions += 1
            after = result.after.digest if result.after is not None else None
            record_outcome(self.store, current, action, after, reward)
            self._emit(LogRecord(self._next_step(), segment, "action", current, action.to_dict(),
                                 result.outcome.value, reward.to_dict(), attempts, errors, after,
                                 self._clock() - started))

            if result.outcome is Outcome.CHANGED:
                is_new = after not in self.graph
                if reward.reason is RewardReason.NEW_STATE or reward.value > cfg_.min_reward:
                    edge = TransitionEdge(current, after, action, reward, attempts, errors >= 1)
                    node = self._add_node(result.after, result.after_obs, t0) if is_new else None
                    self.graph.add_transition(edge, node)
                    self.store.visit(after)
                if is_new and after in self.graph:
                    self._note_candidates(after, result.after_obs)
                current, cur_obs = after, result.after_obs
                keep_going = reward.reason is RewardReason.NEW_STATE
            elif result.outcome is Outcome.FAILED:
                try:
                    cur_obs = self.driver.observe()
                except DriverError:
                    keep_going = False
                    continue
                keep_going = self._fp(cur_obs).digest == current
            else:
                cur_obs = result.after_obs
            if seg_actions >= cfg_.max_consecutive_actions:
                keep_going = False

        self.graph.meta = {
            "elapsed_ms": self._clock() - t0,
            "actions": actions_done,
            "fingerprint_config": self.fingerprint_config.digest(),
            "generator": "explorer",
            "config": asdict(cfg_),
        }
        return self.graph, self.log

    def _execute_scored(self, action, current: str, cur_obs: Observation
                        ) -> tuple[ExecutionResult, RewardScore, int, int]:
        """Execute, score, and apply the retrial rule (same action, same source state)."""
        result = execute(self.driver, action, cur_obs, self.exec_config)
        reward = score(result, self.graph, self.store, self.reward_config, action.key)
        attempts, errors = result.attempts, result.errors
        cap = self.config.max_retries + 1
        while attempts < cap and should_retry(reward, attempts, self.reward_config):
            if result.outcome is Outcome.CHANGED:
                if not recover(self.driver, self.graph, current, self.exec_config):
                    break
                cur_obs = self.driver.observe()
            elif result.after_obs is not None:
                cur_obs = result.after_obs
            else:
                cur_obs = self.driver.observe()
            result = execute(self.driver, action, cur_obs, self.exec_config)
            reward = score(result, self.graph, self.store, self.reward_config, action.key)
            errors += result.errors
            attempts = min(attempts + result.attempts, cap)
        return result, reward, attempts, errors


def explore(driver: AppDriver, reasoner: Reasoner | None = None, config: ExplorationConfig = ExplorationConfig(),
            **kw) -> tuple[KnowledgeGraph, ExplorationLog]:
    ex = Explorer(driver, reasoner or HeuristicReasoner(), config, **kw)
    return ex.run()


def store_from_log(log_: ExplorationLog | Iterable[LogRecord]) -> ExploredStore:
    """Rebuild the explored store from a log (replay of the feedback records)."""
    from .state import Action

    store = ExploredStore()
    for r in log_:
        if r.kind != "action" or r.action is None:
            continue
        record_outcome(store, r.state, Action.from_dict(r.action), r.target, RewardScore.from_dict(r.reward))
    return store
